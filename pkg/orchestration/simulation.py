# orchestration/simulation.py
"""
Seeded Monte Carlo: datasets drawn from a ModelSpec + ModelParams, and the
verification harness that compares simulated sums of squares, correlations
and F-test rejection rates with the derived theory.

Replications are split across workers; worker w draws from the w-th child of
``SeedSequence(master_seed)``, so results depend only on (master_seed,
worker_count, batch_size) and never on scheduling order.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from multiprocessing import Pool
from typing import Any, Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as scipy_stats

from config.config import get_batch_size, get_ks_threshold
from orchestration.state import (
    CorrelationCheck,
    LemmaReport,
    RejectionCheck,
    SimReport,
    SourceCheck,
)
from stats.anova import assign_denominators, power, sums_of_squares
from stats.designs import (
    BalancedDataset,
    EffectKind,
    ModelParams,
    ModelSpec,
    check_params,
    fixed_noncentrality,
)
from stats.distributions import (
    ScaledF,
    ScaledNoncentralChiSquare,
    cdf,
    compound,
    draw,
    mgf,
    mgf_mixture_quadrature,
    scaled_f_quantile,
)
from stats.errors import DomainError, ValidationError
from stats.theory import SsLawSet, ss_laws

logger = logging.getLogger(__name__)

MIN_REPS = 1_000
MEAN_SE_BAND = 4.0
VARIANCE_SE_BAND = 5.0
RATE_SE_BAND = 4.0
MGF_RTOL = 1e-8
# fractions of the largest valid t, 1 / (2 (c1 + c2))
MGF_T_FRACTIONS = (-2.0, -0.5, 0.1, 0.25, 0.5, 0.75)


# ---------- Seeds ----------

@dataclass(frozen=True)
class SeedPolicy:
    master_seed: int
    worker_count: int = 1

    def __post_init__(self) -> None:
        if int(self.master_seed) != self.master_seed or not 0 <= self.master_seed < 2**64:
            raise ValidationError(f"master_seed must be a 64-bit unsigned value, got {self.master_seed!r}")
        if int(self.worker_count) != self.worker_count or self.worker_count < 1:
            raise ValidationError(f"worker_count must be >= 1, got {self.worker_count!r}")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "worker_count", int(self.worker_count))

    def streams(self) -> List[np.random.SeedSequence]:
        return np.random.SeedSequence(self.master_seed).spawn(self.worker_count)

    def partition(self, reps: int) -> List[int]:
        base, extra = divmod(reps, self.worker_count)
        return [base + (1 if w < extra else 0) for w in range(self.worker_count)]

    def child(self, index: int) -> "SeedPolicy":
        """An independent policy for a sub-run, derived from (master_seed, index)."""
        state = np.random.SeedSequence([self.master_seed, index + 1]).generate_state(1, np.uint64)
        return SeedPolicy(int(state[0]), self.worker_count)


def _run_partitioned(
    policy: SeedPolicy,
    reps: int,
    worker: Callable[[Tuple[Any, ...]], np.ndarray],
    payload: Tuple[Any, ...],
) -> np.ndarray:
    tasks = [
        payload + (stream, count)
        for stream, count in zip(policy.streams(), policy.partition(reps))
    ]
    if policy.worker_count == 1:
        results = [worker(task) for task in tasks]
    else:
        with Pool(processes=policy.worker_count) as pool:
            results = pool.map(worker, tasks)
    return np.concatenate(results, axis=0)


# ---------- Data generation ----------

def _simulate_values(
    spec: ModelSpec,
    params: ModelParams,
    rng: np.random.Generator,
    size: int,
) -> np.ndarray:
    """``size`` independent response arrays, shape (size,) + spec.shape."""
    values = np.full((size,) + spec.shape, params.mu)
    for term in spec.terms:
        if term.kind is EffectKind.FIXED:
            values += spec.embed(term, params.effects_for(spec, term))
        else:
            levels = tuple(spec.factor(f).levels for f in term.factors)
            effects = rng.standard_normal((size,) + levels) * math.sqrt(params.variance_for(term))
            values += spec.embed(term, effects, batch_ndim=1)
    values += rng.standard_normal((size,) + spec.shape) * math.sqrt(params.sigma2)
    return values


def simulate_dataset(spec: ModelSpec, params: ModelParams, seed: Any) -> BalancedDataset:
    """One dataset; each random effect and error is drawn from its normal law."""
    check_params(spec, params)
    rng = np.random.default_rng(seed)
    return BalancedDataset(spec, _simulate_values(spec, params, rng, 1)[0])


def _replicate_ss(task: Tuple[Any, ...]) -> np.ndarray:
    spec, params, batch_size, stream, count = task
    rng = np.random.default_rng(stream)
    chunks = [np.empty((0, len(spec.sources)))]
    done = 0
    while done < count:
        size = min(batch_size, count - done)
        ss, _ = sums_of_squares(_simulate_values(spec, params, rng, size), spec)
        chunks.append(ss)
        done += size
    return np.concatenate(chunks, axis=0)


def _hierarchical_draws(task: Tuple[Any, ...]) -> np.ndarray:
    c1, p, c2, gamma2, stream, count = task
    rng = np.random.default_rng(stream)
    if c2 > 0.0:
        mixing = draw(c2, p, gamma2 / c2, rng, count)
    else:
        mixing = np.full(count, gamma2)
    return draw(c1, p, mixing / c1, rng, count)


# ---------- Checks ----------

def _ks(sample: np.ndarray, law: ScaledNoncentralChiSquare) -> Tuple[float, float]:
    result = scipy_stats.kstest(sample, lambda x: cdf(law, x), method="asymp")
    return float(result.statistic), float(result.pvalue)


def _source_check(
    source: str,
    sample: np.ndarray,
    law: ScaledNoncentralChiSquare,
    ks_threshold: float,
) -> SourceCheck:
    reps = sample.size
    mean = float(sample.mean())
    variance = float(sample.var(ddof=1))
    mean_se = math.sqrt(law.variance / reps)
    fourth = float(np.mean((sample - mean) ** 4))
    variance_se = math.sqrt(max(fourth - variance**2, 0.0) / reps)
    ks_statistic, ks_p_value = _ks(sample, law)
    return SourceCheck(
        source=source,
        df=law.df,
        law=law.to_dict(),
        empirical_mean=mean,
        theoretical_mean=law.mean,
        mean_se=mean_se,
        mean_ok=abs(mean - law.mean) <= MEAN_SE_BAND * mean_se,
        empirical_variance=variance,
        theoretical_variance=law.variance,
        variance_se=variance_se,
        variance_ok=abs(variance - law.variance) <= VARIANCE_SE_BAND * variance_se,
        ks_statistic=ks_statistic,
        ks_p_value=ks_p_value,
        ks_ok=ks_p_value > ks_threshold,
    )


def _correlation_checks(sources: Sequence[str], ss: np.ndarray) -> List[CorrelationCheck]:
    bound = 4.0 / math.sqrt(ss.shape[0])
    out = []
    for i, j in combinations(range(len(sources)), 2):
        r = float(np.corrcoef(ss[:, i], ss[:, j])[0, 1])
        out.append(
            CorrelationCheck(pair=[sources[i], sources[j]], correlation=r, bound=bound, ok=abs(r) < bound)
        )
    return out


def _is_null(spec: ModelSpec, params: ModelParams, source: str) -> bool:
    if spec.term(source).kind is EffectKind.RANDOM:
        return params.variance_for(spec.term(source)) == 0.0
    return fixed_noncentrality(spec, params, source) == 0.0


def _rejection_checks(
    spec: ModelSpec,
    params: ModelParams,
    ss: np.ndarray,
    alphas: Sequence[float],
) -> List[RejectionCheck]:
    reps = ss.shape[0]
    sources = list(spec.sources)
    out = []
    for alpha in alphas:
        expected_power = power(spec, params, alpha)
        for source, denominator in assign_denominators(spec).items():
            if denominator is None:
                continue
            df_num, df_den = spec.df(source), spec.df(denominator)
            num = ss[:, sources.index(source)] / df_num
            den = ss[:, sources.index(denominator)] / df_den
            critical = scaled_f_quantile(ScaledF(1.0, df_num, df_den), 1.0 - alpha)
            rate = float(np.mean(num > critical * den))
            expected = expected_power[source]
            tolerance = RATE_SE_BAND * math.sqrt(expected * (1.0 - expected) / reps) + 1.0 / reps
            out.append(
                RejectionCheck(
                    source=source,
                    denominator=denominator,
                    alpha=float(alpha),
                    null=_is_null(spec, params, source),
                    rate=rate,
                    expected=expected,
                    tolerance=tolerance,
                    ok=abs(rate - expected) <= tolerance,
                )
            )
    return out


def _check_reps(reps: int) -> None:
    if int(reps) != reps or reps < MIN_REPS:
        raise ValidationError(f"reps below minimum of {MIN_REPS}, got {reps!r}")


def lemma_check(
    c1: float,
    p: int,
    c2: float,
    gamma2: float,
    reps: int,
    policy: SeedPolicy,
    ks_threshold: Optional[float] = None,
) -> LemmaReport:
    """
    Hierarchical sampling (g from the mixing law, then x | g) against the
    compound law, plus the MGF identity by quadrature over a grid of t.
    """
    _check_reps(reps)
    ks_threshold = get_ks_threshold() if ks_threshold is None else ks_threshold
    law = compound(c1, p, c2, gamma2)
    sample = _run_partitioned(policy, reps, _hierarchical_draws, (c1, p, c2, gamma2))
    ks_statistic, ks_p_value = _ks(sample, law)

    t_max = 1.0 / (2.0 * (c1 + c2))
    errors = []
    for fraction in MGF_T_FRACTIONS:
        t = fraction * t_max
        closed = mgf(law, t)
        errors.append(abs(mgf_mixture_quadrature(c1, p, c2, gamma2, t) - closed) / closed)
    mgf_max_rel_error = float(max(errors))

    ks_ok = ks_p_value > ks_threshold
    mgf_ok = mgf_max_rel_error <= MGF_RTOL
    return LemmaReport(
        c1=float(c1),
        p=int(p),
        c2=float(c2),
        gamma2=float(gamma2),
        law=law.to_dict(),
        reps=int(reps),
        seed=policy.master_seed,
        worker_count=policy.worker_count,
        ks_statistic=ks_statistic,
        ks_p_value=ks_p_value,
        ks_ok=ks_ok,
        mgf_max_rel_error=mgf_max_rel_error,
        mgf_ok=mgf_ok,
        passed=ks_ok and mgf_ok,
    )


def run_verification(
    spec: ModelSpec,
    params: ModelParams,
    reps: int,
    alphas: Iterable[float] = (0.05,),
    policy: Optional[SeedPolicy] = None,
    laws: Optional[SsLawSet] = None,
    ks_threshold: Optional[float] = None,
    batch_size: Optional[int] = None,
    include_lemma: bool = True,
) -> SimReport:
    """
    Simulate ``reps`` datasets and check every SS against its law (mean,
    variance, KS), pairwise SS correlations against zero, and F-test
    rejection rates against alpha (null sources) or the computed power.

    ``laws`` replaces the derived laws in the distributional checks; the
    negative control passes deliberately wrong laws here.
    """
    _check_reps(reps)
    alphas = [float(a) for a in alphas]
    for alpha in alphas:
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"alpha must lie strictly between 0 and 1, got {alpha!r}")
    check_params(spec, params)
    policy = policy or SeedPolicy(0)
    ks_threshold = get_ks_threshold() if ks_threshold is None else ks_threshold
    batch_size = batch_size or get_batch_size()

    derived = ss_laws(spec, params)
    tested = laws or derived
    logger.info(
        "verifying %s: reps=%d seed=%d workers=%d",
        spec.design.value, reps, policy.master_seed, policy.worker_count,
    )

    ss = _run_partitioned(policy, reps, _replicate_ss, (spec, params, batch_size))
    sources = list(spec.sources)
    source_checks = [
        _source_check(source, ss[:, k], tested.laws[source], ks_threshold)
        for k, source in enumerate(sources)
    ]
    correlations = _correlation_checks(sources, ss)
    rejections = _rejection_checks(spec, params, ss, alphas)

    lemma: List[LemmaReport] = []
    if include_lemma:
        for k, source in enumerate(sources):
            conditional = derived.conditionals[source]
            if conditional.mixing_scale > 0.0:
                lemma.append(
                    lemma_check(
                        conditional.scale,
                        conditional.df,
                        conditional.mixing_scale,
                        conditional.mixing_noncentrality,
                        reps,
                        policy.child(k),
                        ks_threshold,
                    )
                )

    passed = (
        all(c["mean_ok"] and c["variance_ok"] and c["ks_ok"] for c in source_checks)
        and all(c["ok"] for c in correlations)
        and all(c["ok"] for c in rejections)
        and all(c["passed"] for c in lemma)
    )
    logger.info("verification of %s %s", spec.design.value, "passed" if passed else "FAILED")
    return SimReport(
        model=spec.to_dict(),
        params=params.to_dict(),
        seed=policy.master_seed,
        worker_count=policy.worker_count,
        reps=int(reps),
        batch_size=int(batch_size),
        alphas=alphas,
        thresholds={
            "ks_p_value": ks_threshold,
            "mean_se_band": MEAN_SE_BAND,
            "variance_se_band": VARIANCE_SE_BAND,
            "rate_se_band": RATE_SE_BAND,
            "mgf_rtol": MGF_RTOL,
        },
        laws=tested.to_dict(),
        sources=source_checks,
        correlations=correlations,
        rejections=rejections,
        noncentral_mixing_sources=derived.noncentral_mixing_sources(),
        lemma=lemma,
        law_override=None if laws is None else "caller-supplied laws",
        passed=bool(passed),
    )
