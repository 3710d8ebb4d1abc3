# orchestration/state.py
from __future__ import annotations

from typing import Any, Dict, List, Optional, TypedDict


class SourceCheck(TypedDict):
    """
    Empirical behaviour of one sum of squares against its derived law.

    Fields:
      - law: the ScaledNoncentralChiSquare parameters tested against.
      - mean_se / variance_se: standard errors used for the tolerance bands
        (4 SE for the mean, 5 SE for the variance).
      - ks_statistic / ks_p_value: one-sample KS test against the law's cdf.
    """
    source: str
    df: int
    law: Dict[str, Any]
    empirical_mean: float
    theoretical_mean: float
    mean_se: float
    mean_ok: bool
    empirical_variance: float
    theoretical_variance: float
    variance_se: float
    variance_ok: bool
    ks_statistic: float
    ks_p_value: float
    ks_ok: bool


class CorrelationCheck(TypedDict):
    pair: List[str]
    correlation: float
    bound: float
    ok: bool


class RejectionCheck(TypedDict):
    """F-test rejection rate at one alpha; ``expected`` is alpha under the null, else the power."""
    source: str
    denominator: str
    alpha: float
    null: bool
    rate: float
    expected: float
    tolerance: float
    ok: bool


class LemmaReport(TypedDict):
    c1: float
    p: int
    c2: float
    gamma2: float
    law: Dict[str, Any]
    reps: int
    seed: int
    worker_count: int
    ks_statistic: float
    ks_p_value: float
    ks_ok: bool
    mgf_max_rel_error: float
    mgf_ok: bool
    passed: bool


class SimReport(TypedDict):
    """
    Shared report structure for one verification run.

    Fields:
      - model / params: what was simulated.
      - seed / worker_count / reps / batch_size: everything needed to rerun it.
      - sources, correlations, rejections: the individual checks.
      - noncentral_mixing_sources: sources whose derivation compounded with gamma2 > 0.
      - lemma: one compounding check per source with a non-degenerate mixing law.
      - passed: every check above passed.
    """
    model: Dict[str, Any]
    params: Dict[str, Any]
    seed: int
    worker_count: int
    reps: int
    batch_size: int
    alphas: List[float]
    thresholds: Dict[str, float]
    laws: Dict[str, Any]
    sources: List[SourceCheck]
    correlations: List[CorrelationCheck]
    rejections: List[RejectionCheck]
    noncentral_mixing_sources: List[str]
    lemma: List[LemmaReport]
    law_override: Optional[str]
    passed: bool
