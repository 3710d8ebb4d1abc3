# stats/anova.py
"""
Orthogonal sum-of-squares decomposition for balanced designs, expected mean
squares, F tests with EMS-matched denominators, method-of-moments variance
component estimates and power.

EMS rows are written in terms of ``sigma2``, ``var[T]`` (variance of random
term T) and ``phi[S]`` = gamma_S / df_S, the per-df fixed-effect quadratic of
source S. No sum-to-zero constraints are imposed on fixed effects.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from stats.designs import (
    BalancedDataset,
    EffectKind,
    ModelParams,
    ModelSpec,
    check_params,
    fixed_noncentrality,
    interaction_contrast,
)
from stats.distributions import ScaledF, scaled_f_quantile, scaled_f_sf
from stats.errors import DomainError, SingularSystemError, ValidationError

logger = logging.getLogger(__name__)

SIGMA2 = "sigma2"


# ---------- Types ----------

@dataclass(frozen=True)
class EmsComponent:
    name: str
    coefficient: float


@dataclass(frozen=True)
class AnovaRow:
    source: str
    df: int
    ss: float
    ms: float
    ems: str = ""
    f: Optional[float] = None
    denominator: Optional[str] = None
    p_value: Optional[float] = None


@dataclass(frozen=True)
class AnovaTable:
    design: str
    rows: Tuple[AnovaRow, ...]
    total_ss: float
    total_df: int
    n_obs: int

    @property
    def sources(self) -> Tuple[str, ...]:
        return tuple(r.source for r in self.rows)

    def row(self, source: str) -> AnovaRow:
        for r in self.rows:
            if r.source == source:
                return r
        raise KeyError(source)

    def to_frame(self) -> pd.DataFrame:
        records = [
            {
                "Source": r.source,
                "Df": r.df,
                "SS": r.ss,
                "MS": r.ms,
                "EMS": r.ems,
                "F": r.f,
                "Denominator": r.denominator,
                "p": r.p_value,
            }
            for r in self.rows
        ]
        records.append({"Source": "Total", "Df": self.total_df, "SS": self.total_ss})
        return pd.DataFrame.from_records(
            records, columns=["Source", "Df", "SS", "MS", "EMS", "F", "Denominator", "p"]
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "design": self.design,
            "n_obs": self.n_obs,
            "total_df": self.total_df,
            "total_ss": self.total_ss,
            "rows": [asdict(r) for r in self.rows],
        }


@dataclass(frozen=True)
class ComponentEstimate:
    """Method-of-moments estimate; ``estimate`` is ``raw`` truncated at zero."""

    name: str
    raw: float
    estimate: float
    truncated: bool


# ---------- Decomposition ----------

def sums_of_squares(values: np.ndarray, spec: ModelSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    SS for every source of ``spec.sources`` (last axis, same order) and the
    total SS. ``values`` may carry leading batch axes in front of the design
    axes; each batch entry is decomposed independently.
    """
    batch_ndim = values.ndim - len(spec.shape)
    if batch_ndim < 0 or values.shape[batch_ndim:] != spec.shape:
        raise ValidationError(f"expected trailing shape {spec.shape}, got {values.shape}")
    design_axes = tuple(range(batch_ndim, values.ndim))

    residual = values - values.mean(axis=design_axes, keepdims=True)
    total = np.sum(residual**2, axis=design_axes)
    out = []
    for term in spec.terms:
        keep = spec.term_axes(term, offset=batch_ndim)
        drop = tuple(ax for ax in design_axes if ax not in keep)
        contrast = interaction_contrast(values.mean(axis=drop, keepdims=True), keep)
        out.append(spec.obs_per_cell(term) * np.sum(contrast**2, axis=design_axes))
        residual = residual - contrast
    if spec.residual_df > 0:
        out.append(np.sum(residual**2, axis=design_axes))
    return np.stack(out, axis=-1), total


def decompose(data: BalancedDataset) -> AnovaTable:
    spec = data.spec
    ss, total = sums_of_squares(data.values, spec)
    rows = []
    for k, source in enumerate(spec.sources):
        df = spec.df(source)
        rows.append(AnovaRow(source=source, df=df, ss=float(ss[k]), ms=float(ss[k]) / df))
    return AnovaTable(
        design=spec.design.value,
        rows=tuple(rows),
        total_ss=float(total),
        total_df=spec.n_obs - 1,
        n_obs=spec.n_obs,
    )


# ---------- Expected mean squares ----------

def ems_structure(spec: ModelSpec) -> Dict[str, Tuple[EmsComponent, ...]]:
    """Symbolic EMS of every source as a linear combination of components."""
    structure: Dict[str, Tuple[EmsComponent, ...]] = {}
    for source in spec.sources:
        parts = [EmsComponent(SIGMA2, 1.0)]
        if source != spec.error_source:
            supers = spec.superterms(source)
            for term in supers:
                if term.kind is EffectKind.RANDOM:
                    parts.append(EmsComponent(f"var[{term.name}]", float(spec.obs_per_cell(term))))
            if any(t.kind is EffectKind.FIXED for t in supers):
                parts.append(EmsComponent(f"phi[{source}]", 1.0))
        structure[source] = tuple(parts)
    return structure


def render_ems(parts: Tuple[EmsComponent, ...]) -> str:
    return " + ".join(
        p.name if p.coefficient == 1.0 else f"{p.coefficient:g} {p.name}" for p in parts
    )


def tested_component(spec: ModelSpec, source: str) -> str:
    term = spec.term(source)
    return f"var[{source}]" if term.kind is EffectKind.RANDOM else f"phi[{source}]"


def _same_ems(a: Dict[str, float], b: Dict[str, float]) -> bool:
    return a.keys() == b.keys() and all(math.isclose(a[k], b[k]) for k in a)


def assign_denominators(spec: ModelSpec) -> Dict[str, Optional[str]]:
    """
    For every model term, the first source whose EMS equals the term's EMS
    with the tested component removed; None when no exact F test exists.
    """
    structure = {s: {p.name: p.coefficient for p in parts} for s, parts in ems_structure(spec).items()}
    out: Dict[str, Optional[str]] = {}
    for term in spec.terms:
        tested = tested_component(spec, term.name)
        null = {k: v for k, v in structure[term.name].items() if k != tested}
        out[term.name] = next(
            (s for s in spec.sources if s != term.name and _same_ems(null, structure[s])),
            None,
        )
        logger.debug("denominator for %s: %s", term.name, out[term.name])
    return out


def _ems_parts(spec: ModelSpec, params: ModelParams) -> Dict[str, Tuple[float, float]]:
    """(sigma2 + random part, fixed quadratic gamma) per source."""
    check_params(spec, params)
    parts = {}
    for source in spec.sources:
        scale = params.sigma2
        if source != spec.error_source:
            for term in spec.superterms(source):
                if term.kind is EffectKind.RANDOM:
                    scale += spec.obs_per_cell(term) * params.variance_for(term)
        parts[source] = (scale, fixed_noncentrality(spec, params, source))
    return parts


def expected_mean_squares(spec: ModelSpec, params: ModelParams) -> Dict[str, float]:
    return {
        source: scale + gamma / spec.df(source)
        for source, (scale, gamma) in _ems_parts(spec, params).items()
    }


# ---------- Tests ----------

def attach_tests(table: AnovaTable, spec: ModelSpec) -> AnovaTable:
    """
    Fill EMS, F, denominator and p-value. p-values come from the central F
    distribution; a zero denominator mean square leaves F undefined (None).
    """
    if table.design != spec.design.value or table.sources != spec.sources:
        raise ValidationError("table does not belong to this model specification")
    structure = ems_structure(spec)
    denominators = assign_denominators(spec)
    rows = []
    for row in table.rows:
        update: Dict[str, Any] = {"ems": render_ems(structure[row.source])}
        denominator = denominators.get(row.source)
        if denominator is not None:
            den = table.row(denominator)
            update["denominator"] = denominator
            if den.ms > 0.0:
                f = row.ms / den.ms
                update["f"] = f
                update["p_value"] = float(scaled_f_sf(ScaledF(1.0, row.df, den.df), f))
        rows.append(replace(row, **update))
    return replace(table, rows=tuple(rows))


def estimate_components(table: AnovaTable, spec: ModelSpec) -> Dict[str, ComponentEstimate]:
    """
    Solve the EMS equations of the random sources and the error source for
    sigma2 and the variance components. Negative solutions are truncated at
    zero and flagged.
    """
    structure = ems_structure(spec)
    unknowns = [SIGMA2] + [f"var[{t.name}]" for t in spec.terms if t.kind is EffectKind.RANDOM]
    equations = [
        s for s in spec.sources
        if s == spec.error_source or spec.term(s).kind is EffectKind.RANDOM
    ]
    matrix = np.zeros((len(equations), len(unknowns)))
    rhs = np.array([table.row(s).ms for s in equations])
    for i, source in enumerate(equations):
        for part in structure[source]:
            if part.name not in unknowns:
                raise SingularSystemError(f"EMS of {source} involves fixed effects ({part.name})")
            matrix[i, unknowns.index(part.name)] = part.coefficient
    if matrix.shape[0] != matrix.shape[1]:
        raise SingularSystemError(
            f"{len(equations)} EMS equations for {len(unknowns)} unknown components"
        )
    try:
        solution = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(f"EMS system is singular: {e}") from e

    out = {}
    for name, raw in zip(unknowns, solution):
        key = name[4:-1] if name.startswith("var[") else name
        raw = float(raw)
        out[key] = ComponentEstimate(name=key, raw=raw, estimate=max(raw, 0.0), truncated=raw < 0.0)
    return out


def power(spec: ModelSpec, params: ModelParams, alpha: float) -> Dict[str, float]:
    """
    P(reject) of each exact F test at level alpha. The statistic follows
    (num scale / den scale) * F(df, df_den, gamma / num scale).
    """
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie strictly between 0 and 1, got {alpha!r}")
    parts = _ems_parts(spec, params)
    out = {}
    for source, denominator in assign_denominators(spec).items():
        if denominator is None:
            continue
        num_scale, gamma = parts[source]
        den_scale, _ = parts[denominator]
        df_num, df_den = spec.df(source), spec.df(denominator)
        critical = scaled_f_quantile(ScaledF(1.0, df_num, df_den), 1.0 - alpha)
        law = ScaledF(num_scale / den_scale, df_num, df_den, gamma / num_scale)
        out[source] = float(scaled_f_sf(law, critical))
    return out
