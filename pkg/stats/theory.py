# stats/theory.py
"""
Exact laws of every sum of squares in a balanced mixed model.

Conditionally on all random effects a balanced mixed model is a fixed-effects
model, so each SS_S is ``sigma2 chi2(df_S, g_S / sigma2)`` where g_S is SS_S
evaluated on the noise-free mean. For a source S, g_S is the squared
projection of (fixed part + random part) onto the S contrast space; the
random part is an iid normal vector there, so g_S is itself a scaled
(noncentral) chi-square with the same df. ``compound`` then gives the
marginal law. The mixing law is noncentral (gamma2 > 0) whenever fixed
effects and random effects project onto the same source, e.g. the
whole-plot factor of a split-plot design.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Union

from stats.anova import assign_denominators
from stats.designs import EffectKind, ModelParams, ModelSpec, check_params, fixed_noncentrality
from stats.distributions import ScaledF, ScaledNoncentralChiSquare, compound
from stats.errors import TheoryError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConditionalLaw:
    """
    ``SS | g ~ scale * chi2(df, g / scale)`` where g (``mixing``) is either a
    number or a ScaledNoncentralChiSquare with the same df.
    """

    source: str
    scale: float
    df: int
    mixing: Union[float, ScaledNoncentralChiSquare]

    @property
    def mixing_scale(self) -> float:
        return self.mixing.scale if isinstance(self.mixing, ScaledNoncentralChiSquare) else 0.0

    @property
    def mixing_noncentrality(self) -> float:
        if isinstance(self.mixing, ScaledNoncentralChiSquare):
            return self.mixing.noncentrality
        return float(self.mixing)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c1": self.scale,
            "p": self.df,
            "c2": self.mixing_scale,
            "gamma2": self.mixing_noncentrality,
        }


@dataclass(frozen=True)
class SsLawSet:
    laws: Mapping[str, ScaledNoncentralChiSquare]
    conditionals: Mapping[str, ConditionalLaw] = field(default_factory=dict)
    independent: bool = True

    def noncentral_mixing_sources(self) -> List[str]:
        """Sources whose derivation compounded with c2 > 0 and gamma2 > 0."""
        return [
            s for s, c in self.conditionals.items()
            if c.mixing_scale > 0.0 and c.mixing_noncentrality > 0.0
        ]

    def scaled(self, factor: float) -> "SsLawSet":
        """Every law with its scale and noncentrality multiplied by ``factor``."""
        laws = {
            s: ScaledNoncentralChiSquare(law.scale * factor, law.df, law.noncentrality * factor)
            for s, law in self.laws.items()
        }
        return SsLawSet(laws, self.conditionals, self.independent)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "independent": self.independent,
            "laws": {s: law.to_dict() for s, law in self.laws.items()},
            "derivations": {s: c.to_dict() for s, c in self.conditionals.items()},
            "noncentral_mixing_sources": self.noncentral_mixing_sources(),
        }


def conditional_laws(spec: ModelSpec, params: ModelParams) -> Dict[str, ConditionalLaw]:
    check_params(spec, params)
    out: Dict[str, ConditionalLaw] = {}
    for source in spec.sources:
        df = spec.df(source)
        if source == spec.error_source:
            out[source] = ConditionalLaw(source, params.sigma2, df, 0.0)
            continue
        own = spec.term(source)
        # each random superterm T adds iid N(0, var_T / #(T cells per S cell)) per S cell
        cell_variance = sum(
            params.variance_for(t) * spec.cells(own) / spec.cells(t)
            for t in spec.superterms(source)
            if t.kind is EffectKind.RANDOM
        )
        c2 = spec.obs_per_cell(own) * cell_variance
        gamma2 = fixed_noncentrality(spec, params, source)
        mixing: Union[float, ScaledNoncentralChiSquare]
        mixing = ScaledNoncentralChiSquare(c2, df, gamma2) if c2 > 0.0 else gamma2
        out[source] = ConditionalLaw(source, params.sigma2, df, mixing)
    return out


def ss_laws(spec: ModelSpec, params: ModelParams) -> SsLawSet:
    conditionals = conditional_laws(spec, params)
    laws = {
        source: compound(c.scale, c.df, c.mixing_scale, c.mixing_noncentrality)
        for source, c in conditionals.items()
    }
    result = SsLawSet(laws, conditionals, independent=True)
    noncentral = result.noncentral_mixing_sources()
    if noncentral:
        logger.info("noncentral mixing law used for %s", ", ".join(noncentral))
    return result


def f_laws(spec: ModelSpec, params: ModelParams) -> Dict[str, ScaledF]:
    """Law of MS_S / MS_D for every source with an exact denominator D."""
    laws = ss_laws(spec, params).laws
    out: Dict[str, ScaledF] = {}
    for source, denominator in assign_denominators(spec).items():
        if denominator is None:
            continue
        num, den = laws[source], laws[denominator]
        if den.noncentrality > 0.0:
            raise TheoryError(f"denominator {denominator} of {source} is noncentral")
        out[source] = ScaledF(num.scale / den.scale, num.df, den.df, num.lam)
    return out
