# stats/distributions.py
"""
Scaled (non)central chi-square and F laws.

Chi-square laws are stored in the "scaled" form ``c * chi2(p, gamma / c)``:
``scale`` is c (variance units), ``df`` is p and ``noncentrality`` is gamma,
expressed in the same units as the variable itself. The usual chi-square
noncentrality is ``lam = gamma / c``. In this form marginalizing over a
chi-square distributed noncentrality is plain parameter algebra (see
``compound``).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy import integrate, optimize, special

from stats.errors import DomainError, ValidationError

logger = logging.getLogger(__name__)

# Poisson mass left out of every mixture series.
SERIES_TAIL = 1e-14
_LOG2 = math.log(2.0)


# ---------- Types ----------

@dataclass(frozen=True)
class ScaledNoncentralChiSquare:
    """Law of ``scale * chi2(df, noncentrality / scale)``."""

    scale: float
    df: int
    noncentrality: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValidationError(f"scale must be positive, got {self.scale!r}")
        if int(self.df) != self.df or self.df < 1:
            raise ValidationError(f"df must be a positive integer, got {self.df!r}")
        if not (math.isfinite(self.noncentrality) and self.noncentrality >= 0):
            raise ValidationError(
                f"noncentrality must be nonnegative, got {self.noncentrality!r}"
            )
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "df", int(self.df))
        object.__setattr__(self, "noncentrality", float(self.noncentrality))

    @property
    def lam(self) -> float:
        """Chi-square noncentrality ``gamma / c``."""
        return self.noncentrality / self.scale

    @property
    def mean(self) -> float:
        return self.scale * self.df + self.noncentrality

    @property
    def variance(self) -> float:
        return 2.0 * self.scale**2 * self.df + 4.0 * self.scale * self.noncentrality

    def to_dict(self) -> Dict[str, Any]:
        return {"scale": self.scale, "df": self.df, "noncentrality": self.noncentrality}


@dataclass(frozen=True)
class ScaledF:
    """Law of ``scale * F(df_num, df_den, noncentrality)``; noncentrality is the numerator lam."""

    scale: float
    df_num: int
    df_den: int
    noncentrality: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValidationError(f"scale must be positive, got {self.scale!r}")
        for name in ("df_num", "df_den"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if not (math.isfinite(self.noncentrality) and self.noncentrality >= 0):
            raise ValidationError(
                f"noncentrality must be nonnegative, got {self.noncentrality!r}"
            )
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "noncentrality", float(self.noncentrality))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scale": self.scale,
            "df_num": self.df_num,
            "df_den": self.df_den,
            "noncentrality": self.noncentrality,
        }


# ---------- Poisson mixture weights ----------

def _poisson_weights(mean: float) -> Tuple[int, np.ndarray]:
    """
    Return ``(first, weights)`` with ``weights[k] = P(N = first + k)`` for
    N ~ Poisson(mean), covering all but SERIES_TAIL of the mass.

    Terms are accumulated from the mode outward, always taking the larger of
    the two neighbouring terms next.
    """
    if mean <= 0.0:
        return 0, np.ones(1)

    log_mean = math.log(mean)

    def pmf(j: int) -> float:
        return math.exp(j * log_mean - mean - math.lgamma(j + 1.0))

    mode = int(math.floor(mean))
    lo = hi = mode
    total = pmf(mode)
    next_lo = pmf(lo - 1) if lo > 0 else 0.0
    next_hi = pmf(hi + 1)
    while 1.0 - total > SERIES_TAIL:
        if next_lo == 0.0 and next_hi < 1e-300:
            break
        if next_lo >= next_hi:
            total += next_lo
            lo -= 1
            next_lo = pmf(lo - 1) if lo > 0 else 0.0
        else:
            total += next_hi
            hi += 1
            next_hi = pmf(hi + 1)

    ks = np.arange(lo, hi + 1, dtype=float)
    weights = np.exp(ks * log_mean - mean - special.gammaln(ks + 1.0))
    logger.debug("poisson series mean=%g terms=%d..%d", mean, lo, hi)
    return lo, weights


def _as_finite_array(x: ArrayLike, what: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} must be finite")
    return arr


def _like_input(x: ArrayLike, out: np.ndarray):
    return float(out) if np.ndim(x) == 0 else out


# ---------- Chi-square family ----------

def cdf(d: ScaledNoncentralChiSquare, x: ArrayLike):
    """
    P(X <= x) as a Poisson-weighted sum of regularized incomplete gamma
    functions. Accepts a scalar or an array.
    """
    arr = _as_finite_array(x)
    y = np.maximum(arr, 0.0) / (2.0 * d.scale)
    first, weights = _poisson_weights(d.lam / 2.0)
    out = np.zeros_like(y)
    for k, w in enumerate(weights):
        out += w * special.gammainc(d.df / 2.0 + first + k, y)
    out = np.where(arr <= 0.0, 0.0, np.clip(out, 0.0, 1.0))
    return _like_input(x, out)


def sf(d: ScaledNoncentralChiSquare, x: ArrayLike):
    """P(X > x), summed with the complementary incomplete gamma."""
    arr = _as_finite_array(x)
    y = np.maximum(arr, 0.0) / (2.0 * d.scale)
    first, weights = _poisson_weights(d.lam / 2.0)
    out = np.zeros_like(y)
    for k, w in enumerate(weights):
        out += w * special.gammaincc(d.df / 2.0 + first + k, y)
    out = np.where(arr <= 0.0, 1.0, np.clip(out, 0.0, 1.0))
    return _like_input(x, out)


def logpdf(d: ScaledNoncentralChiSquare, x: ArrayLike):
    arr = _as_finite_array(x)
    positive = arr > 0.0
    y = np.where(positive, arr, 1.0) / d.scale
    flat = y.reshape(1, -1)
    first, weights = _poisson_weights(d.lam / 2.0)
    k = d.df + 2.0 * (first + np.arange(weights.size, dtype=float))
    half = k[:, None] / 2.0
    log_terms = (
        np.log(weights)[:, None]
        + (half - 1.0) * np.log(flat)
        - flat / 2.0
        - half * _LOG2
        - special.gammaln(half)
    )
    out = special.logsumexp(log_terms, axis=0).reshape(y.shape) - math.log(d.scale)
    out = np.where(positive, out, -np.inf)
    return _like_input(x, out)


def pdf(d: ScaledNoncentralChiSquare, x: ArrayLike):
    return _like_input(x, np.exp(np.asarray(logpdf(d, x))))


def quantile(d: ScaledNoncentralChiSquare, q: float) -> float:
    """Inverse of ``cdf`` by bracketed root finding."""
    if not (0.0 < q < 1.0):
        raise DomainError(f"q must lie strictly between 0 and 1, got {q!r}")
    hi = d.mean + 10.0 * math.sqrt(d.variance)
    while cdf(d, hi) < q:
        hi *= 2.0
    return optimize.brentq(
        lambda x: cdf(d, x) - q,
        0.0,
        hi,
        xtol=1e-15,
        rtol=4.0 * np.finfo(float).eps,
        maxiter=500,
    )


def draw(scale: float, df: int, lam: ArrayLike, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` values of scale * chi2(df, lam); ``lam`` may be an array of that length."""
    # scale * [chi2(df - 1) + (Z + sqrt(lam))^2]; df = 1 keeps only the shifted square
    values = (rng.standard_normal(size) + np.sqrt(lam)) ** 2
    if df > 1:
        values += rng.chisquare(df - 1, size)
    return scale * values


def sample(d: ScaledNoncentralChiSquare, seed: Any, n: int) -> np.ndarray:
    """
    Draw ``n`` values. ``seed`` is anything ``numpy.random.default_rng``
    accepts (int, SeedSequence or an existing Generator).
    """
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    rng = np.random.default_rng(seed)
    return draw(d.scale, d.df, d.lam, rng, int(n))


def mgf(d: ScaledNoncentralChiSquare, t: float) -> float:
    """(1 - 2tc)^(-p/2) * exp(gamma t / (1 - 2tc)), defined for t < 1/(2c)."""
    if not math.isfinite(t):
        raise DomainError("t must be finite")
    if t >= 1.0 / (2.0 * d.scale):
        raise DomainError(f"MGF diverges for t >= 1/(2*scale) = {1.0 / (2.0 * d.scale)!r}")
    denom = 1.0 - 2.0 * t * d.scale
    return denom ** (-d.df / 2.0) * math.exp(d.noncentrality * t / denom)


def compound(c1: float, p: int, c2: float, gamma2: float) -> ScaledNoncentralChiSquare:
    """
    Marginal law of x when ``x | g ~ c1 chi2(p, g / c1)`` and
    ``g ~ c2 chi2(p, gamma2 / c2)``: ``(c1 + c2) chi2(p, gamma2 / (c1 + c2))``.

    ``c2 = 0`` means g is degenerate at gamma2, which returns the conditional law.
    Both laws must share the same df.
    """
    if not (math.isfinite(c1) and c1 > 0):
        raise ValidationError(f"c1 must be positive, got {c1!r}")
    if not (math.isfinite(c2) and c2 >= 0):
        raise ValidationError(f"c2 must be nonnegative, got {c2!r}")
    if not (math.isfinite(gamma2) and gamma2 >= 0):
        raise ValidationError(f"gamma2 must be nonnegative, got {gamma2!r}")
    return ScaledNoncentralChiSquare(c1 + c2, p, gamma2)


def mgf_mixture_quadrature(c1: float, p: int, c2: float, gamma2: float, t: float) -> float:
    """
    E[mgf of c1 chi2(p, g / c1) at t] with g ~ c2 chi2(p, gamma2 / c2),
    integrated numerically over the density of g.
    """
    if c2 == 0.0:
        return mgf(ScaledNoncentralChiSquare(c1, p, gamma2), t)
    if t >= 1.0 / (2.0 * (c1 + c2)):
        raise DomainError("mixture MGF diverges for t >= 1/(2*(c1+c2))")
    if t >= 1.0 / (2.0 * c1):
        raise DomainError("conditional MGF diverges for t >= 1/(2*c1)")

    mixing = ScaledNoncentralChiSquare(c2, p, gamma2)
    denom = 1.0 - 2.0 * t * c1
    log_front = -p / 2.0 * math.log(denom)
    rate = t / denom

    # exp(rate g) * density(g) is proportional to the density of
    # (c2 v) chi2(p, gamma2 v / c2) with v = 1 / (1 - 2 c2 rate); the integration
    # grid follows that tilted law, whose mass drifts far right as t nears the boundary
    stretch = 1.0 / (1.0 - 2.0 * c2 * rate)
    tilted = ScaledNoncentralChiSquare(c2 * stretch, p, gamma2 * stretch**2)
    centre = tilted.mean
    spread = math.sqrt(tilted.variance)
    log_peak = log_front + centre * rate + logpdf(mixing, centre)

    def integrand(g: float) -> float:
        if g <= 0.0:
            return 0.0
        return math.exp(log_front + g * rate + logpdf(mixing, g) - log_peak)

    edges = [0.0] + [
        e for e in (centre - 6.0 * spread, centre, centre + 6.0 * spread, centre + 30.0 * spread) if e > 0.0
    ]
    opts = {"epsabs": 1e-13 * spread, "epsrel": 1e-12, "limit": 400}
    total = sum(integrate.quad(integrand, lo, hi, **opts)[0] for lo, hi in zip(edges[:-1], edges[1:]))
    total += integrate.quad(integrand, edges[-1], np.inf, **opts)[0]
    return math.exp(log_peak) * total


# ---------- F family ----------

def _f_argument(d: ScaledF, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    y = np.maximum(x, 0.0) / d.scale
    denom = d.df_num * y + d.df_den
    return d.df_num * y / denom, d.df_den / denom


def scaled_f_cdf(d: ScaledF, x: ArrayLike):
    """Central case via the incomplete beta function, noncentral via a Poisson-weighted series."""
    arr = _as_finite_array(x)
    z, _ = _f_argument(d, arr)
    first, weights = _poisson_weights(d.noncentrality / 2.0)
    out = np.zeros_like(z)
    for k, w in enumerate(weights):
        out += w * special.betainc(d.df_num / 2.0 + first + k, d.df_den / 2.0, z)
    out = np.where(arr <= 0.0, 0.0, np.clip(out, 0.0, 1.0))
    return _like_input(x, out)


def scaled_f_sf(d: ScaledF, x: ArrayLike):
    arr = _as_finite_array(x)
    _, zc = _f_argument(d, arr)
    first, weights = _poisson_weights(d.noncentrality / 2.0)
    out = np.zeros_like(zc)
    for k, w in enumerate(weights):
        out += w * special.betainc(d.df_den / 2.0, d.df_num / 2.0 + first + k, zc)
    out = np.where(arr <= 0.0, 1.0, np.clip(out, 0.0, 1.0))
    return _like_input(x, out)


def scaled_f_quantile(d: ScaledF, q: float) -> float:
    if not (0.0 < q < 1.0):
        raise DomainError(f"q must lie strictly between 0 and 1, got {q!r}")
    if d.noncentrality == 0.0:
        b = special.betaincinv(d.df_num / 2.0, d.df_den / 2.0, q)
        return d.scale * d.df_den * b / (d.df_num * (1.0 - b))
    hi = d.scale * 10.0
    while scaled_f_cdf(d, hi) < q:
        hi *= 2.0
    return optimize.brentq(
        lambda x: scaled_f_cdf(d, x) - q,
        0.0,
        hi,
        xtol=1e-15,
        rtol=4.0 * np.finfo(float).eps,
        maxiter=500,
    )
