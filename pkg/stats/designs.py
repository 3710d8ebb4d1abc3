# stats/designs.py
"""
Balanced designs: model specification, true parameters and dense datasets.

Every supported design is described by an ordered list of model terms. A term
is a set of factors (``A``, ``B``, ``AB``, ...) with an effect kind; each term
owns one ANOVA source, and the residual owns the error source. Responses are
stored densely with one axis per factor followed by a replicate axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from stats.errors import (
    DuplicateCellError,
    MalformedInputError,
    ParameterError,
    UnbalancedDataError,
    UnknownLevelError,
    UnsupportedDesignError,
    ValidationError,
)

RESPONSE_COLUMN = "y"
BLOCKS = "Blocks"
WHOLE_PLOT_ERROR = "WholePlotError"
RESERVED_NAMES = {"Error", WHOLE_PLOT_ERROR, "SubplotError", RESPONSE_COLUMN}


class EffectKind(str, Enum):
    FIXED = "fixed"
    RANDOM = "random"


class Design(str, Enum):
    ONE_WAY = "one_way"
    RCBD = "rcbd"
    TWO_WAY_INTERACTION = "two_way_interaction"
    SPLIT_PLOT = "split_plot"


_FACTOR_COUNT = {
    Design.ONE_WAY: 1,
    Design.RCBD: 2,
    Design.TWO_WAY_INTERACTION: 2,
    Design.SPLIT_PLOT: 3,
}


# ---------- Model structure ----------

@dataclass(frozen=True)
class Factor:
    name: str
    levels: int
    kind: EffectKind = EffectKind.FIXED

    def __post_init__(self) -> None:
        if not isinstance(self.name, str) or not self.name.isidentifier():
            raise UnsupportedDesignError(f"factor name must be an identifier, got {self.name!r}")
        if int(self.levels) != self.levels or self.levels < 2:
            raise UnsupportedDesignError(
                f"factor {self.name} needs at least 2 levels, got {self.levels!r}"
            )
        object.__setattr__(self, "levels", int(self.levels))
        object.__setattr__(self, "kind", _as_kind(self.kind))


@dataclass(frozen=True)
class ModelTerm:
    """A model term: the factors it is indexed by and its effect kind."""

    name: str
    factors: Tuple[str, ...]
    kind: EffectKind


def _as_kind(value: Union[str, EffectKind]) -> EffectKind:
    try:
        return EffectKind(value)
    except ValueError:
        raise UnsupportedDesignError(f"unknown effect kind {value!r}") from None


def interaction_name(names: Sequence[str]) -> str:
    """``AB`` for single-letter factors, ``fert:variety`` otherwise."""
    if all(len(n) == 1 for n in names):
        return "".join(names)
    return ":".join(names)


@dataclass(frozen=True)
class ModelSpec:
    """
    Structure of a balanced design.

    split_plot factors are ordered (block, whole-plot factor, subplot factor);
    the block factor's level count is the number of blocks r and
    ``replicates`` must be 1. The block x whole-plot interaction is always a
    random term named ``WholePlotError``; the block source is ``Blocks``
    whatever the block factor is called.
    """

    design: Design
    factors: Tuple[Factor, ...]
    replicates: int = 1
    interaction_kind: Optional[EffectKind] = None

    def __post_init__(self) -> None:
        try:
            design = Design(self.design)
        except ValueError:
            raise UnsupportedDesignError(f"unknown design {self.design!r}") from None
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "factors", tuple(self.factors))
        if self.interaction_kind is not None:
            object.__setattr__(self, "interaction_kind", _as_kind(self.interaction_kind))

        expected = _FACTOR_COUNT[design]
        if len(self.factors) != expected:
            raise UnsupportedDesignError(
                f"{design.value} needs exactly {expected} factor(s), got {len(self.factors)}"
            )
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise UnsupportedDesignError(f"factor names must be unique, got {names}")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise UnsupportedDesignError(f"replicates must be >= 1, got {self.replicates!r}")
        object.__setattr__(self, "replicates", int(self.replicates))
        if design in (Design.RCBD, Design.SPLIT_PLOT) and self.replicates != 1:
            raise UnsupportedDesignError(
                f"{design.value} has one observation per cell; replicates must be 1"
            )

        has_interaction = design in (Design.TWO_WAY_INTERACTION, Design.SPLIT_PLOT)
        if has_interaction and self.interaction_kind is None:
            raise UnsupportedDesignError(f"{design.value} needs an interaction_kind")
        if not has_interaction and self.interaction_kind is not None:
            raise UnsupportedDesignError(f"{design.value} has no interaction term")
        if has_interaction:
            a, b = self.factors[-2], self.factors[-1]
            parent_random = EffectKind.RANDOM in (a.kind, b.kind)
            if self.interaction_kind is EffectKind.RANDOM and not parent_random:
                raise UnsupportedDesignError(
                    f"unsupported: random interaction of two fixed factors {a.name} and {b.name}"
                )
            if self.interaction_kind is EffectKind.FIXED and parent_random:
                raise UnsupportedDesignError(
                    f"unsupported: fixed interaction with a random factor among {a.name}, {b.name}"
                )

        for name in names:
            if name in RESERVED_NAMES:
                raise UnsupportedDesignError(f"factor name {name!r} is reserved")
        taken = set()
        for term in self.terms:
            if term.name in taken:
                raise UnsupportedDesignError(f"source name {term.name!r} is used twice")
            taken.add(term.name)

    # ---- shape ----

    @property
    def factor_names(self) -> Tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(f.levels for f in self.factors) + (self.replicates,)

    @property
    def n_obs(self) -> int:
        return int(np.prod(self.shape))

    def factor(self, name: str) -> Factor:
        for f in self.factors:
            if f.name == name:
                return f
        raise ValidationError(f"unknown factor {name!r}")

    # ---- terms and sources ----

    @property
    def terms(self) -> Tuple[ModelTerm, ...]:
        fs = self.factors
        if self.design is Design.ONE_WAY:
            return (ModelTerm(fs[0].name, (fs[0].name,), fs[0].kind),)
        if self.design is Design.RCBD:
            return tuple(ModelTerm(f.name, (f.name,), f.kind) for f in fs)
        if self.design is Design.TWO_WAY_INTERACTION:
            a, b = fs
            return (
                ModelTerm(a.name, (a.name,), a.kind),
                ModelTerm(b.name, (b.name,), b.kind),
                ModelTerm(interaction_name([a.name, b.name]), (a.name, b.name), self.interaction_kind),
            )
        block, a, b = fs
        return (
            ModelTerm(BLOCKS, (block.name,), block.kind),
            ModelTerm(a.name, (a.name,), a.kind),
            ModelTerm(WHOLE_PLOT_ERROR, (block.name, a.name), EffectKind.RANDOM),
            ModelTerm(b.name, (b.name,), b.kind),
            ModelTerm(interaction_name([a.name, b.name]), (a.name, b.name), self.interaction_kind),
        )

    def term(self, name: str) -> ModelTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise ValidationError(f"unknown model term {name!r}")

    @property
    def error_source(self) -> str:
        return "SubplotError" if self.design is Design.SPLIT_PLOT else "Error"

    @property
    def residual_df(self) -> int:
        return self.n_obs - 1 - sum(self.term_df(t) for t in self.terms)

    @property
    def sources(self) -> Tuple[str, ...]:
        names = tuple(t.name for t in self.terms)
        if self.residual_df > 0:
            names += (self.error_source,)
        return names

    def term_df(self, term: ModelTerm) -> int:
        return int(np.prod([self.factor(f).levels - 1 for f in term.factors]))

    def df(self, source: str) -> int:
        if source == self.error_source:
            return self.residual_df
        return self.term_df(self.term(source))

    def cells(self, term: ModelTerm) -> int:
        return int(np.prod([self.factor(f).levels for f in term.factors]))

    def obs_per_cell(self, term: ModelTerm) -> int:
        """Number of observations sharing one level combination of the term."""
        return self.n_obs // self.cells(term)

    def superterms(self, source: str) -> List[ModelTerm]:
        """Terms whose factor set contains the source's factor set (the term itself included)."""
        own = set(self.term(source).factors)
        return [t for t in self.terms if own <= set(t.factors)]

    def term_axes(self, term: ModelTerm, offset: int = 0) -> Tuple[int, ...]:
        return tuple(offset + self.factor_names.index(f) for f in term.factors)

    def embed(self, term: ModelTerm, effects: np.ndarray, batch_ndim: int = 0) -> np.ndarray:
        """
        Reshape term-indexed effects (leading batch axes allowed) so they
        broadcast against the full response array.
        """
        batch = effects.shape[:batch_ndim]
        full = [f.levels if f.name in term.factors else 1 for f in self.factors] + [1]
        return effects.reshape(batch + tuple(full))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "design": self.design.value,
            "factors": [
                {"name": f.name, "levels": f.levels, "kind": f.kind.value} for f in self.factors
            ],
            "replicates": self.replicates,
            "interaction_kind": self.interaction_kind.value if self.interaction_kind else None,
        }


# ---------- Parameters ----------

@dataclass(frozen=True, eq=False)
class ModelParams:
    """
    True parameter values. ``fixed_effects`` maps fixed term names to effect
    arrays (interaction arrays may be given flat, row-major);
    ``variance_components`` maps random term names to variances. Missing
    entries are zero.
    """

    mu: float = 0.0
    sigma2: float = 1.0
    fixed_effects: Mapping[str, Any] = field(default_factory=dict)
    variance_components: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu)):
            raise ParameterError("mu must be finite")
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ParameterError(f"sigma2 must be positive, got {self.sigma2!r}")
        effects = {}
        for name, values in dict(self.fixed_effects).items():
            arr = np.array(values, dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ParameterError(f"fixed effects for {name} must be finite")
            arr.setflags(write=False)
            effects[name] = arr
        components = {}
        for name, value in dict(self.variance_components).items():
            value = float(value)
            if not (math.isfinite(value) and value >= 0):
                raise ParameterError(f"variance component {name} must be nonnegative, got {value!r}")
            components[name] = value
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "fixed_effects", effects)
        object.__setattr__(self, "variance_components", components)

    def effects_for(self, spec: ModelSpec, term: ModelTerm) -> np.ndarray:
        shape = tuple(spec.factor(f).levels for f in term.factors)
        values = self.fixed_effects.get(term.name)
        if values is None:
            return np.zeros(shape)
        return values.reshape(shape)

    def variance_for(self, term: ModelTerm) -> float:
        return self.variance_components.get(term.name, 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mu": self.mu,
            "sigma2": self.sigma2,
            "fixed_effects": {k: v.ravel().tolist() for k, v in self.fixed_effects.items()},
            "variance_components": dict(self.variance_components),
        }


def check_params(spec: ModelSpec, params: ModelParams) -> None:
    """Raise ParameterError unless every parameter matches a term of the right kind and size."""
    terms = {t.name: t for t in spec.terms}
    for name, values in params.fixed_effects.items():
        term = terms.get(name)
        if term is None:
            raise ParameterError(f"fixed effects given for unknown term {name!r}")
        if term.kind is not EffectKind.FIXED:
            raise ParameterError(f"term {name} is random; give a variance component instead")
        if values.size != spec.cells(term):
            raise ParameterError(
                f"fixed effects for {name} need {spec.cells(term)} values, got {values.size}"
            )
    for name in params.variance_components:
        term = terms.get(name)
        if term is None:
            raise ParameterError(f"variance component given for unknown term {name!r}")
        if term.kind is not EffectKind.RANDOM:
            raise ParameterError(f"term {name} is fixed; give fixed effects instead")


def interaction_contrast(arr: np.ndarray, axes: Iterable[int]) -> np.ndarray:
    """Centre ``arr`` along each axis in turn (main-effect or interaction contrast)."""
    out = arr
    for axis in axes:
        out = out - out.mean(axis=axis, keepdims=True)
    return out


def fixed_noncentrality(spec: ModelSpec, params: ModelParams, source: str) -> float:
    """
    Noncentrality contributed to a source by the fixed part of the mean:
    the source's sum of squares evaluated on the noise-free fixed effects.
    Effects are not re-centred, so uncentred vectors are allowed.
    """
    if source == spec.error_source:
        return 0.0
    own = spec.term(source)
    axes = spec.term_axes(own)
    total = np.zeros([1] * (len(spec.factors) + 1))
    for term in spec.superterms(source):
        if term.kind is not EffectKind.FIXED:
            continue
        full = spec.embed(term, params.effects_for(spec, term))
        drop = tuple(i for i in spec.term_axes(term) if i not in axes)
        total = total + (full.mean(axis=drop, keepdims=True) if drop else full)
    contrast = interaction_contrast(total, axes)
    return float(spec.obs_per_cell(own) * np.sum(contrast**2))


# ---------- Data ----------

@dataclass(frozen=True, eq=False)
class BalancedDataset:
    """Complete balanced responses, indexed by factor levels then replicate."""

    spec: ModelSpec
    values: np.ndarray
    labels: Optional[Tuple[Tuple[str, ...], ...]] = None

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != self.spec.shape:
            raise ValidationError(f"expected response shape {self.spec.shape}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise MalformedInputError("responses must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        labels = self.labels
        if labels is None:
            labels = tuple(tuple(str(i + 1) for i in range(f.levels)) for f in self.spec.factors)
        object.__setattr__(self, "labels", tuple(tuple(ls) for ls in labels))

    @property
    def n_obs(self) -> int:
        return self.values.size


def _describe_cell(spec: ModelSpec, labels: List[List[str]], index: Tuple[int, ...]) -> str:
    return ", ".join(f"{f.name}={labels[k][i]}" for k, (f, i) in enumerate(zip(spec.factors, index)))


def validate(spec: ModelSpec, raw: Union[pd.DataFrame, Iterable[Mapping[str, Any]]]) -> BalancedDataset:
    """
    Turn long-format records (one column per factor plus ``y``) into a dense
    balanced dataset. Level labels are matched as strings and indexed in order
    of first appearance; replicates within a cell keep record order.
    """
    frame = raw if isinstance(raw, pd.DataFrame) else pd.DataFrame(list(raw))
    for column in spec.factor_names + (RESPONSE_COLUMN,):
        if column not in frame.columns:
            raise MalformedInputError(f"missing column {column!r}")

    response = pd.to_numeric(frame[RESPONSE_COLUMN], errors="coerce")
    bad = response.isna() | ~np.isfinite(response.astype(float))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise MalformedInputError(
            f"non-numeric response {frame[RESPONSE_COLUMN].iloc[row]!r} in record {row + 1}"
        )

    labels: List[List[str]] = []
    codes = np.empty((len(frame), len(spec.factors)), dtype=int)
    for k, factor in enumerate(spec.factors):
        blank = frame[factor.name].isna() | (frame[factor.name].astype(str).str.strip() == "")
        if blank.any():
            row = int(np.flatnonzero(blank.to_numpy())[0])
            raise MalformedInputError(f"missing label for factor {factor.name} in record {row + 1}")
        column = frame[factor.name].astype(str).str.strip()
        seen = list(pd.unique(column))
        if len(seen) > factor.levels:
            raise UnknownLevelError(
                f"unknown level: factor {factor.name} has label {seen[factor.levels]!r} "
                f"beyond its {factor.levels} declared levels"
            )
        labels.append([str(s) for s in seen])
        codes[:, k] = pd.Categorical(column, categories=seen).codes

    level_shape = spec.shape[:-1]
    counts = np.zeros(level_shape, dtype=int)
    np.add.at(counts, tuple(codes.T), 1)

    over = np.argwhere(counts > spec.replicates)
    if over.size:
        index = tuple(over[0])
        raise DuplicateCellError(
            f"duplicate cell: cell {_describe_cell(spec, labels, index)} has "
            f"{counts[index]} records, expected {spec.replicates}"
        )
    for factor, seen in zip(spec.factors, labels):
        if len(seen) < factor.levels:
            raise UnbalancedDataError(
                f"unbalanced: factor {factor.name} has {len(seen)} of {factor.levels} levels"
            )
    under = np.argwhere(counts < spec.replicates)
    if under.size:
        index = tuple(under[0])
        raise UnbalancedDataError(
            f"unbalanced: cell {_describe_cell(spec, labels, index)} has "
            f"{counts[index]} of {spec.replicates} replicates"
        )

    replicate = pd.DataFrame(codes).groupby(list(range(codes.shape[1])), sort=False).cumcount()
    values = np.empty(spec.shape)
    values[tuple(codes.T) + (replicate.to_numpy(),)] = response.to_numpy(dtype=float)
    return BalancedDataset(spec, values, tuple(tuple(ls) for ls in labels))


def cell_means(data: BalancedDataset, margin: Iterable[str]):
    """
    Means over every index not in ``margin``; result axes follow the spec's
    factor order. An empty margin gives the grand mean as a float.
    """
    margin = set(margin)
    unknown = margin - set(data.spec.factor_names)
    if unknown:
        raise ValidationError(f"unknown factor(s) in margin: {sorted(unknown)}")
    drop = tuple(
        i for i, name in enumerate(data.spec.factor_names) if name not in margin
    ) + (len(data.spec.factors),)
    means = data.values.mean(axis=drop)
    return float(means) if means.ndim == 0 else means


def to_frame(data: BalancedDataset) -> pd.DataFrame:
    """Long-format records in the layout ``validate`` reads back."""
    spec = data.spec
    index = np.indices(spec.shape).reshape(len(spec.shape), -1)
    columns = {
        f.name: np.asarray(data.labels[k], dtype=object)[index[k]]
        for k, f in enumerate(spec.factors)
    }
    columns[RESPONSE_COLUMN] = data.values.reshape(-1)
    return pd.DataFrame(columns)
