# utils/data_loader.py
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, List, Optional, TextIO, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, StrictInt
from pydantic import ValidationError as SchemaError

from stats.designs import RESPONSE_COLUMN, BalancedDataset, Factor, ModelSpec, to_frame, validate
from stats.errors import MalformedInputError

PathLike = Union[str, Path]


# ---------- Model files ----------

class FactorEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., description="Factor name, also its CSV column")
    levels: StrictInt = Field(..., description="Number of levels")
    kind: str = Field("fixed", description="fixed or random")


class ModelFile(BaseModel):
    """On-disk model document; design rules are checked by ModelSpec itself."""

    model_config = ConfigDict(extra="forbid")

    design: str = Field(..., description="one_way, rcbd, two_way_interaction or split_plot")
    factors: List[FactorEntry] = Field(..., description="Factors in design order")
    replicates: StrictInt = Field(1, description="Observations per cell")
    interaction_kind: Optional[str] = Field(None, description="Kind of the A x B term, two-way only")


def _schema_message(e: SchemaError) -> str:
    errors = e.errors()
    unknown = [".".join(str(p) for p in err["loc"]) for err in errors if err["type"] == "extra_forbidden"]
    if unknown:
        return f"unknown field(s) in model file: {unknown}"
    first = errors[0]
    where = ".".join(str(p) for p in first["loc"]) or "model file"
    return f"{where}: {first['msg']}"


def model_from_dict(doc: Any) -> ModelSpec:
    """Build a ModelSpec from a parsed model document; unknown fields are rejected."""
    try:
        parsed = ModelFile.model_validate(doc)
    except SchemaError as e:
        raise MalformedInputError(_schema_message(e)) from e
    return ModelSpec(
        design=parsed.design,
        factors=tuple(Factor(f.name, f.levels, f.kind) for f in parsed.factors),
        replicates=parsed.replicates,
        interaction_kind=parsed.interaction_kind,
    )


def load_model(path: PathLike) -> ModelSpec:
    """Read a JSON model file. OSError propagates; bad content raises MalformedInputError."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedInputError(f"model file {path} is not valid JSON: {e}") from e
    return model_from_dict(doc)


def save_model(spec: ModelSpec, path: PathLike) -> None:
    doc = ModelFile.model_validate(spec.to_dict()).model_dump(exclude_none=True)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# ---------- Data files ----------

def load_dataset(path: PathLike, spec: ModelSpec) -> BalancedDataset:
    """
    Read a comma-separated file with a header row. Factor columns are read as
    strings so labels such as ``01`` survive; the response column must be numeric.
    """
    dtypes = {name: str for name in spec.factor_names}
    try:
        frame = pd.read_csv(path, dtype=dtypes, encoding="utf-8", float_precision="round_trip")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise MalformedInputError(f"cannot parse {path}: {e}") from e
    return validate(spec, frame)


def write_dataset(data: BalancedDataset, target: Union[PathLike, TextIO]) -> None:
    """Write the dataset in the long format ``load_dataset`` reads (a path or an open text stream)."""
    columns = list(data.spec.factor_names) + [RESPONSE_COLUMN]
    to_frame(data).to_csv(target, index=False, float_format="%.17g", columns=columns)
