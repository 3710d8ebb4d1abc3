# tests/conftest.py
from __future__ import annotations

from pathlib import Path

import pytest

from stats.designs import Design, Factor, ModelSpec

EXAMPLES_DIR = Path(__file__).parent.parent / "data" / "examples"


@pytest.fixture
def examples_dir() -> Path:
    return EXAMPLES_DIR


@pytest.fixture
def one_way_small() -> ModelSpec:
    return ModelSpec(Design.ONE_WAY, (Factor("A", 2),), replicates=2)


@pytest.fixture
def one_way_random() -> ModelSpec:
    return ModelSpec(Design.ONE_WAY, (Factor("A", 3, "random"),), replicates=4)


@pytest.fixture
def rcbd_small() -> ModelSpec:
    return ModelSpec(Design.RCBD, (Factor("A", 2), Factor("B", 2, "random")))


@pytest.fixture
def rcbd_mixed() -> ModelSpec:
    return ModelSpec(Design.RCBD, (Factor("A", 3), Factor("B", 4, "random")))


@pytest.fixture
def two_way_random() -> ModelSpec:
    return ModelSpec(
        Design.TWO_WAY_INTERACTION,
        (Factor("A", 2, "random"), Factor("B", 3, "random")),
        replicates=2,
        interaction_kind="random",
    )


@pytest.fixture
def split_plot() -> ModelSpec:
    return ModelSpec(
        Design.SPLIT_PLOT,
        (Factor("block", 4, "random"), Factor("A", 3), Factor("B", 2)),
        interaction_kind="fixed",
    )


def all_designs() -> list[ModelSpec]:
    """One representative spec per supported design."""
    return [
        ModelSpec(Design.ONE_WAY, (Factor("A", 3, "random"),), replicates=4),
        ModelSpec(Design.RCBD, (Factor("A", 3), Factor("B", 4, "random"))),
        ModelSpec(
            Design.TWO_WAY_INTERACTION,
            (Factor("A", 2, "random"), Factor("B", 3, "random")),
            replicates=2,
            interaction_kind="random",
        ),
        ModelSpec(
            Design.SPLIT_PLOT,
            (Factor("block", 4, "random"), Factor("A", 3), Factor("B", 2)),
            interaction_kind="fixed",
        ),
    ]
