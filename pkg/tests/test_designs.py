# tests/test_designs.py
from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from stats.designs import (
    BalancedDataset,
    Design,
    EffectKind,
    Factor,
    ModelParams,
    ModelSpec,
    cell_means,
    check_params,
    fixed_noncentrality,
    interaction_name,
    to_frame,
    validate,
)
from stats.errors import (
    DuplicateCellError,
    MalformedInputError,
    ParameterError,
    UnbalancedDataError,
    UnknownLevelError,
    UnsupportedDesignError,
    ValidationError,
)

ONE_WAY_RECORDS = [
    {"A": 1, "y": 1.0},
    {"A": 1, "y": 2.0},
    {"A": 2, "y": 3.0},
    {"A": 2, "y": 4.0},
]


# ---------- Model structure ----------

def test_factor_validation():
    with pytest.raises(UnsupportedDesignError):
        Factor("A", 1)
    with pytest.raises(UnsupportedDesignError):
        Factor("not a name", 3)
    with pytest.raises(UnsupportedDesignError):
        Factor("A", 3, "mixed")
    assert Factor("A", 3, "random").kind is EffectKind.RANDOM


def test_interaction_name():
    assert interaction_name(["A", "B"]) == "AB"
    assert interaction_name(["fert", "variety"]) == "fert:variety"


def test_sources_and_df(one_way_small, rcbd_mixed, two_way_random, split_plot):
    assert one_way_small.sources == ("A", "Error")
    assert [one_way_small.df(s) for s in one_way_small.sources] == [1, 2]

    assert rcbd_mixed.sources == ("A", "B", "Error")
    assert [rcbd_mixed.df(s) for s in rcbd_mixed.sources] == [2, 3, 6]

    assert two_way_random.sources == ("A", "B", "AB", "Error")
    assert [two_way_random.df(s) for s in two_way_random.sources] == [1, 2, 2, 6]

    assert split_plot.sources == ("Blocks", "A", "WholePlotError", "B", "AB", "SubplotError")
    assert [split_plot.df(s) for s in split_plot.sources] == [3, 2, 6, 1, 2, 9]
    assert split_plot.n_obs == 24


def test_df_sums_to_total(one_way_random, rcbd_mixed, two_way_random, split_plot):
    for spec in (one_way_random, rcbd_mixed, two_way_random, split_plot):
        assert sum(spec.df(s) for s in spec.sources) == spec.n_obs - 1


def test_two_way_without_replication_has_no_error_row():
    spec = ModelSpec(
        Design.TWO_WAY_INTERACTION,
        (Factor("A", 3), Factor("B", 4, "random")),
        replicates=1,
        interaction_kind="random",
    )
    assert spec.sources == ("A", "B", "AB")
    assert spec.residual_df == 0


@pytest.mark.parametrize(
    "design,factors,kwargs",
    [
        (Design.ONE_WAY, (Factor("A", 2), Factor("B", 2)), {}),
        (Design.RCBD, (Factor("A", 2),), {}),
        (Design.RCBD, (Factor("A", 2), Factor("B", 2)), {"replicates": 2}),
        (Design.SPLIT_PLOT, (Factor("r", 2), Factor("A", 2)), {"interaction_kind": "fixed"}),
        (Design.TWO_WAY_INTERACTION, (Factor("A", 2), Factor("B", 2)), {}),
        (Design.ONE_WAY, (Factor("A", 2),), {"interaction_kind": "fixed"}),
        (Design.ONE_WAY, (Factor("A", 2),), {"replicates": 0}),
        (Design.RCBD, (Factor("A", 2), Factor("A", 3)), {}),
        (Design.ONE_WAY, (Factor("Error", 2),), {}),
        ("latin_square", (Factor("A", 2),), {}),
    ],
)
def test_unsupported_specs(design, factors, kwargs):
    with pytest.raises(UnsupportedDesignError):
        ModelSpec(design, factors, **kwargs)


def test_interaction_kind_rules():
    fixed = (Factor("A", 2), Factor("B", 3))
    with pytest.raises(UnsupportedDesignError, match="random interaction of two fixed"):
        ModelSpec(Design.TWO_WAY_INTERACTION, fixed, replicates=2, interaction_kind="random")
    mixed = (Factor("A", 2), Factor("B", 3, "random"))
    with pytest.raises(UnsupportedDesignError):
        ModelSpec(Design.TWO_WAY_INTERACTION, mixed, replicates=2, interaction_kind="fixed")
    ModelSpec(Design.TWO_WAY_INTERACTION, fixed, replicates=2, interaction_kind="fixed")
    ModelSpec(Design.TWO_WAY_INTERACTION, mixed, replicates=2, interaction_kind="random")


def test_split_plot_whole_plot_error_is_random(split_plot):
    term = split_plot.term("WholePlotError")
    assert term.kind is EffectKind.RANDOM
    assert term.factors == ("block", "A")


def test_superterms(split_plot):
    assert [t.name for t in split_plot.superterms("A")] == ["A", "WholePlotError", "AB"]
    assert [t.name for t in split_plot.superterms("Blocks")] == ["Blocks", "WholePlotError"]


def test_split_plot_block_source_name():
    factors = (Factor("rep", 3, "random"), Factor("A", 2), Factor("B", 2))
    spec = ModelSpec(Design.SPLIT_PLOT, factors, interaction_kind="fixed")
    assert spec.sources[0] == "Blocks"
    assert spec.term("Blocks").factors == ("rep",)
    clash = (Factor("rep", 3, "random"), Factor("Blocks", 2), Factor("B", 2))
    with pytest.raises(UnsupportedDesignError, match="used twice"):
        ModelSpec(Design.SPLIT_PLOT, clash, interaction_kind="fixed")


# ---------- Parameters ----------

def test_params_validation():
    with pytest.raises(ParameterError):
        ModelParams(sigma2=0.0)
    with pytest.raises(ParameterError):
        ModelParams(variance_components={"A": -1.0})
    with pytest.raises(ParameterError):
        ModelParams(fixed_effects={"A": [1.0, np.nan]})


def test_params_are_read_only():
    params = ModelParams(fixed_effects={"A": [1.0, -1.0]})
    with pytest.raises(ValueError):
        params.fixed_effects["A"][0] = 5.0


def test_check_params(rcbd_mixed):
    check_params(rcbd_mixed, ModelParams(fixed_effects={"A": [1, 0, -1]}, variance_components={"B": 2}))
    with pytest.raises(ParameterError, match="unknown term"):
        check_params(rcbd_mixed, ModelParams(variance_components={"C": 1.0}))
    with pytest.raises(ParameterError, match="is random"):
        check_params(rcbd_mixed, ModelParams(fixed_effects={"B": [0, 0, 0, 0]}))
    with pytest.raises(ParameterError, match="is fixed"):
        check_params(rcbd_mixed, ModelParams(variance_components={"A": 1.0}))
    with pytest.raises(ParameterError, match="need 3 values"):
        check_params(rcbd_mixed, ModelParams(fixed_effects={"A": [1, -1]}))


def test_fixed_noncentrality_one_way():
    spec = ModelSpec(Design.ONE_WAY, (Factor("A", 3),), replicates=4)
    assert fixed_noncentrality(spec, ModelParams(fixed_effects={"A": [-1, 0, 1]}), "A") == pytest.approx(8.0)
    # effects are not re-centred; a shift leaves the contrast unchanged
    assert fixed_noncentrality(spec, ModelParams(fixed_effects={"A": [0, 1, 2]}), "A") == pytest.approx(8.0)
    assert fixed_noncentrality(spec, ModelParams(), "A") == 0.0
    assert fixed_noncentrality(spec, ModelParams(fixed_effects={"A": [-1, 0, 1]}), "Error") == 0.0


def test_fixed_noncentrality_interaction_enters_main_effect():
    spec = ModelSpec(
        Design.TWO_WAY_INTERACTION, (Factor("A", 2), Factor("B", 2)), replicates=1, interaction_kind="fixed"
    )
    # an uncentred interaction has a non-zero A margin
    params = ModelParams(fixed_effects={"AB": [1.0, 1.0, 0.0, 0.0]})
    assert fixed_noncentrality(spec, params, "A") == pytest.approx(1.0)
    assert fixed_noncentrality(spec, params, "B") == pytest.approx(0.0)
    assert fixed_noncentrality(spec, params, "AB") == pytest.approx(0.0)


# ---------- Data ----------

def test_validate_complete(one_way_small):
    data = validate(one_way_small, ONE_WAY_RECORDS)
    assert data.n_obs == 4
    np.testing.assert_array_equal(data.values, [[1.0, 2.0], [3.0, 4.0]])
    assert data.labels == (("1", "2"),)


def test_validate_accepts_dataframe(rcbd_small):
    frame = pd.DataFrame({"A": ["x", "x", "y", "y"], "B": ["p", "q", "p", "q"], "y": [1, 2, 3, 5]})
    data = validate(rcbd_small, frame)
    np.testing.assert_array_equal(data.values[..., 0], [[1.0, 2.0], [3.0, 5.0]])


def test_validate_missing_replicate(one_way_small):
    with pytest.raises(UnbalancedDataError) as excinfo:
        validate(one_way_small, ONE_WAY_RECORDS[:3])
    assert str(excinfo.value) == "unbalanced: cell A=2 has 1 of 2 replicates"


def test_validate_duplicate_cell(rcbd_small):
    records = [
        {"A": 1, "B": 1, "y": 1.0},
        {"A": 1, "B": 2, "y": 2.0},
        {"A": 2, "B": 1, "y": 3.0},
        {"A": 2, "B": 2, "y": 5.0},
        {"A": 2, "B": 2, "y": 6.0},
    ]
    with pytest.raises(DuplicateCellError, match="A=2, B=2"):
        validate(rcbd_small, records)


def test_validate_unknown_level(one_way_small):
    records = ONE_WAY_RECORDS + [{"A": 3, "y": 5.0}]
    with pytest.raises(UnknownLevelError):
        validate(one_way_small, records)


def test_validate_missing_level(one_way_small):
    with pytest.raises(UnbalancedDataError):
        validate(one_way_small, ONE_WAY_RECORDS[:2])


def test_validate_malformed(one_way_small):
    with pytest.raises(MalformedInputError, match="non-numeric"):
        validate(one_way_small, ONE_WAY_RECORDS[:3] + [{"A": 2, "y": "abc"}])
    with pytest.raises(MalformedInputError, match="missing column"):
        validate(one_way_small, [{"A": 1, "z": 1.0}])


def test_validate_blank_label(one_way_small):
    records = [{"A": 1, "y": 1.0}, {"A": None, "y": 2.0}, {"A": 2, "y": 3.0}, {"A": 2, "y": 4.0}]
    with pytest.raises(MalformedInputError, match="missing label for factor A in record 2"):
        validate(one_way_small, records)
    records[1]["A"] = "  "
    with pytest.raises(MalformedInputError, match="record 2"):
        validate(one_way_small, records)


def test_validation_errors_are_value_errors(one_way_small):
    with pytest.raises(ValueError):
        validate(one_way_small, ONE_WAY_RECORDS[:3])


def test_cell_means(one_way_small):
    data = validate(one_way_small, ONE_WAY_RECORDS)
    np.testing.assert_allclose(cell_means(data, {"A"}), [1.5, 3.5])
    assert cell_means(data, set()) == pytest.approx(2.5)
    with pytest.raises(ValidationError):
        cell_means(data, {"B"})


def test_cell_means_constant_data(split_plot):
    data = BalancedDataset(split_plot, np.full(split_plot.shape, 7.0))
    for margin in ({"block"}, {"A", "B"}, {"block", "A", "B"}):
        np.testing.assert_allclose(cell_means(data, margin), 7.0)


def test_grand_mean_is_mean_of_margin_means(two_way_random):
    rng = np.random.default_rng(5)
    data = BalancedDataset(two_way_random, rng.normal(size=two_way_random.shape))
    grand = cell_means(data, set())
    for margin in ({"A"}, {"B"}, {"A", "B"}):
        assert np.mean(cell_means(data, margin)) == pytest.approx(grand, abs=1e-12)


def test_to_frame_reads_back(split_plot):
    rng = np.random.default_rng(9)
    data = BalancedDataset(split_plot, rng.normal(size=split_plot.shape))
    frame = to_frame(data)
    assert list(frame.columns) == ["block", "A", "B", "y"]
    assert len(frame) == split_plot.n_obs
    np.testing.assert_array_equal(validate(split_plot, frame).values, data.values)


def test_dataset_shape_checked(one_way_small):
    with pytest.raises(ValidationError):
        BalancedDataset(one_way_small, np.zeros((3, 2)))
