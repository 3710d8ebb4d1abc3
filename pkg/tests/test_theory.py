# tests/test_theory.py
from __future__ import annotations

import numpy as np
import pytest

from stats.anova import expected_mean_squares
from stats.designs import Design, Factor, ModelParams, ModelSpec
from stats.distributions import ScaledF, ScaledNoncentralChiSquare, cdf, sample
from stats.errors import ParameterError
from stats.theory import conditional_laws, f_laws, ss_laws
from tests.conftest import all_designs


def _triple(law):
    return (law.scale, law.df, law.noncentrality)


def test_conditional_law_fixed_one_way():
    spec = ModelSpec(Design.ONE_WAY, (Factor("A", 3),), replicates=4)
    law = conditional_laws(spec, ModelParams(fixed_effects={"A": [-1, 0, 1]}))["A"]
    assert (law.scale, law.df) == (1.0, 2)
    assert law.mixing == pytest.approx(8.0)
    assert law.mixing_scale == 0.0


def test_conditional_law_random_one_way(one_way_random):
    law = conditional_laws(one_way_random, ModelParams(variance_components={"A": 2.0}))["A"]
    assert isinstance(law.mixing, ScaledNoncentralChiSquare)
    assert _triple(law.mixing) == pytest.approx((8.0, 2, 0.0))
    assert law.to_dict() == pytest.approx({"c1": 1.0, "p": 2, "c2": 8.0, "gamma2": 0.0})


def test_null_model_has_degenerate_mixing():
    for spec in all_designs():
        for law in conditional_laws(spec, ModelParams()).values():
            assert law.mixing_scale == 0.0
            assert law.mixing_noncentrality == 0.0


def test_ss_laws_one_way_random(one_way_random):
    laws = ss_laws(one_way_random, ModelParams(sigma2=1.0, variance_components={"A": 2.0}))
    assert _triple(laws.laws["A"]) == pytest.approx((9.0, 2, 0.0))
    assert _triple(laws.laws["Error"]) == pytest.approx((1.0, 9, 0.0))
    assert laws.independent


def test_ss_laws_rcbd_mixed(rcbd_mixed):
    params = ModelParams(sigma2=2.0, fixed_effects={"A": [-1, 0, 1]}, variance_components={"B": 1.0})
    laws = ss_laws(rcbd_mixed, params).laws
    assert _triple(laws["A"]) == pytest.approx((2.0, 2, 8.0))
    assert _triple(laws["B"]) == pytest.approx((5.0, 3, 0.0))
    assert _triple(laws["Error"]) == pytest.approx((2.0, 6, 0.0))


def test_ss_laws_two_way_interaction(two_way_random):
    laws = ss_laws(two_way_random, ModelParams(sigma2=1.0, variance_components={"AB": 1.5})).laws
    assert _triple(laws["AB"]) == pytest.approx((4.0, 2, 0.0))
    # the interaction variance also reaches both main effects
    assert _triple(laws["A"]) == pytest.approx((4.0, 1, 0.0))
    assert _triple(laws["B"]) == pytest.approx((4.0, 2, 0.0))


def test_split_plot_whole_plot_source_compounds_noncentrally(split_plot):
    params = ModelParams(
        sigma2=1.0,
        fixed_effects={"A": [-1.0, 0.0, 1.0], "B": [0.5, -0.5]},
        variance_components={"Blocks": 0.5, "WholePlotError": 0.75},
    )
    laws = ss_laws(split_plot, params)
    assert laws.noncentral_mixing_sources() == ["A"]
    a = laws.conditionals["A"]
    # r * b * sum(alpha^2) and b * var(whole plot)
    assert a.mixing_noncentrality == pytest.approx(4 * 2 * 2.0)
    assert a.mixing_scale == pytest.approx(2 * 0.75)
    assert _triple(laws.laws["A"]) == pytest.approx((2.5, 2, 16.0))
    assert _triple(laws.laws["Blocks"]) == pytest.approx((1.0 + 6 * 0.5 + 2 * 0.75, 3, 0.0))
    assert _triple(laws.laws["WholePlotError"]) == pytest.approx((2.5, 6, 0.0))
    assert _triple(laws.laws["B"]) == pytest.approx((1.0, 1, 12 * 0.5))
    assert _triple(laws.laws["SubplotError"]) == pytest.approx((1.0, 9, 0.0))
    assert "A" in laws.to_dict()["noncentral_mixing_sources"]


@pytest.mark.parametrize("spec", all_designs(), ids=lambda s: s.design.value)
def test_df_and_mean_agreement(spec):
    params = ModelParams(
        sigma2=1.3,
        variance_components={t.name: 0.4 + i for i, t in enumerate(spec.terms) if t.kind.value == "random"},
        fixed_effects={
            t.name: np.linspace(-1.0, 1.5, spec.cells(t))
            for t in spec.terms
            if t.kind.value == "fixed"
        },
    )
    laws = ss_laws(spec, params).laws
    ems = expected_mean_squares(spec, params)
    assert list(laws) == list(spec.sources)
    for source, law in laws.items():
        assert law.df == spec.df(source)
        assert law.mean == pytest.approx(spec.df(source) * ems[source], rel=1e-12)


def test_two_way_without_replication_reduces_to_rcbd():
    two_way = ModelSpec(
        Design.TWO_WAY_INTERACTION,
        (Factor("A", 3), Factor("B", 4, "random")),
        replicates=1,
        interaction_kind="random",
    )
    rcbd = ModelSpec(Design.RCBD, (Factor("A", 3), Factor("B", 4, "random")))
    params = ModelParams(sigma2=2.0, fixed_effects={"A": [-1, 0, 1]}, variance_components={"B": 1.0})
    reduced = ss_laws(two_way, params).laws
    reference = ss_laws(rcbd, params).laws
    assert _triple(reduced["A"]) == pytest.approx(_triple(reference["A"]))
    assert _triple(reduced["B"]) == pytest.approx(_triple(reference["B"]))
    assert _triple(reduced["AB"]) == pytest.approx(_triple(reference["Error"]))


def test_rcbd_roles_exchange():
    swapped = ModelSpec(Design.RCBD, (Factor("A", 4, "random"), Factor("B", 3)))
    params = ModelParams(sigma2=2.0, fixed_effects={"B": [-1, 0, 1]}, variance_components={"A": 1.0})
    laws = ss_laws(swapped, params).laws
    assert _triple(laws["B"]) == pytest.approx((2.0, 2, 8.0))
    assert _triple(laws["A"]) == pytest.approx((5.0, 3, 0.0))


def test_marginal_law_averages_conditional_laws():
    # g drawn from the mixing law, then P(SS <= x | g) averaged over g
    mixing = ScaledNoncentralChiSquare(8.0, 2)
    marginal = ScaledNoncentralChiSquare(9.0, 2)
    draws = sample(mixing, 123, 4000)
    points = np.array([4.0, 12.0, 30.0])
    conditional = np.array([cdf(ScaledNoncentralChiSquare(1.0, 2, float(g)), points) for g in draws])
    average = conditional.mean(axis=0)
    se = conditional.std(axis=0, ddof=1) / np.sqrt(draws.size)
    assert np.all(np.abs(average - cdf(marginal, points)) <= 4.0 * se)


def test_f_laws(one_way_random, rcbd_mixed):
    laws = f_laws(one_way_random, ModelParams(sigma2=1.0, variance_components={"A": 2.0}))
    assert laws["A"] == ScaledF(9.0, 2, 9, 0.0)

    params = ModelParams(sigma2=2.0, fixed_effects={"A": [-1, 0, 1]}, variance_components={"B": 1.0})
    laws = f_laws(rcbd_mixed, params)
    assert laws["B"].scale == pytest.approx(2.5)
    assert (laws["B"].df_num, laws["B"].df_den, laws["B"].noncentrality) == (3, 6, 0.0)
    assert laws["A"].scale == pytest.approx(1.0)
    assert (laws["A"].df_num, laws["A"].df_den) == (2, 6)
    assert laws["A"].noncentrality == pytest.approx(4.0)


def test_fixed_one_way_f_law():
    spec = ModelSpec(Design.ONE_WAY, (Factor("A", 3),), replicates=4)
    law = f_laws(spec, ModelParams(sigma2=2.0, fixed_effects={"A": [-1, 0, 1]}))["A"]
    assert (law.scale, law.df_num, law.df_den) == (1.0, 2, 9)
    assert law.noncentrality == pytest.approx(4.0)


def test_null_f_laws_are_central():
    for spec in all_designs():
        for law in f_laws(spec, ModelParams()).values():
            assert law.scale == pytest.approx(1.0)
            assert law.noncentrality == 0.0


def test_scaled_law_set(one_way_random):
    laws = ss_laws(one_way_random, ModelParams(variance_components={"A": 2.0}))
    wrong = laws.scaled(1.25)
    assert wrong.laws["A"].scale == pytest.approx(9.0 * 1.25)
    assert wrong.laws["Error"].scale == pytest.approx(1.25)


def test_inconsistent_params_rejected(one_way_random):
    with pytest.raises(ParameterError):
        ss_laws(one_way_random, ModelParams(fixed_effects={"A": [1.0, 2.0, 3.0]}))
