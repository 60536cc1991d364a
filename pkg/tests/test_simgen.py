import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expectnn.simgen import (
    SCENARIOS,
    SimulationSpec,
    interaction_groups,
    normalize_scenario,
    phenotype_link,
    simulate,
    simulate_gene_gene,
    simulate_genotypes,
    simulate_phenotype_simI,
    simulate_phenotype_simII,
)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 12), st.integers(0, 2**31))
def test_genotypes_are_allele_counts(n, p, seed):
    g = simulate_genotypes(n, p, seed=seed)
    assert g.shape == (n, p)
    assert set(np.unique(g)) <= {0.0, 1.0, 2.0}


def test_genotype_mean_matches_hardy_weinberg():
    # maf fixed at 0.5: Binomial(2, 0.5) has mean 1 and variance 0.5
    g = simulate_genotypes(20000, 3, maf_range=(0.5, 0.5), seed=1)
    se = np.sqrt(0.5 / 20000)
    assert np.all(np.abs(g.mean(axis=0) - 1.0) < 3 * se)


def test_genotypes_deterministic_per_seed():
    assert np.array_equal(simulate_genotypes(50, 5, seed=7), simulate_genotypes(50, 5, seed=7))
    assert not np.array_equal(simulate_genotypes(50, 5, seed=7), simulate_genotypes(50, 5, seed=8))


@pytest.mark.parametrize(
    "scenario, alpha, expected",
    [("hyperbolic", 0.0, 0.0), ("mixed", 0.0, 2.0), ("cubic", -2.0, -8.0), ("quadratic", -3.0, 9.0),
     ("linear", 1.5, 1.5), ("hyperbolic", 1.0, 0.5)],
)
def test_link_values(scenario, alpha, expected):
    assert phenotype_link(scenario, alpha) == pytest.approx(expected, abs=1e-15)


def test_hyperbolic_link_saturates():
    assert phenotype_link("hyperbolic", 1e9) == pytest.approx(1.0)
    assert phenotype_link("hyperbolic", -1e9) == pytest.approx(1.0)


def test_unknown_link_rejected():
    with pytest.raises(ValueError):
        phenotype_link("sqrt", 1.0)


def test_zero_effects_leave_unit_noise():
    g = simulate_genotypes(20000, 10, seed=3)
    y = simulate_phenotype_simI(g, "linear", seed=3, beta=0.0)
    assert abs(y.var() - 1.0) < 0.05
    assert abs(y.mean()) < 0.05


def test_no_interaction_equals_linear_sim_one():
    g = simulate_genotypes(100, 20, seed=11)
    assert np.array_equal(simulate_phenotype_simII(g, "none", seed=11), simulate_phenotype_simI(g, "linear", seed=11))


def test_mult2_with_zero_interaction_is_additive():
    g = simulate_genotypes(100, 20, seed=12)
    assert np.array_equal(simulate_phenotype_simII(g, "mult2", seed=12, gamma=0.0), simulate_phenotype_simII(g, "none", seed=12))


def test_thresh2_term_vanishes_without_carriers():
    g = simulate_genotypes(200, 20, seed=13)
    pairs = interaction_groups(20, "thresh2", 0.2, 13)
    g[:, [a for a, _ in pairs]] = 0.0
    assert np.allclose(simulate_phenotype_simII(g, "thresh2", seed=13), simulate_phenotype_simII(g, "none", seed=13))


def test_thresh2_adds_gamma_for_carrier_pairs():
    g = simulate_genotypes(200, 20, seed=14)
    pairs = interaction_groups(20, "thresh2", 0.2, 14)
    base = simulate_phenotype_simII(g, "none", seed=14)
    y = simulate_phenotype_simII(g, "thresh2", seed=14, gamma=1.0)
    carriers = sum(((g[:, a] >= 1) & (g[:, b] >= 1)).astype(float) for a, b in pairs)
    assert np.allclose(y - base, carriers)


@pytest.mark.parametrize("kind, arity", [("mult2", 2), ("thresh2", 2), ("three_way", 3)])
def test_interaction_selection(kind, arity):
    groups = interaction_groups(50, kind, 0.2, seed=0)
    cols = [c for grp in groups for c in grp]
    assert all(len(grp) == arity for grp in groups)
    assert len(cols) == len(set(cols)) == 10 // arity * arity
    assert all(0 <= c < 50 for c in cols)


def test_too_few_selected_snps_rejected():
    with pytest.raises(ValueError):
        interaction_groups(5, "three_way", 0.2, seed=0)


def test_gene_gene_layout():
    d = simulate_gene_gene(300, snps_per_gene=4, seed=2)
    assert d.x.shape == (300, 8)
    assert d.gene_groups == {"gene1": (0, 1, 2, 3), "gene2": (4, 5, 6, 7)}


def test_gene_gene_without_interaction_is_additive():
    d = simulate_gene_gene(400, seed=5, gamma=0.0)
    with_int = simulate_gene_gene(400, seed=5)
    design = np.column_stack([d.x, np.ones(d.n)])
    resid = d.y - design @ np.linalg.lstsq(design, d.y, rcond=None)[0]
    resid_int = with_int.y - design @ np.linalg.lstsq(design, with_int.y, rcond=None)[0]
    # the additive model explains everything but the unit noise when gamma = 0
    assert resid.var() < resid_int.var()
    assert abs(resid.var() - 1.0) < 0.2


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_simulate_every_scenario(scenario):
    d = simulate(SimulationSpec(scenario, n=60, p=20, seed=1))
    assert d.n == 60
    assert np.all(np.isfinite(d.y))
    assert np.array_equal(d.y, simulate(SimulationSpec(scenario, n=60, p=20, seed=1)).y)


def test_kind_aliases():
    assert normalize_scenario("mult2") == "interact2mult"
    assert SimulationSpec("three_way").scenario == "interact3"


@pytest.mark.parametrize(
    "kwargs",
    [dict(scenario="nope"), dict(scenario="linear", n=2), dict(scenario="linear", p=0),
     dict(scenario="linear", maf_range=(0.0, 0.5)), dict(scenario="linear", maf_range=(0.3, 0.6)),
     dict(scenario="linear", maf_range=(0.4, 0.2)), dict(scenario="linear", interaction_fraction=1.5),
     dict(scenario="gene_gene", snps_per_gene=0)],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SimulationSpec(**kwargs)
