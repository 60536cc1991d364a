import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from expectnn.models import Dataset, EnnArchitecture, ExpectileModel
from expectnn.optim import OptimOptions
from expectnn.pipeline import (
    METHODS,
    TABLE_COLUMNS,
    FitReport,
    SplitSpec,
    StudyConfig,
    StudyError,
    evaluate_mse,
    fit_model,
    fit_with_lambda_search,
    method_arch,
    ranked_expectile_curve,
    run_replicate,
    run_study,
    select_lambda,
    split,
    split_indices,
    split_sizes,
)
from expectnn.simgen import SimulationSpec, simulate

from .oracles import least_squares

FAST = StudyConfig(grid=(0.0, 1.0), opts=OptimOptions(max_iters=60, n_starts=2, warmup_iters=2))


def linear_data(n=60, p=3, seed=0, noise=0.1):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    return Dataset(x, x @ rng.normal(size=p) + 0.5 + noise * rng.normal(size=n))


# splitting


@pytest.mark.parametrize("n, sizes", [(500, (300, 100, 100)), (5, (3, 1, 1)), (7, (4, 2, 1)), (11, (7, 2, 2))])
def test_split_sizes(n, sizes):
    assert split_sizes(n, SplitSpec().ratios) == sizes


@settings(max_examples=50, deadline=None)
@given(st.integers(5, 2000), st.integers(0, 2**32 - 1))
def test_split_is_a_partition(n, seed):
    tr, va, te = split_indices(n, SplitSpec(seed=seed))
    assert sorted(np.concatenate([tr, va, te])) == list(range(n))
    assert min(len(tr), len(va), len(te)) >= 1


def test_split_is_deterministic():
    a = split_indices(100, SplitSpec(seed=3))
    b = split_indices(100, SplitSpec(seed=3))
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


def test_split_rejects_tiny_or_bad_input():
    with pytest.raises(ValueError):
        split_indices(4, SplitSpec())
    with pytest.raises(ValueError):
        SplitSpec((1.0, 0.0, 1.0))


def test_split_keeps_gene_groups():
    d = simulate(SimulationSpec("gene_gene", n=50))
    tr, _, _ = split(d)
    assert tr.gene_groups == d.gene_groups
    assert tr.n == 30


# evaluation


def constant_model(c, p=1):
    return ExpectileModel("er", np.r_[c, np.zeros(p)], 0.5, 0.0)


def test_evaluate_mse_examples():
    d = Dataset(np.zeros((3, 1)), [0.0, 1.0, 2.0])
    assert evaluate_mse(constant_model(1.0), d) == pytest.approx(2 / 3)
    assert evaluate_mse(constant_model(0.0), Dataset(np.zeros((2, 1)), [3.0, 4.0])) == pytest.approx(12.5)


def test_evaluate_mse_rejects_width_mismatch():
    with pytest.raises(ValueError):
        evaluate_mse(constant_model(0.0, p=2), Dataset(np.zeros((2, 1)), [0.0, 1.0]))


def test_ranked_curve():
    model = ExpectileModel("er", np.array([0.0, 1.0]), 0.5, 0.0)
    d = Dataset(np.array([[2.0], [0.0], [1.0]]), np.zeros(3))
    assert ranked_expectile_curve(model, d) == [(1, 0.0), (2, 1.0), (3, 2.0)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ranked_curve_nondecreasing(seed):
    rng = np.random.default_rng(seed)
    arch = EnnArchitecture(3, 2)
    model = ExpectileModel("enn", rng.normal(size=arch.n_params), 0.3, 0.0, arch)
    curve = ranked_expectile_curve(model, Dataset(rng.normal(size=(20, 3)), np.zeros(20)))
    ranks, vals = zip(*curve)
    assert list(ranks) == list(range(1, 21))
    assert np.all(np.diff(vals) >= 0)


# fitting and penalty search


def test_select_lambda_argmin_and_ties():
    assert select_lambda({0.0: 2.0, 1.0: 1.0, 10.0: 3.0}) == 1.0
    assert select_lambda({0.0: 1.0, 0.1: 1.0, 10.0: 1.0}) == 0.0
    assert select_lambda({10.0: 1.0, 1.0: 1.0}) == 1.0


def test_single_lambda_grid_is_chosen():
    d = linear_data()
    tr, va, te = split(d)
    rep = fit_with_lambda_search("er", None, tr, va, 0.5, (0.0,), test=te)
    assert rep.chosen_lambda == 0.0
    assert list(rep.val_mse_by_lambda) == ["0.0"]


def test_er_at_median_level_is_least_squares():
    d = linear_data(n=80, p=4, seed=2)
    model, res = fit_model("er", d, 0.5, 0.0)
    assert res.converged
    assert np.max(np.abs(model.params - least_squares(d.x, d.y))) < 1e-5


def test_standardized_fit_predicts_on_raw_scale():
    d = linear_data(n=80, p=2, seed=4)
    raw, _ = fit_model("er", d, 0.5, 0.0)
    std, _ = fit_model("er", d, 0.5, 0.0, standardize=True)
    assert np.allclose(raw.predict(d.x), std.predict(d.x), atol=1e-5)


def test_penalty_search_reports_every_grid_point():
    d = linear_data(n=60, p=3, seed=5)
    tr, va, te = split(d)
    rep = fit_with_lambda_search("enn", EnnArchitecture(3, 2), tr, va, 0.9, (0.0, 1.0, 10.0), FAST.opts, test=te)
    assert set(rep.val_mse_by_lambda) == {"0.0", "1.0", "10.0"}
    assert rep.mse_val == min(rep.val_mse_by_lambda.values())
    assert FitReport.from_dict(rep.to_dict()).to_dict() == rep.to_dict()
    assert rep.fitted_model().predict(te.x) == pytest.approx(ExpectileModel.from_dict(rep.model).predict(te.x))


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        fit_model("svm", linear_data(), 0.5, 0.0)


def test_architectures_for_gene_data():
    d = simulate(SimulationSpec("gene_gene", n=20))
    full = method_arch("enn_full", d, StudyConfig(q_per_gene=2))
    masked = method_arch("enn_masked", d, StudyConfig(q_per_gene=2))
    assert full.q_hidden == masked.q_hidden == 4
    assert full.fully_connected and not masked.fully_connected
    # hidden nodes 0, 1 see only gene1; 2, 3 only gene2
    assert masked.mask[:4, :2].all() and not masked.mask[4:, :2].any()
    assert masked.mask[4:, 2:].all() and not masked.mask[:4, 2:].any()
    with pytest.raises(ValueError):
        method_arch("enn_masked", linear_data(), StudyConfig())


# replicate studies


def small_study(n_jobs=1, replicates=3, methods=("er", "enn")):
    spec = SimulationSpec("quadratic", n=60, p=5)
    return run_study(spec, replicates, (0.1, 0.5), methods, base_seed=3, config=FAST, n_jobs=n_jobs)


def test_study_rows_and_aggregate():
    rep = small_study()
    assert len(rep.rows) == 3 * 2 * 2
    assert all(tuple(r) == TABLE_COLUMNS for r in rep.rows)
    cell = rep.cell("enn", 0.5)
    assert cell["n"] == 3
    assert cell["mean_mse_test"] == pytest.approx(rep.test_mse("enn", 0.5).mean())


def test_study_is_deterministic_and_independent_of_jobs():
    serial = small_study().to_dict()
    assert small_study().to_dict() == serial
    assert small_study(n_jobs=2).to_dict() == serial


def test_replicate_seed_is_base_plus_index():
    spec = SimulationSpec("linear", n=40, p=4)
    r = run_replicate(spec, 2, (0.5,), ("er",), 10, FAST)
    assert r.seed == 12 and r.error is None


def test_study_fails_when_too_many_replicates_fail(monkeypatch):
    import expectnn.pipeline as pl

    def broken(*args, **kwargs):
        raise pl.FitError("boom")

    monkeypatch.setattr(pl, "fit_with_lambda_search", broken)
    with pytest.raises(StudyError):
        small_study(replicates=2)


def test_study_tolerates_a_few_failed_replicates(monkeypatch):
    import expectnn.pipeline as pl

    real = pl.run_replicate

    def flaky(scenario, replicate, *args):
        if replicate == 0:
            return pl.ReplicateResult(replicate, 0, [], "FitError: boom")
        return real(scenario, replicate, *args)

    monkeypatch.setattr(pl, "run_replicate", flaky)
    rep = run_study(SimulationSpec("linear", n=40, p=3), 10, (0.5,), ("er",), config=FAST)
    assert rep.failed == {0: "FitError: boom"}
    assert rep.cell("er", 0.5)["n"] == 9


def test_study_rejects_unknown_method():
    with pytest.raises(ValueError):
        small_study(methods=("er", "forest"))
    assert "forest" not in METHODS
