"""Split, fit with a validation-selected penalty, evaluate, and replicate."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import TauLike, as_level
from .models import (
    DEFAULT_Q_HIDDEN,
    Dataset,
    EnnArchitecture,
    ExpectileModel,
    enn_value_and_grad,
    er_polish,
    er_value_and_grad,
    gene_mask,
)
from .optim import NonFiniteObjective, OptimOptions, multi_start
from .simgen import SimulationSpec, simulate

log = logging.getLogger(__name__)

LAMBDA_GRID = (0.0, 0.1, 1.0, 10.0, 100.0)
DEFAULT_TAUS = (0.1, 0.25, 0.5, 0.75, 0.9)
DEFAULT_RATIOS = (3.0, 1.0, 1.0)
MAX_FAILED_FRACTION = 0.1
TABLE_COLUMNS = (
    "scenario",
    "replicate",
    "method",
    "tau",
    "lambda",
    "mse_train",
    "mse_val",
    "mse_test",
    "converged",
    "iterations",
)
METHODS = ("er", "enn", "enn_full", "enn_masked")


class FitError(RuntimeError):
    pass


class StudyError(RuntimeError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0

    def __post_init__(self):
        r = tuple(float(v) for v in self.ratios)
        if len(r) != 3 or any(not (v > 0) or not math.isfinite(v) for v in r):
            raise ValueError("ratios must be three positive numbers")
        total = sum(r)
        object.__setattr__(self, "ratios", tuple(v / total for v in r))


def split_sizes(n: int, ratios: Sequence[float]) -> Tuple[int, ...]:
    """Largest-remainder apportionment of ``n`` rows (ties go to the earlier part)."""
    exact = [n * r for r in ratios]
    sizes = [int(math.floor(e)) for e in exact]
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return tuple(sizes)


def split_indices(n: int, spec: SplitSpec):
    if n < 5:
        raise ValueError("need at least 5 rows to split")
    sizes = split_sizes(n, spec.ratios)
    if min(sizes) == 0:
        raise ValueError(f"split of {n} rows by {spec.ratios} leaves an empty part")
    perm = np.random.default_rng(int(spec.seed)).permutation(n)
    a, b = sizes[0], sizes[0] + sizes[1]
    return perm[:a], perm[a:b], perm[b:]


def split(data: Dataset, spec: SplitSpec = SplitSpec()):
    tr, va, te = split_indices(data.n, spec)
    return data.subset(tr), data.subset(va), data.subset(te)


def evaluate_mse(model: ExpectileModel, data: Dataset) -> float:
    if model.n_inputs != data.p:
        raise ValueError(f"model expects {model.n_inputs} columns, data has {data.p}")
    r = data.y - model.predict(data.x)
    return float(np.mean(r * r))


def ranked_expectile_curve(model: ExpectileModel, data: Dataset) -> List[Tuple[int, float]]:
    fitted = np.sort(model.predict(data.x), kind="stable")
    return [(i + 1, float(v)) for i, v in enumerate(fitted)]


def _scaling(train: Dataset, standardize: bool):
    if not standardize:
        return None, None
    center = train.x.mean(axis=0)
    scale = train.x.std(axis=0)
    scale[scale == 0] = 1.0
    return center, scale


def _polish_er(res, fun, beta) -> None:
    # keep the exact solve only if it does not raise the objective
    f, g = fun(beta)
    if np.isfinite(f) and f <= res.f_final:
        res.x_final, res.f_final, res.grad_norm_final = beta, float(f), float(np.linalg.norm(g))
        res.converged = True
        res.message += "; exact partition solve"


def fit_model(method: str, train: Dataset, tau: TauLike, lam: float, arch: Optional[EnnArchitecture] = None,
              opts: Optional[OptimOptions] = None, standardize: bool = False):
    """Fit one ER or ENN model at a fixed penalty; returns ``(model, OptimResult)``."""
    tau = as_level(tau)
    opts = opts or OptimOptions()
    center, scale = _scaling(train, standardize)
    fit_data = train
    if center is not None:
        fit_data = Dataset((train.x - center) / scale, train.y)
    if method == "er":
        dim = train.p + 1
        fun = lambda b: er_value_and_grad(b, fit_data, tau, lam)
        res = multi_start(fun, dim, opts)
        _polish_er(res, fun, er_polish(res.x_final, fit_data, tau, lam))
        model = ExpectileModel("er", res.x_final, tau.tau, lam, None, center, scale)
    elif method == "enn":
        if arch is None:
            arch = EnnArchitecture(train.p)
        arch = arch.with_lambda(lam)
        if arch.p_in != train.p:
            raise ValueError(f"architecture expects {arch.p_in} inputs, data has {train.p}")
        res = multi_start(lambda th: enn_value_and_grad(arch, th, fit_data, tau), arch.n_params, opts, free=arch.free_mask())
        model = ExpectileModel("enn", res.x_final, tau.tau, lam, arch, center, scale)
    else:
        raise ValueError(f"unknown method {method!r}")
    return model, res


@dataclass
class FitReport:
    tau: float
    chosen_lambda: float
    mse_train: float
    mse_val: float
    mse_test: Optional[float]
    optim: dict
    model: dict
    method: str = ""
    val_mse_by_lambda: Dict[str, Optional[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "tau": self.tau,
            "chosen_lambda": self.chosen_lambda,
            "mse_train": self.mse_train,
            "mse_val": self.mse_val,
            "mse_test": self.mse_test,
            "val_mse_by_lambda": dict(self.val_mse_by_lambda),
            "optim": dict(self.optim),
            "model": self.model,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        return cls(d["tau"], d["chosen_lambda"], d["mse_train"], d["mse_val"], d["mse_test"], d["optim"], d["model"],
                   d.get("method", ""), d.get("val_mse_by_lambda", {}))

    def fitted_model(self) -> ExpectileModel:
        return ExpectileModel.from_dict(self.model)


def select_lambda(val_mse: Dict[float, float]) -> float:
    """Smallest validation MSE; equal MSEs resolve to the smaller penalty."""
    return min(val_mse, key=lambda lam: (val_mse[lam], lam))


def fit_with_lambda_search(method: str, arch: Optional[EnnArchitecture], train: Dataset, validation: Dataset,
                           tau: TauLike, grid: Sequence[float] = LAMBDA_GRID, opts: Optional[OptimOptions] = None,
                           standardize: bool = False, test: Optional[Dataset] = None) -> FitReport:
    if not len(grid):
        raise ValueError("lambda grid is empty")
    tau = as_level(tau)
    opts = opts or OptimOptions()
    fits = {}
    val_mse: Dict[float, float] = {}
    for lam in grid:
        lam = float(lam)
        try:
            model, res = fit_model(method, train, tau, lam, arch, opts, standardize)
            mse = evaluate_mse(model, validation)
            if not math.isfinite(mse):
                raise FloatingPointError("validation MSE is not finite")
        except (NonFiniteObjective, FloatingPointError) as exc:
            log.warning("%s fit at tau=%g, lambda=%g failed: %s", method, tau.tau, lam, exc)
            continue
        fits[lam] = (model, res)
        val_mse[lam] = mse
    if not fits:
        raise FitError(f"every lambda in {list(grid)} failed for {method} at tau={tau.tau}")
    best = select_lambda(val_mse)
    model, res = fits[best]
    model.meta["method"] = method
    return FitReport(
        tau=tau.tau,
        chosen_lambda=best,
        mse_train=evaluate_mse(model, train),
        mse_val=val_mse[best],
        mse_test=None if test is None else evaluate_mse(model, test),
        optim=res.summary(),
        model=model.to_dict(),
        method=method,
        val_mse_by_lambda={repr(float(lam)): val_mse.get(float(lam)) for lam in grid},
    )


# ---------------------------------------------------------------------------
# replicate studies


@dataclass(frozen=True)
class StudyConfig:
    """Everything besides the scenario that determines a study's output."""

    q_hidden: int = DEFAULT_Q_HIDDEN
    q_per_gene: int = 2
    hidden_act: str = "relu"
    output_act: str = "identity"
    grid: Tuple[float, ...] = LAMBDA_GRID
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS
    standardize: bool = False
    opts: OptimOptions = OptimOptions()


def method_arch(method: str, data: Dataset, config: StudyConfig) -> Optional[EnnArchitecture]:
    if method == "er":
        return None
    if method in ("enn", "enn_full"):
        q = config.q_hidden
        if method == "enn_full" and data.gene_groups:
            q = len(data.gene_groups) * config.q_per_gene
        return EnnArchitecture(data.p, q, config.hidden_act, config.output_act)
    if method == "enn_masked":
        if not data.gene_groups:
            raise ValueError("enn_masked needs a dataset with gene groups")
        mask = gene_mask(data.gene_groups, config.q_per_gene)
        full = np.zeros((data.p, mask.shape[1]), dtype=bool)
        full[: mask.shape[0]] = mask
        return EnnArchitecture(data.p, mask.shape[1], config.hidden_act, config.output_act, full)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def _fit_seed(replicate_seed: int, method: str, tau_index: int) -> int:
    ss = np.random.SeedSequence([int(replicate_seed), METHODS.index(method), tau_index])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class ReplicateResult:
    replicate: int
    seed: int
    reports: List[FitReport] = field(default_factory=list)
    error: Optional[str] = None


def run_replicate(scenario: SimulationSpec, replicate: int, taus: Sequence[float], methods: Sequence[str],
                  base_seed: int, config: StudyConfig = StudyConfig()) -> ReplicateResult:
    seed = int(base_seed) + int(replicate)
    out = ReplicateResult(replicate, seed)
    try:
        data = simulate(scenario.with_seed(seed))
        train, val, test = split(data, SplitSpec(config.ratios, seed))
        for method in methods:
            arch = method_arch(method, data, config)
            kind = "er" if method == "er" else "enn"
            for i, tau in enumerate(taus):
                opts = replace(config.opts, seed=_fit_seed(seed, method, i))
                rep = fit_with_lambda_search(kind, arch, train, val, tau, config.grid, opts, config.standardize, test)
                rep.method = method
                out.reports.append(rep)
    except (FitError, NonFiniteObjective, FloatingPointError, ValueError) as exc:
        out.reports = []
        out.error = f"{type(exc).__name__}: {exc}"
        log.warning("replicate %d failed: %s", replicate, out.error)
    return out


@dataclass
class StudyReport:
    scenario: str
    replicates: int
    taus: Tuple[float, ...]
    methods: Tuple[str, ...]
    base_seed: int
    rows: List[dict]
    failed: Dict[int, str]
    aggregate: List[dict]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "replicates": self.replicates,
            "taus": list(self.taus),
            "methods": list(self.methods),
            "base_seed": self.base_seed,
            "rows": self.rows,
            "failed": {str(k): v for k, v in self.failed.items()},
            "aggregate": self.aggregate,
        }

    def cell(self, method: str, tau: float) -> dict:
        for a in self.aggregate:
            if a["method"] == method and a["tau"] == float(tau):
                return a
        raise KeyError((method, tau))

    def test_mse(self, method: str, tau: float) -> np.ndarray:
        """Per-replicate test MSE ordered by replicate index."""
        return np.array([r["mse_test"] for r in self.rows if r["method"] == method and r["tau"] == float(tau)])


def aggregate_rows(rows: List[dict], methods: Sequence[str], taus: Sequence[float]) -> List[dict]:
    out = []
    for method in methods:
        for tau in taus:
            sel = [r for r in rows if r["method"] == method and r["tau"] == float(tau)]
            agg = {"method": method, "tau": float(tau), "n": len(sel)}
            for key in ("mse_train", "mse_val", "mse_test"):
                vals = np.array([r[key] for r in sel], dtype=float)
                agg[f"mean_{key}"] = float(vals.mean()) if vals.size else float("nan")
                agg[f"sd_{key}"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            out.append(agg)
    return out


def report_row(scenario: str, replicate: int, rep: FitReport) -> dict:
    return {
        "scenario": scenario,
        "replicate": replicate,
        "method": rep.method,
        "tau": rep.tau,
        "lambda": rep.chosen_lambda,
        "mse_train": rep.mse_train,
        "mse_val": rep.mse_val,
        "mse_test": rep.mse_test,
        "converged": bool(rep.optim["converged"]),
        "iterations": int(rep.optim["iterations"]),
    }


def run_study(scenario: SimulationSpec, replicates: int, taus: Sequence[float], methods: Sequence[str],
              base_seed: int = 0, config: StudyConfig = StudyConfig(), n_jobs: int = 1) -> StudyReport:
    """Monte Carlo study: replicate ``r`` simulates with seed ``base_seed + r``.

    Replicates may run in parallel; results are merged by replicate index,
    so the report does not depend on ``n_jobs``.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    taus = tuple(as_level(t).tau for t in taus)
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    args = [(scenario, r, taus, methods, base_seed, config) for r in range(replicates)]
    if n_jobs == 1:
        results = [run_replicate(*a) for a in args]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(run_replicate)(*a) for a in args)
    results.sort(key=lambda r: r.replicate)
    failed = {r.replicate: r.error for r in results if r.error is not None}
    if len(failed) > MAX_FAILED_FRACTION * replicates:
        raise StudyError(f"{len(failed)} of {replicates} replicates failed; first: {next(iter(failed.values()))}")
    rows = [report_row(scenario.scenario, r.replicate, rep) for r in results for rep in r.reports]
    return StudyReport(scenario.scenario, replicates, taus, methods, int(base_seed), rows, failed,
                       aggregate_rows(rows, methods, taus))
