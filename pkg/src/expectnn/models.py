"""Linear expectile regression and the single-hidden-layer expectile network.

Parameters travel through the optimiser as one flat vector. The ENN
layout is ``w1`` (row-major, ``p_in x Q``), then ``b1``, ``w2``, ``b2``;
linear regression uses ``beta = (beta_0, beta_1, ..., beta_p)``.
Weights carry an L2 penalty, biases and the intercept do not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import TauLike, als_loss_array, als_loss_dt_array, as_level

GENOTYPE = "genotype"
COVARIATE = "covariate"
FLATTEN_VERSION = 1
DEFAULT_Q_HIDDEN = 2


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    column_kinds: tuple = ()
    gene_groups: Optional[Dict[str, tuple]] = None
    column_names: tuple = ()

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.array(self.y, dtype=float).ravel()
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("x must be a nonempty n x p matrix")
        if y.size != x.shape[0]:
            raise ValueError(f"x has {x.shape[0]} rows but y has {y.size} entries")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        kinds = tuple(self.column_kinds) or (COVARIATE,) * x.shape[1]
        if len(kinds) != x.shape[1] or any(k not in (GENOTYPE, COVARIATE) for k in kinds):
            raise ValueError("column_kinds must tag every column as genotype or covariate")
        geno = [j for j, k in enumerate(kinds) if k == GENOTYPE]
        if geno and not np.all(np.isin(x[:, geno], (0.0, 1.0, 2.0))):
            raise ValueError("genotype columns may only hold 0, 1 or 2")
        groups = None
        if self.gene_groups is not None:
            groups = {str(g): tuple(int(c) for c in cols) for g, cols in self.gene_groups.items()}
            seen = [c for cols in groups.values() for c in cols]
            if len(seen) != len(set(seen)):
                raise ValueError("gene groups must be disjoint")
            if any(c not in geno for c in seen):
                raise ValueError("gene groups may only contain genotype columns")
            if any(len(cols) == 0 for cols in groups.values()):
                raise ValueError("gene groups must be nonempty")
        names = tuple(self.column_names)
        if names and len(names) != x.shape[1]:
            raise ValueError("column_names must name every column")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "column_kinds", kinds)
        object.__setattr__(self, "gene_groups", groups)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.x[rows], self.y[rows], self.column_kinds, self.gene_groups, self.column_names)


# ---------------------------------------------------------------------------
# activations


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_d(z):
    return (z > 0).astype(float)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _sigmoid_d(z):
    s = _sigmoid(z)
    return s * (1.0 - s)


def _tanh_d(z):
    t = np.tanh(z)
    return 1.0 - t * t


_ACTIVATIONS = {
    "relu": (_relu, _relu_d),
    "sigmoid": (_sigmoid, _sigmoid_d),
    "tanh": (np.tanh, _tanh_d),
    "identity": (lambda z: np.asarray(z, dtype=float), lambda z: np.ones_like(z, dtype=float)),
}


@dataclass(frozen=True)
class Activation:
    kind: str

    def __post_init__(self):
        if self.kind not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.kind!r}; choose from {sorted(_ACTIVATIONS)}")

    def __call__(self, z):
        return _ACTIVATIONS[self.kind][0](z)

    def derivative(self, z):
        # relu'(0) is taken as 0
        return _ACTIVATIONS[self.kind][1](z)


def _act(a) -> Activation:
    return a if isinstance(a, Activation) else Activation(a)


@dataclass(frozen=True)
class EnnArchitecture:
    p_in: int
    q_hidden: int = DEFAULT_Q_HIDDEN
    hidden_act: Activation = Activation("relu")
    output_act: Activation = Activation("identity")
    mask: Optional[np.ndarray] = None
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_act", _act(self.hidden_act))
        object.__setattr__(self, "output_act", _act(self.output_act))
        if self.p_in < 1 or self.q_hidden < 1:
            raise ValueError("p_in and q_hidden must be at least 1")
        if self.lam < 0 or not np.isfinite(self.lam):
            raise ValueError("lambda must be a finite nonnegative number")
        mask = np.ones((self.p_in, self.q_hidden), dtype=bool) if self.mask is None else np.array(self.mask, dtype=bool)
        if mask.shape != (self.p_in, self.q_hidden):
            raise ValueError(f"mask shape {mask.shape} does not match ({self.p_in}, {self.q_hidden})")
        if not np.all(mask.any(axis=0)):
            raise ValueError("every hidden node needs at least one incoming connection")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def n_params(self) -> int:
        return self.p_in * self.q_hidden + 2 * self.q_hidden + 1

    @property
    def fully_connected(self) -> bool:
        return bool(self.mask.all())

    def with_lambda(self, lam: float) -> "EnnArchitecture":
        return EnnArchitecture(self.p_in, self.q_hidden, self.hidden_act, self.output_act, self.mask, lam)

    def free_mask(self) -> np.ndarray:
        """Flat boolean vector, False where a parameter is pinned at zero."""
        return np.concatenate([self.mask.ravel(), np.ones(2 * self.q_hidden + 1, dtype=bool)])

    def to_dict(self) -> dict:
        return {
            "p_in": self.p_in,
            "q_hidden": self.q_hidden,
            "hidden_act": self.hidden_act.kind,
            "output_act": self.output_act.kind,
            "mask": self.mask.astype(int).tolist(),
            "lambda": self.lam,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnnArchitecture":
        return cls(d["p_in"], d["q_hidden"], d["hidden_act"], d["output_act"], np.array(d["mask"], dtype=bool), d["lambda"])


@dataclass
class ParamVector:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.w1), np.ravel(self.b1), np.ravel(self.w2), [float(self.b2)]])

    @classmethod
    def unflatten(cls, theta, p_in: int, q_hidden: int) -> "ParamVector":
        theta = np.asarray(theta, dtype=float)
        k = p_in * q_hidden
        if theta.size != k + 2 * q_hidden + 1:
            raise ValueError(f"expected {k + 2 * q_hidden + 1} parameters, got {theta.size}")
        return cls(
            theta[:k].reshape(p_in, q_hidden),
            theta[k : k + q_hidden],
            theta[k + q_hidden : k + 2 * q_hidden],
            float(theta[-1]),
        )

    @classmethod
    def zeros(cls, arch: EnnArchitecture) -> "ParamVector":
        return cls.unflatten(np.zeros(arch.n_params), arch.p_in, arch.q_hidden)


def _as_params(arch: EnnArchitecture, params) -> ParamVector:
    if isinstance(params, ParamVector):
        return params
    return ParamVector.unflatten(params, arch.p_in, arch.q_hidden)


# ---------------------------------------------------------------------------
# linear expectile regression


def er_predict(beta, x_row) -> float:
    beta = np.asarray(beta, dtype=float).ravel()
    x_row = np.asarray(x_row, dtype=float).ravel()
    if beta.size != x_row.size + 1:
        raise ValueError(f"beta has {beta.size} entries, expected {x_row.size + 1}")
    return float(beta[0] + beta[1:] @ x_row)


def er_predict_batch(beta, x) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    x = np.asarray(x, dtype=float)
    if beta.size != x.shape[1] + 1:
        raise ValueError(f"beta has {beta.size} entries, expected {x.shape[1] + 1}")
    return beta[0] + x @ beta[1:]


def er_value_and_grad(beta, data: Dataset, tau: TauLike, lam: float):
    tau = as_level(tau).tau
    beta = np.asarray(beta, dtype=float)
    fitted = er_predict_batch(beta, data.x)
    value = als_loss_array(data.y, fitted, tau).mean() + lam * float(beta[1:] @ beta[1:])
    d = als_loss_dt_array(data.y, fitted, tau) / data.n
    grad = np.empty_like(beta)
    grad[0] = d.sum()
    grad[1:] = data.x.T @ d + 2.0 * lam * beta[1:]
    return float(value), grad


def er_polish(beta, data: Dataset, tau: TauLike, lam: float, max_steps: int = 50) -> np.ndarray:
    """Exact ER minimiser reached from a nearby ``beta``.

    The risk is quadratic on each residual-sign partition, so solving the
    weighted ridge normal equations for the current partition and repeating
    until the partition stops changing lands on the minimiser itself.
    """
    tau = as_level(tau).tau
    design = np.column_stack([np.ones(data.n), data.x])
    pen = np.full(design.shape[1], float(lam))
    pen[0] = 0.0
    beta = np.asarray(beta, dtype=float)
    below = None
    for _ in range(max_steps):
        r = data.y - design @ beta
        now = r < 0
        if below is not None and np.array_equal(now, below):
            break
        below = now
        w = np.where(now, 1.0 - tau, tau) / data.n
        lhs = design.T @ (design * w[:, None]) + np.diag(pen)
        rhs = design.T @ (w * data.y)
        try:
            beta = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            beta = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    return beta


def er_risk(beta, data: Dataset, tau: TauLike, lam: float) -> float:
    return er_value_and_grad(beta, data, tau, lam)[0]


def er_grad(beta, data: Dataset, tau: TauLike, lam: float) -> np.ndarray:
    return er_value_and_grad(beta, data, tau, lam)[1]


# ---------------------------------------------------------------------------
# expectile neural network


def enn_forward(arch: EnnArchitecture, params, x_row):
    """Evaluate one input row; returns ``(yhat, hidden)``."""
    x_row = np.asarray(x_row, dtype=float).ravel()
    if x_row.size != arch.p_in:
        raise ValueError(f"input has {x_row.size} columns, architecture expects {arch.p_in}")
    pv = _as_params(arch, params)
    w1 = np.where(arch.mask, pv.w1, 0.0)
    hidden = arch.hidden_act(x_row @ w1 + pv.b1)
    yhat = arch.output_act(hidden @ pv.w2 + pv.b2)
    return float(yhat), hidden


def enn_predict(arch: EnnArchitecture, params, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != arch.p_in:
        raise ValueError(f"input has shape {x.shape}, architecture expects {arch.p_in} columns")
    pv = _as_params(arch, params)
    w1 = np.where(arch.mask, pv.w1, 0.0)
    hidden = arch.hidden_act(x @ w1 + pv.b1)
    return arch.output_act(hidden @ pv.w2 + pv.b2)


def enn_value_and_grad(arch: EnnArchitecture, theta, data: Dataset, tau: TauLike):
    """Penalised risk and its gradient w.r.t. the flat parameter vector."""
    tau = as_level(tau).tau
    p, q = arch.p_in, arch.q_hidden
    if data.p != p:
        raise ValueError(f"data has {data.p} columns, architecture expects {p}")
    theta = np.asarray(theta, dtype=float)
    k = p * q
    w1 = theta[:k].reshape(p, q)
    if not arch.fully_connected:
        w1 = np.where(arch.mask, w1, 0.0)
    b1 = theta[k : k + q]
    w2 = theta[k + q : k + 2 * q]
    b2 = theta[-1]

    z = data.x @ w1 + b1
    h = arch.hidden_act(z)
    a = h @ w2 + b2
    yhat = arch.output_act(a)
    value = als_loss_array(data.y, yhat, tau).mean() + arch.lam * (float(np.vdot(w1, w1)) + float(w2 @ w2))

    da = als_loss_dt_array(data.y, yhat, tau) / data.n
    if arch.output_act.kind != "identity":
        da = da * arch.output_act.derivative(a)
    dz = np.outer(da, w2)
    if arch.hidden_act.kind != "identity":
        dz *= arch.hidden_act.derivative(z)
    g_w1 = data.x.T @ dz + 2.0 * arch.lam * w1
    if not arch.fully_connected:
        g_w1[~arch.mask] = 0.0
    grad = np.concatenate([g_w1.ravel(), dz.sum(axis=0), h.T @ da + 2.0 * arch.lam * w2, [da.sum()]])
    return float(value), grad


def enn_risk(arch: EnnArchitecture, params, data: Dataset, tau: TauLike) -> float:
    theta = _as_params(arch, params).flatten()
    return enn_value_and_grad(arch, theta, data, tau)[0]


def enn_grad(arch: EnnArchitecture, params, data: Dataset, tau: TauLike) -> np.ndarray:
    theta = _as_params(arch, params).flatten()
    return enn_value_and_grad(arch, theta, data, tau)[1]


def gene_mask(groups, q_per_gene: int) -> np.ndarray:
    """Input-to-hidden mask giving each gene its own block of hidden nodes.

    ``groups`` is a mapping of gene name to column indices (or a sequence
    of index lists). Rows span columns ``0..max index``; hidden block ``g``
    sees only the columns of gene ``g``.
    """
    cols_list: List[Sequence[int]] = list(groups.values()) if isinstance(groups, dict) else list(groups)
    if not cols_list:
        raise ValueError("need at least one gene")
    if q_per_gene < 1:
        raise ValueError("q_per_gene must be at least 1")
    if any(len(cols) == 0 for cols in cols_list):
        raise ValueError("empty gene group")
    p = max(max(cols) for cols in cols_list) + 1
    mask = np.zeros((p, len(cols_list) * q_per_gene), dtype=bool)
    for g, cols in enumerate(cols_list):
        mask[np.asarray(cols, dtype=int), g * q_per_gene : (g + 1) * q_per_gene] = True
    return mask


# ---------------------------------------------------------------------------
# fitted model wrapper


@dataclass
class ExpectileModel:
    """A fitted ER or ENN model plus the input scaling it was trained with."""

    kind: str
    params: np.ndarray
    tau: float
    lam: float
    arch: Optional[EnnArchitecture] = None
    x_center: Optional[np.ndarray] = None
    x_scale: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("er", "enn"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "enn" and self.arch is None:
            raise ValueError("an ENN model needs its architecture")
        self.params = np.asarray(self.params, dtype=float)

    @property
    def n_inputs(self) -> int:
        return self.arch.p_in if self.kind == "enn" else self.params.size - 1

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.x_center is not None:
            x = (x - self.x_center) / self.x_scale
        return x

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.n_inputs:
            raise ValueError(f"model expects {self.n_inputs} columns, got {x.shape[1]}")
        x = self.transform(x)
        if self.kind == "er":
            return er_predict_batch(self.params, x)
        return enn_predict(self.arch, self.params, x)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "flatten_version": FLATTEN_VERSION,
            "arch": None if self.arch is None else self.arch.to_dict(),
            "params": [float(v) for v in self.params],
            "tau": float(self.tau),
            "lambda": float(self.lam),
            "x_center": None if self.x_center is None else [float(v) for v in self.x_center],
            "x_scale": None if self.x_scale is None else [float(v) for v in self.x_scale],
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpectileModel":
        if d.get("flatten_version") != FLATTEN_VERSION:
            raise ValueError(f"unsupported flatten_version {d.get('flatten_version')!r}")
        arch = None if d.get("arch") is None else EnnArchitecture.from_dict(d["arch"])
        center = d.get("x_center")
        scale = d.get("x_scale")
        return cls(
            d["kind"],
            np.array(d["params"], dtype=float),
            d["tau"],
            d["lambda"],
            arch,
            None if center is None else np.array(center, dtype=float),
            None if scale is None else np.array(scale, dtype=float),
            dict(d.get("meta") or {}),
        )
