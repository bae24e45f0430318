"""Levelset and softmax integral kernels.

A model supplies an implicit incidence function ``f(y, x)`` with values in
R^m and a positive weight ``w(y)``.  The levelset operator averages ``u``
against ``exp(-lam |f(y, x)|^2)`` over a discrete set of X points; the
softmax variant uses ``exp(lam f(y, x))`` with scalar ``f``.

Learnable models factor ``f`` as an inner product of token networks,
``f(y, x) = <psi_Y(y), psi_X(x)> + b(y)``, contracted over a width-``d``
axis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .diffnet import MlpParams, backward, mlp_forward, siren_init
from .domains import Field, read_array, write_array

EIG_TOL = 1e-12
BIAS_MODES = ("mean", "learned")
KERNELS = ("levelset", "softmax")


class DegenerateAmplitudeError(ValueError):
    pass


class UnsupportedConfigError(ValueError):
    pass


# -- Y-parameter embedding -------------------------------------------------------

def embed_y(y: np.ndarray, kinds: Sequence[str]) -> np.ndarray:
    """Angles become (cos, sin) pairs; linear coordinates pass through."""
    y = np.atleast_2d(y)
    cols = []
    for j, kind in enumerate(kinds):
        if kind == "angle":
            cols += [np.cos(y[:, j]), np.sin(y[:, j])]
        else:
            cols.append(y[:, j])
    return np.stack(cols, axis=1)


def embed_jacobian(y: np.ndarray, kinds: Sequence[str]) -> np.ndarray:
    """d(embedding)/dy, shape (P, n_features, N)."""
    y = np.atleast_2d(y)
    n_feat = sum(2 if k == "angle" else 1 for k in kinds)
    jac = np.zeros((len(y), n_feat, len(kinds)))
    r = 0
    for j, kind in enumerate(kinds):
        if kind == "angle":
            jac[:, r, j] = -np.sin(y[:, j])
            jac[:, r + 1, j] = np.cos(y[:, j])
            r += 2
        else:
            jac[:, r, j] = 1.0
            r += 1
    return jac


def default_lambda(spacing: float, width_cells: float = 1.5) -> float:
    """lam with standard width 1/sqrt(2 lam) equal to ``width_cells`` grid cells."""
    return 1.0 / (2.0 * (width_cells * spacing) ** 2)


# -- model interface -----------------------------------------------------------------

class ImplicitModel:
    """Anything with an incidence function f, its x/y Jacobians and a weight.

    Implementations set ``m`` (channels of f), ``lam`` and ``kernel``.
    """

    kernel = "levelset"

    def f_values(self, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """All pairs: (nY, nX, m)."""
        raise NotImplementedError

    def f_pairs(self, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Paired points: (P, m)."""
        raise NotImplementedError

    def jac_x_pairs(self, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """(P, m, n)."""
        raise NotImplementedError

    def jac_y_pairs(self, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """(P, m, N)."""
        raise NotImplementedError

    def weight(self, ys: np.ndarray) -> np.ndarray:
        return np.ones(len(np.atleast_2d(ys)))


class AnalyticSphericalModel(ImplicitModel):
    """f(y, r; x) = |x|^2 + |y|^2 - 2<x, y> - r^2 as a factorized kernel, w = 1."""

    def __init__(self, lam: float = 400.0):
        self.m, self.lam = 1, lam

    @staticmethod
    def psi_y(ys):
        ys = np.atleast_2d(ys)
        y1, y2, r = ys[:, 0], ys[:, 1], ys[:, 2]
        return np.stack([np.ones_like(y1), -2 * y1, -2 * y2, y1 ** 2 + y2 ** 2 - r ** 2], axis=1)

    @staticmethod
    def psi_x(xs):
        xs = np.atleast_2d(xs)
        return np.stack([np.sum(xs ** 2, axis=1), xs[:, 0], xs[:, 1], np.ones(len(xs))], axis=1)

    def f_values(self, ys, xs):
        return (self.psi_y(ys) @ self.psi_x(xs).T)[:, :, None]

    def f_pairs(self, ys, xs):
        return np.sum(self.psi_y(ys) * self.psi_x(xs), axis=1)[:, None]

    def jac_x_pairs(self, ys, xs):
        ys, xs = np.atleast_2d(ys), np.atleast_2d(xs)
        return (2 * xs - 2 * ys[:, :2])[:, None, :]

    def jac_y_pairs(self, ys, xs):
        ys, xs = np.atleast_2d(ys), np.atleast_2d(xs)
        return np.concatenate([2 * ys[:, :2] - 2 * xs, -2 * ys[:, 2:3]], axis=1)[:, None, :]


class CallableModel(ImplicitModel):
    """Model from explicit pairwise callables; used for oracles and injected geometry."""

    def __init__(self, f: Callable, jac_x: Callable, m: int, lam: float = 1.0,
                 jac_y: Callable | None = None, weight: Callable | None = None):
        self._f, self._jx, self._jy, self._w = f, jac_x, jac_y, weight
        self.m, self.lam = m, lam

    def f_pairs(self, ys, xs):
        return np.asarray(self._f(np.atleast_2d(ys), np.atleast_2d(xs))).reshape(-1, self.m)

    def f_values(self, ys, xs):
        ys, xs = np.atleast_2d(ys), np.atleast_2d(xs)
        ny, nx = len(ys), len(xs)
        return self.f_pairs(np.repeat(ys, nx, axis=0), np.tile(xs, (ny, 1))).reshape(ny, nx, self.m)

    def jac_x_pairs(self, ys, xs):
        return np.asarray(self._jx(np.atleast_2d(ys), np.atleast_2d(xs)))

    def jac_y_pairs(self, ys, xs):
        if self._jy is None:
            raise NotImplementedError("no y-Jacobian supplied")
        return np.asarray(self._jy(np.atleast_2d(ys), np.atleast_2d(xs)))

    def weight(self, ys):
        return np.ones(len(np.atleast_2d(ys))) if self._w is None else self._w(np.atleast_2d(ys))


class ScaledModel(ImplicitModel):
    """f replaced by s * f."""

    def __init__(self, base: ImplicitModel, s: float):
        self.base, self.s = base, s
        self.m, self.lam, self.kernel = base.m, base.lam, base.kernel

    def f_values(self, ys, xs):
        return self.s * self.base.f_values(ys, xs)

    def f_pairs(self, ys, xs):
        return self.s * self.base.f_pairs(ys, xs)

    def jac_x_pairs(self, ys, xs):
        return self.s * self.base.jac_x_pairs(ys, xs)

    def jac_y_pairs(self, ys, xs):
        return self.s * self.base.jac_y_pairs(ys, xs)

    def weight(self, ys):
        return self.base.weight(ys)


def _contract(a: np.ndarray, tx: np.ndarray) -> np.ndarray:
    """<a(y), tx(x)> over the width axis; both channel-first, result (m, nY, nX)."""
    return np.matmul(a, tx.transpose(0, 2, 1))


# -- learnable factorized model ---------------------------------------------------------

@dataclass
class LevelsetModel(ImplicitModel):
    psi_y: MlpParams
    psi_x: MlpParams
    m: int
    lam: float
    x_points: np.ndarray                    # discretization X0 used for the mean bias
    y_kinds: tuple[str, ...]
    d: int = 64
    bias_mode: str = "mean"
    kernel: str = "levelset"
    omega0: float = 30.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lam <= 0 or self.m < 1:
            raise ValueError("need lam > 0 and m >= 1")
        if self.bias_mode not in BIAS_MODES:
            raise UnsupportedConfigError(f"bias mode {self.bias_mode!r} not in {BIAS_MODES}")
        if self.kernel not in KERNELS:
            raise UnsupportedConfigError(f"kernel {self.kernel!r} not in {KERNELS}")
        if self.kernel == "softmax" and self.m != 1:
            raise UnsupportedConfigError("the softmax kernel needs a scalar f (m = 1)")

    # parameter vector plumbing
    @property
    def n_params(self) -> int:
        return self.psi_y.size + self.psi_x.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.psi_y.to_vector(), self.psi_x.to_vector()])

    def with_vector(self, vec: np.ndarray) -> "LevelsetModel":
        ny = self.psi_y.size
        return replace(self, psi_y=self.psi_y.with_vector(vec[:ny]),
                       psi_x=self.psi_x.with_vector(vec[ny:]))

    # token networks
    def _y_out(self, ys):
        out, tape = mlp_forward(self.psi_y, embed_y(ys, self.y_kinds))
        dm = self.d * self.m
        a = np.ascontiguousarray(out[:, :dm].reshape(-1, self.m, self.d).transpose(1, 0, 2))
        logw = out[:, dm]
        b = out[:, dm + 1:] if self.bias_mode == "learned" else None
        return a, logw, b, tape

    def _x_out(self, xs):
        out, tape = mlp_forward(self.psi_x, np.atleast_2d(xs))
        return np.ascontiguousarray(out.reshape(-1, self.m, self.d).transpose(1, 0, 2)), tape

    def _x_mean(self, ref):
        tx, _ = self._x_out(self.x_points if ref is None else ref)
        return tx.mean(axis=1, keepdims=True)

    def weight(self, ys):
        return np.exp(self._y_out(ys)[1])

    def f_values(self, ys, xs, ref: np.ndarray | None = None):
        a, _, b, _ = self._y_out(ys)
        tx, _ = self._x_out(xs)
        if self.bias_mode == "mean":
            return _contract(a, tx - self._x_mean(ref)).transpose(1, 2, 0)
        return _contract(a, tx).transpose(1, 2, 0) + b[:, None, :]

    def f_pairs(self, ys, xs):
        a, _, b, _ = self._y_out(ys)
        tx, _ = self._x_out(xs)
        if self.bias_mode == "mean":
            return np.sum(a * (tx - self._x_mean(None)), axis=2).T
        return np.sum(a * tx, axis=2).T + b

    def jac_x_pairs(self, ys, xs):
        a, _, _, _ = self._y_out(ys)
        xs = np.atleast_2d(xs)
        jac = np.empty((len(xs), self.m, xs.shape[1]))
        for c in range(self.m):
            _, tape = mlp_forward(self.psi_x, xs)
            adj = np.zeros((len(xs), self.m, self.d))
            adj[:, c, :] = a[c]
            _, gx = backward(tape, adj.reshape(len(xs), -1))
            jac[:, c, :] = gx
        return jac

    def jac_y_pairs(self, ys, xs):
        ys = np.atleast_2d(ys)
        tx, _ = self._x_out(xs)
        if self.bias_mode == "mean":
            tx = tx - self._x_mean(None)
        emb = embed_y(ys, self.y_kinds)
        ejac = embed_jacobian(ys, self.y_kinds)
        n_out = self.psi_y.widths[-1]
        dm = self.d * self.m
        jac = np.empty((len(ys), self.m, ys.shape[1]))
        for c in range(self.m):
            _, tape = mlp_forward(self.psi_y, emb)
            adj = np.zeros((len(ys), n_out))
            blk = np.zeros((len(ys), self.m, self.d))
            blk[:, c, :] = tx[c]
            adj[:, :dm] = blk.reshape(len(ys), -1)
            if self.bias_mode == "learned":
                adj[:, dm + 1 + c] = 1.0
            _, gfeat = backward(tape, adj)
            jac[:, c, :] = np.einsum("pf,pfn->pn", gfeat, ejac)
        return jac

    # checkpoint
    def header(self) -> dict:
        return {"psi_y_widths": self.psi_y.widths, "psi_x_widths": self.psi_x.widths,
                "omegas_y": self.psi_y.omegas, "omegas_x": self.psi_x.omegas,
                "omega0": self.omega0, "lam": self.lam, "m": self.m, "d": self.d,
                "bias_mode": self.bias_mode, "kernel": self.kernel,
                "weight_head": {"channel": self.d * self.m, "link": "exp"},
                "y_kinds": list(self.y_kinds), "meta": self.meta}


def init_levelset_model(y_kinds: Sequence[str], x_points: np.ndarray, m: int = 1, lam: float = 1.0,
                        d: int = 64, hidden: Sequence[int] = (64, 64, 64), omega0: float = 30.0,
                        bias_mode: str = "mean", kernel: str = "levelset",
                        rng: np.random.Generator | None = None,
                        calibrate_on: np.ndarray | None = None) -> LevelsetModel:
    """Random model; with ``calibrate_on`` (Y points) f is rescaled so the median
    row norm of grad_x f over random incident-agnostic pairs is 1."""
    rng = np.random.default_rng() if rng is None else rng
    n_feat = sum(2 if k == "angle" else 1 for k in y_kinds)
    n_x = x_points.shape[1]
    extra = m if bias_mode == "learned" else 0
    psi_y = siren_init([n_feat, *hidden, d * m + 1 + extra], omega0, rng)
    psi_x = siren_init([n_x, *hidden, d * m], omega0, rng)
    # start from w(y) = 1
    psi_y.weights[-1][d * m] = 0.0
    psi_y.biases[-1][d * m] = 0.0
    model = LevelsetModel(psi_y, psi_x, m, lam, np.asarray(x_points, float), tuple(y_kinds), d,
                          bias_mode, kernel, omega0)
    if calibrate_on is not None:
        model = calibrate(model, calibrate_on, rng)
    return model


def calibrate(model: LevelsetModel, y_points: np.ndarray, rng: np.random.Generator,
              n_pairs: int = 512) -> LevelsetModel:
    iy = rng.integers(len(y_points), size=n_pairs)
    ix = rng.integers(len(model.x_points), size=n_pairs)
    jac = model.jac_x_pairs(y_points[iy], model.x_points[ix])
    med = float(np.median(np.linalg.norm(jac, axis=2)))
    if not med > 0:
        return model
    dm = model.d * model.m
    w = [x.copy() for x in model.psi_y.weights]
    b = [x.copy() for x in model.psi_y.biases]
    w[-1][:dm] /= med
    b[-1][:dm] /= med
    if model.bias_mode == "learned":
        w[-1][dm + 1:] /= med
        b[-1][dm + 1:] /= med
    return replace(model, psi_y=MlpParams(w, b, list(model.psi_y.omegas)))


def save_model(model: LevelsetModel, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "model.json").write_text(json.dumps(model.header(), indent=1) + "\n")
    write_array(model.to_vector(), path / "params")
    write_array(model.x_points, path / "x_points")
    return path


def load_model(path) -> LevelsetModel:
    path = Path(path)
    h = json.loads((path / "model.json").read_text())
    vec, _ = read_array(path / "params")
    xp, _ = read_array(path / "x_points")
    wy, wx = h["psi_y_widths"], h["psi_x_widths"]
    shell_y = MlpParams([np.zeros((o, i)) for i, o in zip(wy[:-1], wy[1:])],
                        [np.zeros(o) for o in wy[1:]], h["omegas_y"])
    shell_x = MlpParams([np.zeros((o, i)) for i, o in zip(wx[:-1], wx[1:])],
                        [np.zeros(o) for o in wx[1:]], h["omegas_x"])
    model = LevelsetModel(shell_y, shell_x, h["m"], h["lam"], xp, tuple(h["y_kinds"]), h["d"],
                          h["bias_mode"], h["kernel"], h["omega0"], h.get("meta", {}))
    return model.with_vector(vec)


# -- operators ----------------------------------------------------------------------------

def _weights_from_f(F: np.ndarray, lam: float, kernel: str) -> np.ndarray:
    """Row-normalized kernel weights P (nY, nX), log-sum-exp stabilized."""
    if kernel == "softmax":
        if F.shape[2] != 1:
            raise UnsupportedConfigError("the softmax kernel needs a scalar f (m = 1)")
        logits = lam * F[:, :, 0]
    else:
        logits = -lam * np.sum(F ** 2, axis=2)
    logits = logits - logits.max(axis=1, keepdims=True)
    E = np.exp(logits)
    return E / E.sum(axis=1, keepdims=True)


def _x_set(u: Field, x_points):
    if x_points is not None:
        return np.atleast_2d(x_points), None
    nodes = u.grid.nodes()
    if u.mask is not None:
        return nodes[u.mask], u.mask
    return nodes, None


def kernel_matrix(model: ImplicitModel, y_points: np.ndarray, x_points: np.ndarray,
                  kernel: str | None = None) -> np.ndarray:
    """Discrete operator as a dense (nY, nX) matrix including w(y)."""
    kernel = kernel or model.kernel
    if isinstance(model, LevelsetModel):
        F = model.f_values(y_points, x_points, ref=x_points)
    else:
        F = model.f_values(y_points, x_points)
    return model.weight(y_points)[:, None] * _weights_from_f(F, model.lam, kernel)


def levelset_apply(model: ImplicitModel, u: Field, y_points: np.ndarray,
                   x_points: np.ndarray | None = None) -> np.ndarray:
    """w(y) * sum_x e^{-lam|f|^2} u(x) / sum_x e^{-lam|f|^2} over the nodes of ``u``
    (inside its mask, if any)."""
    xs, mask = _x_set(u, x_points)
    vals = u.values if mask is None else u.values[mask]
    return kernel_matrix(model, np.atleast_2d(y_points), xs, "levelset") @ vals


def softmax_apply(model: ImplicitModel, u: Field, y_points: np.ndarray,
                  x_points: np.ndarray | None = None) -> np.ndarray:
    if model.m != 1:
        raise UnsupportedConfigError("the softmax kernel needs a scalar f (m = 1)")
    xs, mask = _x_set(u, x_points)
    vals = u.values if mask is None else u.values[mask]
    return kernel_matrix(model, np.atleast_2d(y_points), xs, "softmax") @ vals


def predict(model: LevelsetModel, U: np.ndarray, y_points: np.ndarray) -> np.ndarray:
    """Batch prediction: U is (K, nX) on ``model.x_points``; returns (K, nY)."""
    return U @ kernel_matrix(model, y_points, model.x_points).T


def loss_and_grad(model: LevelsetModel, U: np.ndarray, T: np.ndarray, y_points: np.ndarray,
                  embedded: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Batch MSE (1/K) sum_k ||T_k - L U_k||^2 and its gradient in the parameter vector.

    ``U`` is (K, nX) on ``model.x_points``; ``T`` is (K, nY).
    """
    K = len(U)
    if K == 0:
        raise ValueError("empty batch")
    d, m = model.d, model.m
    dm = d * m
    emb = embed_y(y_points, model.y_kinds) if embedded is None else embedded
    out_y, tape_y = mlp_forward(model.psi_y, emb)
    out_x, tape_x = mlp_forward(model.psi_x, model.x_points)
    nY, nX = len(out_y), len(out_x)
    a = np.ascontiguousarray(out_y[:, :dm].reshape(nY, m, d).transpose(1, 0, 2))   # (m, nY, d)
    w = np.exp(out_y[:, dm])
    tx = np.ascontiguousarray(out_x.reshape(nX, m, d).transpose(1, 0, 2))          # (m, nX, d)
    if model.bias_mode == "mean":
        tx = tx - tx.mean(axis=1, keepdims=True)
    Fc = _contract(a, tx)                         # (m, nY, nX)
    if model.bias_mode == "learned":
        Fc = Fc + out_y[:, dm + 1:].T[:, :, None]
    if model.kernel == "softmax":
        logits = model.lam * Fc[0]
    else:
        logits = -model.lam * np.sum(Fc ** 2, axis=0)
    logits -= logits.max(axis=1, keepdims=True)
    P = np.exp(logits)
    P /= P.sum(axis=1, keepdims=True)
    UP = U @ P.T                                  # (K, nY)
    resid = w * UP - T
    loss = float(np.sum(resid ** 2) / K)

    g_pred = 2.0 * resid / K                      # (K, nY)
    g_w = np.sum(g_pred * UP, axis=0)
    g_P = w[:, None] * (g_pred.T @ U)             # (nY, nX)
    g_logits = P * (g_P - np.sum(g_P * P, axis=1, keepdims=True))
    if model.kernel == "softmax":
        g_F = (model.lam * g_logits)[None]
    else:
        g_F = (-2.0 * model.lam) * g_logits[None] * Fc
    g_a = np.matmul(g_F, tx)                                  # (m, nY, d)
    g_tx = np.matmul(g_F.transpose(0, 2, 1), a)               # (m, nX, d)
    if model.bias_mode == "mean":
        g_tx = g_tx - g_tx.mean(axis=1, keepdims=True)

    adj_y = np.zeros_like(out_y)
    adj_y[:, :dm] = g_a.transpose(1, 0, 2).reshape(nY, dm)
    adj_y[:, dm] = g_w * w
    if model.bias_mode == "learned":
        adj_y[:, dm + 1:] = g_F.sum(axis=2).T
    gy, _ = backward(tape_y, adj_y)
    gx, _ = backward(tape_x, g_tx.transpose(1, 0, 2).reshape(nX, dm))
    return loss, np.concatenate([gy.to_vector(), gx.to_vector()])


# -- Jacobians, amplitudes, conormals ----------------------------------------------------

def eval_f(model: ImplicitModel, y, x) -> np.ndarray:
    return model.f_pairs(np.atleast_2d(y), np.atleast_2d(x))[0]


def bias_mean_subtraction(model: LevelsetModel, y, x_points: np.ndarray) -> np.ndarray:
    """b(y) = -mean_x <psi_Y(y), psi_X(x)> over the discrete X set."""
    if len(x_points) == 0:
        raise ValueError("empty grid")
    a, _, _, _ = model._y_out(np.atleast_2d(y))
    tx, _ = model._x_out(x_points)
    return -np.sum(a[:, 0, :] * tx.mean(axis=1), axis=1)


def jacobian_x(model: ImplicitModel, y, x) -> np.ndarray:
    return model.jac_x_pairs(np.atleast_2d(y), np.atleast_2d(x))[0]


def jacobian_y(model: ImplicitModel, y, x) -> np.ndarray:
    return model.jac_y_pairs(np.atleast_2d(y), np.atleast_2d(x))[0]


def amplitudes(jac: np.ndarray, codim: int) -> np.ndarray:
    """gdet_{codim}^{-1/2}(J^T J) for a stack of Jacobians (P, m, n)."""
    jac = np.asarray(jac)
    if jac.ndim == 2:
        jac = jac[None]
    if not 1 <= codim <= min(jac.shape[1:]):
        raise ValueError(f"codimension {codim} outside [1, {min(jac.shape[1:])}]")
    s = np.linalg.svd(jac, compute_uv=False)       # descending
    eig = s ** 2
    top = eig[:, :codim]
    bad = (top[:, -1] <= EIG_TOL * eig[:, 0]) | (eig[:, 0] == 0)
    if np.any(bad):
        raise DegenerateAmplitudeError(f"{int(bad.sum())} Jacobians below rank {codim}")
    return 1.0 / np.sqrt(np.prod(top, axis=1))


def amplitude_af(model: ImplicitModel, y, x, codim: int) -> float:
    return float(amplitudes(jacobian_x(model, y, x), codim)[0])


def incidence_threshold(lam: float) -> float:
    """|f|^2 at or below this counts as incident."""
    return 2.0 / lam


def conormal_at(model: ImplicitModel, y, x, normalize: bool = False,
                check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Rows of [grad_y f, grad_x f] at (y, x): (eta (m, N), xi (m, n))."""
    if check:
        f = eval_f(model, y, x)
        if np.sum(f ** 2) > incidence_threshold(model.lam):
            raise ValueError("(y, x) is not near the zero levelset")
    eta = jacobian_y(model, y, x)
    xi = jacobian_x(model, y, x)
    if normalize:
        nrm = np.sqrt(np.sum(eta ** 2, axis=1) + np.sum(xi ** 2, axis=1))[:, None]
        nrm = np.where(nrm > 0, nrm, 1.0)
        eta, xi = eta / nrm, xi / nrm
    return eta, xi


__all__ = [
    "ImplicitModel", "AnalyticSphericalModel", "CallableModel", "ScaledModel", "LevelsetModel",
    "init_levelset_model", "calibrate", "save_model", "load_model", "embed_y", "embed_jacobian",
    "default_lambda", "kernel_matrix", "levelset_apply", "softmax_apply", "predict",
    "loss_and_grad", "eval_f", "bias_mean_subtraction", "jacobian_x", "jacobian_y",
    "amplitudes", "amplitude_af", "incidence_threshold", "conormal_at",
    "DegenerateAmplitudeError", "UnsupportedConfigError",
]
