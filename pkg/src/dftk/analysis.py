"""Baselines and post-hoc analyses of trained kernels."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial import cKDTree

from .domains import Field, GridSpec, interp_weights
from .kernels import ImplicitModel, incidence_threshold
from .transforms import (GeodesicPath, LensingSpec, SpeedFn, T_MAX, lens_speed_and_grad,
                         trace_geodesics)

log = logging.getLogger(__name__)

MPP_RCOND = 1e-10
HIST_BINS = 20
MIN_COVERAGE = 0.10


class UndefinedRankError(ValueError):
    pass


class CoverageError(RuntimeError):
    pass


# -- Moore-Penrose baseline -----------------------------------------------------------

def mpp_fit(inputs: np.ndarray, targets: np.ndarray, rcond: float = MPP_RCOND) -> np.ndarray:
    """Least-squares W with W u_j ~ v_j, via a truncated SVD of the stacked inputs.

    ``inputs`` is (J, nX), ``targets`` is (J, nY); returns W of shape (nY, nX).
    """
    U = np.atleast_2d(np.asarray(inputs, float))
    V = np.atleast_2d(np.asarray(targets, float))
    if len(U) < 1 or len(U) != len(V):
        raise ValueError("need J >= 1 matching input/target pairs")
    # U = P diag(s) Q^T  =>  U^+ = Q diag(1/s) P^T
    P, s, Qt = np.linalg.svd(U, full_matrices=False)
    keep = s > rcond * s[0] if s.size and s[0] > 0 else np.zeros_like(s, bool)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (V.T @ P * inv) @ Qt


def mpp_fit_dataset(dataset) -> np.ndarray:
    return mpp_fit(dataset.inputs, dataset.targets)


# -- effective rank and codimension ------------------------------------------------------

def effective_rank(A: np.ndarray) -> float:
    s = np.linalg.svd(np.atleast_2d(np.asarray(A, float)), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        raise UndefinedRankError("effective rank of a zero matrix is undefined")
    return float(s.sum() / s[0])


def incident_points(model: ImplicitModel, y, x_points: np.ndarray, count: int) -> np.ndarray:
    """Indices of the ``count`` nodes with the smallest |f(y, x)|^2, ties by node order."""
    x_points = np.atleast_2d(x_points)
    if count > len(x_points):
        raise ValueError(f"count {count} exceeds the {len(x_points)} grid nodes")
    F = model.f_values(np.atleast_2d(y), x_points)[0]
    score = np.sum(F ** 2, axis=1)
    return np.argsort(score, kind="stable")[:count]


@dataclass(frozen=True)
class CodimSamples:
    y_index: np.ndarray
    x_index: np.ndarray
    effrank: np.ndarray         # nan where the Jacobian vanished
    counts: np.ndarray
    edges: np.ndarray
    zero_jacobians: int

    @property
    def median(self) -> float:
        return float(np.nanmedian(self.effrank))

    def rows(self):
        return zip(self.y_index.tolist(), self.x_index.tolist(), self.effrank.tolist())


def codim_histogram(model: ImplicitModel, y_points: np.ndarray, x_points: np.ndarray,
                    n_y: int = 64, n_x: int = 64, rng: np.random.Generator | None = None) -> CodimSamples:
    """Effective rank of grad_x f at the incident points of randomly drawn y."""
    rng = np.random.default_rng() if rng is None else rng
    iy = rng.choice(len(y_points), size=min(n_y, len(y_points)), replace=False)
    ys, xs, yi, xi = [], [], [], []
    for j in iy:
        near = incident_points(model, y_points[j], x_points, min(n_x, len(x_points)))
        ys.append(np.repeat(y_points[j][None], len(near), axis=0))
        xs.append(x_points[near])
        yi.append(np.full(len(near), j))
        xi.append(near)
    jac = model.jac_x_pairs(np.concatenate(ys), np.concatenate(xs))
    s = np.linalg.svd(jac, compute_uv=False)
    zero = s[:, 0] == 0
    ranks = np.where(zero, np.nan, s.sum(axis=1) / np.where(zero, 1.0, s[:, 0]))
    if zero.any():
        log.warning("%d incident points with a vanishing Jacobian", int(zero.sum()))
    m = jac.shape[1]
    lo, hi = (1.0, float(m)) if m > 1 else (0.5, 1.5)
    counts, edges = np.histogram(ranks[~zero], bins=HIST_BINS, range=(lo, hi))
    return CodimSamples(np.concatenate(yi), np.concatenate(xi), ranks, counts, edges,
                        int(zero.sum()))


# -- wavespeed ------------------------------------------------------------------------------

def _nearest_fill(points: np.ndarray, values: np.ndarray, have: np.ndarray, targets: np.ndarray):
    tree = cKDTree(points[have])
    _, k = tree.query(targets)
    return values[have][k]


def wavespeed_recover(model: ImplicitModel, grid: GridSpec, y_points: np.ndarray,
                      n_probes: int = 256, sigma_cells: float = 2.0, codim: int | None = None,
                      rng: np.random.Generator | None = None, radius: float = 1.0) -> Field:
    """c_hat ~ 1 / median amplitude over incident probes, smoothed and max-normalized."""
    rng = np.random.default_rng() if rng is None else rng
    codim = model.m if codim is None else codim
    nodes = grid.nodes()
    inside = grid.ball_mask(radius)
    xs = nodes[inside]
    ys = y_points[rng.choice(len(y_points), size=min(n_probes, len(y_points)), replace=False)]
    thr = incidence_threshold(model.lam)
    a_hat = np.full(len(xs), np.nan)
    F = model.f_values(ys, xs)                                # (nY, nX, m)
    hit_y, hit_x = np.nonzero(np.sum(F ** 2, axis=2) <= thr)
    if hit_y.size:
        jac = model.jac_x_pairs(ys[hit_y], xs[hit_x])
        s = np.linalg.svd(jac, compute_uv=False) ** 2
        ok = (s[:, 0] > 0) & (s[:, codim - 1] > 1e-12 * s[:, 0])
        amp = np.full(len(hit_x), np.nan)
        amp[ok] = 1.0 / np.sqrt(np.prod(s[ok, :codim], axis=1))
        order = np.argsort(hit_x, kind="stable")
        hx, amp = hit_x[order], amp[order]
        bounds = np.flatnonzero(np.diff(hx)) + 1
        for grp_x, grp in zip(np.split(hx, bounds), np.split(amp, bounds)):
            grp = grp[np.isfinite(grp)]
            if grp.size:
                a_hat[grp_x[0]] = np.median(grp)
    covered = np.isfinite(a_hat)
    frac = covered.mean() if covered.size else 0.0
    if frac < MIN_COVERAGE:
        raise CoverageError(f"only {100 * frac:.1f}% of interior nodes have incident probes")
    c_raw = np.zeros(grid.size)
    c_in = np.full(len(xs), np.nan)
    c_in[covered] = 1.0 / a_hat[covered]
    c_raw[inside] = c_in
    have = np.zeros(grid.size, bool)
    have[np.flatnonzero(inside)[covered]] = True
    c_raw[~have] = _nearest_fill(nodes, c_raw, have, nodes[~have])
    smooth = gaussian_filter(c_raw.reshape(grid.shape), sigma_cells, mode="nearest").ravel()
    smooth = smooth / smooth[inside].max()
    return Field(grid, np.where(inside, smooth, 0.0), inside)


def grid_speed(chat: Field) -> SpeedFn:
    """Speed function from grid samples: multilinear c, centred-difference gradient."""
    grid = chat.grid
    arr = chat.as_array()
    if chat.mask is not None:
        # extend the interior values outward so the boundary stencil stays meaningful
        nodes = grid.nodes()
        vals = chat.values.copy()
        vals[~chat.mask] = _nearest_fill(nodes, vals, chat.mask, nodes[~chat.mask])
        arr = vals.reshape(grid.shape)
    grads = np.gradient(arr, *grid.spacing)
    if grid.dims == 1:
        grads = [grads]
    c_flat = arr.ravel()
    g_flat = np.stack([g.ravel() for g in grads], axis=1)

    def speed(x):
        idx, w = interp_weights(grid, x)
        c = np.sum(c_flat[idx] * w, axis=1)
        g = np.einsum("pc,pcd->pd", w, g_flat[idx])
        return c, g
    return speed


def geodesics_from_wavespeed(chat: Field, y: np.ndarray, dt: float = 1e-3,
                             t_max: float = T_MAX) -> list[GeodesicPath]:
    y = np.atleast_2d(y)
    return trace_geodesics(y[:, 0], y[:, 1], grid_speed(chat), dt, t_max)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    ta, tb = cKDTree(a), cKDTree(b)
    return float(max(tb.query(a)[0].max(), ta.query(b)[0].max()))


# -- ground-truth geometry as an implicit model -------------------------------------------

def _polyline_distance(x: np.ndarray, path: np.ndarray):
    """Signed distance from points to a polyline and the unit normal at the foot point."""
    p0, p1 = path[:-1], path[1:]
    seg = p1 - p0
    L2 = np.maximum(np.sum(seg ** 2, axis=1), 1e-300)
    rel = x[:, None, :] - p0[None]
    t = np.clip(np.sum(rel * seg[None], axis=2) / L2, 0, 1)
    foot = p0[None] + t[..., None] * seg[None]
    d2 = np.sum((x[:, None, :] - foot) ** 2, axis=2)
    k = np.argmin(d2, axis=1)
    r = np.arange(len(x))
    tang = seg[k] / np.sqrt(L2[k])[:, None]
    normal = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
    diff = x - foot[r, k]
    sign = np.sign(np.sum(diff * normal, axis=1))
    sign[sign == 0] = 1.0
    return sign * np.sqrt(d2[r, k]), normal


class GeodesicDistanceModel(ImplicitModel):
    """f(y, x) = c(x) * signed distance from x to the geodesic of y.

    On the fiber |grad_x f| = c, so the amplitude is 1/c: the density of the
    time-parameterized geodesic ray transform along arclength.
    """

    def __init__(self, spec: LensingSpec, lam: float, stride: int = 10):
        self.spec, self.m, self.lam, self.stride = spec, 1, float(lam), stride
        self._paths: dict[tuple, np.ndarray] = {}

    def prepare(self, ys):
        """Trace every not-yet-cached geodesic in one vectorized batch."""
        todo = [y for y in np.unique(np.atleast_2d(ys), axis=0)
                if (float(y[0]), float(y[1])) not in self._paths]
        if todo:
            todo = np.array(todo)
            for y, path in zip(todo, trace_geodesics(todo[:, 0], todo[:, 1], self.spec.speed,
                                                     self.spec.dt)):
                self._paths[(float(y[0]), float(y[1]))] = np.vstack([path.x[::self.stride],
                                                                     path.x[-1:]])

    def _path(self, y):
        key = (float(y[0]), float(y[1]))
        if key not in self._paths:
            self.prepare(np.atleast_2d(y))
        return self._paths[key]

    def _eval(self, y, xs):
        d, nrm = _polyline_distance(xs, self._path(y))
        c, gc = lens_speed_and_grad(xs, self.spec.k, self.spec.sigma)
        return c * d, d[:, None] * gc + c[:, None] * nrm

    def f_values(self, ys, xs):
        xs = np.atleast_2d(xs)
        self.prepare(ys)
        return np.stack([self._eval(y, xs)[0] for y in np.atleast_2d(ys)])[:, :, None]

    def f_pairs(self, ys, xs):
        ys, xs = np.atleast_2d(ys), np.atleast_2d(xs)
        out = np.empty((len(ys), 1))
        self.prepare(ys)
        for key in np.unique(ys, axis=0):
            sel = np.all(ys == key, axis=1)
            out[sel, 0] = self._eval(key, xs[sel])[0]
        return out

    def jac_x_pairs(self, ys, xs):
        ys, xs = np.atleast_2d(ys), np.atleast_2d(xs)
        out = np.empty((len(ys), 1, xs.shape[1]))
        self.prepare(ys)
        for key in np.unique(ys, axis=0):
            sel = np.all(ys == key, axis=1)
            out[sel, 0] = self._eval(key, xs[sel])[1]
        return out

    def weight(self, ys):
        return np.ones(len(np.atleast_2d(ys)))


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.corrcoef(np.ravel(a), np.ravel(b))[0, 1])


__all__ = [
    "mpp_fit", "mpp_fit_dataset", "effective_rank", "incident_points", "codim_histogram",
    "CodimSamples", "wavespeed_recover", "geodesics_from_wavespeed", "grid_speed", "hausdorff",
    "GeodesicDistanceModel", "pearson", "UndefinedRankError", "CoverageError",
]
