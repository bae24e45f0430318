"""Reference forward operators for the double fibration transforms.

Every transform is assembled once per (spec, X grid) as a sparse matrix whose
rows are fiber quadrature rules over multilinear interpolation weights.  The
``*_forward`` functions apply that matrix to a field.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .domains import Field, GridSpec, interp_matrix, make_grid, unit_box

T_MAX = 10.0


class TrappedRayError(RuntimeError):
    pass


def _open_axis(lo: float, hi: float, n: int) -> tuple[float, float]:
    """Cell-centred extents of ``n`` points strictly inside (lo, hi)."""
    step = (hi - lo) / n
    return lo + 0.5 * step, hi - 0.5 * step


def _periodic_axis(n: int) -> tuple[float, float]:
    return 0.0, 2 * math.pi * (n - 1) / n


class _TransformSpec:
    """Shared Y-grid plumbing; subclasses set ``y_kinds`` and build matrices."""

    y_kinds: tuple[str, ...] = ()
    x_dims: int = 2
    x_radius: float | None = 1.0

    def y_grid(self) -> GridSpec:
        raise NotImplementedError

    def y_points(self) -> np.ndarray:
        return self.y_grid().nodes()

    def default_x_grid(self, n: int) -> GridSpec:
        return unit_box(self.x_dims, n)

    def matrix(self, grid: GridSpec) -> sp.csr_matrix:
        return _cached_matrix(self, grid)

    def build_matrix(self, grid: GridSpec) -> sp.csr_matrix:
        raise NotImplementedError

    def apply(self, u: Field) -> Field:
        return Field(self.y_grid(), self.matrix(u.grid) @ u.values)


@lru_cache(maxsize=32)
def _cached_matrix(spec: _TransformSpec, grid: GridSpec) -> sp.csr_matrix:
    return spec.build_matrix(grid)


def _chord_rule(starts: np.ndarray, dirs: np.ndarray, lengths: np.ndarray, step: float,
                grid: GridSpec):
    """Two-point Gauss nodes/weights on every piece of each chord between grid faces.

    Along a line the multilinear interpolant is a cubic on each cell, so the
    rule integrates it exactly; pieces longer than ``step`` are subdivided.
    """
    lengths = np.asarray(lengths, float)
    cuts = [np.zeros((len(lengths), 1)), lengths[:, None]]
    for k, ax in enumerate(grid.axes()):
        dk = dirs[:, k:k + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (ax[None, :] - starts[:, k:k + 1]) / dk
        t[~np.isfinite(t) | (t <= 0) | (t >= lengths[:, None])] = np.inf
        cuts.append(t)
    T = np.sort(np.concatenate(cuts, axis=1), axis=1)
    T = np.where(T > lengths[:, None], lengths[:, None], T)
    seg = np.diff(T, axis=1)
    keep = seg > 0
    rows0 = np.nonzero(keep)[0]
    a, L = T[:, :-1][keep], seg[keep]
    sub = np.maximum(np.ceil(L / step).astype(np.int64), 1)
    rows1 = np.repeat(rows0, sub)
    offs = np.arange(sub.sum()) - np.repeat(np.cumsum(sub) - sub, sub)
    h = np.repeat(L / sub, sub)
    mid = np.repeat(a, sub) + (offs + 0.5) * h
    g = 0.5 / math.sqrt(3)
    t = np.concatenate([mid - g * h, mid + g * h])
    rows = np.concatenate([rows1, rows1])
    pts = starts[rows] + t[:, None] * dirs[rows]
    return pts, np.concatenate([h, h]) / 2, rows


@dataclass(frozen=True)
class RadonFanSpec(_TransformSpec):
    """Fan-beam lines of the unit disc: entry angle theta, incidence omega."""

    n_theta: int = 32
    n_omega: int = 32
    step_frac: float = 0.5

    y_kinds = ("angle", "angle")

    def __post_init__(self):
        if self.n_theta < 2 or self.n_omega < 2 or self.step_frac <= 0:
            raise ValueError("invalid RadonFanSpec")

    def y_grid(self) -> GridSpec:
        return make_grid([_periodic_axis(self.n_theta),
                          _open_axis(-math.pi / 2, math.pi / 2, self.n_omega)],
                         [self.n_theta, self.n_omega])

    def chords(self, y: np.ndarray | None = None):
        y = self.y_points() if y is None else np.atleast_2d(y)
        theta, omega = y[:, 0], y[:, 1]
        p = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        # inward normal -p rotated by omega
        d = -np.stack([np.cos(theta + omega), np.sin(theta + omega)], axis=1)
        return p, d, 2 * np.cos(omega)

    def build_matrix(self, grid: GridSpec) -> sp.csr_matrix:
        p, d, length = self.chords()
        pts, w, rows = _chord_rule(p, d, length, self.step_frac * grid.spacing.min(), grid)
        return interp_matrix(grid, pts, w, rows, len(length))


def _sphere_frame(az: np.ndarray, pol: np.ndarray):
    p = np.stack([np.sin(pol) * np.cos(az), np.sin(pol) * np.sin(az), np.cos(pol)], axis=1)
    e_pol = np.stack([np.cos(pol) * np.cos(az), np.cos(pol) * np.sin(az), -np.sin(pol)], axis=1)
    e_az = np.stack([-np.sin(az), np.cos(az), np.zeros_like(az)], axis=1)
    return p, e_pol, e_az


@dataclass(frozen=True)
class Ray3DSpec(_TransformSpec):
    """Rays of the unit ball entering at (azimuth, polar) with fixed tilt ``alpha0``
    from the inward normal, rotated by ``beta`` about that normal."""

    n_azimuth: int = 32
    n_polar: int = 32
    n_dir: int = 32
    alpha0: float = math.pi / 4
    step_frac: float = 0.5

    y_kinds = ("angle", "angle", "angle")
    x_dims = 3

    def __post_init__(self):
        if not 0 <= self.alpha0 < math.pi / 2:
            raise ValueError("alpha0 must lie in [0, pi/2)")
        if min(self.n_azimuth, self.n_polar, self.n_dir) < 2 or self.step_frac <= 0:
            raise ValueError("invalid Ray3DSpec")

    def y_grid(self) -> GridSpec:
        return make_grid([_periodic_axis(self.n_azimuth), _open_axis(0, math.pi, self.n_polar),
                          _periodic_axis(self.n_dir)],
                         [self.n_azimuth, self.n_polar, self.n_dir])

    def chords(self, y: np.ndarray | None = None):
        y = self.y_points() if y is None else np.atleast_2d(y)
        p, e1, e2 = _sphere_frame(y[:, 0], y[:, 1])
        beta = y[:, 2][:, None]
        a = self.alpha0
        d = -math.cos(a) * p + math.sin(a) * (np.cos(beta) * e1 + np.sin(beta) * e2)
        return p, d, np.full(len(y), 2 * math.cos(a))

    def build_matrix(self, grid: GridSpec) -> sp.csr_matrix:
        p, d, length = self.chords()
        pts, w, rows = _chord_rule(p, d, length, self.step_frac * grid.spacing.min(), grid)
        return interp_matrix(grid, pts, w, rows, len(length))


@dataclass(frozen=True)
class Plane3DSpec(_TransformSpec):
    """Integrals over planes <n, x> = s intersected with the unit ball."""

    n_azimuth: int = 32
    n_polar: int = 32
    n_offset: int = 32
    step_frac: float = 0.05     # spacing of the sweeping chords, in cells

    y_kinds = ("angle", "angle", "linear")
    x_dims = 3

    def y_grid(self) -> GridSpec:
        return make_grid([_periodic_axis(self.n_azimuth), _open_axis(0, math.pi, self.n_polar),
                          _open_axis(-1.0, 1.0, self.n_offset)],
                         [self.n_azimuth, self.n_polar, self.n_offset])

    def build_matrix(self, grid: GridSpec) -> sp.csr_matrix:
        """Each section is swept by parallel chords at offsets v = rho sin(phi), phi
        on a midpoint rule; every chord is integrated exactly (see ``_chord_rule``)."""
        y = self.y_points()
        n, e1, e2 = _sphere_frame(y[:, 0], y[:, 1])
        s = y[:, 2]
        rho = np.sqrt(np.clip(1 - s ** 2, 0, None))
        step = self.step_frac * grid.spacing.min()
        n_lines = np.maximum(np.ceil(2 * rho / step).astype(np.int64), 4)
        n_lines[rho <= 0] = 0
        plane = np.repeat(np.arange(len(y)), n_lines)
        j = np.arange(n_lines.sum()) - np.repeat(np.cumsum(n_lines) - n_lines, n_lines)
        dphi = math.pi / n_lines[plane]
        phi = -math.pi / 2 + (j + 0.5) * dphi
        r = rho[plane]
        half = r * np.cos(phi)
        starts = s[plane, None] * n[plane] + (r * np.sin(phi))[:, None] * e2[plane] \
            - half[:, None] * e1[plane]
        pts, w, line = _chord_rule(starts, e1[plane], 2 * half, np.inf, grid)
        dv = r * np.cos(phi) * dphi
        return interp_matrix(grid, pts, w * dv[line], plane[line], len(y))


@dataclass(frozen=True)
class SphericalMeanSpec(_TransformSpec):
    """Circle means in the plane; X is the box ``[-x_extent, x_extent]^2``."""

    n_center: int = 8
    center_extent: float = 0.6
    n_radius: int = 16
    r_min: float = 0.1
    r_max: float = 0.8
    x_extent: float = 1.5
    step_frac: float = 0.5

    y_kinds = ("linear", "linear", "linear")
    x_radius = None

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("radii must be positive and increasing")

    def y_grid(self) -> GridSpec:
        c = self.center_extent
        return make_grid([(-c, c), (-c, c), (self.r_min, self.r_max)],
                         [self.n_center, self.n_center, self.n_radius])

    def default_x_grid(self, n: int) -> GridSpec:
        e = self.x_extent
        return make_grid([(-e, e), (-e, e)], [n, n])

    def build_matrix(self, grid: GridSpec) -> sp.csr_matrix:
        y = self.y_points()
        step = self.step_frac * grid.spacing.min()
        nang = np.maximum(np.ceil(2 * math.pi * y[:, 2] / step).astype(np.int64), 16)
        rows = np.repeat(np.arange(len(y)), nang)
        k = np.arange(nang.sum()) - np.repeat(np.cumsum(nang) - nang, nang)
        phi = 2 * math.pi * k / nang[rows]
        pts = y[rows, :2] + y[rows, 2:3] * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return interp_matrix(grid, pts, 1.0 / nang[rows], rows, len(y))


# -- lensing geometry ------------------------------------------------------------

@dataclass(frozen=True)
class LensingSpec(_TransformSpec):
    """Geodesic ray transform of the unit disc for the Gaussian lens wavespeed."""

    k: float = 0.3
    sigma: float = 0.25
    n_theta: int = 32
    n_omega: int = 32
    dt: float = 1e-3

    y_kinds = ("angle", "angle")

    def __post_init__(self):
        if self.k < 0 or self.sigma <= 0 or self.dt <= 0:
            raise ValueError("invalid LensingSpec")

    def y_grid(self) -> GridSpec:
        return RadonFanSpec(self.n_theta, self.n_omega).y_grid()

    def speed(self, x: np.ndarray):
        return lens_speed_and_grad(x, self.k, self.sigma)

    def build_matrix(self, grid: GridSpec) -> sp.csr_matrix:
        return geodesic_matrix(grid, self.y_points(), self.speed, self.dt)


def lens_speed_and_grad(x: np.ndarray, k: float, sigma: float):
    x = np.atleast_2d(x)
    g = np.exp(-np.sum(x ** 2, axis=1) / (2 * sigma ** 2))
    c = np.exp(-0.5 * k * g)
    grad = (c * 0.5 * k * g / sigma ** 2)[:, None] * x
    return c, grad


def lens_wavespeed(x, spec: LensingSpec, grad: bool = False):
    """c(x) = exp(-(k/2) exp(-|x|^2 / (2 sigma^2))); with ``grad`` also returns its gradient."""
    x = np.asarray(x, dtype=np.float64)
    c, g = lens_speed_and_grad(x.reshape(-1, x.shape[-1]), spec.k, spec.sigma)
    if x.ndim == 1:
        c, g = c[0], g[0]
    return (c, g) if grad else c


SpeedFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def _hamilton_rhs(speed: SpeedFn, x, xi):
    c, gc = speed(x)
    xi2 = np.sum(xi ** 2, axis=1)
    return (c ** 2)[:, None] * xi, -(xi2 * c)[:, None] * gc


@dataclass
class GeodesicPath:
    t: np.ndarray      # (n,) node times, last node is the exit
    x: np.ndarray      # (n, 2)
    xi: np.ndarray     # (n, 2)

    @property
    def exit_time(self) -> float:
        return float(self.t[-1])


def initial_state(theta, omega, speed: SpeedFn):
    theta, omega = np.atleast_1d(theta).astype(float), np.atleast_1d(omega).astype(float)
    x0 = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    d = -np.stack([np.cos(theta + omega), np.sin(theta + omega)], axis=1)
    c0, _ = speed(x0)
    return x0, d / c0[:, None]


def trace_geodesics(theta, omega, speed: SpeedFn, dt: float = 1e-3,
                    t_max: float = T_MAX, chunk: int = 512) -> list[GeodesicPath]:
    """RK4 integration of the Hamiltonian flow of H = c^2 |xi|^2 / 2 from boundary entries.

    A path stops at the first crossing of the unit circle; the exit event
    is placed with a cubic Hermite fit of |x|^2 over the last step.
    """
    x0, xi0 = initial_state(theta, omega, speed)
    paths: list[GeodesicPath] = []
    for s in range(0, len(x0), chunk):
        paths.extend(_trace_chunk(x0[s:s + chunk], xi0[s:s + chunk], speed, dt, t_max))
    return paths


def _trace_chunk(x, xi, speed, dt, t_max):
    n = len(x)
    xs, xis = [x.copy()], [xi.copy()]
    alive = np.ones(n, bool)
    last = np.full(n, -1)
    exit_frac = np.zeros(n)
    exit_x = np.zeros_like(x)
    exit_xi = np.zeros_like(xi)
    step = 0
    while alive.any():
        if (step + 1) * dt > t_max:
            raise TrappedRayError(f"{alive.sum()} geodesics still inside after t = {t_max}")
        a = alive
        xa, ka = x[a], xi[a]
        k1x, k1k = _hamilton_rhs(speed, xa, ka)
        k2x, k2k = _hamilton_rhs(speed, xa + 0.5 * dt * k1x, ka + 0.5 * dt * k1k)
        k3x, k3k = _hamilton_rhs(speed, xa + 0.5 * dt * k2x, ka + 0.5 * dt * k2k)
        k4x, k4k = _hamilton_rhs(speed, xa + dt * k3x, ka + dt * k3k)
        xn = xa + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        kn = ka + dt / 6 * (k1k + 2 * k2k + 2 * k3k + k4k)
        step += 1
        out = np.sum(xn ** 2, axis=1) >= 1.0
        if step == 1:
            out &= False  # the entry point itself sits on the circle
        idx = np.flatnonzero(a)
        if out.any():
            # Hermite cubic for r(s) = |x|^2 - 1 on s in [0, 1]
            o = idx[out]
            p0, p1 = xa[out], xn[out]
            v0, _ = _hamilton_rhs(speed, p0, ka[out])
            v1, _ = _hamilton_rhs(speed, p1, kn[out])
            r0 = np.sum(p0 ** 2, axis=1) - 1
            r1 = np.sum(p1 ** 2, axis=1) - 1
            d0 = 2 * np.sum(p0 * v0, axis=1) * dt
            d1 = 2 * np.sum(p1 * v1, axis=1) * dt
            frac = np.clip(-r0 / np.where(r1 - r0 > 0, r1 - r0, 1.0), 0, 1)
            for _ in range(30):
                h00 = 2 * frac ** 3 - 3 * frac ** 2 + 1
                h10 = frac ** 3 - 2 * frac ** 2 + frac
                h01 = -2 * frac ** 3 + 3 * frac ** 2
                h11 = frac ** 3 - frac ** 2
                val = h00 * r0 + h10 * d0 + h01 * r1 + h11 * d1
                der = ((6 * frac ** 2 - 6 * frac) * r0 + (3 * frac ** 2 - 4 * frac + 1) * d0
                       + (-6 * frac ** 2 + 6 * frac) * r1 + (3 * frac ** 2 - 2 * frac) * d1)
                frac = np.clip(frac - val / np.where(np.abs(der) > 1e-300, der, 1e-300), 0, 1)
            f = frac[:, None]
            h00 = 2 * f ** 3 - 3 * f ** 2 + 1
            h10 = f ** 3 - 2 * f ** 2 + f
            h01 = -2 * f ** 3 + 3 * f ** 2
            h11 = f ** 3 - f ** 2
            exit_x[o] = h00 * p0 + h10 * v0 * dt + h01 * p1 + h11 * v1 * dt
            exit_x[o] /= np.linalg.norm(exit_x[o], axis=1, keepdims=True)
            exit_xi[o] = (1 - f) * ka[out] + f * kn[out]
            exit_frac[o] = frac
            last[o] = step - 1
            alive[o] = False
        keep = idx[~out]
        x[keep] = xn[~out]
        xi[keep] = kn[~out]
        xs.append(x.copy())
        xis.append(xi.copy())
    xs = np.stack(xs)
    xis = np.stack(xis)
    paths = []
    for i in range(n):
        m = last[i] + 1
        t = np.append(np.arange(m) * dt, (last[i] + exit_frac[i]) * dt)
        paths.append(GeodesicPath(t, np.vstack([xs[:m, i], exit_x[i]]),
                                  np.vstack([xis[:m, i], exit_xi[i]])))
    return paths


def geodesic_trace(y, spec: LensingSpec) -> GeodesicPath:
    """Trace the geodesic entering at boundary angle ``y[0]`` with incidence ``y[1]``."""
    return trace_geodesics([y[0]], [y[1]], spec.speed, spec.dt)[0]


def hamiltonian(path: GeodesicPath, speed: SpeedFn) -> np.ndarray:
    c, _ = speed(path.x)
    return 0.5 * c ** 2 * np.sum(path.xi ** 2, axis=1)


def trapezoid_weights(t: np.ndarray) -> np.ndarray:
    dt = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def geodesic_matrix(grid: GridSpec, y: np.ndarray, speed: SpeedFn, dt: float) -> sp.csr_matrix:
    paths = trace_geodesics(y[:, 0], y[:, 1], speed, dt)
    pts = np.concatenate([p.x for p in paths])
    w = np.concatenate([trapezoid_weights(p.t) for p in paths])
    rows = np.concatenate([np.full(len(p.t), i) for i, p in enumerate(paths)])
    return interp_matrix(grid, pts, w, rows, len(paths))


# -- forward operators ---------------------------------------------------------------

def radon2d_forward(u: Field, spec: RadonFanSpec) -> Field:
    return spec.apply(u)


def ray3d_forward(u: Field, spec: Ray3DSpec) -> Field:
    return spec.apply(u)


def plane3d_forward(u: Field, spec: Plane3DSpec) -> Field:
    return spec.apply(u)


def spherical_mean_forward(u: Field, spec: SphericalMeanSpec) -> Field:
    return spec.apply(u)


def geodesic_ray_forward(u: Field, spec: LensingSpec) -> Field:
    return spec.apply(u)


TRANSFORMS = {
    "radon2d": RadonFanSpec,
    "ray3d": Ray3DSpec,
    "plane3d": Plane3DSpec,
    "spherical_mean": SphericalMeanSpec,
    "lensing": LensingSpec,
}


def make_transform(name: str, **params) -> _TransformSpec:
    try:
        cls = TRANSFORMS[name]
    except KeyError:
        raise ValueError(f"unknown transform {name!r}; valid names: "
                         f"{', '.join(sorted(TRANSFORMS))}") from None
    return cls(**params)
