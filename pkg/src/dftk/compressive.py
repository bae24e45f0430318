"""Gabor frames on sampling grids and compressive recovery of operator rows.

The lattice lives on the grid viewed as a discrete torus: atoms are
windowed complex exponentials translated by ``a`` samples and modulated by
multiples of ``1/M`` cycles per sample.  2-D systems are tensor products of
1-D ones, so analysis and synthesis are two small matrix products.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .domains import GridSpec


class FrameError(ValueError):
    pass


class AtomSupportWarning(UserWarning):
    pass


WINDOWS = ("raised_cosine", "sine")


def window_1d(length: int, kind: str = "raised_cosine") -> np.ndarray:
    """Samples of the base window at offsets -L/2 .. L/2 - 1."""
    j = np.arange(length) + 0.5
    s = np.sin(math.pi * j / length)
    if kind == "raised_cosine":
        return s ** 2
    if kind == "sine":
        return s
    raise ValueError(f"unknown window {kind!r}; valid: {', '.join(WINDOWS)}")


@dataclass(frozen=True)
class Axis1D:
    """One axis of a Gabor lattice: N samples, step a, M channels, window length L."""

    n: int
    a: int
    channels: int
    length: int
    kind: str = "raised_cosine"

    def __post_init__(self):
        if self.n % self.a or self.n % self.channels:
            raise FrameError(f"a = {self.a} and M = {self.channels} must divide N = {self.n}")
        if self.a >= self.channels:
            raise FrameError(f"a = {self.a} >= M = {self.channels}: lattice not oversampled")
        if not 1 <= self.length <= self.n:
            raise FrameError("window longer than the axis")

    @property
    def n_pos(self) -> int:
        return self.n // self.a

    @property
    def freqs(self) -> np.ndarray:
        """Channel indices, centred: -M/2 .. M/2 - 1."""
        return np.arange(self.channels) - self.channels // 2

    @cached_property
    def matrix(self) -> np.ndarray:
        """Atoms as rows, shape (n_pos * M, N), index = pos * M + channel."""
        g = window_1d(self.length, self.kind)
        offs = np.arange(self.length) - self.length // 2
        rows = np.zeros((self.n_pos, self.channels, self.n), complex)
        for p in range(self.n_pos):
            idx = (p * self.a + offs) % self.n
            for c, k in enumerate(self.freqs):
                rows[p, c, idx] = g * np.exp(2j * math.pi * k * offs / self.channels)
        return rows.reshape(-1, self.n)

    def frame_operator(self) -> np.ndarray:
        G = self.matrix
        return G.conj().T @ G


@dataclass(frozen=True)
class GaborLattice:
    grid: GridSpec
    axes: tuple[Axis1D, ...]
    bandlimit: float | None = None     # Omega: |xi| <= B in cycles per unit

    def __post_init__(self):
        if len(self.axes) != self.grid.dims or any(ax.n != n for ax, n in
                                                   zip(self.axes, self.grid.shape)):
            raise FrameError("lattice axes do not match the grid")
        if self.omega.sum() == 0:
            raise FrameError("bandlimit leaves no atoms")

    @property
    def shape(self) -> tuple[int, ...]:
        """(pos_1, chan_1, pos_2, chan_2, ...) layout of the coefficient array."""
        return tuple(v for ax in self.axes for v in (ax.n_pos, ax.channels))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def freq_step(self) -> np.ndarray:
        """b per axis in cycles per unit length."""
        return np.array([1.0 / (ax.channels * h) for ax, h in zip(self.axes, self.grid.spacing)])

    def positions(self) -> np.ndarray:
        """Atom centres x_hat for every coefficient, shape (size, dims)."""
        lo = np.array([e[0] for e in self.grid.extents])
        per_axis = [lo[i] + np.arange(ax.n_pos) * ax.a * self.grid.spacing[i]
                    for i, ax in enumerate(self.axes)]
        return _expand(per_axis, self.axes, "pos")

    def frequencies(self) -> np.ndarray:
        """xi_hat for every coefficient, shape (size, dims)."""
        per_axis = [ax.freqs * b for ax, b in zip(self.axes, self.freq_step)]
        return _expand(per_axis, self.axes, "freq")

    @cached_property
    def omega(self) -> np.ndarray:
        """Boolean mask over flattened coefficients: |xi_hat| <= B."""
        if self.bandlimit is None:
            return np.ones(self.size, bool)
        return np.linalg.norm(self.frequencies(), axis=1) <= self.bandlimit + 1e-12

    # analysis / synthesis on full coefficient arrays (flattened, C order)
    def analysis(self, f: np.ndarray) -> np.ndarray:
        """<f, g_w> for every lattice atom."""
        arr = np.asarray(f).reshape(self.grid.shape)
        for i, ax in enumerate(self.axes):
            arr = np.moveaxis(np.tensordot(ax.matrix.conj(), arr, axes=([1], [i])), 0, i)
        return arr.reshape(-1)

    def synthesis(self, coef: np.ndarray) -> np.ndarray:
        """sum_w coef_w g_w on the grid (complex)."""
        arr = np.asarray(coef, complex).reshape([ax.n_pos * ax.channels for ax in self.axes])
        for i, ax in enumerate(self.axes):
            arr = np.moveaxis(np.tensordot(ax.matrix, arr, axes=([0], [i])), 0, i)
        return arr.reshape(-1)

    def frame_apply(self, f: np.ndarray) -> np.ndarray:
        return self.synthesis(self.analysis(f))

    def frame_bounds(self) -> tuple[float, float]:
        lo, hi = 1.0, 1.0
        for ax in self.axes:
            ev = np.linalg.eigvalsh(ax.frame_operator())
            lo, hi = lo * ev[0], hi * ev[-1]
        return float(lo), float(hi)

    def omega_atoms(self) -> np.ndarray:
        """Dense (|Omega|, grid.size) complex matrix of the atoms in Omega."""
        eye = np.zeros(self.size, complex)
        out = np.empty((int(self.omega.sum()), self.grid.size), complex)
        for r, w in enumerate(np.flatnonzero(self.omega)):
            eye[w] = 1.0
            out[r] = self.synthesis(eye)
            eye[w] = 0.0
        return out


def _expand(per_axis, axes, which):
    grids = []
    d = len(axes)
    for i, ax in enumerate(axes):
        shape = [1] * (2 * d)
        k = 2 * i if which == "pos" else 2 * i + 1
        shape[k] = len(per_axis[i])
        full = [v for a in axes for v in (a.n_pos, a.channels)]
        grids.append(np.broadcast_to(per_axis[i].reshape(shape), full).reshape(-1))
    return np.stack(grids, axis=1)


def make_lattice(grid: GridSpec, a: int = 4, channels: int = 8, length: int | None = None,
                 kind: str = "raised_cosine", bandlimit: float | None = None) -> GaborLattice:
    length = channels if length is None else length
    if length > channels:
        warnings.warn("window longer than M: frame operator is no longer diagonal",
                      AtomSupportWarning)
    axes = tuple(Axis1D(n, a, channels, length, kind) for n in grid.shape)
    return GaborLattice(grid, axes, bandlimit)


def _flat_index(lattice: GaborLattice, pos, chan) -> int:
    idx = []
    for ax, p, c in zip(lattice.axes, np.atleast_1d(pos), np.atleast_1d(chan)):
        if not 0 <= p < ax.n_pos:
            raise ValueError(f"position index {p} outside [0, {ax.n_pos})")
        idx += [int(p), int(c + ax.channels // 2)]
        if not 0 <= idx[-1] < ax.channels:
            raise ValueError(f"channel {c} outside the lattice")
    return int(np.ravel_multi_index(idx, lattice.shape))


def gabor_atom(lattice: GaborLattice, pos, chan) -> np.ndarray:
    """Atom at lattice position index ``pos`` and channel ``chan`` (per axis), complex."""
    w = _flat_index(lattice, pos, chan)
    for ax, p in zip(lattice.axes, np.atleast_1d(pos)):
        start = p * ax.a - ax.length // 2
        if start < 0 or start + ax.length > ax.n:
            warnings.warn("atom support wraps around the grid edge", AtomSupportWarning)
    e = np.zeros(lattice.size, complex)
    e[w] = 1.0
    return lattice.synthesis(e)


@dataclass(frozen=True)
class DualFrame:
    lattice: GaborLattice
    window: np.ndarray          # gamma = S^{-1} g_0 on the grid
    iterations: int

    def analysis(self, f: np.ndarray) -> np.ndarray:
        """<f, gamma_w>: dual atoms are lattice shifts of gamma, so apply S^{-1} then analyse."""
        return self.lattice.analysis(_solve_frame(self.lattice, np.asarray(f, complex))[0])


def _solve_frame(lattice: GaborLattice, rhs: np.ndarray, tol: float = 1e-13):
    n = lattice.grid.size
    op = LinearOperator((n, n), matvec=lambda v: lattice.frame_apply(v), dtype=complex)
    count = [0]

    def cb(_):
        count[0] += 1
    sol, info = cg(op, rhs, rtol=tol, atol=0.0, maxiter=10 * n, callback=cb)
    if info != 0:
        raise FrameError(f"conjugate gradient did not converge (info = {info})")
    return sol, count[0]


def dual_window(lattice: GaborLattice, cond_max: float = 1e10) -> DualFrame:
    """Canonical dual window by CG on the frame operator S gamma = g."""
    lo, hi = lattice.frame_bounds()
    if lo <= 0 or hi / lo > cond_max:
        raise FrameError(f"frame operator numerically singular (bounds {lo:.3g}, {hi:.3g})")
    gamma, its = _solve_frame(lattice, _base_atom(lattice))
    return DualFrame(lattice, gamma, its)


def _base_atom(lattice: GaborLattice) -> np.ndarray:
    e = np.zeros(lattice.size, complex)
    idx = []
    for ax in lattice.axes:
        idx += [0, ax.channels // 2]
    e[np.ravel_multi_index(idx, lattice.shape)] = 1.0
    return lattice.synthesis(e)


def reconstruct(dual: DualFrame, f: np.ndarray) -> np.ndarray:
    """sum_w <f, gamma_w> g_w."""
    return dual.lattice.synthesis(dual.analysis(f))


# -- probing ------------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeSet:
    A: np.ndarray                 # (J, |Omega|) real normal
    c: np.ndarray                 # (n_atoms, J) complex measurements
    y_atoms: tuple
    seed: int

    @property
    def J(self) -> int:
        return self.A.shape[0]


def probe_coefficients(lattice: GaborLattice, J: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6ab0]))
    return rng.standard_normal((J, int(lattice.omega.sum())))


def probe_fields(lattice: GaborLattice, A: np.ndarray, atoms: np.ndarray | None = None) -> np.ndarray:
    """u_j = sum_w a_jw g_w on the grid, shape (J, grid.size), complex."""
    atoms = lattice.omega_atoms() if atoms is None else atoms
    return A @ atoms


def apply_real(R, U: np.ndarray) -> np.ndarray:
    """Apply a real linear operator (sparse/dense matrix or callable) to complex rows."""
    U = np.atleast_2d(U)
    f = (lambda V: V @ R.T) if not callable(R) else (lambda V: np.stack([R(v) for v in V]))
    return f(U.real) + 1j * f(U.imag)


def y_atom_vectors(y_lattice: GaborLattice, y_atoms) -> np.ndarray:
    """Rows h_{y_hat, eta_hat} on the Y grid for a list of (pos, chan) pairs."""
    return np.stack([gabor_atom(y_lattice, p, k) for p, k in y_atoms])


def probe_and_measure(R, lattice: GaborLattice, J: int, y_lattice: GaborLattice, y_atoms,
                      seed: int = 0, atoms: np.ndarray | None = None) -> ProbeSet:
    """Random Gabor-synthesized probes, pushed through R and tested against Y atoms."""
    A = probe_coefficients(lattice, J, seed)
    RU = apply_real(R, probe_fields(lattice, A, atoms))      # (J, nY)
    H = y_atom_vectors(y_lattice, y_atoms)                   # (n_atoms, nY)
    return ProbeSet(A, H.conj() @ RU.T, tuple(y_atoms), seed)


def direct_rows(R, lattice: GaborLattice, y_lattice: GaborLattice, y_atoms,
                atoms: np.ndarray | None = None) -> np.ndarray:
    """v_w = <h, R g_w> for w in Omega, per Y atom: shape (n_atoms, |Omega|)."""
    atoms = lattice.omega_atoms() if atoms is None else atoms
    H = y_atom_vectors(y_lattice, y_atoms)
    return H.conj() @ apply_real(R, atoms).T


# -- l1 recovery ----------------------------------------------------------------------------

def soft_threshold(v: np.ndarray, t) -> np.ndarray:
    """Complex (or real) soft-thresholding: shrink magnitudes by ``t``."""
    mag = np.abs(v)
    return v * (np.maximum(mag - t, 0.0) / np.where(mag > 0, mag, 1.0))


def operator_norm_sq(A: np.ndarray, iters: int = 200, seed: int = 0) -> float:
    """||A||_2^2 by power iteration on A^T A."""
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        new = float(np.linalg.norm(w))
        if new == 0:
            return 0.0
        v = w / new
        done = abs(new - lam) <= 1e-12 * new
        lam = new
        if done:
            break
    return lam


@dataclass(frozen=True)
class L1Result:
    v: np.ndarray               # (n,) or (n, k) for a batch of right-hand sides
    objective: np.ndarray       # per iteration of the final stage, (iters,) or (iters, k)
    iterations: int
    restarts: int
    mu: np.ndarray


def _mul(A: np.ndarray, X: np.ndarray) -> np.ndarray:
    """A @ X for real A and real or complex X; complex X goes through a real view."""
    if not np.iscomplexobj(X):
        return A @ X
    X = np.ascontiguousarray(X)
    return (A @ X.view(np.float64)).view(np.complex128)


def _objectives(R: np.ndarray, V: np.ndarray, mu: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(np.abs(R) ** 2, axis=0) + mu * np.sum(np.abs(V), axis=0)


def l1_recover(A: np.ndarray, c: np.ndarray, mu, iterations: int = 5000,
               continuation: int = 6, tol: float = 1e-10) -> L1Result:
    """min 0.5 ||A v - c||^2 + mu ||v||_1 by FISTA with restarts and continuation in mu.

    ``c`` may be a vector or a (J, k) matrix of independent right-hand sides,
    each with its own ``mu``.  A momentum step whose objective exceeds the
    previous iterate's is replaced by a plain proximal step (and momentum
    reset), so the objective never increases within a stage.
    """
    A = np.asarray(A, float)
    c = np.asarray(c)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(c))):
        raise ValueError("non-finite entries in A or c")
    At = np.ascontiguousarray(A.T)
    single = c.ndim == 1
    C = c[:, None] if single else c
    k = C.shape[1]
    mu = np.broadcast_to(np.asarray(mu, float), (k,)).copy()
    L = operator_norm_sq(A)
    if L == 0:
        raise ValueError("A is zero")
    L *= 1.01                              # margin on the power-iteration estimate
    dtype = complex if np.iscomplexobj(C) else float
    V = np.zeros((A.shape[1], k), dtype)
    mu_max = np.abs(_mul(At, C)).max(axis=0)
    start = np.maximum(mu_max / 2, mu)
    n_stage = max(continuation, 1)
    total = restarts = 0
    hist = []
    for s_i in range(n_stage):
        frac = s_i / (n_stage - 1) if n_stage > 1 else 1.0
        mu_s = start * (mu / np.where(start > 0, start, 1.0)) ** frac
        AV = _mul(A, V)
        f_prev = _objectives(AV - C, V, mu_s)
        Y, AY = V.copy(), AV.copy()
        t = np.ones(k)
        active = np.ones(k, bool)
        hist = [f_prev.copy()]
        for _ in range(iterations):
            G = _mul(At, AY - C)
            V_new = soft_threshold(Y - G / L, mu_s / L)
            AV_new = _mul(A, V_new)
            f_new = _objectives(AV_new - C, V_new, mu_s)
            bad = (f_new > f_prev) & active
            if bad.any():
                restarts += int(bad.sum())
                t[bad] = 1.0
                Gb = _mul(At, AV[:, bad] - C[:, bad])
                V_new[:, bad] = soft_threshold(V[:, bad] - Gb / L, mu_s[bad] / L)
                AV_new[:, bad] = _mul(A, V_new[:, bad])
                f_new[bad] = _objectives(AV_new[:, bad] - C[:, bad], V_new[:, bad], mu_s[bad])
            # converged columns stay frozen
            V_new[:, ~active], AV_new[:, ~active], f_new[~active] = \
                V[:, ~active], AV[:, ~active], f_prev[~active]
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
            beta = np.where(active, (t - 1) / t_new, 0.0)
            Y = V_new + beta * (V_new - V)
            AY = AV_new + beta * (AV_new - AV)
            change = np.abs(f_prev - f_new) <= tol * np.maximum(np.abs(f_prev), 1e-300)
            V, AV, t = V_new, AV_new, t_new
            f_prev = f_new
            hist.append(f_new.copy())
            total += 1
            active &= ~change
            if not active.any():
                break
    obj = np.array(hist)
    if single:
        return L1Result(V[:, 0], obj[:, 0], total, restarts, mu)
    return L1Result(V, obj, total, restarts, mu)


# -- decay and sampling curves ---------------------------------------------------------------

@dataclass(frozen=True)
class DecayProfile:
    magnitudes: np.ndarray      # descending
    exponent: float             # r_hat with |v|_(k) ~ k^{-r}


def decay_profile(v: np.ndarray) -> DecayProfile:
    mag = np.sort(np.abs(np.ravel(v)))[::-1]
    if mag.size < 16:
        raise ValueError(f"need at least 16 coefficients, got {mag.size}")
    k = np.arange(1, mag.size + 1)
    sel = (k >= 4) & (k <= mag.size // 4) & (mag > 0)
    if sel.sum() < 2:
        raise ValueError("too few nonzero coefficients in the fit range")
    slope = np.polyfit(np.log(k[sel]), np.log(mag[sel]), 1)[0]
    return DecayProfile(mag, float(-slope))


def relative_error(est: np.ndarray, ref: np.ndarray) -> float:
    return float(np.linalg.norm(est - ref) / np.linalg.norm(ref))


def default_y_atoms(y_lattice: GaborLattice) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """16 (position, channel) pairs: 4 interior positions times 4 low/mid channels."""
    px = [ax.n_pos // 4 for ax in y_lattice.axes]
    qx = [3 * ax.n_pos // 4 for ax in y_lattice.axes]
    positions = [(px[0], px[1]), (px[0], qx[1]), (qx[0], px[1]), (qx[0], qx[1])]
    channels = [(0, 1), (1, 0), (1, 1), (2, 1)]             # centred frequency indices
    return [(p, k) for p in positions for k in channels]


@dataclass(frozen=True)
class SamplingRow:
    J: int
    seed: int
    y_atom_id: int
    l2_error: float


def sampling_curve(R, lattice: GaborLattice, y_lattice: GaborLattice, y_atoms, J_list,
                   seeds=(0,), mu_rel: float = 1e-3, iterations: int = 3000) -> list[SamplingRow]:
    """Relative l2 error of l1-recovered rows against directly computed ones.

    ``mu`` for each Y atom is ``mu_rel`` times the smallest value that
    makes v = 0 optimal.
    """
    atoms = lattice.omega_atoms()
    truth = direct_rows(R, lattice, y_lattice, y_atoms, atoms)
    rows = []
    for J in J_list:
        for seed in seeds:
            probes = probe_and_measure(R, lattice, J, y_lattice, y_atoms, seed, atoms)
            C = probes.c.T                                      # (J, n_atoms)
            mu = mu_rel * np.abs(probes.A.T @ C).max(axis=0)
            est = l1_recover(probes.A, C, mu, iterations).v
            for i in range(C.shape[1]):
                rows.append(SamplingRow(int(J), int(seed), i, relative_error(est[:, i], truth[i])))
    return rows


def worst_atom_errors(rows: list[SamplingRow]) -> dict[int, float]:
    """Mean over seeds of the worst-atom error, per J."""
    out: dict[int, list[float]] = {}
    by_js: dict[tuple[int, int], float] = {}
    for r in rows:
        key = (r.J, r.seed)
        by_js[key] = max(by_js.get(key, 0.0), r.l2_error)
    for (J, _), e in by_js.items():
        out.setdefault(J, []).append(e)
    return {J: float(np.mean(v)) for J, v in sorted(out.items())}


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


__all__ = [
    "GaborLattice", "Axis1D", "DualFrame", "ProbeSet", "L1Result", "DecayProfile", "SamplingRow",
    "FrameError", "AtomSupportWarning", "window_1d", "make_lattice", "gabor_atom", "dual_window",
    "reconstruct", "probe_coefficients", "probe_fields", "probe_and_measure", "direct_rows",
    "y_atom_vectors", "apply_real", "soft_threshold", "operator_norm_sq", "l1_recover",
    "decay_profile", "relative_error", "default_y_atoms", "sampling_curve", "worst_atom_errors",
    "loglog_slope",
]
