"""Random input functions: Matérn fields, Gaussian blobs, bandlimited probes."""
from __future__ import annotations

import math
import warnings

import numpy as np

from .domains import Field, GridSpec

DEFAULT_NU = 1.5
DEFAULT_LENGTHSCALE = 0.2
DEFAULT_BLOBS = 3


class CoarseGridWarning(UserWarning):
    pass


def _angular_freqs(grid: GridSpec) -> np.ndarray:
    """|2 pi k|^2 on the FFT lattice of the grid, shape = grid.shape."""
    ks = [2 * math.pi * np.fft.fftfreq(n, d=h) for n, h in zip(grid.shape, grid.spacing)]
    mesh = np.meshgrid(*ks, indexing="ij")
    return sum(k ** 2 for k in mesh)


def matern_filter(grid: GridSpec, nu: float, lengthscale: float) -> np.ndarray:
    kappa = math.sqrt(2 * nu) / lengthscale
    return (kappa ** 2 + _angular_freqs(grid)) ** (-(nu + grid.dims / 2) / 2)


def matern_correlation(r, nu: float, lengthscale: float):
    """Closed-form Matérn correlation for nu in {0.5, 1.5, 2.5}, else via scipy."""
    s = math.sqrt(2 * nu) * np.asarray(r, float) / lengthscale
    if nu == 0.5:
        return np.exp(-s)
    if nu == 1.5:
        return (1 + s) * np.exp(-s)
    if nu == 2.5:
        return (1 + s + s ** 2 / 3) * np.exp(-s)
    from scipy.special import gamma, kv
    s = np.where(s == 0, 1e-300, s)
    return 2 ** (1 - nu) / gamma(nu) * s ** nu * kv(nu, s)


def matern_sample(grid: GridSpec, nu: float = DEFAULT_NU, lengthscale: float = DEFAULT_LENGTHSCALE,
                  rng: np.random.Generator | None = None, radius: float | None = 1.0,
                  count: int | None = None):
    """Stationary Gaussian field by spectral filtering of white noise.

    Each sample is normalized to mean 0 and standard deviation 1 over the
    nodes inside the domain mask, and zeroed outside it.  With ``count``
    returns a ``(count, grid.size)`` array instead of a single Field.
    """
    if nu <= 0 or lengthscale <= 0:
        raise ValueError("nu and lengthscale must be positive")
    rng = np.random.default_rng() if rng is None else rng
    if lengthscale < 2 * grid.spacing.max():
        warnings.warn(f"lengthscale {lengthscale} under two cells", CoarseGridWarning)
    filt = matern_filter(grid, nu, lengthscale)
    n = 1 if count is None else count
    noise = rng.standard_normal((n, *grid.shape))
    axes = tuple(range(1, grid.dims + 1))
    vals = np.fft.ifftn(np.fft.fftn(noise, axes=axes) * filt, axes=axes).real.reshape(n, -1)
    mask = grid.ball_mask(radius) if radius is not None else np.ones(grid.size, bool)
    inside = vals[:, mask]
    inside = (inside - inside.mean(axis=1, keepdims=True)) / inside.std(axis=1, keepdims=True)
    out = np.zeros_like(vals)
    out[:, mask] = inside
    if count is None:
        return Field(grid, out[0], mask if radius is not None else None)
    return out


def gaussian_blobs(grid: GridSpec, count: int = DEFAULT_BLOBS, rng: np.random.Generator | None = None,
                   radius: float | None = 1.0, center_radius: float = 0.8,
                   width_range=(0.05, 0.2), amp_range=(-1.0, 1.0), n_fields: int | None = None):
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    nodes = grid.nodes()
    mask = grid.ball_mask(radius) if radius is not None else np.ones(grid.size, bool)
    n = 1 if n_fields is None else n_fields
    out = np.zeros((n, grid.size))
    for j in range(n):
        # uniform in the ball by rejection
        centers = np.empty((count, grid.dims))
        filled = 0
        while filled < count:
            c = rng.uniform(-center_radius, center_radius, grid.dims)
            if np.sum(c ** 2) <= center_radius ** 2:
                centers[filled] = c
                filled += 1
        widths = rng.uniform(*width_range, count)
        amps = rng.uniform(*amp_range, count)
        out[j] = blob_sum(nodes, centers, widths, amps)
    out[:, ~mask] = 0.0
    if n_fields is None:
        return Field(grid, out[0], mask if radius is not None else None)
    return out


def blob_sum(points: np.ndarray, centers, widths, amps) -> np.ndarray:
    centers = np.atleast_2d(centers)
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    return np.exp(-d2 / (2 * np.asarray(widths) ** 2)) @ np.asarray(amps, float)


def bandlimited_modes(grid: GridSpec, bandlimit: float) -> np.ndarray:
    """Boolean mask of FFT modes with |xi| <= bandlimit (cycles per unit)."""
    nyquist = 1 / (2 * grid.spacing.max())
    if bandlimit > nyquist:
        raise ValueError(f"bandlimit {bandlimit} exceeds grid Nyquist {nyquist:.4g}")
    ks = [np.fft.fftfreq(n, d=h) for n, h in zip(grid.shape, grid.spacing)]
    mesh = np.meshgrid(*ks, indexing="ij")
    return np.sqrt(sum(k ** 2 for k in mesh)) <= bandlimit


def random_bandlimited(grid: GridSpec, bandlimit: float, rng: np.random.Generator | None = None) -> Field:
    """Real part of sum_k c_k e^{2 pi i k x} over |k| <= B, c_k complex standard normal.

    The pointwise variance is exactly half the number of active modes.
    """
    rng = np.random.default_rng() if rng is None else rng
    modes = bandlimited_modes(grid, bandlimit)
    coef = np.zeros(grid.shape, complex)
    nz = int(modes.sum())
    coef[modes] = (rng.standard_normal(nz) + 1j * rng.standard_normal(nz)) / math.sqrt(2)
    vals = np.fft.ifftn(coef).real * grid.size
    return Field(grid, vals)
