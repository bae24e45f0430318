"""Sampling grids, sampled fields, interpolation and tensor files.

Everything downstream works on uniform rectangular grids.  A function on
the unit disc or ball is stored on its bounding box; nodes outside the
domain hold 0 and are flagged ``False`` in the field mask.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dc_field
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

MAGIC = "DFTK"
VERSION = 1


class GridError(ValueError):
    pass


class TensorFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    extents: tuple[tuple[float, float], ...]
    resolution: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= len(self.resolution) <= 4:
            raise GridError("grids support 1 to 4 dimensions")
        if len(self.extents) != len(self.resolution):
            raise GridError(
                f"{len(self.extents)} extents for {len(self.resolution)} axes")
        for (lo, hi), n in zip(self.extents, self.resolution):
            if n < 2:
                raise GridError(f"axis count {n} < 2")
            if not hi > lo:
                raise GridError(f"degenerate interval [{lo}, {hi}]")

    @property
    def dims(self) -> int:
        return len(self.resolution)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / (n - 1)
                         for (lo, hi), n in zip(self.extents, self.resolution)])

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.resolution)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n)
                for (lo, hi), n in zip(self.extents, self.resolution)]

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(size, dims)``, row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def ball_mask(self, radius: float = 1.0) -> np.ndarray:
        """Nodes strictly inside the centered ball of ``radius``."""
        return np.sum(self.nodes() ** 2, axis=1) < radius ** 2


def make_grid(extents: Sequence[Sequence[float]], resolution: Sequence[int]) -> GridSpec:
    extents = tuple((float(lo), float(hi)) for lo, hi in extents)
    resolution = tuple(int(n) for n in resolution)
    if len(extents) != len(resolution):
        raise GridError(
            f"dimension mismatch: {len(extents)} extents, {len(resolution)} counts")
    return GridSpec(extents, resolution)


def unit_box(dims: int, n: int) -> GridSpec:
    """The ``[-1, 1]^dims`` bounding box of the unit disc/ball."""
    return make_grid([(-1.0, 1.0)] * dims, [n] * dims)


@dataclass(frozen=True)
class Field:
    grid: GridSpec
    values: np.ndarray
    mask: np.ndarray | None = dc_field(default=None, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).ravel()
        if vals.size != self.grid.size:
            raise GridError(f"{vals.size} values for a grid of {self.grid.size} nodes")
        if not np.all(np.isfinite(vals)):
            raise GridError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool).ravel()
            m.setflags(write=False)
            object.__setattr__(self, "mask", m)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


def masked_field(grid: GridSpec, values: np.ndarray, radius: float | None = 1.0) -> Field:
    """Field with nodes outside the centered ball zeroed and flagged."""
    if radius is None:
        return Field(grid, values)
    mask = grid.ball_mask(radius)
    return Field(grid, np.where(mask, np.ravel(values), 0.0), mask)


# -- interpolation -----------------------------------------------------------

def interp_weights(grid: GridSpec, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Corner indices and multilinear weights for a batch of points.

    Points outside the grid are clamped to the boundary.  Returns arrays of
    shape ``(P, 2**dims)``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != grid.dims:
        raise GridError(f"points have {points.shape[1]} coords, grid has {grid.dims}")
    if not np.all(np.isfinite(points)):
        raise GridError("non-finite query point")
    lo = np.array([e[0] for e in grid.extents])
    res = np.array(grid.resolution)
    t = (points - lo) / grid.spacing
    t = np.clip(t, 0.0, res - 1)
    base = np.minimum(np.floor(t).astype(np.int64), res - 2)
    frac = t - base
    strides = np.array([int(np.prod(res[k + 1:])) for k in range(grid.dims)])

    corners = np.array(list(product((0, 1), repeat=grid.dims)))  # (C, d)
    idx = (base[:, None, :] + corners[None, :, :]) @ strides
    w = np.prod(np.where(corners[None, :, :] == 1, frac[:, None, :],
                         1.0 - frac[:, None, :]), axis=2)
    return idx, w


def interp_matrix(grid: GridSpec, points: np.ndarray,
                  row_weights: np.ndarray | None = None,
                  rows: np.ndarray | None = None, n_rows: int | None = None) -> sp.csr_matrix:
    """Sparse matrix mapping grid values to (optionally weighted, summed) point values.

    With ``rows`` given, point ``p`` contributes ``row_weights[p]`` times its
    interpolant to output row ``rows[p]``; this is how quadrature rules
    along fibers are assembled.
    """
    idx, w = interp_weights(grid, points)
    npts = idx.shape[0]
    if row_weights is not None:
        w = w * np.asarray(row_weights)[:, None]
    if rows is None:
        rows = np.arange(npts)
        n_rows = npts
    r = np.repeat(np.asarray(rows), idx.shape[1])
    mat = sp.coo_matrix((w.ravel(), (r, idx.ravel())), shape=(n_rows, grid.size))
    return mat.tocsr()


def interp_multilinear(field: Field, point: Sequence[float]) -> float:
    idx, w = interp_weights(field.grid, np.asarray(point, dtype=np.float64)[None, :])
    return float(np.dot(field.values[idx[0]], w[0]))


# -- 1-D optimal transport ------------------------------------------------------

def wasserstein1_1d(support_a, weights_a, support_b, weights_b) -> float:
    """Exact W1 between two discrete measures on the line: the integral of |F_a - F_b|."""
    xa, wa = np.asarray(support_a, float), np.asarray(weights_a, float)
    xb, wb = np.asarray(support_b, float), np.asarray(weights_b, float)
    for x, w, name in ((xa, wa, "a"), (xb, wb, "b")):
        if x.shape != w.shape:
            raise ValueError(f"support/weights shape mismatch for measure {name}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights of measure {name} are not a probability vector")
        if np.any(np.diff(x) < 0):
            raise ValueError(f"support of measure {name} is not sorted")
    pts = np.union1d(xa, xb)
    fa = np.cumsum(np.bincount(np.searchsorted(pts, xa), weights=wa, minlength=pts.size))
    fb = np.cumsum(np.bincount(np.searchsorted(pts, xb), weights=wb, minlength=pts.size))
    return float(np.sum(np.abs(fa - fb)[:-1] * np.diff(pts)))


# -- tensor files ------------------------------------------------------------------

def _base(path) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".f64", ".json") else p


def write_array(array: np.ndarray, path, extents=None) -> Path:
    base = _base(path)
    arr = np.ascontiguousarray(array, dtype="<f8")
    header = {"magic": MAGIC, "version": VERSION, "shape": list(arr.shape),
              "extents": [list(e) for e in extents] if extents is not None else [],
              "order": "row-major"}
    base.parent.mkdir(parents=True, exist_ok=True)
    with open(base.with_suffix(".f64"), "wb") as fh:
        fh.write(arr.tobytes(order="C"))
    with open(base.with_suffix(".json"), "w", newline="\n") as fh:
        json.dump(header, fh)
        fh.write("\n")
    return base


def read_array(path) -> tuple[np.ndarray, dict]:
    base = _base(path)
    try:
        header = json.loads(base.with_suffix(".json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise TensorFormatError(f"unreadable sidecar for {base}: {exc}") from exc
    if header.get("magic") != MAGIC:
        raise TensorFormatError(f"bad magic {header.get('magic')!r}")
    if header.get("version") != VERSION:
        raise TensorFormatError(f"unsupported version {header.get('version')!r}")
    if header.get("order") != "row-major":
        raise TensorFormatError("only row-major order is supported")
    shape = tuple(int(s) for s in header["shape"])
    raw = base.with_suffix(".f64").read_bytes()
    expected = 8 * int(np.prod(shape))
    if len(raw) != expected:
        raise TensorFormatError(f"payload has {len(raw)} bytes, header implies {expected}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64), header


def tensor_write(field: Field, path) -> Path:
    return write_array(field.as_array(), path, field.grid.extents)


def tensor_read(path) -> Field:
    arr, header = read_array(path)
    extents = header["extents"]
    if len(extents) != arr.ndim:
        raise TensorFormatError("extents do not match tensor rank")
    return Field(make_grid(extents, arr.shape), arr)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Comma-separated, header row, LF endings, shortest round-trip floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for ``(seed, *keys)``; same inputs give the same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, keys)]))


__all__ = [
    "GridSpec", "Field", "GridError", "TensorFormatError", "make_grid", "unit_box",
    "masked_field", "interp_weights", "interp_matrix", "interp_multilinear",
    "wasserstein1_1d", "write_array", "read_array", "tensor_write", "tensor_read",
    "write_csv", "derive_rng",
]
