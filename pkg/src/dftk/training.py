"""Datasets of input/output pairs and the multi-start training protocol."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .diffnet import AdamState, NonFiniteGradientError, adam_step
from .domains import GridSpec, derive_rng, write_csv
from .fields import DEFAULT_LENGTHSCALE, DEFAULT_NU, gaussian_blobs, matern_sample
from .kernels import (LevelsetModel, default_lambda, embed_y, init_levelset_model,
                      kernel_matrix, loss_and_grad)
from .transforms import TRANSFORMS, _TransformSpec, make_transform

log = logging.getLogger(__name__)

VAL_FRACTION = 0.2
LOG_COLUMNS = ("step", "run_id", "phase", "train_mse", "val_mse")


class SplitError(ValueError):
    pass


class TrainingFailureError(RuntimeError):
    pass


# -- datasets -------------------------------------------------------------------------

Sampler = Callable[[GridSpec, np.random.Generator, int], np.ndarray]


def matern_sampler(nu: float = DEFAULT_NU, lengthscale: float = DEFAULT_LENGTHSCALE,
                   radius: float | None = 1.0) -> Sampler:
    def draw(grid, rng, count):
        return matern_sample(grid, nu, lengthscale, rng, radius=radius, count=count)
    return draw


def blob_sampler(count: int = 3, radius: float | None = 1.0, **kw) -> Sampler:
    def draw(grid, rng, n):
        return gaussian_blobs(grid, count, rng, radius=radius, n_fields=n, **kw)
    return draw


SAMPLERS = {"matern": matern_sampler, "blobs": blob_sampler}


def make_sampler(name: str, **params) -> Sampler:
    if name not in SAMPLERS:
        raise ValueError(f"unknown sampler {name!r}; valid names: {', '.join(sorted(SAMPLERS))}")
    return SAMPLERS[name](**params)


@dataclass(frozen=True)
class Dataset:
    grid: GridSpec
    mask: np.ndarray                # X0: grid nodes the model integrates over
    y_points: np.ndarray
    y_kinds: tuple[str, ...]
    inputs: np.ndarray              # (J, grid.size)
    targets: np.ndarray             # (J, nY)
    noise_std: float
    transform: str
    train_idx: np.ndarray
    val_idx: np.ndarray

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets differ in count")
        both = np.concatenate([self.train_idx, self.val_idx])
        if np.intersect1d(self.train_idx, self.val_idx).size or \
                not np.array_equal(np.sort(both), np.arange(len(self.inputs))):
            raise SplitError("split is not a partition of the samples")

    @property
    def size(self) -> int:
        return len(self.inputs)

    @property
    def x_points(self) -> np.ndarray:
        return self.grid.nodes()[self.mask]

    def masked_inputs(self, idx=None) -> np.ndarray:
        u = self.inputs if idx is None else self.inputs[idx]
        return u[:, self.mask]


def split_indices(J: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if J < 5:
        raise SplitError(f"J = {J} leaves an empty validation split (need J >= 5)")
    n_val = max(1, int(round(VAL_FRACTION * J)))
    perm = rng.permutation(J)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _transform_name(spec: _TransformSpec) -> str:
    for name, cls in TRANSFORMS.items():
        if type(spec) is cls:
            return name
    return type(spec).__name__


def make_dataset(transform: _TransformSpec | str, sampler: Sampler | str = "matern", J: int = 32,
                 noise_std: float = 0.0, seed: int = 0, grid: GridSpec | None = None,
                 n: int = 32) -> Dataset:
    """Draw J inputs, apply the reference transform, add optional target noise.

    Streams are derived from ``seed`` separately for fields, noise and the
    split, so changing ``noise_std`` does not change the inputs.
    """
    spec = make_transform(transform) if isinstance(transform, str) else transform
    draw = make_sampler(sampler) if isinstance(sampler, str) else sampler
    if J < 5:
        raise SplitError(f"J = {J} leaves an empty validation split (need J >= 5)")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    grid = spec.default_x_grid(n) if grid is None else grid
    inputs = np.asarray(draw(grid, derive_rng(seed, 0), J), dtype=np.float64)
    targets = inputs @ spec.matrix(grid).T
    if noise_std > 0:
        targets = targets + noise_std * derive_rng(seed, 1).standard_normal(targets.shape)
    train_idx, val_idx = split_indices(J, derive_rng(seed, 2))
    mask = grid.ball_mask(spec.x_radius) if spec.x_radius is not None else np.ones(grid.size, bool)
    return Dataset(grid, mask, spec.y_points(), tuple(spec.y_kinds), inputs, targets,
                   float(noise_std), _transform_name(spec), train_idx, val_idx)


def fresh_pairs(dataset: Dataset, transform: _TransformSpec | str, sampler: Sampler | str,
               count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Fresh (inputs, targets) on the dataset's grid, noiseless."""
    spec = make_transform(transform) if isinstance(transform, str) else transform
    draw = make_sampler(sampler) if isinstance(sampler, str) else sampler
    inputs = np.asarray(draw(dataset.grid, derive_rng(seed, 3), count), dtype=np.float64)
    return inputs, inputs @ spec.matrix(dataset.grid).T


# -- loss ---------------------------------------------------------------------------------

def mse_loss(model, U: np.ndarray, T: np.ndarray, y_points: np.ndarray,
             embedded: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """(1/K) sum_k ||T_k - (L U_k)||^2 and its parameter gradient.

    Besides LevelsetModel, any object exposing ``pullback(U, y) -> (pred,
    vjp)`` works, where ``vjp`` maps a prediction adjoint to a parameter
    gradient.
    """
    U, T = np.atleast_2d(U), np.atleast_2d(T)
    if len(U) == 0:
        raise ValueError("empty batch")
    if isinstance(model, LevelsetModel):
        return loss_and_grad(model, U, T, y_points, embedded)
    pred, vjp = model.pullback(U, y_points)
    resid = pred - T
    K = len(U)
    return float(np.sum(resid ** 2) / K), vjp(2.0 * resid / K)


def batch_mse(model: LevelsetModel, U: np.ndarray, T: np.ndarray, y_points: np.ndarray) -> float:
    if len(U) == 0:
        return math.nan
    pred = U @ kernel_matrix(model, y_points, model.x_points).T
    return float(np.sum((pred - T) ** 2) / len(U))


# -- protocol ------------------------------------------------------------------------------

@dataclass
class TrainConfig:
    batch_size: int = 32
    n_inits: int = 5
    phase1_steps: int = 10000
    phase2_steps: int = 40000
    val_every: int = 250
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    # model
    m: int = 2
    d: int = 64
    hidden: tuple[int, ...] = (64, 64, 64)
    omega0: float = 30.0
    bias_mode: str = "mean"
    kernel: str = "levelset"
    lam: float | None = None            # None: default from the X spacing
    width_cells: float = 1.5

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if min(self.phase1_steps, self.phase2_steps) < 0 or self.n_inits < 1:
            raise ValueError("step counts must be >= 0 and n_inits >= 1")
        if self.val_every < 1:
            raise ValueError("val_every must be >= 1")
        self.hidden = tuple(int(h) for h in self.hidden)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hidden"] = list(self.hidden)
        return out


def default_config(transform: str, **overrides) -> TrainConfig:
    """Protocol defaults per transform: lensing runs use K = 256 and twice the steps."""
    base = TrainConfig()
    if transform == "lensing":
        base = TrainConfig(batch_size=256, phase1_steps=2 * base.phase1_steps,
                           phase2_steps=2 * base.phase2_steps)
    return TrainConfig(**{**base.to_dict(), **overrides})


@dataclass
class TrainResult:
    model: LevelsetModel
    best_val: float
    best_step: int
    selected_run: int
    log: list[tuple] = field(default_factory=list)
    disqualified: list[int] = field(default_factory=list)

    def write_log(self, path) -> None:
        write_csv(path, LOG_COLUMNS, self.log)


@dataclass
class _Run:
    run_id: int
    vec: np.ndarray
    state: AdamState
    rng: np.random.Generator
    step: int = 0
    best_val: float = math.inf
    best_vec: np.ndarray | None = None
    best_step: int = -1
    diverged: bool = False


def _lambda_for(dataset: Dataset, config: TrainConfig) -> float:
    if config.lam is not None:
        return float(config.lam)
    return default_lambda(float(dataset.grid.spacing.min()), config.width_cells)


def _advance(run: _Run, template: LevelsetModel, dataset: Dataset, config: TrainConfig,
             steps: int, phase: int, log_rows: list) -> None:
    U_tr, T_tr = dataset.masked_inputs(dataset.train_idx), dataset.targets[dataset.train_idx]
    U_va, T_va = dataset.masked_inputs(dataset.val_idx), dataset.targets[dataset.val_idx]
    emb = embed_y(dataset.y_points, dataset.y_kinds)

    def checkpoint():
        model = template.with_vector(run.vec)
        tr = batch_mse(model, U_tr, T_tr, dataset.y_points)
        va = batch_mse(model, U_va, T_va, dataset.y_points)
        if not (math.isfinite(tr) and math.isfinite(va)):
            run.diverged = True
            return
        log_rows.append((run.step, run.run_id, phase, tr, va))
        if va < run.best_val:
            run.best_val, run.best_vec, run.best_step = va, run.vec.copy(), run.step

    if run.step == 0:
        checkpoint()
    for _ in range(steps):
        if run.diverged:
            return
        pick = run.rng.integers(len(U_tr), size=config.batch_size)
        try:
            loss, grad = loss_and_grad(template.with_vector(run.vec), U_tr[pick], T_tr[pick],
                                       dataset.y_points, emb)
            if not math.isfinite(loss):
                raise NonFiniteGradientError("non-finite loss")
            run.vec, run.state = adam_step(run.vec, grad, run.state)
        except (NonFiniteGradientError, FloatingPointError):
            run.diverged = True
            log.warning("run %d diverged at step %d", run.run_id, run.step)
            return
        run.step += 1
        if run.step % config.val_every == 0:
            checkpoint()
    if run.step % config.val_every != 0:
        checkpoint()


def train(dataset: Dataset, config: TrainConfig | None = None) -> TrainResult:
    """Several short random restarts, then a long continuation of the best one.

    The returned parameters are the best validation snapshot seen over the
    selected run (which includes the best snapshot of any restart).
    """
    config = TrainConfig() if config is None else config
    if len(dataset.val_idx) == 0 or len(dataset.train_idx) == 0:
        raise SplitError("dataset split has an empty side")
    lam = _lambda_for(dataset, config)
    hyper = dict(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    log_rows: list[tuple] = []
    runs: list[_Run] = []
    template = None
    with np.errstate(over="ignore", invalid="ignore"):
        for r in range(config.n_inits):
            model = init_levelset_model(dataset.y_kinds, dataset.x_points, m=config.m, lam=lam,
                                        d=config.d, hidden=config.hidden, omega0=config.omega0,
                                        bias_mode=config.bias_mode, kernel=config.kernel,
                                        rng=derive_rng(config.seed, 10, r),
                                        calibrate_on=dataset.y_points)
            template = model if template is None else template
            vec = model.to_vector()
            run = _Run(r, vec, AdamState.fresh(vec.size, **hyper), derive_rng(config.seed, 20, r))
            _advance(run, template, dataset, config, config.phase1_steps, 1, log_rows)
            runs.append(run)
        alive = [r for r in runs if r.best_vec is not None and not r.diverged]
        dead = [r.run_id for r in runs if r not in alive]
        if not alive:
            raise TrainingFailureError(f"all {config.n_inits} runs diverged")
        best = min(alive, key=lambda r: (r.best_val, r.run_id))
        _advance(best, template, dataset, config, config.phase2_steps, 2, log_rows)
    model = template.with_vector(best.best_vec)
    model.meta = dict(model.meta)
    model.meta.update({"lam": lam, "selected_run": best.run_id, "best_step": best.best_step,
                       "best_val_mse": best.best_val, "transform": dataset.transform})
    return TrainResult(model, best.best_val, best.best_step, best.run_id, log_rows, dead)


# -- evaluation ----------------------------------------------------------------------------

@dataclass(frozen=True)
class RelMse:
    per_pair: float          # mean of ||t - p||^2 / ||t||^2
    ratio_of_means: float    # sum ||t - p||^2 / sum ||t||^2
    skipped: int
    count: int


def predict_targets(model, inputs: np.ndarray, y_points: np.ndarray | None = None,
                    mask: np.ndarray | None = None) -> np.ndarray:
    """Predictions for full-grid inputs: a dense matrix baseline or a kernel model."""
    inputs = np.atleast_2d(inputs)
    if isinstance(model, np.ndarray):
        return inputs @ model.T
    if mask is not None:
        inputs = inputs[:, mask]
    return inputs @ kernel_matrix(model, y_points, model.x_points).T


def relmse_report(predictions: np.ndarray, targets: np.ndarray) -> RelMse:
    P, T = np.atleast_2d(predictions), np.atleast_2d(targets)
    num = np.sum((T - P) ** 2, axis=1)
    den = np.sum(T ** 2, axis=1)
    keep = den > 0
    skipped = int((~keep).sum())
    if skipped:
        log.warning("skipped %d zero-norm targets", skipped)
    if not keep.any():
        return RelMse(math.nan, math.nan, skipped, 0)
    return RelMse(float(np.mean(num[keep] / den[keep])), float(num[keep].sum() / den[keep].sum()),
                  skipped, int(keep.sum()))


def evaluate_relmse(model, inputs: np.ndarray, targets: np.ndarray,
                    y_points: np.ndarray | None = None, mask: np.ndarray | None = None) -> float:
    return relmse_report(predict_targets(model, inputs, y_points, mask), targets).per_pair


__all__ = [
    "Dataset", "TrainConfig", "TrainResult", "RelMse", "SplitError", "TrainingFailureError",
    "make_dataset", "make_sampler", "matern_sampler", "blob_sampler", "split_indices",
    "fresh_pairs", "mse_loss", "batch_mse", "train", "predict_targets", "relmse_report",
    "evaluate_relmse", "default_config", "LOG_COLUMNS",
]
