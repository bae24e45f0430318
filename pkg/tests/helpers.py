"""Shared oracles for the test modules."""
import numpy as np

from dftk.kernels import init_levelset_model, loss_and_grad


def smooth_bump(x, center=(0.3, 0.1), var=0.25):
    return np.exp(-np.sum((x - np.asarray(center)) ** 2, axis=1) / (2 * var))


def small_model(rng, y_kinds=("angle", "angle"), m=2, bias_mode="mean", kernel="levelset",
                n_x=12, lam=3.0, omega0=2.0, d=4, hidden=(6, 5)):
    xs = rng.uniform(-1, 1, (n_x, 2))
    return init_levelset_model(y_kinds, xs, m=m, lam=lam, d=d, hidden=hidden, omega0=omega0,
                               bias_mode=bias_mode, kernel=kernel, rng=rng)


def fd_loss_gradient(model, U, T, ys, h=1e-6):
    vec = model.to_vector()
    out = np.empty_like(vec)
    for i in range(vec.size):
        e = np.zeros_like(vec)
        e[i] = h
        lp, _ = loss_and_grad(model.with_vector(vec + e), U, T, ys)
        lm, _ = loss_and_grad(model.with_vector(vec - e), U, T, ys)
        out[i] = (lp - lm) / (2 * h)
    return out


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# acceptance bookkeeping: criterion id -> list of (part, passed, detail)
ACCEPTANCE: dict[str, list[tuple[str, bool, str]]] = {}


def criterion(cid: str, part: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE.setdefault(cid, []).append((part, bool(passed), detail))
    print(f"{cid} {part}: {'PASS' if passed else 'FAIL'} ({detail})")
    return bool(passed)
