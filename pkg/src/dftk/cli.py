"""Command-line driver: one YAML config per experiment, CSV and tensor outputs.

    dftk <gen|train|eval|rank|wavespeed|probe|info> --config FILE [--seed N] [--out DIR]

Exit codes: 0 success, 2 configuration or missing-artifact error, 3 numeric
failure (divergence, trapped ray, insufficient coverage).
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .analysis import (CoverageError, GeodesicDistanceModel, codim_histogram,
                       geodesics_from_wavespeed, mpp_fit, pearson, wavespeed_recover)
from .compressive import (FrameError, decay_profile, default_y_atoms, direct_rows,
                          make_lattice, sampling_curve, worst_atom_errors)
from .diffnet import NonFiniteGradientError
from .domains import derive_rng, read_array, tensor_write, write_array, write_csv
from .kernels import DegenerateAmplitudeError, default_lambda, load_model, save_model
from .training import (TrainConfig, TrainingFailureError, fresh_pairs, make_dataset,
                       make_sampler, relmse_report, predict_targets, train)
from .transforms import TRANSFORMS, LensingSpec, TrappedRayError, lens_wavespeed, make_transform

log = logging.getLogger("dftk")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


# -- configuration -----------------------------------------------------------------------

DEFAULTS: dict = {
    "experiment": "unnamed",
    "seed": 0,
    "transform": {"name": "radon2d"},
    "grid": {"n": 32},
    "data": {"sampler": "matern", "sampler_params": {}, "J": 32, "noise_std": 0.0,
             "test_count": 64, "ood_sampler": "blobs", "ood_params": {}},
    "model": {"m": 2, "d": 64, "hidden": [64, 64, 64], "omega0": 30.0, "bias_mode": "mean",
              "kernel": "levelset", "lam": None, "width_cells": 1.5},
    "train": {"batch_size": 32, "n_inits": 5, "phase1_steps": 10000, "phase2_steps": 40000,
              "val_every": 250, "lr": 1e-4, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "sweep": {"J": None},
    "analysis": {"n_y": 64, "n_x": 64, "n_probes": 256, "sigma_cells": 2.0, "oracle": False,
                 "n_paths": 8, "dt": 1e-3},
    "probe": {"a": 4, "channels": 8, "window_length": None, "window": "raised_cosine",
              "bandlimit": 8.0, "J": [32, 64, 128, 256], "seeds": [0, 1, 2, 3, 4],
              "mu_rel": 1e-3, "iterations": 300, "y_atoms": None, "decay_atom": 3},
}

OPEN_SECTIONS = {("transform",), ("data", "sampler_params"), ("data", "ood_params")}


def _marks(node, prefix=()):
    """Map key paths to (line, column) from a composed YAML node tree."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (k.value,)
            out[path] = (k.start_mark.line + 1, k.start_mark.column + 1)
            out.update(_marks(v, path))
    return out


def _merge(defaults: dict, given: dict, marks: dict, prefix=()) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        path = prefix + (key,)
        if key not in defaults and prefix not in OPEN_SECTIONS:
            line, col = marks.get(path, (0, 0))
            valid = ", ".join(sorted(defaults))
            raise ConfigError(f"unknown key {'.'.join(path)!r} at line {line}, column {col}; "
                              f"valid keys here: {valid}")
        if isinstance(defaults.get(key), dict) and path not in OPEN_SECTIONS:
            if not isinstance(val, dict):
                line, col = marks.get(path, (0, 0))
                raise ConfigError(f"{'.'.join(path)} must be a mapping (line {line}, column {col})")
            out[key] = _merge(defaults[key], val, marks, path)
        else:
            out[key] = val
    return out


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"malformed config {path}{where}: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    cfg = _merge(DEFAULTS, raw, _marks(node))
    name = cfg["transform"].get("name")
    if name not in TRANSFORMS:
        raise ConfigError(f"unknown transform {name!r}; valid names: {', '.join(sorted(TRANSFORMS))}")
    return cfg


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: dict, command: str, files: list[Path]) -> str:
    digests = {p.relative_to(out).as_posix(): _file_digest(p) for p in sorted(files)}
    body = {"command": command, "version": __version__, "config": cfg, "files": digests}
    body["hash"] = config_hash({"config": cfg, "files": digests})
    (out / f"manifest_{command}.json").write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
    return body["hash"]


# -- builders -------------------------------------------------------------------------------

def _spec(cfg):
    params = {k: v for k, v in cfg["transform"].items() if k != "name"}
    try:
        return make_transform(cfg["transform"]["name"], **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad transform parameters: {exc}") from exc


def _sampler(name, params):
    try:
        return make_sampler(name, **(params or {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _J_list(cfg) -> list[int]:
    sweep = cfg["sweep"]["J"]
    return [int(j) for j in sweep] if sweep else [int(cfg["data"]["J"])]


def _dataset(cfg, J):
    spec = _spec(cfg)
    return make_dataset(spec, _sampler(cfg["data"]["sampler"], cfg["data"]["sampler_params"]), J,
                        cfg["data"]["noise_std"], int(cfg["seed"]), n=int(cfg["grid"]["n"])), spec


def _train_config(cfg) -> TrainConfig:
    merged = dict(cfg["train"])
    merged.update(cfg["model"])
    merged["seed"] = int(cfg["seed"])
    try:
        return TrainConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train/model section: {exc}") from exc


def _model_dir(out: Path, cfg, J: int) -> Path:
    return out / f"{cfg['model']['kernel']}_m{cfg['model']['m']}_J{J}"


# -- commands -----------------------------------------------------------------------------

def cmd_gen(cfg, out: Path) -> int:
    files = []
    for J in _J_list(cfg):
        ds, _ = _dataset(cfg, J)
        base = out / f"data_J{J}"
        for name, arr in (("inputs", ds.inputs), ("targets", ds.targets)):
            files += [write_array(arr, base / name).with_suffix(s) for s in (".f64", ".json")]
        split = base / "split.json"
        split.write_text(json.dumps({"train": ds.train_idx.tolist(), "val": ds.val_idx.tolist()}) + "\n")
        files.append(split)
        print(f"J={J}: {len(ds.train_idx)} train / {len(ds.val_idx)} validation pairs "
              f"on a {'x'.join(map(str, ds.grid.shape))} grid")
    print("manifest", write_manifest(out, cfg, "gen", files))
    return EXIT_OK


def cmd_train(cfg, out: Path, baseline: str | None = None) -> int:
    files = []
    tcfg = _train_config(cfg)
    for J in _J_list(cfg):
        ds, _ = _dataset(cfg, J)
        if baseline == "mpp":
            W = mpp_fit(ds.inputs, ds.targets)
            files += [write_array(W, out / f"mpp_J{J}").with_suffix(s) for s in (".f64", ".json")]
            print(f"J={J}: pseudoinverse baseline {W.shape[0]}x{W.shape[1]}")
            continue
        res = train(ds, tcfg)
        mdir = _model_dir(out, cfg, J)
        save_model(res.model, mdir)
        res.write_log(mdir / "train_log.csv")
        files += sorted(p for p in mdir.iterdir() if p.is_file())
        print(f"J={J}: best validation MSE {res.best_val:.6g} (run {res.selected_run}, "
              f"step {res.best_step})")
    print("manifest", write_manifest(out, cfg, "train" if baseline is None else f"train_{baseline}", files))
    return EXIT_OK


def _load(mdir: Path):
    if not (mdir / "model.json").exists():
        raise FileNotFoundError(f"missing checkpoint {mdir}")
    return load_model(mdir)


def cmd_eval(cfg, out: Path) -> int:
    spec = _spec(cfg)
    rows = []
    for J in _J_list(cfg):
        ds, _ = _dataset(cfg, J)
        test_seed = int(cfg["seed"]) + 10_000 + J
        splits = {
            "id": fresh_pairs(ds, spec, _sampler(cfg["data"]["sampler"], cfg["data"]["sampler_params"]),
                              int(cfg["data"]["test_count"]), test_seed),
            "ood": fresh_pairs(ds, spec, _sampler(cfg["data"]["ood_sampler"], cfg["data"]["ood_params"]),
                               int(cfg["data"]["test_count"]), test_seed),
        }
        models = {}
        mpp = out / f"mpp_J{J}.f64"
        for mdir in sorted(out.glob(f"*_m*_J{J}")):
            if mdir.is_dir():
                models[mdir.name.rsplit("_J", 1)[0]] = _load(mdir)
        if mpp.exists():
            models["mpp"] = read_array(mpp)[0]
        if not models:
            raise FileNotFoundError(f"no checkpoint for J={J} under {out}")
        for name, model in models.items():
            for split, (U, T) in splits.items():
                rep = relmse_report(predict_targets(model, U, ds.y_points, ds.mask), T)
                rows.append((J, name, split, rep.per_pair, rep.ratio_of_means, rep.skipped))
    path = out / "metrics.csv"
    write_csv(path, ("J", "model", "split", "relmse", "relmse_ratio_of_means", "skipped"), rows)
    for r in rows:
        print(f"J={r[0]:<4} {r[1]:<14} {r[2]:<4} relMSE {r[3]:.4g}")
    print("manifest", write_manifest(out, cfg, "eval", [path]))
    return EXIT_OK


def cmd_rank(cfg, out: Path) -> int:
    files = []
    for J in _J_list(cfg):
        ds, _ = _dataset(cfg, J)
        model = _load(_model_dir(out, cfg, J))
        res = codim_histogram(model, ds.y_points, ds.x_points, int(cfg["analysis"]["n_y"]),
                              int(cfg["analysis"]["n_x"]), derive_rng(int(cfg["seed"]), 40, J))
        p = out / f"rank_J{J}.csv"
        write_csv(p, ("y_index", "x_index", "effrank"), res.rows())
        h = out / f"rank_hist_J{J}.csv"
        write_csv(h, ("bin_lo", "bin_hi", "count"),
                  zip(res.edges[:-1].tolist(), res.edges[1:].tolist(), res.counts.tolist()))
        files += [p, h]
        print(f"J={J}: median effective rank {res.median:.4f} over {res.effrank.size} incident points")
    print("manifest", write_manifest(out, cfg, "rank", files))
    return EXIT_OK


def cmd_wavespeed(cfg, out: Path) -> int:
    spec = _spec(cfg)
    if not isinstance(spec, LensingSpec):
        raise ConfigError("wavespeed needs the lensing transform")
    a = cfg["analysis"]
    grid = spec.default_x_grid(int(cfg["grid"]["n"]))
    files = []
    sources = [("oracle", None)] if a["oracle"] else [(f"J{J}", J) for J in _J_list(cfg)]
    for tag, J in sources:
        if J is None:
            model = GeodesicDistanceModel(spec, default_lambda(float(grid.spacing.min())))
        else:
            model = _load(_model_dir(out, cfg, J))
        chat = wavespeed_recover(model, grid, spec.y_points(), int(a["n_probes"]),
                                 float(a["sigma_cells"]), rng=derive_rng(int(cfg["seed"]), 50))
        base = tensor_write(chat, out / f"wavespeed_{tag}")
        files += [base.with_suffix(".f64"), base.with_suffix(".json")]
        truth = lens_wavespeed(grid.nodes()[chat.mask], spec)
        r = pearson(chat.values[chat.mask], truth)
        ys = spec.y_points()[derive_rng(int(cfg["seed"]), 51).choice(
            len(spec.y_points()), int(a["n_paths"]), replace=False)]
        rows = []
        for i, path in enumerate(geodesics_from_wavespeed(chat, ys, float(a["dt"]))):
            rows += [(i, float(t), float(x[0]), float(x[1])) for t, x in zip(path.t, path.x)]
        p = out / f"geodesics_{tag}.csv"
        write_csv(p, ("path_id", "t", "x1", "x2"), rows)
        files.append(p)
        print(f"{tag}: Pearson correlation with the true wavespeed {r:.4f}")
    print("manifest", write_manifest(out, cfg, "wavespeed", files))
    return EXIT_OK


def cmd_probe(cfg, out: Path) -> int:
    spec = _spec(cfg)
    p = cfg["probe"]
    grid = spec.default_x_grid(int(cfg["grid"]["n"]))
    R = spec.matrix(grid)
    lat = make_lattice(grid, int(p["a"]), int(p["channels"]), p["window_length"], p["window"],
                       bandlimit=p["bandlimit"])
    ylat = make_lattice(spec.y_grid(), int(p["a"]), int(p["channels"]), p["window_length"], p["window"])
    y_atoms = [tuple(map(tuple, ya)) for ya in p["y_atoms"]] if p["y_atoms"] else default_y_atoms(ylat)
    truth = direct_rows(R, lat, ylat, y_atoms)
    profiles = [decay_profile(row) for row in truth]
    exps = [prof.exponent for prof in profiles]
    pick = int(p["decay_atom"])
    if not 0 <= pick < len(profiles):
        raise ConfigError(f"probe.decay_atom = {pick} outside [0, {len(profiles)})")
    d = out / "decay.csv"
    write_csv(d, ("k", "magnitude"),
              ((k + 1, float(m)) for k, m in enumerate(profiles[pick].magnitudes)))
    e = out / "decay_exponents.csv"
    write_csv(e, ("y_atom_id", "exponent"), enumerate(exps))
    rows = sampling_curve(R, lat, ylat, y_atoms, [int(j) for j in p["J"]], [int(s) for s in p["seeds"]],
                          float(p["mu_rel"]), int(p["iterations"]))
    s = out / "sampling_curve.csv"
    write_csv(s, ("J", "seed", "y_atom_id", "l2_error"),
              [(r.J, r.seed, r.y_atom_id, r.l2_error) for r in rows])
    print(f"|Omega| = {int(lat.omega.sum())}; decay exponent {exps[pick]:.3f} at atom {pick}, "
          f"range [{min(exps):.3f}, {max(exps):.3f}]")
    for J, err in worst_atom_errors(rows).items():
        print(f"J={J:<4} worst-atom relative error {err:.4g}")
    print("manifest", write_manifest(out, cfg, "probe", [d, e, s]))
    return EXIT_OK


def cmd_info(cfg, out: Path | None) -> int:
    print(f"dftk {__version__}")
    print("transforms:", ", ".join(sorted(TRANSFORMS)))
    print(yaml.safe_dump(cfg, sort_keys=True), end="")
    print("config hash", config_hash(cfg))
    return EXIT_OK


COMMANDS = ("gen", "train", "eval", "rank", "wavespeed", "probe", "info")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dftk", description="Learn and analyse double fibration transforms.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="YAML experiment file")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out", default=None, help="output directory (default: runs/<experiment>)")
    ap.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    ap.add_argument("--baseline", choices=("mpp",), default=None, help="train: fit a baseline instead")
    ap.add_argument("--kernel", choices=("levelset", "softmax"), default=None,
                    help="override model.kernel (softmax forces m = 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.kernel is not None:
            cfg["model"]["kernel"] = args.kernel
            if args.kernel == "softmax":
                cfg["model"]["m"] = 1
        out = Path(args.out) if args.out else Path("runs") / str(cfg["experiment"])
        if args.command != "info":
            out.mkdir(parents=True, exist_ok=True)
        run = {"gen": cmd_gen, "eval": cmd_eval, "rank": cmd_rank, "wavespeed": cmd_wavespeed,
               "probe": cmd_probe, "info": cmd_info}
        limiter = None
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            limiter = threadpool_limits(args.threads)
        try:
            if args.command == "train":
                return cmd_train(cfg, out, args.baseline)
            return run[args.command](cfg, out)
        finally:
            if limiter is not None:
                limiter.unregister()
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingFailureError, TrappedRayError, CoverageError, DegenerateAmplitudeError,
            NonFiniteGradientError, FrameError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
