"""Command-line driver: staged pipeline commands, full runs and the grid sweep.

Every command takes ``--config`` (JSON), ``--seed`` and ``--out``. Stages
communicate only through files in the run directory, so ``run-all`` is exactly
``gen-data``, ``augment``, ``graph``, ``train`` and ``eval`` in sequence.
"""

import argparse
import copy
import csv
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, expand_dataset, load_augmented, save_augmented
from .dataset import (
    fit_standardizer,
    generate_entangled_manifolds,
    load_dataset,
    save_dataset,
    split,
    standardize,
)
from .discriminator import SvmTrainConfig
from .errors import (
    CoinError,
    ConfigError,
    DivergenceError,
    InvalidParameterError,
    MalformedFileError,
)
from .graph import build_signed_graph, load_graph, save_graph
from .metrics import evaluate, pca_project
from .model import EmbeddingNetwork, TrainConfig, load_checkpoint, save_checkpoint, save_history, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGENCE = 0, 1, 2, 3

_augment_defaults = AugmentConfig().to_dict()
_augment_defaults["seed"] = None
_train_defaults = TrainConfig().to_dict()
_train_defaults["seed"] = None

DEFAULTS = {
    "seed": 0,
    "out": "run",
    "dataset": {
        "path": None,
        "n_per_class": 150,
        "noise_sigma": 0.25,
        "rotation": 0.0,
        "test_fraction": 1 / 3,
        "standardize": True,
        "seed": None,
    },
    "augment": _augment_defaults,
    "graph": {"n_pos": 1, "n_neg": 4, "metric": "cosine"},
    "train": _train_defaults,
    "sweep": {
        "n_pos": [0, 1, 3, 5],
        "n_neg": [0, 1, 4, 8],
        "lambda": [0.0, 0.1, 1.0, 10.0],
        "seeds": [0, 1, 2],
        "workers": 1,
    },
}

# keys whose default is null, with the type a non-null value must have
_NULLABLE = {
    "dataset.path": str,
    "dataset.seed": int,
    "augment.seed": int,
    "augment.noise_sigma": float,
    "train.seed": int,
}


def _check_type(field, default, value):
    expected = _NULLABLE.get(field, type(default))
    if value is None:
        if field in _NULLABLE:
            return None
        raise ConfigError(field, "must not be null")
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(field, f"expected true or false, got {value!r}")
    elif expected in (int, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(field, f"expected a number, got {value!r}")
        if expected is int:
            if not float(value).is_integer():
                raise ConfigError(field, f"expected an integer, got {value!r}")
            return int(value)
        return float(value)
    elif not isinstance(value, expected):
        raise ConfigError(field, f"expected {expected.__name__}, got {value!r}")
    return value


def _merge(defaults, given, prefix=""):
    if not isinstance(given, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a JSON object")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        field = prefix + key
        if key not in defaults:
            raise ConfigError(field, "unknown key")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, field + ".")
        else:
            out[key] = _check_type(field, defaults[key], value)
    return out


def resolve_config(given=None, seed=None, out=None):
    """Fill defaults, apply flag overrides and validate; returns a plain dict.

    Section seeds left null inherit the global seed, so the resolved config
    alone reproduces a run.
    """
    cfg = _merge(DEFAULTS, given or {})
    if seed is not None:
        cfg["seed"] = int(seed)
    if out is not None:
        cfg["out"] = str(out)
    for section in ("dataset", "augment", "train"):
        if cfg[section]["seed"] is None:
            cfg[section]["seed"] = cfg["seed"]
    ds = cfg["dataset"]
    if not 0 < ds["test_fraction"] < 1:
        raise ConfigError("dataset.test_fraction", "must lie in (0, 1)")
    if ds["path"] is None:
        if ds["n_per_class"] < 2:
            raise ConfigError("dataset.n_per_class", "must be >= 2")
        if ds["noise_sigma"] < 0:
            raise ConfigError("dataset.noise_sigma", "must be >= 0")
    for key in ("n_pos", "n_neg"):
        if cfg["graph"][key] < 0:
            raise ConfigError(f"graph.{key}", "must be >= 0")
    if cfg["graph"]["metric"] not in ("cosine", "euclidean"):
        raise ConfigError("graph.metric", "must be 'cosine' or 'euclidean'")
    for section, build in (("augment", augment_config), ("train", train_config)):
        try:
            build(cfg)
        except ConfigError:
            raise
        except (InvalidParameterError, TypeError) as exc:
            raise ConfigError(section, str(exc)) from None
    sweep = cfg["sweep"]
    for key in ("n_pos", "n_neg", "lambda", "seeds"):
        if not sweep[key]:
            raise ConfigError(f"sweep.{key}", "grid axis must be non-empty")
    for key in ("n_pos", "n_neg", "seeds"):
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in sweep[key]):
            raise ConfigError(f"sweep.{key}", "entries must be integers")
        if key != "seeds" and min(sweep[key]) < 0:
            raise ConfigError(f"sweep.{key}", "entries must be >= 0")
    if not all(isinstance(v, (int, float)) and v >= 0 for v in sweep["lambda"]):
        raise ConfigError("sweep.lambda", "entries must be numbers >= 0")
    sweep["lambda"] = [float(v) for v in sweep["lambda"]]
    if sweep["workers"] < 1:
        raise ConfigError("sweep.workers", "must be >= 1")
    return cfg


def load_config(path, seed=None, out=None):
    given = {}
    if path is not None:
        try:
            given = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return resolve_config(given, seed=seed, out=out)


def augment_config(cfg):
    section = dict(cfg["augment"])
    section["svm"] = SvmTrainConfig(**section["svm"])
    return AugmentConfig(**section)


def train_config(cfg):
    return TrainConfig(**cfg["train"])


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _run_dir(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(cfg, out / "config.json")
    return out


def _require(path):
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run the earlier stage first")
    return path


def cmd_gen_data(cfg):
    """Generate or load the dataset, split it and standardize with train statistics."""
    out = _run_dir(cfg)
    ds_cfg = cfg["dataset"]
    if ds_cfg["path"] is not None:
        dataset = load_dataset(ds_cfg["path"])
    else:
        dataset = generate_entangled_manifolds(
            ds_cfg["n_per_class"], ds_cfg["noise_sigma"], ds_cfg["rotation"], seed=ds_cfg["seed"]
        )
    train_ds, test_ds = split(dataset, ds_cfg["test_fraction"], seed=ds_cfg["seed"])
    if ds_cfg["standardize"]:
        mean, scale = fit_standardizer(train_ds.samples)
    else:
        mean, scale = np.zeros(dataset.n_features), np.ones(dataset.n_features)
    save_dataset(dataset, out / "dataset.csv")
    save_dataset(standardize(train_ds, mean, scale), out / "train.csv")
    save_dataset(standardize(test_ds, mean, scale), out / "test.csv")
    _dump_json({"mean": mean.tolist(), "scale": scale.tolist()}, out / "scaler.json")
    return out


def cmd_augment(cfg):
    out = _run_dir(cfg)
    train_ds = load_dataset(_require(out / "train.csv"))
    config = augment_config(cfg)
    aug = expand_dataset(train_ds, config)
    save_augmented(aug, out / "augmented.csv")
    rho = {str(c): float(r) for c, r in sorted(aug.radii.items())}
    _dump_json({"config": config.to_dict(), "rho": rho}, out / "augment_config.json")
    return out


def cmd_graph(cfg):
    out = _run_dir(cfg)
    aug = load_augmented(_require(out / "augmented.csv"))
    g = cfg["graph"]
    save_graph(build_signed_graph(aug, g["n_pos"], g["n_neg"], metric=g["metric"]), out / "graph.csv")
    return out


def cmd_train(cfg):
    out = _run_dir(cfg)
    aug = load_augmented(_require(out / "augmented.csv"))
    graph = load_graph(_require(out / "graph.csv"), aug)
    config = train_config(cfg)
    net = EmbeddingNetwork(aug.X.shape[1], config.hidden_layer_sizes, aug.n_classes, seed=config.seed)
    model = train(net, aug, graph, config)
    save_checkpoint(model, out / "checkpoint.json")
    save_history(model, out / "history.csv")
    return out


def cmd_eval(cfg):
    """Test metrics plus a 2-D PCA projection of training nodes and test points."""
    out = _run_dir(cfg)
    model = load_checkpoint(_require(out / "checkpoint.json"))
    test_ds = load_dataset(_require(out / "test.csv"))
    aug = load_augmented(_require(out / "augmented.csv"))
    # the snapshot omits the run directory so reruns elsewhere compare equal
    snapshot = {k: v for k, v in cfg.items() if k != "out"}
    report = evaluate(model, test_ds.samples, test_ds.labels, config=snapshot)
    _dump_json(report.to_dict(), out / "metrics.json")
    latents = model.transform(np.vstack([aug.X, test_ds.samples]))
    labels = np.concatenate([aug.labels, test_ds.labels])
    kinds = list(aug.kind) + ["test"] * len(test_ds)
    coords = pca_project(latents, k=2)
    with open(out / "projection.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "label", "kind"])
        for (x, y), label, kind in zip(coords, labels, kinds):
            writer.writerow([repr(float(x)), repr(float(y)), int(label), kind])
    return out


STAGES = (cmd_gen_data, cmd_augment, cmd_graph, cmd_train, cmd_eval)


def cmd_run_all(cfg):
    for stage in STAGES:
        out = stage(cfg)
    return out


SWEEP_METRICS = ("accuracy", "auc", "margin_ratio")


def sweep_run_config(cfg, n_pos, n_neg, lam, seed):
    """Config of one sweep cell; ``(0, 0)`` also switches augmentation off."""
    run = copy.deepcopy(cfg)
    run["seed"] = seed
    for section in ("dataset", "augment", "train"):
        run[section]["seed"] = seed
    run["graph"]["n_pos"], run["graph"]["n_neg"] = n_pos, n_neg
    run["train"]["reg_lambda"] = lam
    if n_pos == 0 and n_neg == 0:
        run["augment"]["n_pos_total"] = run["augment"]["n_neg_total"] = 0
    run["out"] = str(Path(cfg["out"]) / "runs" / f"p{n_pos}_n{n_neg}_l{lam!r}_s{seed}")
    return run


def _sweep_cell(run):
    try:
        cmd_run_all(run)
        metrics = json.loads((Path(run["out"]) / "metrics.json").read_text())
        return {k: metrics[k] for k in SWEEP_METRICS} | {"status": "ok"}
    except (CoinError, ValueError, FloatingPointError, OSError) as exc:
        return {k: float("nan") for k in SWEEP_METRICS} | {"status": f"failed: {type(exc).__name__}"}


def _fmt(v):
    return repr(float(v))


def cmd_sweep(cfg):
    """Grid over ``(n_pos, n_neg, lambda)`` and seeds.

    Writes ``sweep_runs.csv`` (one row per seed, failures marked) and
    ``sweep.csv`` (mean and population std over the successful seeds), both
    sorted by ``(n_pos, n_neg, lambda)``.
    """
    out = _run_dir(cfg)
    sweep = cfg["sweep"]
    cells = list(
        itertools.product(sorted(set(sweep["n_pos"])), sorted(set(sweep["n_neg"])), sorted(set(sweep["lambda"])))
    )
    seeds = list(dict.fromkeys(sweep["seeds"]))
    runs = [sweep_run_config(cfg, p, n, lam, s) for p, n, lam in cells for s in seeds]
    if sweep["workers"] > 1:
        with ProcessPoolExecutor(max_workers=sweep["workers"]) as pool:
            results = list(pool.map(_sweep_cell, runs))
    else:
        results = [_sweep_cell(run) for run in runs]
    header = ["n_pos", "n_neg", "lambda", "seed", *SWEEP_METRICS, "status"]
    with open(out / "sweep_runs.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for run, res in zip(runs, results):
            g = run["graph"]
            writer.writerow(
                [g["n_pos"], g["n_neg"], _fmt(run["train"]["reg_lambda"]), run["seed"]]
                + [_fmt(res[k]) for k in SWEEP_METRICS]
                + [res["status"]]
            )
    header = ["n_pos", "n_neg", "lambda", "n_seeds", "n_failed"]
    header += [f"{k}_{stat}" for k in SWEEP_METRICS for stat in ("mean", "std")]
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k, (p, n, lam) in enumerate(cells):
            block = results[k * len(seeds) : (k + 1) * len(seeds)]
            ok = [r for r in block if r["status"] == "ok"]
            row = [p, n, _fmt(lam), len(seeds), len(block) - len(ok)]
            for key in SWEEP_METRICS:
                values = np.array([r[key] for r in ok], dtype=np.float64)
                row += [_fmt(values.mean()), _fmt(values.std())] if len(values) else ["nan", "nan"]
            writer.writerow(row)
    return out


COMMANDS = {
    "gen-data": cmd_gen_data,
    "augment": cmd_augment,
    "graph": cmd_graph,
    "train": cmd_train,
    "eval": cmd_eval,
    "run-all": cmd_run_all,
    "sweep": cmd_sweep,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="coin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, func in COMMANDS.items():
        p = sub.add_parser(name, help=(func.__doc__ or name).splitlines()[0])
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, help="global seed, overrides the config")
        p.add_argument("--out", type=Path, help="run directory, overrides the config")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        out = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (MalformedFileError, CoinError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
