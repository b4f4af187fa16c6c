"""Command-line entry point: ``robustrep <subcommand> [options]``.

Option precedence is flag > config file (``--config``) > built-in default. A
config file is flat YAML whose keys are the flag names without leading dashes;
the ``run.yaml`` metadata record every run writes is also accepted, so
``robustrep <sub> --config run.yaml --out elsewhere`` replays a run.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import (DatasetError, SuperclassMap, SuperclassMapError, apply_superclass_map,
                   load_dataset, noise_seed, pattern_seed, write_curve_csv, write_image_grid)
from .nn.network import build_repnet_s
from .nn.tensor import NonFiniteError, ShapeError
from .pgd import BallConstraint, PgdConfig
from .trainer import (TrainConfig, eval_accuracy, eval_adversarial_accuracy, train_robust,
                      train_standard, write_metrics_csv)

log = logging.getLogger("robustrep")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SUBCOMMANDS = ("train", "eval", "invert", "sweep", "interp", "viz", "addfeat", "topk")
DESK_RADII = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
THREADS_ENV = "ROBUSTREP_THREADS"


class UsageError(Exception):
    pass


# -- option parsing helpers ------------------------------------------------------------

def _float_list(text) -> List[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text) -> List[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _radius(text) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"radius must be nonnegative, got {text}")
    return v


@dataclass
class Opt:
    flag: str
    type: Optional[Callable[[Any], Any]] = None
    default: Any = None
    help: str = ""
    switch: bool = False  # boolean flag taking no value
    required: bool = False

    @property
    def dest(self) -> str:
        return self.flag.replace("-", "_")


COMMON = [
    Opt("seed", int, 0, "random seed for every stochastic choice"),
    Opt("threads", int, None, f"BLAS threads; 1 forces deterministic mode (fallback: ${THREADS_ENV})"),
    Opt("out", str, None, "output directory (train: checkpoint path)"),
]

MODEL = Opt("model", str, None, "checkpoint path", required=True)
DATA = Opt("data", str, None, "dataset root containing <split>/<class>/*.png", required=True)

OPTIONS: Dict[str, List[Opt]] = {
    "train": [
        DATA,
        Opt("split", str, "train", "training split"),
        Opt("robust", None, False, "adversarial training", switch=True),
        Opt("eps", float, 0.5, "l2 radius of the training attack"),
        Opt("epochs", int, 30),
        Opt("batch-size", int, 128),
        Opt("lr", float, 0.1),
        Opt("momentum", float, 0.9),
        Opt("weight-decay", float, 5e-4),
        Opt("drop-epochs", _int_list, [15, 23], "epochs at which the learning rate drops 10x"),
        Opt("attack-steps", int, 7),
        Opt("attack-step-size", float, None, "default 1.75 * eps / attack-steps"),
        Opt("eps-warmup", int, 0, "ramp the attack radius linearly over this many epochs"),
        Opt("no-augment", None, False, "disable flip/crop augmentation", switch=True),
        Opt("superclass-map", str, None, "text file grouping source labels into superclasses"),
    ],
    "eval": [
        MODEL, DATA,
        Opt("split", str, "test"),
        Opt("eps", _float_list, [0.25, 0.5, 1.0], "comma-separated attack radii"),
        Opt("steps", int, 20),
        Opt("step-size", float, None, "default 2.5 * eps / steps"),
        Opt("restarts", int, 1),
        Opt("limit", int, None, "evaluate on the first N images only"),
    ],
    "invert": [
        MODEL, DATA,
        Opt("split", str, "test", "split holding the target image"),
        Opt("index", int, 0, "target image index within the split"),
        Opt("source", str, "noise", "noise | pattern | image"),
        Opt("source-index", int, 1, "source image index when --source image"),
        Opt("eps", _radius, 1000.0, "ball radius around the source"),
        Opt("steps", int, 2000),
        Opt("step-size", float, 0.1),
    ],
    "sweep": [
        MODEL, DATA,
        Opt("split", str, "test"),
        Opt("radii", _float_list, list(DESK_RADII), "comma-separated ascending radii"),
        Opt("pairs", int, 20, "number of (source, target) pairs"),
        Opt("steps", int, 200, "PGD steps per radius"),
        Opt("step-size", float, 0.5, "largest step length used at any radius"),
    ],
    "interp": [
        MODEL, DATA,
        Opt("split", str, "test"),
        Opt("index1", int, 0),
        Opt("index2", int, 1),
        Opt("frames", int, 8, "T; the output holds T+1 frames"),
        Opt("steps", int, 1000),
        Opt("step-size", float, 0.05),
    ],
    "viz": [
        MODEL,
        Opt("unit", int, None, "representation coordinate to maximize", required=True),
        Opt("seed-image", str, "gray", "gray | noise | pattern"),
        Opt("eps", _radius, 1000.0),
        Opt("steps", int, 200),
        Opt("step-size", float, 0.1),
    ],
    "addfeat": [
        MODEL, DATA,
        Opt("split", str, "test"),
        Opt("index", int, 0, "image to manipulate"),
        Opt("unit", int, None, "representation coordinate to make dominant", required=True),
        Opt("eps", _radius, 1000.0),
        Opt("steps", int, 500),
        Opt("step-size", float, 0.1),
    ],
    "topk": [
        MODEL, DATA,
        Opt("split", str, "test"),
        Opt("unit", int, None, required=True),
        Opt("n", int, 8),
        Opt("mode", str, "max", "max | min"),
    ],
}

CHOICES = {"source": ("noise", "pattern", "image"), "seed_image": ("gray", "noise", "pattern"),
           "mode": ("max", "min")}


@dataclass
class Command:
    subcommand: str
    options: Dict[str, Any]
    config_path: Optional[str] = None
    expected_sha256: Optional[str] = None
    explicit: List[str] = field(default_factory=list)

    def __getattr__(self, name):
        try:
            return self.__dict__["options"][name]
        except KeyError:
            raise AttributeError(name) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustrep", description="Robust representation toolkit.")
    parser.add_argument("--version", action="version", version=f"robustrep {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat YAML config or a run.yaml record")
        p.add_argument("-v", "--verbose", action="store_true")
        for opt in COMMON + OPTIONS[name]:
            if opt.switch:
                p.add_argument(f"--{opt.flag}", dest=opt.dest, action="store_const", const=True,
                               default=None, help=opt.help)
            else:
                # None marks "not given" so config values can fill in
                p.add_argument(f"--{opt.flag}", dest=opt.dest, type=opt.type, default=None,
                               help=opt.help)
    return parser


def _read_config(path: str, subcommand: str):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from None
    raw = raw or {}
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must be a key-value mapping")
    sha = None
    if "subcommand" in raw and isinstance(raw.get("config"), dict):
        # a run.yaml metadata record
        if raw["subcommand"] != subcommand:
            raise UsageError(f"record {path} is for '{raw['subcommand']}', not '{subcommand}'")
        sha = raw.get("checkpoint_sha256")
        raw = dict(raw["config"])
    return {str(k).replace("-", "_"): v for k, v in raw.items()}, sha


def parse(argv: Sequence[str]) -> Command:
    """Resolve argv (plus an optional config file) into a validated Command."""
    ns = build_parser().parse_args(list(argv))
    name = ns.subcommand
    opts = COMMON + OPTIONS[name]
    by_dest = {o.dest: o for o in opts}
    values = {o.dest: o.default for o in opts}
    sha = None
    if ns.config:
        conf, sha = _read_config(ns.config, name)
        unknown = sorted(set(conf) - set(by_dest))
        if unknown:
            raise UsageError(f"unknown option(s) in {ns.config}: {', '.join(unknown)}")
        for k, v in conf.items():
            o = by_dest[k]
            try:
                values[k] = v if (v is None or o.switch or o.type is None) else o.type(v)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"bad value for '{o.flag}' in {ns.config}: {exc}") from None
    explicit = []
    for o in opts:
        v = getattr(ns, o.dest)
        if v is not None:
            values[o.dest] = v
            explicit.append(o.dest)
    if values["threads"] is None and os.environ.get(THREADS_ENV):
        try:
            values["threads"] = int(os.environ[THREADS_ENV])
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer") from None
    cmd = Command(name, values, ns.config, sha, explicit)
    _validate(cmd, by_dest)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return cmd


def _validate(cmd: Command, by_dest: Dict[str, Opt]) -> None:
    o = cmd.options
    for dest, opt in by_dest.items():
        if opt.required and o[dest] is None:
            raise UsageError(f"{cmd.subcommand}: missing required option --{opt.flag}")
    for key, allowed in CHOICES.items():
        if key in o and o[key] not in allowed:
            raise UsageError(f"--{key.replace('_', '-')} must be one of {', '.join(allowed)}")
    if o.get("threads") is not None and o["threads"] < 1:
        raise UsageError("--threads must be >= 1")
    for key in ("steps", "pairs", "frames", "n", "epochs", "attack_steps", "batch_size", "restarts",
                "eps_warmup"):
        if key in o and o[key] is not None and o[key] < (0 if key in ("steps", "epochs", "eps_warmup") else 1):
            raise UsageError(f"--{key.replace('_', '-')} is out of range: {o[key]}")
    for key in ("step_size", "lr", "attack_step_size"):
        if key in o and o[key] is not None and not o[key] > 0:
            raise UsageError(f"--{key.replace('_', '-')} must be positive")
    if "radii" in o:
        r = o["radii"]
        if not r or any(v < 0 for v in r) or any(b <= a for a, b in zip(r, r[1:])):
            raise UsageError(f"--radii must be nonnegative and strictly ascending, got {r}")
    if "eps" in o and cmd.subcommand == "eval" and any(v < 0 for v in o["eps"]):
        raise UsageError("--eps values must be nonnegative")
    if cmd.subcommand == "train":
        if o["robust"] and not o["eps"] > 0:
            raise UsageError("--robust needs --eps > 0")
        if o["eps"] < 0:
            raise UsageError("--eps must be nonnegative")


# -- execution ------------------------------------------------------------------------

def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_dir(cmd: Command) -> str:
    out = cmd.out
    if out is None:
        stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
        out = os.path.join("runs", f"{stamp}-{cmd.subcommand}")
    os.makedirs(out, exist_ok=True)
    return out


def _record(cmd: Command) -> Dict[str, Any]:
    config = {k: v for k, v in cmd.options.items() if k not in ("out", "threads")}
    return {"subcommand": cmd.subcommand, "seed": cmd.seed, "threads": cmd.threads,
            "version": __version__, "config": config}


def _write_record(path: str, record: Dict[str, Any]) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(record, fh, sort_keys=True)
    return path


def _write_json(path: str, payload: Dict[str, Any]) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_model(cmd: Command, record: Dict[str, Any]):
    if not os.path.isfile(cmd.model):
        raise CheckpointError(f"checkpoint not found: {cmd.model}")
    sha = sha256_file(cmd.model)
    if cmd.expected_sha256 and cmd.expected_sha256 != sha:
        raise CheckpointError(f"checkpoint {cmd.model} does not match the replayed record "
                              f"(sha256 {sha[:12]} != {cmd.expected_sha256[:12]})")
    record["checkpoint_sha256"] = sha
    return load_checkpoint(cmd.model)


def _dataset(cmd: Command, net=None):
    ds = load_dataset(cmd.data, cmd.split)
    if net is not None:
        net.check_input(ds.images[:1])
    return ds


def _pick(ds, index: int, what: str = "--index"):
    if not 0 <= index < len(ds):
        raise UsageError(f"{what} {index} is out of range for {len(ds)} images")
    return ds.images[index], int(ds.labels[index])


def _check_unit(net, unit: int) -> None:
    if not 0 <= unit < net.rep_dim:
        raise UsageError(f"--unit {unit} is out of range: the representation has {net.rep_dim} "
                         f"coordinates (valid 0..{net.rep_dim - 1})")


def _run_train(cmd: Command) -> List[str]:
    out = cmd.out or os.path.join(_out_dir(cmd), "model.ckpt")
    parent = os.path.dirname(os.path.abspath(out))
    os.makedirs(parent, exist_ok=True)
    ds = load_dataset(cmd.data, cmd.split)
    if cmd.superclass_map:
        ds = apply_superclass_map(ds, SuperclassMap.load(cmd.superclass_map))
    cfg = TrainConfig(epochs=cmd.epochs, batch_size=cmd.batch_size, lr=cmd.lr, momentum=cmd.momentum,
                      weight_decay=cmd.weight_decay, drop_epochs=tuple(cmd.drop_epochs),
                      robust=bool(cmd.robust), eps=cmd.eps, attack_steps=cmd.attack_steps,
                      attack_step_size=cmd.attack_step_size, augment=not cmd.no_augment, seed=cmd.seed,
                      eps_warmup=cmd.eps_warmup)
    net = build_repnet_s(ds.num_classes, seed=cmd.seed, input_shape=ds.image_shape,
                         class_names=ds.class_names)
    result = (train_robust if cfg.robust else train_standard)(net, ds, cfg)
    meta = {"config": cfg.to_dict(), "seed": cfg.seed, "final_epoch": cfg.epochs,
            "class_names": list(ds.class_names), "train_split": cmd.split}
    save_checkpoint(net, meta, out)
    stem = os.path.splitext(out)[0]
    metrics = write_metrics_csv(result.epochs, stem + ".metrics.csv")
    record = _record(cmd)
    record["checkpoint_sha256"] = sha256_file(out)
    record["outputs"] = [os.path.basename(out), os.path.basename(metrics)]
    _write_record(stem + ".run.yaml", record)
    return [out, metrics, stem + ".run.yaml"]


def _run_eval(cmd: Command, out: str, record) -> List[str]:
    ckpt = _load_model(cmd, record)
    ds = _dataset(cmd, ckpt.network)
    if cmd.limit is not None:
        ds = ds.subset(np.arange(min(cmd.limit, len(ds))))
    metrics = {"split": cmd.split, "n": len(ds), "clean_accuracy": eval_accuracy(ckpt.network, ds),
               "adversarial_accuracy": {}}
    for eps in cmd.eps:
        acc = eval_adversarial_accuracy(ckpt.network, ds, eps, steps=cmd.steps, step_size=cmd.step_size,
                                        restarts=cmd.restarts, seed=cmd.seed)
        metrics["adversarial_accuracy"][f"{eps:g}"] = acc
    return [_write_json(os.path.join(out, "metrics.json"), metrics)]


def _run_invert(cmd: Command, out: str, record) -> List[str]:
    from .reptools import invert_representation

    ckpt = _load_model(cmd, record)
    net = ckpt.network
    ds = _dataset(cmd, net)
    target, label = _pick(ds, cmd.index)
    if cmd.source == "noise":
        source = noise_seed(target.shape, cmd.seed)
    elif cmd.source == "pattern":
        source = pattern_seed(target.shape, cmd.seed)
    else:
        source, _ = _pick(ds, cmd.source_index, "--source-index")
    cfg = PgdConfig(steps=cmd.steps, step_size=cmd.step_size, seed=cmd.seed)
    res = invert_representation(net, target, source, cfg, BallConstraint(source, cmd.eps))
    grid = write_image_grid([target, source, res.x_result], 3, os.path.join(out, "inversion.png"))
    metrics = {"target_index": cmd.index, "target_label": label,
               "final_rep_distance": float(res.final_rep_distance),
               "normalized_rep_distance": float(res.normalized_rep_distance),
               "steps_used": int(res.steps_used),
               "pixel_distance_to_target": float(np.linalg.norm(res.x_result - target))}
    np.save(os.path.join(out, "result.npy"), res.x_result)
    return [grid, _write_json(os.path.join(out, "metrics.json"), metrics),
            os.path.join(out, "result.npy")]


def sweep_pairs(ds, count: int, seed: int):
    """Seeded (source, target) pairs of test images with different labels."""
    rng = np.random.default_rng(seed)
    pairs, idx = [], []
    while len(pairs) < count:
        i, j = rng.integers(0, len(ds), size=2)
        if ds.labels[i] == ds.labels[j]:
            continue
        pairs.append((ds.images[i], ds.images[j]))
        idx.append((int(i), int(j)))
    return pairs, idx


def _run_sweep(cmd: Command, out: str, record) -> List[str]:
    from .reptools import constrained_inversion_sweep

    ckpt = _load_model(cmd, record)
    ds = _dataset(cmd, ckpt.network)
    if len(set(ds.labels.tolist())) < 2:
        raise DatasetError("a sweep needs images from at least two classes")
    pairs, idx = sweep_pairs(ds, cmd.pairs, cmd.seed)
    cfg = PgdConfig(steps=cmd.steps, step_size=cmd.step_size, seed=cmd.seed)
    curve = constrained_inversion_sweep(ckpt.network, pairs, cmd.radii, cfg)
    record["pairs_indices"] = idx
    return [write_curve_csv(curve, os.path.join(out, "sweep.csv"))]


def _run_interp(cmd: Command, out: str, record) -> List[str]:
    from .reptools import interpolate, representations

    ckpt = _load_model(cmd, record)
    net = ckpt.network
    ds = _dataset(cmd, net)
    x1, _ = _pick(ds, cmd.index1, "--index1")
    x2, _ = _pick(ds, cmd.index2, "--index2")
    frames = interpolate(net, x1, x2, cmd.frames, PgdConfig(steps=cmd.steps, step_size=cmd.step_size,
                                                            seed=cmd.seed))
    reps = representations(net, np.stack(frames)).astype(np.float64)
    r1 = representations(net, x1[None])[0].astype(np.float64)
    d1 = np.linalg.norm(reps - r1, axis=1) / max(np.linalg.norm(r1), 1e-12)
    grid = write_image_grid(frames, len(frames), os.path.join(out, "interpolation.png"))
    metrics = {"lambda": [k / cmd.frames for k in range(cmd.frames + 1)],
               "normalized_distance_to_x1": d1.tolist()}
    return [grid, _write_json(os.path.join(out, "metrics.json"), metrics)]


def _seed_image(kind: str, shape, seed: int) -> np.ndarray:
    if kind == "gray":
        return np.full(shape, 0.5, dtype=np.float32)
    if kind == "noise":
        return noise_seed(shape, seed)
    return pattern_seed(shape, seed)


def _run_viz(cmd: Command, out: str, record) -> List[str]:
    from .reptools import representations, visualize_feature

    ckpt = _load_model(cmd, record)
    net = ckpt.network
    _check_unit(net, cmd.unit)
    x0 = _seed_image(cmd.seed_image, net.input_shape, cmd.seed)
    cfg = PgdConfig(steps=cmd.steps, step_size=cmd.step_size, seed=cmd.seed)
    x = visualize_feature(net, cmd.unit, x0, cfg, BallConstraint(x0, cmd.eps))
    before = float(representations(net, x0[None])[0, cmd.unit])
    after = float(representations(net, x[None])[0, cmd.unit])
    grid = write_image_grid([x0, x], 2, os.path.join(out, "visualization.png"))
    return [grid, _write_json(os.path.join(out, "metrics.json"),
                              {"unit": cmd.unit, "activation_before": before, "activation_after": after})]


def _run_addfeat(cmd: Command, out: str, record) -> List[str]:
    from .reptools import manipulate_feature

    ckpt = _load_model(cmd, record)
    net = ckpt.network
    _check_unit(net, cmd.unit)
    ds = _dataset(cmd, net)
    x, label = _pick(ds, cmd.index)
    cfg = PgdConfig(steps=cmd.steps, step_size=cmd.step_size, seed=cmd.seed)
    res = manipulate_feature(net, x, cmd.unit, cfg, BallConstraint(x, cmd.eps))
    grid = write_image_grid([x, res.x_result], 2, os.path.join(out, "manipulation.png"))
    metrics = {"index": cmd.index, "label": label, "unit": cmd.unit, "stop_reason": res.stop_reason,
               "steps_used": int(res.steps_used), "activation_trace": res.activation_trace}
    return [grid, _write_json(os.path.join(out, "metrics.json"), metrics)]


def _run_topk(cmd: Command, out: str, record) -> List[str]:
    from .reptools import rank_activating_images

    ckpt = _load_model(cmd, record)
    net = ckpt.network
    _check_unit(net, cmd.unit)
    ds = _dataset(cmd, net)
    if not 1 <= cmd.n <= len(ds):
        raise UsageError(f"--n must be in [1, {len(ds)}]")
    images, acts, order = rank_activating_images(net, ds, cmd.unit, cmd.n, cmd.mode)
    grid = write_image_grid(list(images), min(cmd.n, 8), os.path.join(out, "topk.png"))
    metrics = {"unit": cmd.unit, "mode": cmd.mode, "indices": [int(i) for i in order],
               "activations": [float(a) for a in acts]}
    return [grid, _write_json(os.path.join(out, "metrics.json"), metrics)]


RUNNERS = {"eval": _run_eval, "invert": _run_invert, "sweep": _run_sweep, "interp": _run_interp,
           "viz": _run_viz, "addfeat": _run_addfeat, "topk": _run_topk}


def _execute(cmd: Command) -> List[str]:
    if cmd.subcommand == "train":
        return _run_train(cmd)
    out = _out_dir(cmd)
    record = _record(cmd)
    files = RUNNERS[cmd.subcommand](cmd, out, record)
    record["outputs"] = [os.path.basename(f) for f in files]
    files.append(_write_record(os.path.join(out, "run.yaml"), record))
    return files


def execute(cmd: Command) -> int:
    """Run a parsed command; returns the process exit code."""
    from threadpoolctl import threadpool_limits

    try:
        if cmd.threads is not None:
            with threadpool_limits(limits=cmd.threads):
                files = _execute(cmd)
        else:
            files = _execute(cmd)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, CheckpointError, SuperclassMapError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ShapeError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for f in files:
        print(f)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cmd = parse(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return execute(cmd)


if __name__ == "__main__":
    sys.exit(main())
