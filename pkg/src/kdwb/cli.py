"""Command-line entry point: ``kdwb <subcommand> ...``.

Dataset locators (one flat string per dataset)::

    mnist:<dir>        IDX files (train-/t10k- split chosen by role)
    cifar10:<dir>      CIFAR-10 binary batches
    dir:<path>         netpbm directory (unlabeled)
    noise:n=..,lo=..,hi=..      uniform noise, generated in network input space
    gauss:n=..,mean=..,std=..   Gaussian noise, generated in network input space
    shapes:n=..        generated shapes

File locators accept trailing ``,n=<count>`` (seeded subsample) and
``,split=train|test`` options.

Exit codes: 0 success, 2 usage/config/file error, 3 training-time failure.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .complexity import complexity_profile, profile_report
from .data import (Dataset, FormatError, adapt_to, gen_gaussian_noise, gen_shapes,
                   gen_uniform_noise, load_cifar10_bin, load_image_dir, load_mnist_dir,
                   save_image_dir)
from .distill import (TrainConfig, TrainingError, distill_augmented, distill_data_free,
                      evaluate, train_teacher)
from .engine import ArchParseError, ShapeError, init_network, parse_arch
from .io import load_checkpoint, save_checkpoint, write_metrics_csv

log = logging.getLogger("kdwb")

GENERATED = ("noise", "gauss", "shapes")
_OPT = re.compile(r",(\w+)=([^,]*)$")


class ConfigError(ValueError):
    """Invalid command-line configuration."""


def _parse_opts(text):
    opts = {}
    for part in filter(None, text.split(",")):
        if "=" not in part:
            raise ConfigError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        opts[k.strip()] = v.strip()
    return opts


def parse_locator(loc: str):
    """Split ``kind:rest`` into (kind, path_or_None, options)."""
    if ":" not in loc:
        raise ConfigError(f"dataset locator needs a kind prefix: {loc!r}")
    kind, rest = loc.split(":", 1)
    if kind in GENERATED:
        return kind, None, _parse_opts(rest)
    if kind not in ("mnist", "cifar10", "dir"):
        raise ConfigError(f"unknown dataset kind {kind!r} in {loc!r}")
    opts = {}
    while True:
        m = _OPT.search(rest)
        if not m:
            break
        opts[m.group(1)] = m.group(2)
        rest = rest[:m.start()]
    if not rest:
        raise ConfigError(f"missing path in {loc!r}")
    return kind, rest, opts


def _num(opts, key, default, cast=float):
    try:
        return cast(opts.get(key, default))
    except ValueError:
        raise ConfigError(f"bad value for {key}: {opts[key]!r}") from None


def load_locator(loc, role, input_shape, mean_shift=None, seed=0) -> Dataset:
    """Materialise a locator in network input space (C, H, W).

    File and shape data are pixel-space [0, 1] and get ``mean_shift``
    subtracted; noise kinds are generated directly in input space.
    ``role`` is "train", "test" or "stimulus" (labels dropped).
    """
    kind, path, opts = parse_locator(loc)
    split = opts.get("split", "test" if role == "test" else "train")
    c, h, w = input_shape
    if kind == "noise":
        return gen_uniform_noise(_num(opts, "n", 1000, int), input_shape,
                                 _num(opts, "lo", -0.3), _num(opts, "hi", 0.7), seed)
    if kind == "gauss":
        return gen_gaussian_noise(_num(opts, "n", 1000, int), input_shape,
                                  _num(opts, "mean", 0.0), _num(opts, "std", 1.0), seed)
    if kind == "shapes":
        ds = gen_shapes(_num(opts, "n", 1000, int), h, w, seed)
    elif kind == "mnist":
        ds = load_mnist_dir(path, split)
    elif kind == "cifar10":
        ds = load_cifar10_bin(path, split)
    else:
        ds = load_image_dir(path, target_shape=input_shape, grayscale=(c == 1))
    if "n" in opts:
        n = _num(opts, "n", 0, int)
        if n < len(ds):
            ds = ds.subset(np.sort(np.random.default_rng(seed).permutation(len(ds))[:n]))
    if role == "stimulus" and ds.labels is not None:
        ds = ds.unlabeled()
    return adapt_to(ds, input_shape, mean_shift)


def _shape_of(loc):
    """Native (C, H, W) of a file locator, used when no network fixes it."""
    kind, path, opts = parse_locator(loc)
    if kind == "mnist":
        return (1, 28, 28)
    if kind == "cifar10":
        return (3, 32, 32)
    raise ConfigError(f"cannot infer input shape from {loc!r}; pass --input-shape")


def _parse_shape(text):
    try:
        dims = tuple(int(v) for v in re.split(r"[x×,]", text))
    except ValueError:
        raise ConfigError(f"bad shape {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise ConfigError(f"shape must be CxHxW, got {text!r}")
    return dims


def _config(args) -> TrainConfig:
    return TrainConfig(lr=args.lr, momentum=args.momentum, batch_size=args.batch_size,
                       max_epochs=args.max_epochs, beta=args.beta, temperature=args.temperature,
                       stop_tol=args.stop_tol, stop_patience=args.stop_patience, seed=args.seed)


def _finish(args, net, norm, metrics):
    if args.out:
        write_metrics_csv(metrics, args.out, record_time=args.record_time)
    if getattr(args, "out_model", None):
        save_checkpoint(net, norm, args.out_model)
    last = metrics.records[-1]
    print(f"epochs={len(metrics)} final_loss={last.train_loss:.6f} "
          f"final_acc={last.test_acc:.6f} best_acc={metrics.best_accuracy:.6f}")


# ------------------------------------------------------------- subcommands

def cmd_train_teacher(args):
    cfg = _config(args)
    shape = _parse_shape(args.input_shape) if args.input_shape else _shape_of(args.train)
    raw = load_locator(args.train, "train", shape, None, cfg.seed)
    if raw.labels is None:
        raise ConfigError(f"training data {args.train!r} has no labels")
    mean = float(raw.images.mean(dtype=np.float64))
    norm = np.array([mean], dtype=np.float32)
    train = adapt_to(raw, shape, norm)
    test = load_locator(args.test, "test", shape, norm, cfg.seed)
    net = init_network(args.arch, shape, cfg.seed)
    net, metrics = train_teacher(net, train, test, cfg)
    _finish(args, net, norm, metrics)


def _student_for(args, teacher, cfg):
    arch = args.student_arch or teacher.arch
    return init_network(arch, teacher.input_shape, cfg.seed)


def cmd_distill(args):
    cfg = _config(args)
    teacher, norm = load_checkpoint(args.teacher)
    stim = load_locator(args.stimulus, "stimulus", teacher.input_shape, norm, cfg.seed)
    test = load_locator(args.test, "test", teacher.input_shape, norm, cfg.seed)
    student = _student_for(args, teacher, cfg)
    student, metrics = distill_data_free(teacher, student, stim, test, cfg)
    _finish(args, student, norm, metrics)


def cmd_augment(args):
    cfg = _config(args)
    teacher, norm = load_checkpoint(args.teacher)
    labeled = load_locator(args.labeled, "train", teacher.input_shape, norm, cfg.seed)
    if args.stimulus:
        stim = load_locator(args.stimulus, "stimulus", teacher.input_shape, norm, cfg.seed)
    else:
        stim = Dataset(np.zeros((0,) + teacher.input_shape, np.float32))
    test = load_locator(args.test, "test", teacher.input_shape, norm, cfg.seed)
    student = _student_for(args, teacher, cfg)
    student, metrics = distill_augmented(teacher, student, labeled, stim, test, cfg)
    _finish(args, student, norm, metrics)


def cmd_eval(args):
    net, norm = load_checkpoint(args.model)
    test = load_locator(args.test, "test", net.input_shape, norm, args.seed)
    acc, errors = evaluate(net, test)
    print(f"accuracy={acc:.6f} errors={errors} n={len(test)}")


def cmd_complexity(args):
    teacher, norm = load_checkpoint(args.teacher)
    profiles = []
    for spec in args.stimulus:
        m = re.match(r"^([\w.-]+)=(\w+:.*)$", spec)
        name, loc = (m.group(1), m.group(2)) if m else (None, spec)
        ds = load_locator(loc, "stimulus", teacher.input_shape, norm, args.seed)
        profiles.append(complexity_profile(teacher, ds, name or loc))
    report = profile_report(profiles)
    if args.out:
        Path(args.out).write_text(report.to_csv("input"))
    sys.stdout.write(str(report))


def cmd_gen_stimulus(args):
    h, w = (int(v) for v in re.split(r"[x×]", args.hw))
    shape = (args.channels, h, w)
    if args.kind == "shapes":
        ds = gen_shapes(args.n, h, w, args.seed)
        if args.channels != 1:
            ds = adapt_to(ds, shape)
    elif args.kind == "noise":
        ds = gen_uniform_noise(args.n, shape, args.lo, args.hi, args.seed)
    else:
        ds = gen_gaussian_noise(args.n, shape, args.mean, args.std, args.seed)
    clipped = np.count_nonzero((ds.images < 0) | (ds.images > 1))
    if clipped:
        log.warning("%d values outside [0, 1] clipped when writing netpbm", clipped)
    out = save_image_dir(ds, args.out, prefix=args.kind)
    print(f"wrote {len(ds)} images to {out}")


# ------------------------------------------------------------------ parser

def _train_flags(p):
    d = TrainConfig()
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--momentum", type=float, default=d.momentum)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--max-epochs", type=int, default=d.max_epochs)
    p.add_argument("--beta", type=float, default=d.beta)
    p.add_argument("--temperature", type=float, default=d.temperature)
    p.add_argument("--stop-tol", type=float, default=d.stop_tol)
    p.add_argument("--stop-patience", type=int, default=d.stop_patience)
    p.add_argument("--out", help="metrics CSV path")
    p.add_argument("--out-model", help="checkpoint path for the trained network")
    p.add_argument("--record-time", action="store_true",
                   help="write wall seconds into the CSV (breaks byte-identical reruns)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdwb", description="Knowledge-distillation workbench: teachers, stimulus, complexity.",
        epilog="Exit codes: 0 success, 2 usage/config/file error, 3 training failure.")
    parser.add_argument("--version", action="version", version=f"kdwb {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="no per-epoch lines on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="supervised training on labeled data")
    p.add_argument("--arch", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--input-shape", help="CxHxW (default: native shape of --train)")
    p.add_argument("--seed", type=int, default=0)
    _train_flags(p)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill", help="data-free distillation on unlabeled stimulus")
    p.add_argument("--teacher", required=True)
    p.add_argument("--student-arch", help="default: the teacher's architecture")
    p.add_argument("--stimulus", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--seed", type=int, default=0)
    _train_flags(p)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("augment", help="distillation on labeled data plus stimulus")
    p.add_argument("--teacher", required=True)
    p.add_argument("--student-arch")
    p.add_argument("--labeled", required=True)
    p.add_argument("--stimulus")
    p.add_argument("--test", required=True)
    p.add_argument("--seed", type=int, default=0)
    _train_flags(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("eval", help="test accuracy of a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("complexity", help="first-layer activation statistics per stimulus")
    p.add_argument("--teacher", required=True)
    p.add_argument("--stimulus", action="append", required=True,
                   help="[name=]locator, repeatable")
    p.add_argument("--out", help="report CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("gen-stimulus", help="write generated stimulus as PGM/PPM files")
    p.add_argument("--kind", choices=GENERATED, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--hw", default="28x28")
    p.add_argument("--channels", type=int, choices=(1, 3), default=1)
    p.add_argument("--lo", type=float, default=-0.3)
    p.add_argument("--hi", type=float, default=0.7)
    p.add_argument("--mean", type=float, default=0.0)
    p.add_argument("--std", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_stimulus)
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    # attached per invocation so in-process callers never keep a stale stream
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(handler)
    try:
        args.func(args)
    except TrainingError as e:
        print(f"kdwb: training failed: {e}", file=sys.stderr)
        return 3
    except (ConfigError, FormatError, ArchParseError, ShapeError, ValueError, OSError, KeyError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"kdwb {args.command}: error: {msg}", file=sys.stderr)
        return 2
    finally:
        log.removeHandler(handler)
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
