"""Command-line entry point.

Exit codes: 0 success, 1 usage/config/task error, 2 I/O or format error,
3 numeric failure. Every failing run prints one diagnostic line to stderr
and writes no outputs.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines, lossnet as ln, pipelines
from .config import TaskConfig, load_config
from .errors import ConfigError, FormatError, NumericError, ShapeError, TaskMismatchError
from .imageio import load_hdr, load_image, quantize, save_image, to_tensor
from .transformnets import load_net, save_net

LOSSNET_ENV = "DFC_DIT_LOSSNET"
EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_training_flags(p):
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--lossnet", help=f"loss-network weight archive (default: ${LOSSNET_ENV})")
    p.add_argument("--taps", help="comma-separated loss-network taps, e.g. conv1_1,conv2_1")
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--iterations", type=int, help="exact optimizer steps (overrides --epochs)")
    p.add_argument("--size", dest="train_size", type=int, help="training crop size in pixels")
    p.add_argument("--hidden", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="0 = auto, 1 = fully deterministic")


def build_parser():
    parser = _Parser(prog="dfc-dit", description="Train and run small CNNs for downscaling, decolorization and HDR tone mapping.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    for verb, what in (("train-downscale", "downscaling"), ("train-decolorize", "decolorization")):
        p = sub.add_parser(verb, help=f"train a {what} network offline on an image directory")
        p.add_argument("--corpus", help="directory of training images")
        p.add_argument("--out", dest="output", help="output weight archive")
        _add_training_flags(p)

    p = sub.add_parser("tonemap", help="tone-map one Radiance HDR file with an online-trained network")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--eps-log", dest="eps_log", type=float)
    p.add_argument("--steps", dest="tonemap_steps", type=int)
    p.add_argument("--save-net", help="also write the fitted network archive")
    _add_training_flags(p)

    p = sub.add_parser("apply", help="run a trained downscaler or decolorizer on an image")
    p.add_argument("--net", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--task", choices=("downscale", "decolorize"), help="fail unless the net was trained for this task")
    p.add_argument("--threads", type=int, default=0)

    p = sub.add_parser("baseline", help="classical downscaling or luminance decolorization")
    p.add_argument("--method", required=True, choices=baselines.DOWNSCALE_KINDS + ("luminance",))
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)

    p = sub.add_parser("eval", help="compare two images; prints one number")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", choices=("ssim", "perceptual"), default="ssim")
    p.add_argument("--lossnet")
    p.add_argument("--taps", default="conv1_1,conv2_1,conv3_1")

    p = sub.add_parser("export-weights-template", help="print the weight-archive header skeleton")
    p.add_argument("--architecture", choices=ln.ARCHITECTURES, default="vgg19")
    p.add_argument("--widths", help="comma-separated block widths (vgg19-narrow / tiny)")
    p.add_argument("--out", dest="output", help="write to a file instead of stdout")
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

_CONFIG_FLAGS = (
    "taps", "learning_rate", "batch_size", "epochs", "iterations", "train_size", "hidden", "depth",
    "seed", "threads", "alpha", "gamma", "eps_log", "tonemap_steps", "corpus", "output", "lossnet",
)


def _config_from(args) -> TaskConfig:
    overrides = {k: getattr(args, k, None) for k in _CONFIG_FLAGS}
    return load_config(getattr(args, "config", None), overrides)


def _resolve_lossnet(path):
    path = path or os.environ.get(LOSSNET_ENV)
    if not path:
        raise UsageError(f"no loss network given: pass --lossnet or set {LOSSNET_ENV}")
    return ln.load_weights(path)


@contextlib.contextmanager
def _threads(n):
    if not n:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n):
        yield


def _write_report(output, command, config=None, report=None, started=None, **extra):
    data = {"command": command}
    if config is not None:
        data["config"] = config.to_dict()
    if report is not None:
        data["report"] = report.to_dict()
    if started is not None:
        data["total_seconds"] = time.perf_counter() - started
    data.update(extra)
    Path(f"{output}.report.json").write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def _cmd_train(args):
    task = "downscale" if args.verb == "train-downscale" else "decolorize"
    started = time.perf_counter()
    cfg = _config_from(args)
    if not cfg.corpus or not cfg.output:
        raise UsageError(f"{args.verb} needs --corpus and --out (or corpus/output in the config)")
    net_l = _resolve_lossnet(cfg.lossnet)
    try:
        corpus = pipelines.load_corpus(cfg.corpus, cfg.train_size)
    except (ValueError, FileNotFoundError, NotADirectoryError) as exc:
        raise FormatError(str(exc)) from None
    train = pipelines.train_downscaler if task == "downscale" else pipelines.train_decolorizer
    with _threads(cfg.threads):
        net, report = train(corpus, cfg, net_l)
    save_net(net, cfg.output)
    _write_report(cfg.output, args.verb, cfg, report, started, corpus_size=int(corpus.shape[0]),
                  taps_used=list(cfg.taps_for(task)))
    return EXIT_OK


def _cmd_tonemap(args):
    started = time.perf_counter()
    cfg = _config_from(args)
    net_l = _resolve_lossnet(cfg.lossnet)
    hdr = load_hdr(args.input)
    with _threads(cfg.threads):
        ldr, report, net = pipelines.tonemap_online(hdr, cfg, net_l)
    save_image(ldr, args.output)
    if args.save_net:
        save_net(net, args.save_net)
    _write_report(args.output, "tonemap", cfg, report, started, input=str(args.input),
                  taps_used=list(cfg.taps_for("tonemap")))
    return EXIT_OK


def _cmd_apply(args):
    started = time.perf_counter()
    net = load_net(args.net)
    if args.task and net.task != args.task:
        raise TaskMismatchError(f"{args.net} is a {net.task} net, not a {args.task} net")
    image = load_image(args.input)
    with _threads(args.threads):
        out = pipelines.apply(net, image)
    save_image(out, args.output)
    _write_report(args.output, "apply", started=started, task=net.task, net=str(args.net), input=str(args.input))
    return EXIT_OK


def _cmd_baseline(args):
    started = time.perf_counter()
    image = load_image(args.input)
    if args.method == "luminance":
        if image.ndim != 3:
            raise TaskMismatchError("luminance baseline needs an RGB image")
        out = baselines.decolorize_baseline(image)
    else:
        out = quantize(baselines.downscale_baseline(image, args.method, args.factor))
    save_image(out, args.output)
    _write_report(args.output, "baseline", started=started, method=args.method, factor=args.factor, input=str(args.input))
    return EXIT_OK


def _gray(img):
    from .imageio import luminance

    return img.astype(np.float64) if img.ndim == 2 else luminance(img)


def _cmd_eval(args):
    a, b = load_image(args.a), load_image(args.b)
    if args.metric == "ssim":
        value = baselines.ssim(_gray(a), _gray(b))
    else:
        net_l = _resolve_lossnet(args.lossnet)
        if a.ndim != 3 or b.ndim != 3:
            raise TaskMismatchError("perceptual metric needs RGB images")
        taps = [t for t in args.taps.split(",") if t]
        value = ln.perceptual_loss(net_l, to_tensor(a), to_tensor(b), taps)
    print(repr(float(value)))
    return EXIT_OK


def _cmd_template(args):
    widths = [int(w) for w in args.widths.split(",")] if args.widths else None
    header = ln.header_template(args.architecture, widths)
    text = json.dumps(header, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


_COMMANDS = {
    "train-downscale": _cmd_train,
    "train-decolorize": _cmd_train,
    "tonemap": _cmd_tonemap,
    "apply": _cmd_apply,
    "baseline": _cmd_baseline,
    "eval": _cmd_eval,
    "export-weights-template": _cmd_template,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.verb](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (UsageError, ConfigError, TaskMismatchError, ShapeError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"dfc-dit: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"dfc-dit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"dfc-dit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"dfc-dit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
