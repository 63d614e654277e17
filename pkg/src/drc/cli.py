"""Command-line entry point.

Subcommands: render, dataset, eval, infer, cachedump. Progress and
telemetry go to stderr; image/data payloads go to files (or a single
machine-readable line on stdout for `eval`).

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation error.
A SIGINT during a progressive drc render finalizes the current pass and
still writes the output.
"""

from __future__ import annotations

import argparse
import signal
import sys

import numpy as np

from .errors import DrcError
from .imageio import tonemap, write_pfm, write_png
from .integrators import RenderConfig, render
from .sampler import SAMPLER_KINDS


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    p = _Parser(prog="drc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render a scene")
    r.add_argument("--scene", required=True)
    r.add_argument("--mode", choices=("pt", "direct", "drc"), default="pt")
    r.add_argument("--spp", type=int, default=16)
    r.add_argument("--direct-spp", type=int, default=8)
    r.add_argument("--indirect-tasks", type=int, default=None)
    r.add_argument("--passes", type=int, default=None)
    r.add_argument("--weights")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--threads", type=int, default=0)
    r.add_argument("--sampler", choices=SAMPLER_KINDS, default="independent")
    r.add_argument("--mis-samples", type=int, default=16)
    r.add_argument("--max-depth", type=int, default=8)
    r.add_argument("--exposure", type=float, default=1.0)
    r.add_argument("--cache-out", help="write the entry pool as a DRCC dump (drc mode)")
    r.add_argument("--out", required=True, help="output image (.pfm or .png)")

    d = sub.add_parser("dataset", help="generate training examples")
    d.add_argument("--scene", required=True)
    d.add_argument("--grid", required=True, help="NxM grid, e.g. 16x16")
    d.add_argument("--ref-spp", type=int, default=1024)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--max-depth", type=int, default=8)
    d.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="compare two images")
    e.add_argument("--ref", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--metrics", default="l1,ssim,pngsize")
    e.add_argument("--exposure", type=float, default=1.0)

    i = sub.add_parser("infer", help="run the network on a stored input stack")
    i.add_argument("--weights", required=True)
    i.add_argument("--input", required=True, help="DRCD dataset file")
    i.add_argument("--index", type=int, default=0)
    i.add_argument("--out", required=True, help="predicted map (.pfm)")

    c = sub.add_parser("cachedump", help="decode a binary cache dump to text")
    c.add_argument("--in", dest="infile", required=True)
    c.add_argument("--out", required=True)
    return p


def _write_image(path, image, exposure):
    if path.endswith(".png"):
        write_png(path, tonemap(image, exposure))
    else:
        write_pfm(path, np.asarray(image, dtype=np.float32))


def _cmd_render(args):
    from .scene import load_scene

    if args.mode == "drc" and not args.weights:
        raise _UsageError("--weights is required for --mode drc")
    if args.indirect_tasks is not None and args.passes is not None:
        raise _UsageError("--indirect-tasks and --passes are mutually exclusive")
    scene = load_scene(args.scene)
    config = RenderConfig(
        spp=args.spp, direct_spp=args.direct_spp,
        indirect_tasks=args.indirect_tasks if args.indirect_tasks is not None else 5,
        passes=args.passes, max_path_depth=args.max_depth,
        mis_samples=args.mis_samples, seed=args.seed, threads=args.threads,
        sampler_kind=args.sampler, exposure=args.exposure)

    weights = None
    if args.mode == "drc":
        from .cnn import load_weights

        weights = load_weights(args.weights)

    interrupted = {"flag": False}

    def on_sigint(signum, frame):
        interrupted["flag"] = True
        print("interrupt: finalizing current pass", file=sys.stderr)

    previous = signal.signal(signal.SIGINT, on_sigint)
    try:
        image, telemetry = render(scene, config, mode=args.mode, weights=weights,
                                  interrupt=lambda: interrupted["flag"])
    finally:
        signal.signal(signal.SIGINT, previous)

    for p in telemetry.get("passes", []):
        print(f"pass {p['index']}: r={p['r']} tasks={p['tasks']} "
              f"entries={p['entries']} {p['seconds']:.2f}s", file=sys.stderr)
    print(f"{args.mode}: {telemetry.get('seconds', 0):.2f}s "
          f"nonfinite={telemetry.get('nonfinite', 0)}", file=sys.stderr)
    _write_image(args.out, image, args.exposure)
    if args.cache_out and "state" in telemetry:
        from .cache import write_cache_dump

        write_cache_dump(telemetry["state"].entries(), args.cache_out)
    return 0


def _cmd_dataset(args):
    from .dataset import generate_examples, write_dataset
    from .scene import load_scene

    try:
        nx, ny = (int(t) for t in args.grid.lower().split("x"))
    except ValueError:
        raise _UsageError(f"--grid expects NxM, got {args.grid!r}")
    scene = load_scene(args.scene)
    config = RenderConfig(max_path_depth=args.max_depth)

    def progress(done, total):
        print(f"\rexamples {done}/{total}", end="", file=sys.stderr)

    examples = generate_examples(scene, (nx, ny), ref_spp=args.ref_spp,
                                 seed=args.seed, config=config,
                                 progress=progress)
    print(file=sys.stderr)
    write_dataset(examples, args.out)
    print(f"wrote {len(examples)} examples to {args.out}", file=sys.stderr)
    return 0


def _cmd_eval(args):
    from .imageio import read_pfm
    from .metrics import l1_diff, png_size_proxy, ssim

    ref = read_pfm(args.ref)
    test = read_pfm(args.test)
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    record = {}
    for m in wanted:
        if m == "l1":
            record["l1"] = l1_diff(ref, test)
        elif m == "ssim":
            a = np.clip(ref * args.exposure, 0, 1) ** (1 / 2.2)
            b = np.clip(test * args.exposure, 0, 1) ** (1 / 2.2)
            record["ssim"] = ssim(a, b)
        elif m == "pngsize":
            record["pngsize_ref"] = png_size_proxy(tonemap(ref, args.exposure))
            record["pngsize_test"] = png_size_proxy(tonemap(test, args.exposure))
        else:
            raise _UsageError(f"unknown metric {m!r}")
    print(" ".join(f"{k}={v:.6g}" for k, v in record.items()))
    print(f"{'metric':<14}{'value':>14}", file=sys.stderr)
    for k, v in record.items():
        print(f"{k:<14}{v:>14.6g}", file=sys.stderr)
    return 0


def _cmd_infer(args):
    from .cnn import forward, load_weights
    from .dataset import read_dataset

    net = load_weights(args.weights)
    examples = read_dataset(args.input)
    if not (0 <= args.index < len(examples)):
        raise _UsageError(f"--index out of range (dataset has {len(examples)})")
    e = examples[args.index]
    pred = forward(net, e.input) * e.s_r  # back to physical radiance
    write_pfm(args.out, np.moveaxis(pred, 0, -1).astype(np.float32))
    print(f"wrote prediction for example {args.index} "
          f"(scene {e.scene_id!r}, pixel {e.pixel})", file=sys.stderr)
    return 0


def _cmd_cachedump(args):
    from .cache import read_cache_dump

    entries = read_cache_dump(args.infile)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("x,y,px,py,pz,nx,ny,nz,r,g,b\n")
        for e in entries:
            row = [e.pixel[0], e.pixel[1], *e.position, *e.normal,
                   *e.indirect_radiance]
            f.write(",".join(f"{v:.7g}" if isinstance(v, float) else str(v)
                             for v in row) + "\n")
    print(f"decoded {len(entries)} entries", file=sys.stderr)
    return 0


_COMMANDS = {
    "render": _cmd_render,
    "dataset": _cmd_dataset,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "cachedump": _cmd_cachedump,
}


def run(argv):
    """Parse and execute; returns the process exit status."""
    try:
        args = _build_parser().parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    except DrcError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
