"""Command-line entry point: ``layoutforge <subcommand> ...``.

Exit codes: 0 success, 2 config/usage error, 3 IO error, 4 numerical
divergence during training, 5 gradient check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_GRADCHECK = 5

EDGE_COLOR = np.array([255, 0, 255], dtype=np.uint8)  # overlay colour for boundary pixels

log = logging.getLogger("layoutforge")


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("LAYOUTFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _run_config(args):
    from .config import load_config

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _threads(n: int):
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, n))


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    from .synth import MANIFEST_NAME, gen_dataset

    cfg = _run_config(args)
    out = args.out or cfg.data.out
    if out is None:
        raise UsageError("synth needs --out (or data.out in the config)")
    if args.n < 0:
        raise UsageError("--n must be >= 0")
    manifest = gen_dataset(cfg.synth, args.n, out)
    print(f"wrote {len(manifest)} samples to {Path(out) / MANIFEST_NAME}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .model.train import TrainingDiverged, train
    from .synth import DatasetManifest

    cfg = _run_config(args)
    manifest_path = args.data or cfg.data.train
    out = args.out or cfg.data.out
    if manifest_path is None or out is None:
        raise UsageError("train needs a manifest (--data or data.train) and an output dir (--out or data.out)")
    opt = cfg.optimizer
    if args.epochs is not None:
        from dataclasses import replace

        opt = replace(opt, epochs=args.epochs)
    manifest = DatasetManifest.load(manifest_path)
    try:
        res = train(
            manifest,
            cfg.model_config(),
            cfg.objective_config(),
            cfg.augment,
            opt,
            render=cfg.synth,
            taxonomy=cfg.synth.load_taxonomy(),
            out_dir=out,
        )
    except TrainingDiverged as e:
        print(f"error: {e}; diagnostics in {Path(out) / 'divergence.json'}", file=sys.stderr)
        return EXIT_DIVERGED
    Path(out, "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    last = res.history[-1] if res.history else None
    if last:
        print(f"trained {opt.epochs} epochs: loss {last['loss']:.4f}, train PE {last['train_pe']:.2f}%")
    print(f"checkpoint: {Path(out) / 'checkpoint.bin'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .metrics import evaluate
    from .model.checkpoint import load_checkpoint
    from .model.infer import infer
    from .synth import DatasetManifest

    cfg = _run_config(args)
    manifest_path = args.manifest or cfg.data.eval
    if manifest_path is None:
        raise UsageError("eval needs --manifest (or data.eval in the config)")
    manifest = DatasetManifest.load(manifest_path)
    predict = None
    if not args.gt:
        if args.checkpoint is None:
            raise UsageError("eval needs --checkpoint unless --gt is given")
        mcfg, params, _ = load_checkpoint(args.checkpoint)

        def predict(image):
            return infer(image, params, mcfg)

    out = Path(args.out) if args.out else Path(manifest.root) / "eval_report.json"
    report = evaluate(manifest, predict, gt_mode=args.gt, threads=args.threads, out_path=out)
    print(report.table())
    print(f"report: {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import reports_json
    from .gradsuite import KERNELS, run_suite

    if args.inject_bug is not None and args.inject_bug not in (*KERNELS, "model"):
        raise UsageError(f"--inject-bug must name one of {sorted([*KERNELS, 'model'])}")
    seed = 0 if args.seed is None else args.seed
    reports = run_suite(seed=seed, points=args.points, inject=args.inject_bug)
    for r in reports:
        print(r.line())
    if args.out:
        Path(args.out).write_text(reports_json(reports) + "\n")
    failed = [r for r in reports if not r.passed]
    if failed:
        for r in failed:
            print(f"FAILED {r.name}: worst coordinate {r.worst_index}", file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


def palette_image(mask: np.ndarray, edges: bool = False) -> np.ndarray:
    """uint8 RGB rendering with the fixed palette; boundary pixels in EDGE_COLOR when ``edges``."""
    from .losses import gt_edge_map
    from .synth import PALETTE, to_uint8

    img = to_uint8(PALETTE[mask])
    if edges:
        img[gt_edge_map(mask) > 0] = EDGE_COLOR
    return img


def _read_mask(path: Path) -> np.ndarray:
    from .core import PolyLayout, load_mask
    from .synth import rasterize

    if path.suffix.lower() == ".json":
        return rasterize(PolyLayout.load(path))
    return load_mask(path)


def cmd_render(args) -> int:
    from .synth import save_image

    mask = _read_mask(Path(args.input))
    if mask.max(initial=0) > 5:
        raise ValueError(f"{args.input}: label {int(mask.max())} outside 0..5")
    save_image(palette_image(mask, args.edges), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def parse_edge(text: str) -> tuple[int, int]:
    for sep in ("->", ":", ","):
        if sep in text:
            a, b = text.split(sep, 1)
            try:
                return int(a), int(b)
            except ValueError:
                break
    raise UsageError(f"edge {text!r} must look like PARENT:CHILD, e.g. 0:2")


def cmd_degen_preview(args) -> int:
    from .core import PolyLayout, build_dag, save_mask, validate_layout
    from .degen import degenerate
    from .rng import make_rng
    from .synth import rasterize, save_image

    cfg = _run_config(args)
    taxonomy = cfg.synth.load_taxonomy()
    dag = build_dag(taxonomy)
    poly = PolyLayout.load(args.sample)
    edge = parse_edge(args.edge)
    try:
        after = degenerate(poly, edge, make_rng(cfg.augment.seed, "degen-preview"), taxonomy, dag)
    except ValueError as e:
        raise UsageError(str(e)) from e
    out = Path(args.out or cfg.data.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    before_mask, after_mask = rasterize(poly), rasterize(after)
    save_image(palette_image(before_mask), out / "before.png")
    save_image(palette_image(after_mask), out / "after.png")
    save_mask(after_mask, out / "after_mask.png")
    after.save(out / "after_poly.json")
    rep = validate_layout(after_mask, taxonomy)
    print(f"edge {edge[0]} -> {edge[1]}: {rep.summary()}")
    print(f"wrote {out / 'before.png'} and {out / 'after.png'}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON file")
    common.add_argument("--seed", type=int, help="seed for every random stream (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker/BLAS threads (default 1, reproducible)")
    common.add_argument("--out", help="output path (file or directory depending on the subcommand)")

    p = argparse.ArgumentParser(prog="layoutforge", description="Synthetic room-layout data, training and evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--n", type=int, required=True, help="number of samples")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="train the toy segmenter")
    s.add_argument("--data", help="training manifest (overrides data.train)")
    s.add_argument("--epochs", type=int, help="override optimizer.epochs")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a manifest")
    s.add_argument("--manifest", help="evaluation manifest (overrides data.eval)")
    s.add_argument("--checkpoint", help="checkpoint file")
    s.add_argument("--gt", action="store_true", help="score the ground truth against itself")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every gradient")
    s.add_argument("--points", type=int, default=100, help="random points per kernel")
    s.add_argument("--inject-bug", metavar="KERNEL", help="test hook: double one kernel's analytic gradient")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("render", parents=[common], help="render a mask PNG or layout JSON with the palette")
    s.add_argument("input", help="mask .png or poly .json")
    s.add_argument("--edges", action="store_true", help="overlay label boundaries")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("degen-preview", parents=[common], help="before/after images for one degeneration edge")
    s.add_argument("sample", help="poly .json of the parent layout")
    s.add_argument("--edge", required=True, help="PARENT:CHILD room-type ids")
    s.set_defaults(func=cmd_degen_preview)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    if args.command == "render" and not args.out:
        print("error: render needs --out", file=sys.stderr)
        return EXIT_CONFIG
    from .config import ConfigError
    from .model.checkpoint import CheckpointError

    try:
        with _threads(args.threads):
            return args.func(args)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        # malformed input files (bad JSON, bad labels) are IO-side problems
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
