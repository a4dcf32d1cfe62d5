"""Command-line interface.

Subcommands mirror the pipeline stages:

    extract    write undistorted patches for every (direction, angle of view)
    pipeline   full ERP saliency estimation (plus metrics when ground truth given)
    biasfit    fit a bias grid on (image, target-map) pairs
    attnfit    fit attention parameters on the same kind of pairs
    evaluate   score a predicted map against fixations and/or a target map
    plotprior  average saliency maps into a prior image

Every command validates its configuration before writing any file, and each
output directory receives a ``manifest.json`` recording config, input hashes,
output hashes, and timings.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import osb1
from .config import PipelineConfig
from .errors import OdisphereError, ConfigError
from .geometry import ViewFrustum
from .images import load_image, load_map, save_png
from .metrics import evaluate as evaluate_maps
from .metrics import read_fixations
from .patching import extract_patch, generate_view_directions
from .pfm import read_pfm, write_pfm
from .pipeline import (
    RunManifest,
    StageTimer,
    fit_attention,
    fit_bias,
    make_backend,
    patch_id,
    run_pipeline,
)
from .saliency import l1_normalize

ENV_THREADS = "ODISPHERE_THREADS"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--arch", type=int, choices=(1, 2, 3, 4), help="integration architecture")
    parser.add_argument(
        "--bias", choices=("none", "constant", "single", "multi"), help="bias mode"
    )
    parser.add_argument("--aovs", help="comma-separated angles of view in degrees, e.g. 100,110,120")
    parser.add_argument("--interval-deg", type=float, help="viewing-direction interval in degrees")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--threads", type=int, help=f"worker threads (or ${ENV_THREADS})")


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.arch is not None:
        changes["arch"] = args.arch
    if args.bias is not None:
        changes["bias_mode"] = args.bias
    if args.aovs is not None:
        try:
            changes["aovs_deg"] = tuple(float(a) for a in args.aovs.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --aovs value {args.aovs!r}") from exc
    if args.interval_deg is not None:
        changes["interval_deg"] = args.interval_deg
    if args.threads is not None:
        changes["threads"] = args.threads
    elif os.environ.get(ENV_THREADS):
        changes["threads"] = int(os.environ[ENV_THREADS])
    return cfg.replace(**changes) if changes else cfg


def _write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest.as_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def _read_pairs(path: Path) -> list[tuple[np.ndarray, np.ndarray]]:
    """Dataset file: one `image_path,target_map_path` pair per line."""
    pairs = []
    base = path.parent
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ConfigError(f"{path}:{ln}: expected `image,target` per line")
        img = load_image(_resolve(base, parts[0]))
        tgt = load_map(_resolve(base, parts[1]))
        pairs.append((img, tgt))
    if not pairs:
        raise ConfigError(f"{path}: empty dataset")
    return pairs


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def _write_loss_csv(path: Path, losses) -> None:
    lines = ["step,loss"]
    lines.extend(f"{i},{v!r}" for i, v in enumerate(losses))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    erp = load_image(args.image)
    out_dir = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command="extract", config=cfg.as_dict())
    manifest.add_input(args.image)
    timer = StageTimer(manifest)
    grid = generate_view_directions(cfg.interval)
    with timer("extract"):
        outputs = []
        for aov_deg in cfg.aovs_deg:
            for i, d in enumerate(grid):
                f = ViewFrustum(d, math.radians(aov_deg), cfg.patch_size)
                patch = extract_patch(erp, f, cfg.sampler)
                path = out_dir / f"{patch_id(i, aov_deg)}.pfm"
                write_pfm(path, patch.data)
                outputs.append(path)
    for p in outputs:
        manifest.add_output(p)
    _write_manifest(out_dir, manifest)
    print(f"wrote {len(outputs)} patches to {out_dir}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    erp = load_image(args.image)
    bias = osb1.read_bias(args.bias_params) if args.bias_params else None
    attn = osb1.read_attention(args.attn_params) if args.attn_params else None
    fixations = read_fixations(args.fixations) if args.fixations else None
    gt = load_map(args.gt_map) if args.gt_map else None

    out_dir = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command="pipeline", config=cfg.as_dict())
    manifest.add_input(args.image)
    for p in (args.bias_params, args.attn_params, args.fixations, args.gt_map):
        if p:
            manifest.add_input(p)
    timer = StageTimer(manifest)
    with timer("pipeline"):
        result = run_pipeline(erp, cfg, bias=bias, attn=attn, fixations=fixations, gt_map=gt)
    map_path = out_dir / "saliency.pfm"
    write_pfm(map_path, result.saliency)
    manifest.add_output(map_path)
    if result.report is not None:
        report_path = out_dir / "report.json"
        report_path.write_text(result.report.to_json() + "\n", encoding="utf-8")
        manifest.add_output(report_path)
        print(result.report.to_json())
    _write_manifest(out_dir, manifest)
    print(f"wrote {map_path}")
    return 0


def cmd_biasfit(args) -> int:
    cfg = _load_config(args)
    if cfg.bias_mode == "none":
        raise ConfigError("biasfit requires --bias constant|single|multi")
    pairs = _read_pairs(args.dataset)
    out_dir = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command="biasfit", config=cfg.as_dict())
    manifest.add_input(args.dataset)
    timer = StageTimer(manifest)
    with timer("biasfit"):
        bias, result = fit_bias(pairs, cfg, backend=make_backend(cfg))
    bias_path = out_dir / "bias.osb1"
    osb1.write_bias(bias_path, bias)
    manifest.add_output(bias_path)
    if result is not None:
        loss_path = out_dir / "loss.csv"
        _write_loss_csv(loss_path, result.losses)
        manifest.add_output(loss_path)
    _write_manifest(out_dir, manifest)
    print(f"wrote {bias_path}")
    return 0


def cmd_attnfit(args) -> int:
    cfg = _load_config(args)
    pairs = _read_pairs(args.dataset)
    bias = osb1.read_bias(args.bias_params) if args.bias_params else None
    out_dir = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command="attnfit", config=cfg.as_dict())
    manifest.add_input(args.dataset)
    if args.bias_params:
        manifest.add_input(args.bias_params)
    timer = StageTimer(manifest)
    with timer("attnfit"):
        params, result = fit_attention(pairs, cfg, backend=make_backend(cfg), bias=bias)
    attn_path = out_dir / "attention.osb1"
    osb1.write_attention(attn_path, params)
    manifest.add_output(attn_path)
    loss_path = out_dir / "loss.csv"
    _write_loss_csv(loss_path, result.losses)
    manifest.add_output(loss_path)
    _write_manifest(out_dir, manifest)
    print(f"wrote {attn_path}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    pred = load_map(args.pred)
    fixations = read_fixations(args.fixations) if args.fixations else None
    gt = load_map(args.gt_map) if args.gt_map else None
    if fixations is None and gt is None:
        raise ConfigError("evaluate needs --fixations and/or --gt-map")
    out_dir = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command="evaluate", config=cfg.as_dict())
    manifest.add_input(args.pred)
    for p in (args.fixations, args.gt_map):
        if p:
            manifest.add_input(p)
    timer = StageTimer(manifest)
    with timer("evaluate"):
        report = evaluate_maps(pred, fixations, gt, band_width_deg=cfg.eval_band_deg)
    report_path = out_dir / "report.json"
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    manifest.add_output(report_path)
    _write_manifest(out_dir, manifest)
    print(report.to_json())
    return 0


def cmd_plotprior(args) -> int:
    cfg = _load_config(args)
    paths = [Path(p) for p in args.maps]
    if not paths:
        raise ConfigError("plotprior needs at least one map")
    acc = None
    for p in paths:
        m = load_map(p)
        if acc is None:
            acc = np.zeros_like(m)
        elif m.shape != acc.shape:
            raise ConfigError(f"{p}: map shape {m.shape} differs from {acc.shape}")
        acc += m
    prior = l1_normalize(acc / len(paths))
    out_dir = args.out
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command="plotprior", config=cfg.as_dict())
    for p in paths:
        manifest.add_input(p)
    pfm_path = out_dir / "prior.pfm"
    png_path = out_dir / "prior.png"
    write_pfm(pfm_path, prior)
    save_png(png_path, prior)
    manifest.add_output(pfm_path)
    manifest.add_output(png_path)
    _write_manifest(out_dir, manifest)
    print(f"wrote {pfm_path} and {png_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odisphere",
        description="Saliency estimation and evaluation for omni-directional images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract tangent patches from an ERP image")
    p.add_argument("--image", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("pipeline", help="run the full saliency pipeline")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--bias-params", type=Path, help="OSB1 bias grid")
    p.add_argument("--attn-params", type=Path, help="OSB1 attention parameters")
    p.add_argument("--fixations", type=Path, help="fixation CSV for metrics")
    p.add_argument("--gt-map", type=Path, help="ground-truth saliency map for metrics")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("biasfit", help="fit a bias grid")
    p.add_argument("--dataset", type=Path, required=True, help="CSV of image,target lines")
    _add_common(p)
    p.set_defaults(func=cmd_biasfit)

    p = sub.add_parser("attnfit", help="fit attention parameters")
    p.add_argument("--dataset", type=Path, required=True, help="CSV of image,target lines")
    p.add_argument("--bias-params", type=Path, help="OSB1 bias applied before integration")
    _add_common(p)
    p.set_defaults(func=cmd_attnfit)

    p = sub.add_parser("evaluate", help="score a predicted saliency map")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--fixations", type=Path)
    p.add_argument("--gt-map", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plotprior", help="average maps into a prior image")
    p.add_argument("maps", nargs="+", help="saliency maps (PFM or PNG)")
    _add_common(p)
    p.set_defaults(func=cmd_plotprior)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OdisphereError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
