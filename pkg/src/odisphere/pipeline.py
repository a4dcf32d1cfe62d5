"""End-to-end composition: extract, predict, bias, integrate, fuse, normalize.

Also builds the training datasets for the two fitting stages and the run
manifest that makes pipeline invocations auditable and reproducible.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .errors import ConfigError
from .geometry import Direction, ViewFrustum
from .interp import resize_bilinear
from .learning import TrainConfig, train_attention, train_bias
from .metrics import FixationSet, MetricReport, evaluate
from .multiscale import (
    AttentionParams,
    attention_forward,
    crop_resize_to_smallest,
    init_attention_params,
    integrate,
)
from .patching import extract_patch, generate_view_directions, reproject_average
from .saliency import (
    BiasGrid,
    ContrastBackend,
    FileBackend,
    SaliencyBackend,
    apply_bias,
    l1_normalize,
)


def patch_id(direction_index: int, aov_deg: float) -> str:
    """Deterministic patch naming: d{index}_a{aov in degrees}."""
    return f"d{direction_index}_a{aov_deg:g}"


def make_backend(cfg: PipelineConfig) -> SaliencyBackend:
    if cfg.backend == "contrast":
        return ContrastBackend()
    return FileBackend(cfg.backend_dir)


def view_frustums(cfg: PipelineConfig, aov_deg: float) -> list[tuple[int, ViewFrustum]]:
    """Frustums for every viewing direction at one angle of view."""
    grid = generate_view_directions(cfg.interval)
    aov = np.radians(aov_deg)
    return [(i, ViewFrustum(d, float(aov), cfg.patch_size)) for i, d in enumerate(grid)]


def extract_all(erp: np.ndarray, cfg: PipelineConfig):
    """All (patch_id, direction_index, Patch) for the configured grid."""
    out = []
    for aov_deg in cfg.aovs_deg:
        for i, f in view_frustums(cfg, aov_deg):
            out.append((patch_id(i, aov_deg), i, extract_patch(erp, f, cfg.sampler)))
    return out


def _require_bias(bias: BiasGrid | None, cfg: PipelineConfig) -> BiasGrid | None:
    if cfg.bias_mode == "none":
        return None
    if bias is None:
        raise ConfigError(f"bias mode {cfg.bias_mode!r} requires a bias grid")
    if cfg.bias_mode in ("constant", "single") and bias.channels != 1:
        raise ConfigError(
            f"bias mode {cfg.bias_mode!r} expects a single-channel grid, got {bias.channels}"
        )
    if cfg.bias_mode == "multi" and bias.channels < 2:
        raise ConfigError("bias mode 'multi' expects a multi-channel grid")
    return bias


def _require_attention(attn: AttentionParams | None, cfg: PipelineConfig) -> AttentionParams | None:
    if cfg.n_scales == 1:
        return None
    if attn is None:
        raise ConfigError("multiple angles of view require trained attention parameters")
    if attn.arch != cfg.arch:
        raise ConfigError(f"attention params are for arch {attn.arch}, config says {cfg.arch}")
    if attn.n_scales != cfg.n_scales:
        raise ConfigError(
            f"attention params expect {attn.n_scales} scales, config has {cfg.n_scales}"
        )
    return attn


def _direction_map(
    erp: np.ndarray,
    cfg: PipelineConfig,
    backend: SaliencyBackend,
    index: int,
    direction: Direction,
    bias: BiasGrid | None,
    attn: AttentionParams | None,
):
    """Integrated single-direction saliency map on the smallest-aov frustum."""
    maps = []
    features = None
    f_min = None
    for s, aov_deg in enumerate(cfg.aovs_deg):
        f = ViewFrustum(direction, float(np.radians(aov_deg)), cfg.patch_size)
        patch = extract_patch(erp, f, cfg.sampler)
        out = backend.predict(patch.data, patch_id=patch_id(index, aov_deg))
        raw = out.saliency
        if bias is not None:
            raw = apply_bias(raw, bias, direction.elevation)
        maps.append(raw)
        if s == 0:
            f_min = f
            features = out.features
    if len(maps) == 1:
        return f_min, maps[0]
    stack = crop_resize_to_smallest(maps, cfg.aovs)
    weights = attention_forward(stack, attn, features)
    return f_min, integrate(stack, weights)


def predict_direction_maps(
    erp: np.ndarray,
    cfg: PipelineConfig,
    backend: SaliencyBackend | None = None,
    bias: BiasGrid | None = None,
    attn: AttentionParams | None = None,
):
    """Per-direction integrated maps, ready for reprojection."""
    backend = backend or make_backend(cfg)
    bias = _require_bias(bias, cfg)
    attn = _require_attention(attn, cfg)
    grid = generate_view_directions(cfg.interval)
    jobs = list(enumerate(grid))
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(
                pool.map(lambda j: _direction_map(erp, cfg, backend, j[0], j[1], bias, attn), jobs)
            )
    else:
        results = [_direction_map(erp, cfg, backend, i, d, bias, attn) for i, d in jobs]
    return results


@dataclass
class PipelineResult:
    saliency: np.ndarray  # normalized ERP map
    coverage: np.ndarray  # per-pixel patch counts
    report: MetricReport | None = None


def run_pipeline(
    erp: np.ndarray,
    cfg: PipelineConfig,
    backend: SaliencyBackend | None = None,
    bias: BiasGrid | None = None,
    attn: AttentionParams | None = None,
    fixations: FixationSet | None = None,
    gt_map: np.ndarray | None = None,
) -> PipelineResult:
    """Full estimation pass: the fused ERP map sums to 1 over covered pixels."""
    per_direction = predict_direction_maps(erp, cfg, backend, bias, attn)
    fused, counts = reproject_average(
        [(m, f) for f, m in per_direction], cfg.erp_size, return_counts=True
    )
    fused = l1_normalize(fused)
    report = None
    if fixations is not None or gt_map is not None:
        report = evaluate(fused, fixations, gt_map, band_width_deg=cfg.eval_band_deg)
    return PipelineResult(saliency=fused, coverage=counts, report=report)


def build_bias_samples(
    pairs,
    cfg: PipelineConfig,
    backend: SaliencyBackend | None = None,
    aov_degs=None,
):
    """(raw patch map, elevation, target patch) triples for bias training.

    ``pairs`` is a sequence of (erp_image, erp_target_map); targets are
    extracted with the same frustum as the prediction patches.
    """
    backend = backend or make_backend(cfg)
    aov_degs = tuple(aov_degs) if aov_degs is not None else cfg.aovs_deg
    grid = generate_view_directions(cfg.interval)
    samples = []
    for erp_img, gt in pairs:
        for aov_deg in aov_degs:
            for i, d in enumerate(grid):
                f = ViewFrustum(d, float(np.radians(aov_deg)), cfg.patch_size)
                patch = extract_patch(erp_img, f, cfg.sampler)
                raw = backend.predict(patch.data, patch_id=patch_id(i, aov_deg)).saliency
                target = extract_patch(gt, f, cfg.sampler).data
                samples.append((raw, d.elevation, target))
    return samples


def build_attention_samples(
    pairs,
    cfg: PipelineConfig,
    backend: SaliencyBackend | None = None,
    bias: BiasGrid | None = None,
):
    """(ScaleStack, features, target) triples for attention training.

    The target is the smallest-angle patch of the ERP ground truth; bias (if
    any) is applied to the raw maps first, mirroring inference.
    """
    if cfg.n_scales < 2:
        raise ConfigError("attention training needs at least two angles of view")
    backend = backend or make_backend(cfg)
    grid = generate_view_directions(cfg.interval)
    needs_features = cfg.arch in (3, 4)
    samples = []
    for erp_img, gt in pairs:
        for i, d in enumerate(grid):
            maps = []
            features = None
            target = None
            for s, aov_deg in enumerate(cfg.aovs_deg):
                f = ViewFrustum(d, float(np.radians(aov_deg)), cfg.patch_size)
                patch = extract_patch(erp_img, f, cfg.sampler)
                out = backend.predict(patch.data, patch_id=patch_id(i, aov_deg))
                raw = out.saliency
                if bias is not None:
                    raw = apply_bias(raw, bias, d.elevation)
                maps.append(raw)
                if s == 0:
                    features = out.features
                    target = extract_patch(gt, f, cfg.sampler).data
            if needs_features and features is None:
                raise ConfigError(f"backend provides no features for patch d{i}; arch {cfg.arch} needs them")
            stack = crop_resize_to_smallest(maps, cfg.aovs)
            samples.append((stack, features if needs_features else None, target))
    return samples


def constant_average_bias(pairs, cfg: PipelineConfig) -> BiasGrid:
    """Non-learned prior: per-elevation average of the target patches,
    downsampled to the bias grid resolution."""
    grid = generate_view_directions(cfg.interval)
    elevations = np.radians(cfg.bias_elevations_deg)
    gh, gw = cfg.bias_grid_shape
    sums = np.zeros((len(elevations), gh, gw))
    counts = np.zeros(len(elevations), dtype=int)
    aov = float(np.radians(cfg.aovs_deg[0]))
    for _, gt in pairs:
        for d in grid:
            k = int(np.argmin(np.abs(elevations - d.elevation)))
            f = ViewFrustum(d, aov, cfg.patch_size)
            target = extract_patch(gt, f, cfg.sampler).data
            sums[k] += resize_bilinear(target, (gh, gw))
            counts[k] += 1
    if np.any(counts == 0):
        raise ConfigError("every bias elevation needs at least one covering direction")
    weights = sums / counts[:, None, None]
    # Normalize to mean 1 so the prior's overall scale is neutral.
    mean = weights.mean()
    if mean <= 0:
        raise ConfigError("constant-average bias is degenerate (all-zero targets)")
    return BiasGrid(weights=weights / mean, channel_elevations=elevations)


def fit_bias(pairs, cfg: PipelineConfig, backend=None, train_cfg: TrainConfig | None = None):
    """Train a bias grid per the configured mode; 'constant' averages instead."""
    if cfg.bias_mode == "none":
        raise ConfigError("bias_mode 'none' has nothing to fit")
    if cfg.bias_mode == "constant":
        return constant_average_bias(pairs, cfg), None
    if cfg.bias_mode == "single":
        bias0 = BiasGrid.uniform(cfg.bias_grid_shape, (0.0,))
    else:
        bias0 = BiasGrid.uniform(cfg.bias_grid_shape, cfg.bias_elevations_deg)
    samples = build_bias_samples(pairs, cfg, backend)
    tc = train_cfg or cfg.train_config()
    trained, result = train_bias(samples, bias0, tc)
    return trained, result


def fit_attention(
    pairs,
    cfg: PipelineConfig,
    backend=None,
    bias: BiasGrid | None = None,
    train_cfg: TrainConfig | None = None,
    seed: int | None = None,
):
    """Train attention parameters for the configured architecture."""
    samples = build_attention_samples(pairs, cfg, backend, bias)
    if cfg.arch in (3, 4):
        in_channels = samples[0][1].shape[0]
    else:
        in_channels = cfg.n_scales
    params0 = init_attention_params(
        cfg.arch,
        cfg.n_scales,
        in_channels,
        hidden=cfg.hidden_channels,
        seed=cfg.seed if seed is None else seed,
    )
    tc = train_cfg or cfg.train_config()
    trained, result = train_attention(samples, params0, tc)
    return trained, result


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Audit record of one command invocation."""

    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "timings": self.timings,
        }


class StageTimer:
    """Accumulates wall-clock stage timings for the manifest."""

    def __init__(self, manifest: RunManifest):
        self.manifest = manifest

    def __call__(self, name: str):
        return _StageContext(self.manifest, name)


class _StageContext:
    def __init__(self, manifest: RunManifest, name: str):
        self.manifest = manifest
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings[self.name] = time.perf_counter() - self.t0
        return False
