"""Procedural planetary-terrain renderer and dataset store.

Scenes are heightfields: fractal value noise plus parametric instances
(craters as rim-raised radial depressions, sand dunes as elongated
asymmetric ridges, mountains as noise-perturbed cones), shaded Lambertian
under a per-scene sun and quantized to 8-bit grayscale. Each placed
instance gets a pixel mask where its height contribution dominates, and
masks become the tight bounding boxes used as labels.

Everything is seed-deterministic: lattice noise uses integer hashing, all
sampling goes through PCG64 generators derived from (seed, purpose-tag)
seed sequences, so a scene renders byte-identically across runs and
platforms.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

from . import __version__
from .configs import (CLASS_NAMES, NUM_CLASSES, ConfigError, DomainShiftParams,
                      GenConfig, SceneSpec)

log = logging.getLogger("terrafall.synthterra")

# seed-derivation tags, one per independent random purpose
_TAG_SCENE = 11
_TAG_SHIFT_NOISE = 23
_TAG_SHIFT_GRAIN = 29
_SPLIT_TAGS = {"source_train": 1, "source_val": 2, "source_test": 3,
               "target_train": 4, "target_test": 5}

_MAX_SCENE_ATTEMPTS = 8
_DOMINANCE_FRACTION = 0.12


class GenerationError(RuntimeError):
    """A scene could not be assembled within the retry budget."""


class DatasetError(ValueError):
    """A dataset directory or label file failed validation."""


class Box(NamedTuple):
    class_id: int
    cx: float
    cy: float
    w: float
    h: float


@dataclass
class Sample:
    """One rendered image; boxes present exactly when domain == source."""

    image: np.ndarray            # (H, W) uint8
    boxes: list | None           # list[Box] for source, None for target
    domain: str
    seed: int

    def __post_init__(self):
        if (self.domain == "source") != (self.boxes is not None):
            raise DatasetError(
                f"sample(seed={self.seed}): boxes must be present iff domain==source")


@dataclass
class InstanceMask:
    """Run-length encoded pixel set of one instance over the image grid."""

    class_id: int
    image_size: tuple            # (H, W)
    runs: list                   # [(flat_start, length)] row-major

    @classmethod
    def from_bool(cls, class_id: int, mask: np.ndarray) -> "InstanceMask":
        flat = mask.reshape(-1).astype(np.int8)
        diffs = np.diff(flat)
        starts = list(np.where(diffs == 1)[0] + 1)
        ends = list(np.where(diffs == -1)[0] + 1)
        if flat[0]:
            starts.insert(0, 0)
        if flat[-1]:
            ends.append(flat.size)
        runs = [(int(s), int(e - s)) for s, e in zip(starts, ends)]
        if not runs:
            raise GenerationError("instance mask is empty")
        return cls(class_id=class_id, image_size=mask.shape, runs=runs)

    def to_bool(self) -> np.ndarray:
        out = np.zeros(self.image_size[0] * self.image_size[1], dtype=bool)
        for start, length in self.runs:
            out[start:start + length] = True
        return out.reshape(self.image_size)

    @property
    def pixel_count(self) -> int:
        return sum(length for _, length in self.runs)


# ---------------------------------------------------------------------------
# integer-hash value noise


def _hash_u64(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    # seed term mixed in Python ints: numpy warns on scalar uint64 overflow
    seed_term = (seed * 0x165667B19E3779F9) & 0xFFFFFFFFFFFFFFFF
    h = (ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
         + iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
         + np.uint64(seed_term))
    h ^= h >> np.uint64(30)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(27)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    return h


def _lattice_values(ix, iy, seed):
    return (_hash_u64(ix, iy, seed) >> np.uint64(11)).astype(np.float64) / 2.0 ** 52 - 1.0


def value_noise(size: int, freq: float, seed: int) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [-1, 1] on a size x size grid."""
    coords = (np.arange(size) + 0.5) / size * freq
    gx, gy = np.meshgrid(coords, coords)  # gy varies along rows
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    tx = gx - x0
    ty = gy - y0
    ux = tx * tx * (3.0 - 2.0 * tx)
    uy = ty * ty * (3.0 - 2.0 * ty)
    v00 = _lattice_values(x0, y0, seed)
    v10 = _lattice_values(x0 + 1, y0, seed)
    v01 = _lattice_values(x0, y0 + 1, seed)
    v11 = _lattice_values(x0 + 1, y0 + 1, seed)
    top = v00 + ux * (v10 - v00)
    bot = v01 + ux * (v11 - v01)
    return top + uy * (bot - top)


def fbm_noise(size: int, octaves: int, seed: int, base_freq: float = 3.0,
              lacunarity: float = 2.0, gain: float = 0.5) -> np.ndarray:
    """Fractal sum of value-noise octaves, normalized to roughly [-1, 1]."""
    total = np.zeros((size, size))
    amp = 1.0
    freq = base_freq
    norm = 0.0
    for octave in range(octaves):
        total += amp * value_noise(size, freq, seed * 1021 + octave * 7919 + 1)
        norm += amp
        amp *= gain
        freq *= lacunarity
    return total / norm


# ---------------------------------------------------------------------------
# instance height contributions


@dataclass
class _Instance:
    class_id: int
    cx: float
    cy: float
    radius: float
    height: float
    angle: float
    aspect: float
    noise_seed: int


def _instance_field(inst: _Instance, size: int) -> np.ndarray:
    """Signed height contribution of one instance over the full grid."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    dx = xs - inst.cx
    dy = ys - inst.cy
    if inst.class_id == 0:  # crater: quartic bowl with a gaussian rim
        r = np.sqrt(dx * dx + dy * dy) / inst.radius
        bowl = -inst.height * np.maximum(0.0, 1.0 - r * r) ** 2
        rim = 0.5 * inst.height * np.exp(-((r - 1.0) / 0.16) ** 2)
        return bowl + rim
    if inst.class_id == 1:  # dune: elongated ridge, steeper lee side
        ca, sa = math.cos(inst.angle), math.sin(inst.angle)
        u = ca * dx + sa * dy
        v = -sa * dx + ca * dy
        width = inst.radius * inst.aspect
        lee = np.where(v >= 0.0, 0.55, 1.0)
        return inst.height * np.exp(-(u / inst.radius) ** 2
                                    - (v / (width * lee)) ** 2)
    # mountain: cone with craggy fractal flanks
    r = np.sqrt(dx * dx + dy * dy) / inst.radius
    cone = inst.height * np.maximum(0.0, 1.0 - r)
    crag = 1.0 + 0.30 * value_noise(size, size / 9.0, inst.noise_seed)
    return cone * crag


def _sample_instances(rng: np.random.Generator, spec: SceneSpec) -> list[_Instance] | None:
    """Place all requested instances with margin and spacing, or give up."""
    size = spec.image_size
    scale = size / 128.0
    radius_ranges = {0: (5.0, 16.0), 1: (9.0, 22.0), 2: (7.0, 17.0)}
    placed: list[_Instance] = []
    for class_id in sorted(spec.instance_count_range):
        lo, hi = spec.instance_count_range[class_id]
        count = int(rng.integers(lo, hi + 1))
        for _ in range(count):
            ok = False
            for _attempt in range(40):
                r_lo, r_hi = radius_ranges[class_id]
                radius = float(rng.uniform(r_lo, r_hi)) * scale
                margin = radius * 1.15 + 2.0
                if 2 * margin >= size:
                    continue
                cx = float(rng.uniform(margin, size - margin))
                cy = float(rng.uniform(margin, size - margin))
                too_close = False
                for other in placed:
                    d = math.hypot(cx - other.cx, cy - other.cy)
                    if d < 0.8 * (radius + other.radius):
                        too_close = True
                        break
                if too_close:
                    continue
                height = float(rng.uniform(0.35, 0.7)) * radius
                angle = float(rng.uniform(0.0, math.pi))
                aspect = float(rng.uniform(0.28, 0.45))
                noise_seed = int(rng.integers(0, 2 ** 31))
                placed.append(_Instance(class_id, cx, cy, radius, height,
                                        angle, aspect, noise_seed))
                ok = True
                break
            if not ok:
                return None
    return placed


def _shade(height: np.ndarray, sun_azimuth: float, sun_elevation: float,
           albedo: np.ndarray, ambient: float = 0.18) -> np.ndarray:
    gy, gx = np.gradient(height)
    inv_norm = 1.0 / np.sqrt(1.0 + gx * gx + gy * gy)
    sx = math.cos(sun_elevation) * math.cos(sun_azimuth)
    sy = math.cos(sun_elevation) * math.sin(sun_azimuth)
    sz = math.sin(sun_elevation)
    direct = np.clip((-gx * sx - gy * sy + sz) * inv_norm, 0.0, 1.0)
    intensity = (ambient + (1.0 - ambient) * direct) * albedo
    return np.clip(np.floor(intensity * 255.0 + 0.5), 0, 255).astype(np.uint8)


def generate_scene(spec: SceneSpec) -> tuple[Sample, list[InstanceMask]]:
    """Render one scene deterministically from its spec.

    On placement failure the whole scene regenerates from a derived
    sub-seed, up to a bounded number of attempts.
    """
    spec.validate()
    for attempt in range(_MAX_SCENE_ATTEMPTS):
        rng = np.random.default_rng(
            np.random.SeedSequence([spec.seed & 0xFFFFFFFFFFFFFFFF, _TAG_SCENE, attempt]))
        result = _render_once(rng, spec, attempt)
        if result is not None:
            if attempt:
                log.warning("scene seed=%d regenerated %d time(s) after placement failure",
                            spec.seed, attempt)
            return result
    raise GenerationError(
        f"scene seed={spec.seed}: placement failed {_MAX_SCENE_ATTEMPTS} times")


def _render_once(rng, spec: SceneSpec, attempt: int):
    size = spec.image_size
    sun_azimuth = float(rng.uniform(*spec.sun_azimuth_range))
    sun_elevation = float(rng.uniform(*spec.sun_elevation_range))
    noise_seed = int(rng.integers(0, 2 ** 31))
    albedo_seed = int(rng.integers(0, 2 ** 31))

    instances = _sample_instances(rng, spec)
    if instances is None:
        return None

    base = fbm_noise(size, spec.noise_octaves, noise_seed) * (0.018 * size)
    height = base.copy()
    fields = []
    for inst in instances:
        f = _instance_field(inst, size)
        fields.append(f)
        height += f

    masks: list[InstanceMask] = []
    if fields:
        mags = np.abs(np.stack(fields))
        winner = mags.argmax(axis=0)
        for idx, (inst, f) in enumerate(zip(instances, fields)):
            peak = float(np.abs(f).max())
            strong = (np.abs(f) >= _DOMINANCE_FRACTION * peak) & (winner == idx)
            if not strong.any():
                return None
            masks.append(InstanceMask.from_bool(inst.class_id, strong))

    albedo = 1.0 + 0.10 * fbm_noise(size, 2, albedo_seed, base_freq=13.0)
    image = _shade(height, sun_azimuth, sun_elevation, albedo)

    boxes = masks_to_boxes(masks) if spec.domain == "source" else None
    return Sample(image=image, boxes=boxes, domain=spec.domain,
                  seed=spec.seed), masks


def masks_to_boxes(masks: list[InstanceMask], min_pixels: int = 9) -> list[Box]:
    """Tight normalized boxes from masks, pixel-center convention.

    A run of pixels covering columns [cmin, cmax] maps to center
    (cmin + cmax) / 2 and width cmax - cmin + 1 (both over image width);
    masks below min_pixels are dropped; boxes clamp into [0, 1].
    """
    boxes = []
    for mask in masks:
        if mask.pixel_count < min_pixels:
            continue
        arr = mask.to_bool()
        h, w = arr.shape
        rows = np.where(arr.any(axis=1))[0]
        cols = np.where(arr.any(axis=0))[0]
        rmin, rmax = int(rows[0]), int(rows[-1])
        cmin, cmax = int(cols[0]), int(cols[-1])
        # tight extents, then clamp the half-pixel overshoot at the borders
        cx = (cmin + cmax) / (2.0 * w)
        cy = (rmin + rmax) / (2.0 * h)
        bw = (cmax - cmin + 1) / w
        bh = (rmax - rmin + 1) / h
        x1, x2 = max(0.0, cx - bw / 2), min(1.0, cx + bw / 2)
        y1, y2 = max(0.0, cy - bh / 2), min(1.0, cy + bh / 2)
        boxes.append(Box(mask.class_id, (x1 + x2) / 2, (y1 + y2) / 2,
                         x2 - x1, y2 - y1))
    return boxes


# ---------------------------------------------------------------------------
# domain shift


def _gaussian_blur(x: np.ndarray, sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (t / sigma) ** 2)
    kernel /= kernel.sum()
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius, radius)
        xp = np.pad(x, pad, mode="reflect")
        win = np.lib.stride_tricks.sliding_window_view(xp, 2 * radius + 1, axis=axis)
        x = win @ kernel
    return x


def domain_shift(image: np.ndarray, params: DomainShiftParams, seed: int) -> np.ndarray:
    """Apply the parametric appearance shift; identity params return the
    input byte-for-byte."""
    params.validate()
    if image.dtype != np.uint8:
        raise DatasetError("domain_shift expects an 8-bit image")
    if params.is_identity():
        return image.copy()
    x = image.astype(np.float64) / 255.0
    if params.gamma != 1.0:
        x = np.power(x, params.gamma)
    if params.blur_sigma > 0.0:
        x = _gaussian_blur(x, params.blur_sigma)
    if params.grain_octave_delta > 0 and params.grain_strength > 0.0:
        grain_rng_seed = int(np.random.SeedSequence(
            [seed & 0xFFFFFFFFFFFFFFFF, _TAG_SHIFT_GRAIN]).generate_state(1)[0])
        grain = fbm_noise(image.shape[0], params.grain_octave_delta,
                          grain_rng_seed, base_freq=24.0)
        x = x + params.grain_strength * grain
    if params.noise_sigma > 0.0:
        rng = np.random.default_rng(
            np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, _TAG_SHIFT_NOISE]))
        x = x + rng.normal(0.0, params.noise_sigma / 255.0, image.shape)
    return np.clip(np.floor(x * 255.0 + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# dataset store: PNG images + JSONL labels + JSON manifest


@dataclass
class Dataset:
    samples: list
    manifest: dict

    def __len__(self):
        return len(self.samples)


def write_dataset(samples: list[Sample], out_dir, manifest_extra: dict | None = None) -> dict:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    counts = [0] * NUM_CLASSES
    with open(out / "labels.jsonl", "w") as fh:
        for idx, sample in enumerate(samples):
            name = f"images/{idx:05d}.png"
            Image.fromarray(sample.image, mode="L").save(out / name)
            record = {"image": name, "domain": sample.domain, "seed": int(sample.seed)}
            if sample.domain == "source":
                record["boxes"] = [
                    {"class": int(b.class_id), "cx": b.cx, "cy": b.cy,
                     "w": b.w, "h": b.h} for b in sample.boxes]
                for b in sample.boxes:
                    counts[b.class_id] += 1
            fh.write(json.dumps(record) + "\n")
    manifest = {
        "class_names": list(CLASS_NAMES),
        "num_samples": len(samples),
        "box_counts": counts,
        "generator_version": __version__,
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(out / "dataset.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def read_dataset(dataset_dir) -> Dataset:
    root = Path(dataset_dir)
    labels_path = root / "labels.jsonl"
    manifest_path = root / "dataset.json"
    if not labels_path.exists():
        raise DatasetError(f"{labels_path}: missing label file")
    manifest = {}
    if manifest_path.exists():
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    samples = []
    with open(labels_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{labels_path}:{lineno}: invalid JSON: {exc}")
            samples.append(_record_to_sample(record, root, labels_path, lineno))
    return Dataset(samples=samples, manifest=manifest)


def _record_to_sample(record: dict, root: Path, labels_path: Path, lineno: int) -> Sample:
    for key in ("image", "domain", "seed"):
        if key not in record:
            raise DatasetError(f"{labels_path}:{lineno}: missing key '{key}'")
    domain = record["domain"]
    if domain not in ("source", "target"):
        raise DatasetError(f"{labels_path}:{lineno}: bad domain '{domain}'")
    image_path = root / record["image"]
    if not image_path.exists():
        raise DatasetError(f"{labels_path}:{lineno}: missing image file {image_path}")
    image = np.asarray(Image.open(image_path).convert("L"), dtype=np.uint8)

    boxes = None
    if domain == "source":
        if "boxes" not in record:
            raise DatasetError(f"{labels_path}:{lineno}: source sample without boxes")
        boxes = []
        for bi, raw in enumerate(record["boxes"]):
            try:
                box = Box(int(raw["class"]), float(raw["cx"]), float(raw["cy"]),
                          float(raw["w"]), float(raw["h"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{labels_path}:{lineno}: box {bi}: {exc}")
            if not (0 <= box.class_id < NUM_CLASSES):
                raise DatasetError(
                    f"{labels_path}:{lineno}: box {bi}: unknown class {box.class_id}")
            if box.w <= 0 or box.h <= 0:
                raise DatasetError(
                    f"{labels_path}:{lineno}: box {bi}: non-positive size "
                    f"({box.w}, {box.h})")
            if not (0 <= box.cx <= 1 and 0 <= box.cy <= 1):
                raise DatasetError(
                    f"{labels_path}:{lineno}: box {bi}: center outside [0, 1]")
            boxes.append(box)
    elif "boxes" in record:
        raise DatasetError(f"{labels_path}:{lineno}: target sample carries boxes")
    return Sample(image=image, boxes=boxes, domain=domain, seed=int(record["seed"]))


# ---------------------------------------------------------------------------
# anchor estimation (k-means over box shapes, IoU distance)


def _shape_iou(wh: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """IoU between centered (w, h) shapes: (n, 2) x (k, 2) -> (n, k)."""
    inter = (np.minimum(wh[:, None, 0], anchors[None, :, 0])
             * np.minimum(wh[:, None, 1], anchors[None, :, 1]))
    union = (wh[:, 0] * wh[:, 1])[:, None] + (anchors[:, 0] * anchors[:, 1])[None, :] - inter
    return inter / np.maximum(union, 1e-12)


def kmeans_anchors(wh_pixels: np.ndarray, k: int = 9, iterations: int = 60) -> np.ndarray:
    """Deterministic k-means on box shapes under 1 - IoU distance.

    Initialized from area quantiles; returns (k, 2) sorted by area ascending.
    """
    wh = np.asarray(wh_pixels, dtype=np.float64)
    if wh.ndim != 2 or wh.shape[1] != 2 or len(wh) == 0:
        raise DatasetError("kmeans_anchors: want a non-empty (n, 2) array")
    order = np.argsort(wh[:, 0] * wh[:, 1], kind="stable")
    quantiles = [order[int(round(q * (len(order) - 1)))]
                 for q in np.linspace(0.05, 0.95, k)]
    anchors = wh[quantiles].copy()
    for _ in range(iterations):
        assign = _shape_iou(wh, anchors).argmax(axis=1)
        new_anchors = anchors.copy()
        for ci in range(k):
            members = wh[assign == ci]
            if len(members):
                new_anchors[ci] = members.mean(axis=0)
        if np.allclose(new_anchors, anchors, rtol=0, atol=1e-9):
            anchors = new_anchors
            break
        anchors = new_anchors
    return anchors[np.argsort(anchors[:, 0] * anchors[:, 1], kind="stable")]


def anchors_by_scale(wh_pixels: np.ndarray, per_scale: int = 3) -> tuple:
    """k-means anchors split across the 3 heads, largest objects deepest."""
    flat = kmeans_anchors(wh_pixels, k=3 * per_scale)
    groups = []
    for scale in range(3):
        start = (2 - scale) * per_scale  # deepest head takes the largest shapes
        group = flat[start:start + per_scale][::-1]
        groups.append(tuple((float(w), float(h)) for w, h in group))
    return tuple(groups)


# ---------------------------------------------------------------------------
# dataset build orchestration


def _scene_seed(base_seed: int, split_tag: int, index: int) -> int:
    return int(np.random.SeedSequence(
        [base_seed & 0xFFFFFFFFFFFFFFFF, split_tag, index]).generate_state(1)[0])


def _gen_one(args):
    cfg_dict, split, index = args
    cfg = GenConfig(**cfg_dict)
    cfg.shift = DomainShiftParams(**cfg_dict["shift"])
    tag = _SPLIT_TAGS[split]
    seed = _scene_seed(cfg.seed, tag, index)
    domain = "target" if split == "target_train" else "source"
    sample, _masks = generate_scene(cfg.scene_spec(seed, domain))
    if split in ("target_train", "target_test"):
        sample.image = domain_shift(sample.image, cfg.shift, seed)
    return sample


def _worker_count() -> int:
    raw = os.environ.get("TERRAFALL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"TERRAFALL_THREADS must be an integer, got {raw!r}")


def render_split(cfg: GenConfig, split: str, count: int) -> list[Sample]:
    """Render one split; output is identical for any worker count."""
    import dataclasses as dc
    cfg_dict = dc.asdict(cfg)
    jobs = [(cfg_dict, split, i) for i in range(count)]
    workers = _worker_count()
    if workers == 1 or count < 2 * workers:
        return [_gen_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_gen_one, jobs, chunksize=8))


def build_datasets(cfg: GenConfig, out_root) -> dict:
    """Generate all splits under out_root and return the written layout.

    target_train is unlabeled and appearance-shifted. target_test keeps its
    labels purely for offline scoring of the adaptation gap, so it is stored
    as a labeled (source-typed) dataset of shifted images; its manifest
    records the role and shift parameters.
    """
    cfg.validate()
    out_root = Path(out_root)
    splits = {
        "source_train": cfg.num_source_train,
        "source_val": cfg.num_source_val,
        "source_test": cfg.num_source_test,
        "target_train": cfg.num_target_train,
        "target_test": cfg.num_target_test,
    }
    layout = {}
    anchors = None
    import dataclasses as dc
    for split, count in splits.items():
        if count == 0:
            continue
        samples = render_split(cfg, split, count)
        extra = {"seed": cfg.seed, "split": split, "image_size": cfg.image_size}
        if split in ("target_train", "target_test"):
            extra["shift"] = dc.asdict(cfg.shift)
        if split == "target_test":
            extra["role"] = "target_test"
        if split == "source_train":
            wh = np.array([[b.w * cfg.image_size, b.h * cfg.image_size]
                           for s in samples for b in s.boxes])
            anchors = anchors_by_scale(wh, cfg.anchors_per_scale)
            extra["anchors"] = [[list(a) for a in scale] for scale in anchors]
        write_dataset(samples, out_root / split, manifest_extra=extra)
        layout[split] = str(out_root / split)
        log.info("wrote %s: %d samples", split, count)
    if anchors is not None:
        # propagate the anchor table so any split can seed a detector
        for split in layout:
            if split == "source_train":
                continue
            manifest_path = Path(layout[split]) / "dataset.json"
            manifest = json.loads(manifest_path.read_text())
            manifest["anchors"] = [[list(a) for a in scale] for scale in anchors]
            manifest_path.write_text(json.dumps(manifest, indent=2))
    return layout
