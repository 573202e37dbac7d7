"""Dataclass configs for every stage of the pipeline, plus JSON loading.

All JSON configs are validated field by field; unknown keys and bad values
raise :class:`ConfigError` with the offending path spelled out.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field


CLASS_NAMES = ("crater", "sand_dune", "mountain")
NUM_CLASSES = len(CLASS_NAMES)

# box colors for rendered detections, one per class
CLASS_COLORS = {0: (220, 40, 40), 1: (40, 200, 60), 2: (60, 90, 230)}


class ConfigError(ValueError):
    """A config file or dataclass failed validation."""


@dataclass
class DomainShiftParams:
    """Parametric appearance shift between the two rendered domains."""

    gamma: float = 1.0
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    grain_octave_delta: int = 0
    grain_strength: float = 0.0

    def validate(self):
        if self.gamma <= 0:
            raise ConfigError(f"shift.gamma must be > 0, got {self.gamma}")
        if self.blur_sigma < 0:
            raise ConfigError(f"shift.blur_sigma must be >= 0, got {self.blur_sigma}")
        if self.noise_sigma < 0:
            raise ConfigError(f"shift.noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.grain_octave_delta < 0:
            raise ConfigError(
                f"shift.grain_octave_delta must be >= 0, got {self.grain_octave_delta}")
        if self.grain_strength < 0:
            raise ConfigError(
                f"shift.grain_strength must be >= 0, got {self.grain_strength}")

    def is_identity(self) -> bool:
        return (self.gamma == 1.0 and self.blur_sigma == 0.0
                and self.noise_sigma == 0.0
                and (self.grain_octave_delta == 0 or self.grain_strength == 0.0))


# Default target-domain appearance: darker tone curve, mild defocus,
# sensor noise and extra fine grain.
DEFAULT_SHIFT = DomainShiftParams(gamma=1.35, blur_sigma=0.9, noise_sigma=7.0,
                                  grain_octave_delta=2, grain_strength=0.10)


@dataclass
class SceneSpec:
    """Everything one rendered scene depends on. Deterministic per seed."""

    seed: int
    image_size: int = 128
    # per-class (lo, hi) inclusive instance count ranges; expected counts
    # keep the corpus crater-heavy at roughly a 66/24/10 split
    instance_count_range: dict = field(default_factory=lambda: {
        0: (4, 9), 1: (1, 4), 2: (0, 2)})
    sun_azimuth_range: tuple = (0.0, 2.0 * math.pi)
    sun_elevation_range: tuple = (0.45, 1.15)
    noise_octaves: int = 4
    domain: str = "source"

    def validate(self):
        if self.image_size < 64:
            raise ConfigError(f"scene.image_size must be >= 64, got {self.image_size}")
        if self.domain not in ("source", "target"):
            raise ConfigError(f"scene.domain must be source|target, got {self.domain}")
        lo, hi = self.sun_elevation_range
        if not (0.0 < lo <= hi <= math.pi / 2):
            raise ConfigError(
                f"scene.sun_elevation_range must sit in (0, pi/2], got {self.sun_elevation_range}")
        for cid, rng in self.instance_count_range.items():
            if int(cid) not in range(NUM_CLASSES):
                raise ConfigError(f"scene.instance_count_range: unknown class {cid}")
            if rng[0] < 0 or rng[1] < rng[0]:
                raise ConfigError(
                    f"scene.instance_count_range[{cid}] must be 0 <= lo <= hi, got {rng}")
        if self.noise_octaves < 1:
            raise ConfigError(f"scene.noise_octaves must be >= 1, got {self.noise_octaves}")


@dataclass
class GenConfig:
    """Dataset generation: split sizes, scene defaults, shift parameters."""

    seed: int = 0
    image_size: int = 128
    num_source_train: int = 500
    num_source_val: int = 100
    num_source_test: int = 100
    num_target_train: int = 400
    num_target_test: int = 100
    noise_octaves: int = 4
    instance_count_range: dict = field(default_factory=lambda: {
        0: (4, 9), 1: (1, 4), 2: (0, 2)})
    shift: DomainShiftParams = field(default_factory=lambda: DomainShiftParams(
        **dataclasses.asdict(DEFAULT_SHIFT)))
    min_mask_pixels: int = 9
    anchors_per_scale: int = 3

    def validate(self):
        self.shift.validate()
        if self.image_size < 64 or self.image_size % 32:
            raise ConfigError(
                f"gen.image_size must be >= 64 and divisible by 32, got {self.image_size}")
        for name in ("num_source_train", "num_source_val", "num_source_test",
                     "num_target_train", "num_target_test"):
            if getattr(self, name) < 0:
                raise ConfigError(f"gen.{name} must be >= 0")

    def scene_spec(self, seed: int, domain: str) -> SceneSpec:
        spec = SceneSpec(seed=seed, image_size=self.image_size,
                         instance_count_range=dict(self.instance_count_range),
                         noise_octaves=self.noise_octaves, domain=domain)
        spec.validate()
        return spec


@dataclass
class DetectorConfig:
    """Miniature three-scale grid detector layout."""

    input_size: int = 128
    num_classes: int = NUM_CLASSES
    boxes_per_cell: int = 3
    strides: tuple = (32, 16, 8)
    # per-scale anchor (w, h) pairs in pixels at input_size, deepest scale
    # first; replaced by dataset k-means anchors when a manifest has them
    anchors: tuple = (
        ((52.0, 48.0), (34.0, 36.0), (26.0, 24.0)),
        ((22.0, 20.0), (18.0, 16.0), (14.0, 14.0)),
        ((12.0, 11.0), (9.0, 9.0), (7.0, 7.0)),
    )
    backbone_channels: tuple = (8, 16, 32, 48, 96)
    head_channels: tuple = (96, 64, 48)
    lateral_channels: tuple = (32, 24)
    negative_slope: float = 0.1

    def validate(self):
        if self.input_size % 32:
            raise ConfigError(
                f"detector.input_size must be divisible by 32, got {self.input_size}")
        if tuple(self.strides) != (32, 16, 8):
            raise ConfigError(f"detector.strides must be (32, 16, 8), got {self.strides}")
        if len(self.anchors) != 3:
            raise ConfigError("detector.anchors must carry exactly 3 scales")
        for scale in self.anchors:
            if len(scale) != self.boxes_per_cell:
                raise ConfigError(
                    f"detector.anchors: want {self.boxes_per_cell} per scale, got {len(scale)}")
            for w, h in scale:
                if w <= 0 or h <= 0:
                    raise ConfigError(f"detector.anchors must be positive, got ({w}, {h})")
        if len(self.backbone_channels) != 5:
            raise ConfigError("detector.backbone_channels must list 5 stages")

    @property
    def grid_sizes(self) -> tuple:
        return tuple(self.input_size // s for s in self.strides)


@dataclass
class LossConfig:
    """Weights for the five-term detection loss and the four alignment terms."""

    lambda_coord: float = 5.0
    lambda_noobj: float = 0.5
    lambda_1: float = 0.5   # image-level alignment
    lambda_2: float = 0.5   # instance alignment, stride-32 head
    lambda_3: float = 0.5   # instance alignment, stride-16 head
    lambda_4: float = 0.5   # instance alignment, stride-8 head
    clamp_eps: float = 1e-7
    # confidence target on responsible slots: 1.0, or the gt/anchor IoU
    iou_valued_conf_target: bool = False

    def validate(self):
        for name in ("lambda_coord", "lambda_noobj", "lambda_1", "lambda_2",
                     "lambda_3", "lambda_4"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss.{name} must be >= 0")
        if not (0 < self.clamp_eps < 0.5):
            raise ConfigError(f"loss.clamp_eps must sit in (0, 0.5), got {self.clamp_eps}")

    @property
    def alignment_lambdas(self) -> tuple:
        return (self.lambda_1, self.lambda_2, self.lambda_3, self.lambda_4)


@dataclass
class AlignConfig:
    """Clustered instance alignment and discriminator layout."""

    cluster_count: int = NUM_CLASSES + 1
    top_m: int = 64
    grl_lambda: float = 1.0
    dropout_rate: float = 0.25
    # "pair_mean" divides the cross-pair distance sum by N_A * N_B;
    # "size_sum" divides by N_A + N_B
    linkage_normalizer: str = "pair_mean"
    image_disc_channels: tuple = (48, 32)
    instance_disc_hidden: int = 48

    def validate(self):
        if self.cluster_count < 1:
            raise ConfigError(f"align.cluster_count must be >= 1, got {self.cluster_count}")
        if self.top_m < 1:
            raise ConfigError(f"align.top_m must be >= 1, got {self.top_m}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError(f"align.dropout_rate must sit in [0, 1), got {self.dropout_rate}")
        if self.linkage_normalizer not in ("pair_mean", "size_sum"):
            raise ConfigError(
                f"align.linkage_normalizer must be pair_mean|size_sum, got {self.linkage_normalizer}")


@dataclass
class EvalConfig:
    """COCO-protocol evaluation slices."""

    iou_thresholds: tuple = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
    max_dets: int = 100
    conf_floor: float = 0.001
    small_max_area: float = 32.0 ** 2
    medium_max_area: float = 96.0 ** 2

    def validate(self):
        ts = self.iou_thresholds
        if not ts or any(not (0 < t < 1) for t in ts) or list(ts) != sorted(set(ts)):
            raise ConfigError("eval.iou_thresholds must be strictly increasing in (0, 1)")
        if self.max_dets < 1:
            raise ConfigError(f"eval.max_dets must be >= 1, got {self.max_dets}")
        if not (0 <= self.conf_floor < 1):
            raise ConfigError(f"eval.conf_floor must sit in [0, 1), got {self.conf_floor}")


@dataclass
class TrainConfig:
    """Two-stage training protocol and run wiring."""

    seed: int = 0
    mode: str = "yolo_only"             # yolo_only | yoco
    batch_size: int = 8
    epochs_stage1: int = 50
    epochs_stage2: int = 50
    lr_stage1: float = 1e-3
    lr_stage2: float = 1e-4
    early_stop_patience: int = 10
    lr_reduce_factor: float = 0.5
    lr_reduce_patience: int = 5
    source_train: str = ""
    source_val: str = ""
    target_train: str = ""
    loss: LossConfig = field(default_factory=LossConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    align: AlignConfig = field(default_factory=AlignConfig)

    def validate(self):
        if self.mode not in ("yolo_only", "yoco"):
            raise ConfigError(f"train.mode must be yolo_only|yoco, got {self.mode}")
        if self.mode == "yoco" and not self.target_train:
            raise ConfigError("train.mode yoco requires train.target_train")
        if self.mode == "yolo_only" and self.target_train:
            raise ConfigError("train.mode yolo_only forbids train.target_train")
        if not self.source_train:
            raise ConfigError("train.source_train is required")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        for name in ("epochs_stage1", "epochs_stage2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"train.{name} must be >= 0")
        if not (0 < self.lr_reduce_factor <= 1):
            raise ConfigError("train.lr_reduce_factor must sit in (0, 1]")
        self.loss.validate()
        self.detector.validate()
        self.align.validate()


# ---------------------------------------------------------------------------
# JSON loading with path-aware errors


_TUPLE_FIELDS = {"strides", "anchors", "backbone_channels", "head_channels",
                 "lateral_channels", "image_disc_channels", "iou_thresholds",
                 "sun_azimuth_range", "sun_elevation_range"}


def _coerce(cls, raw: dict, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected an object, got {type(raw).__name__}")
    field_map = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(field_map)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}; "
                          f"valid keys are {sorted(field_map)}")
    kwargs = {}
    for name, value in raw.items():
        f = field_map[name]
        sub = _NESTED.get((cls, name))
        if sub is not None:
            kwargs[name] = _coerce(sub, value, f"{path}.{name}")
        elif name == "instance_count_range":
            try:
                kwargs[name] = {int(k): (int(v[0]), int(v[1])) for k, v in value.items()}
            except (TypeError, ValueError, IndexError, AttributeError) as exc:
                raise ConfigError(f"{path}.{name}: want {{class: [lo, hi]}}: {exc}")
        elif name in _TUPLE_FIELDS and isinstance(value, list):
            kwargs[name] = _tuplify(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}")


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


_NESTED = {
    (GenConfig, "shift"): DomainShiftParams,
    (TrainConfig, "loss"): LossConfig,
    (TrainConfig, "detector"): DetectorConfig,
    (TrainConfig, "align"): AlignConfig,
}


def load_config(cls, path):
    """Read and validate a JSON config file into the given dataclass."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}")
    cfg = _coerce(cls, raw, str(path))
    cfg.validate()
    return cfg


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)
