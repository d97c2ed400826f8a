"""Pydantic models for specs, run configuration and reports.

ActivationSpec   → one activation kind and its parameters
AugmentPolicy    → DCT augmentation threshold range
CorruptionSpec   → corruption kind + severity + seed
FlipReport, ShiftReport, BoundaryFit → analysis results
RunConfig        → one experiment, sectioned like its INI file
"""

from __future__ import annotations

from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from .config import (
    ACTIVATION_KINDS, ARCH_ALIASES, ARCHITECTURES, BATCH_SIZE, CORRUPTION_KINDS, DCT_T_MAX,
    DCT_T_MIN, EPOCHS, FREQ_CLASS, HIST_BINS, L2, LEARNING_RATE, LR_SCHEDULE,
    MOMENTUM, SEQUENCE_FRAMES, SEVERITY_LEVELS, SWEEP_DTHETA, VAL_FRACTION,
)

ActivationKind = Literal[
    "relu", "leaky_relu", "p_relu", "clipped_relu", "tent",
    "log_tailed_relu", "tanh", "swish", "lp_relu1", "lp_relu2",
]
CorruptionKind = Literal[
    "gaussian_noise", "shot_noise", "impulse_noise", "speckle_noise",
    "gaussian_blur", "defocus_blur", "motion_blur", "zoom_blur",
    "contrast", "brightness", "pixelate", "jpeg_like",
]
FreqClass = Literal["HFc", "LFc", "mixed"]

assert sorted(ActivationKind.__args__) == sorted(ACTIVATION_KINDS)
assert sorted(CorruptionKind.__args__) == sorted(CORRUPTION_KINDS)


# ── Specs ─────────────────────────────────────────────────

class ActivationSpec(BaseModel):
    """Not validated on construction: projection must accept drifted values."""

    kind: ActivationKind
    A: float = 0.0
    B: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    delta: float = 0.0
    learnable: Dict[str, bool] = Field(default_factory=dict)

    def learnable_names(self) -> List[str]:
        return [name for name, on in sorted(self.learnable.items()) if on]


def _check_thresholds(t_min: float, t_max: float) -> None:
    if not 0.0 <= t_min <= t_max <= 1.0:
        raise ValueError(f"Need 0 <= t_min <= t_max <= 1, got [{t_min}, {t_max}]")


class AugmentPolicy(BaseModel):
    t_min: float = DCT_T_MIN
    t_max: float = DCT_T_MAX
    clamp: bool = True

    @model_validator(mode="after")
    def _check_range(self) -> "AugmentPolicy":
        _check_thresholds(self.t_min, self.t_max)
        return self


class CorruptionSpec(BaseModel):
    kind: CorruptionKind
    severity: int = Field(ge=1, le=SEVERITY_LEVELS)
    freq_class: Optional[FreqClass] = None
    seed: int = 0

    @model_validator(mode="after")
    def _fix_freq_class(self) -> "CorruptionSpec":
        fixed = FREQ_CLASS[self.kind]
        if self.freq_class is not None and self.freq_class != fixed:
            raise ValueError(f"{self.kind} is {fixed}, not {self.freq_class}")
        self.freq_class = fixed
        return self


# ── Reports ───────────────────────────────────────────────

class FlipReport(BaseModel):
    per_kind: Dict[str, float]
    mfp: float


class ShiftReport(BaseModel):
    per_severity: Dict[int, float]   # level 1 = clean
    per_depth: List[float]
    mode: Literal["layer", "concat"] = "layer"


class BoundaryFit(BaseModel):
    class_a: int
    class_b: int
    point: Tuple[float, float]
    direction: Tuple[float, float]
    max_residual: float
    n_points: int


# ── Run configuration ─────────────────────────────────────

class RunSection(BaseModel):
    name: str = "run"
    seed: int = 0
    out_dir: str = "runs/default"
    workers: int = Field(default=1, ge=1)


class DataSection(BaseModel):
    dataset: Literal["mnist", "cifar10", "synthetic"] = "mnist"
    root: Optional[str] = None
    train_limit: Optional[int] = Field(default=None, ge=1)
    test_limit: Optional[int] = Field(default=None, ge=1)
    val_fraction: float = Field(default=VAL_FRACTION, gt=0.0, lt=1.0)
    synthetic_per_class: int = Field(default=200, ge=1)


class NetSection(BaseModel):
    arch: str = "cnn3"
    padding: int = Field(default=1, ge=0)

    @field_validator("arch")
    @classmethod
    def _known_arch(cls, v: str) -> str:
        if v not in ARCHITECTURES:
            raise ValueError(f"Invalid net: '{v}'")
        return ARCH_ALIASES.get(v, v)


class ActivationSection(BaseModel):
    kind: ActivationKind = "relu"
    params: Dict[str, float] = Field(default_factory=dict)
    learnable: Dict[str, bool] = Field(default_factory=dict)
    init_stats: Optional[str] = None     # hist.csv of a trained ReLU run; moves A and B


class OptimSection(BaseModel):
    lr: float = Field(default=LEARNING_RATE, gt=0.0)
    momentum: float = Field(default=MOMENTUM, ge=0.0, lt=1.0)
    l2: float = Field(default=L2, ge=0.0)
    epochs: int = Field(default=EPOCHS, ge=1)
    batch_size: int = Field(default=BATCH_SIZE, ge=1)
    schedule: List[Tuple[int, float]] = Field(default_factory=lambda: list(LR_SCHEDULE))


class AugmentSection(BaseModel):
    dct: bool = False
    t_min: float = DCT_T_MIN
    t_max: float = DCT_T_MAX

    @model_validator(mode="after")
    def _check_range(self) -> "AugmentSection":
        _check_thresholds(self.t_min, self.t_max)
        return self


class EvalSection(BaseModel):
    kinds: List[CorruptionKind] = Field(default_factory=lambda: list(CORRUPTION_KINDS))
    severities: List[int] = Field(default_factory=lambda: list(range(1, SEVERITY_LEVELS + 1)))
    fp_kinds: List[CorruptionKind] = Field(
        default_factory=lambda: ["gaussian_noise", "shot_noise", "motion_blur", "zoom_blur", "brightness"]
    )
    clips: int = Field(default=200, ge=1)
    frames: int = Field(default=SEQUENCE_FRAMES, ge=2)
    shift_kind: CorruptionKind = "gaussian_noise"
    shift_mode: Literal["layer", "concat"] = "layer"
    shift_images: int = Field(default=500, ge=1)
    hist_lfc: CorruptionKind = "gaussian_blur"
    hist_hfc: CorruptionKind = "gaussian_noise"
    hist_severity: int = Field(default=5, ge=1, le=SEVERITY_LEVELS)
    bins: int = Field(default=HIST_BINS, ge=1)


class MapSection(BaseModel):
    n: int = Field(default=20, ge=1)
    dtheta: float = Field(default=SWEEP_DTHETA, gt=0.0)
    origin: Literal["centroid", "zero"] = "centroid"
    feature_images: int = Field(default=2000, ge=1)


class RunConfig(BaseModel):
    run: RunSection = Field(default_factory=RunSection)
    data: DataSection = Field(default_factory=DataSection)
    net: NetSection = Field(default_factory=NetSection)
    activation: ActivationSection = Field(default_factory=ActivationSection)
    optim: OptimSection = Field(default_factory=OptimSection)
    augment: AugmentSection = Field(default_factory=AugmentSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    map: MapSection = Field(default_factory=MapSection)

    def policy(self) -> AugmentPolicy:
        return AugmentPolicy(t_min=self.augment.t_min, t_max=self.augment.t_max)
