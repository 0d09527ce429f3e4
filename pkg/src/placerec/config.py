"""Validated end-to-end pipeline configuration.

Defaults follow the reference operating point: 640x480 views, three 320 px
sections at 50% overlap, 50 proposals split (10, 30, 10), features projected
to 1024 dims. Validation runs before any image is read.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

FEATURES_BUILTIN = "builtin"
FEATURES_LDDF = "lddf"


class ConfigError(ValueError):
    """Raised when a pipeline configuration violates an invariant."""


@dataclass(frozen=True)
class FeatureSource:
    """Where per-region features come from: computed in-process or read from
    pre-exported LDDF files (one per view, named `<view_id>.lddf`)."""

    kind: str
    directory: Path | None = None

    def __post_init__(self):
        if self.kind not in (FEATURES_BUILTIN, FEATURES_LDDF):
            raise ConfigError(f"unknown feature source {self.kind!r}")
        if self.kind == FEATURES_LDDF and self.directory is None:
            raise ConfigError("lddf feature source needs a directory")
        if self.kind == FEATURES_BUILTIN and self.directory is not None:
            raise ConfigError("builtin feature source takes no directory")

    @classmethod
    def parse(cls, text: str) -> "FeatureSource":
        if text == FEATURES_BUILTIN:
            return cls(kind=FEATURES_BUILTIN)
        if text.startswith(FEATURES_LDDF + ":"):
            directory = text[len(FEATURES_LDDF) + 1 :]
            if not directory:
                raise ConfigError("lddf feature source needs a directory")
            return cls(kind=FEATURES_LDDF, directory=Path(directory))
        raise ConfigError(f"feature source must be 'builtin' or 'lddf:DIR', got {text!r}")

    def __str__(self) -> str:
        if self.kind == FEATURES_BUILTIN:
            return FEATURES_BUILTIN
        return f"{FEATURES_LDDF}:{self.directory}"


@dataclass(frozen=True)
class PipelineConfig:
    proposals_per_view: int = 50
    budgets: tuple[int, ...] = (10, 30, 10)
    image_width: int = 640
    image_height: int = 480
    section_width: int = 320
    overlap: float = 0.5
    seed: int = 7
    projected_dim: int = 1024
    kappa: float = 1.5
    nms_iou: float = 0.7
    feature_source: FeatureSource = field(
        default_factory=lambda: FeatureSource(kind=FEATURES_BUILTIN)
    )

    def __post_init__(self):
        if sum(self.budgets) != self.proposals_per_view:
            raise ConfigError(
                f"budgets {self.budgets} sum to {sum(self.budgets)}, "
                f"not proposals_per_view={self.proposals_per_view}"
            )
        if any(b < 1 for b in self.budgets):
            raise ConfigError("every section budget must be >= 1")
        if not (0.0 <= self.overlap < 1.0):
            raise ConfigError(f"overlap must lie in [0, 1), got {self.overlap}")
        if self.projected_dim < 1:
            raise ConfigError("projected dim must be >= 1")
        if self.image_width < 3 or self.image_height < 3:
            raise ConfigError("images must be at least 3x3 for gradients")
        if not (0 < self.section_width <= self.image_width):
            raise ConfigError("section width must lie in (0, image_width]")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.kappa < 0:
            raise ConfigError("kappa must be nonnegative")
        if not (0.0 < self.nms_iou <= 1.0):
            raise ConfigError("NMS IoU threshold must lie in (0, 1]")

    @property
    def section_count(self) -> int:
        return len(self.budgets)
