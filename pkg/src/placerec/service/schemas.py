"""Request and response bodies for the HTTP service.

The service runs next to the data: all paths in request bodies are resolved
on the server's filesystem.
"""
from __future__ import annotations

from pydantic import BaseModel, Field

from ..config import FeatureSource, PipelineConfig


class ConfigModel(BaseModel):
    """Partial pipeline configuration; omitted fields keep their defaults."""

    proposals_per_view: int | None = None
    budgets: list[int] | None = None
    image_width: int | None = None
    image_height: int | None = None
    section_width: int | None = None
    overlap: float | None = None
    seed: int | None = None
    projected_dim: int | None = None
    kappa: float | None = None
    nms_iou: float | None = None
    feature_source: str | None = None

    def to_config(self) -> PipelineConfig:
        kwargs = self.model_dump(exclude_none=True)
        if "budgets" in kwargs:
            kwargs["budgets"] = tuple(kwargs["budgets"])
        if "feature_source" in kwargs:
            kwargs["feature_source"] = FeatureSource.parse(kwargs["feature_source"])
        return PipelineConfig(**kwargs)


class HealthResponse(BaseModel):
    status: str
    version: str


class ProposalsRequest(BaseModel):
    image_path: str
    top: int | None = Field(default=None, ge=1)
    config: ConfigModel = Field(default_factory=ConfigModel)


class ProposalRecord(BaseModel):
    x1: int
    y1: int
    x2: int
    y2: int
    score: float


class ProposalsResponse(BaseModel):
    image_path: str
    count: int
    proposals: list[ProposalRecord]


class MatchRequest(BaseModel):
    image_a: str
    image_b: str
    config: ConfigModel = Field(default_factory=ConfigModel)


class MatchPair(BaseModel):
    section: int
    similarity: float
    box_a: list[int]
    box_b: list[int]


class MatchResponse(BaseModel):
    score: float
    section_count: int
    pairs: list[MatchPair]


class BuildRequest(BaseModel):
    manifest_path: str
    db_id: str | None = None
    which: str = "reference"
    jobs: int = Field(default=1, ge=1)
    save_path: str | None = None
    config: ConfigModel = Field(default_factory=ConfigModel)


class LoadRequest(BaseModel):
    path: str
    db_id: str | None = None


class DatabaseInfo(BaseModel):
    db_id: str
    views: int
    feature_dim: int
    section_count: int
    budgets: list[int]
    seed: int
    image_width: int
    image_height: int
    save_path: str | None = None


class DatabaseList(BaseModel):
    databases: list[DatabaseInfo]


class RankRequest(BaseModel):
    image_path: str
    method: str = "ldd"
    vp_x: int | None = None
    config: ConfigModel = Field(default_factory=ConfigModel)


class RankEntry(BaseModel):
    reference_id: str
    score: float


class RankResponse(BaseModel):
    query_id: str
    method: str
    ranked: list[RankEntry]
    best: RankEntry
    second_best: RankEntry | None


class EvaluateRequest(BaseModel):
    manifest_path: str
    db_id: str | None = None
    db_path: str | None = None
    method: str = "ldd"
    tau_grid: list[float] | None = None
    jobs: int = Field(default=1, ge=1)
    confusion_limit: int = Field(default=30, ge=1)
    out_dir: str | None = None
    config: ConfigModel = Field(default_factory=ConfigModel)


class EvaluateResponse(BaseModel):
    summary: dict
    report_paths: dict[str, str] | None = None


class ExportRegionsRequest(BaseModel):
    manifest_path: str
    out_dir: str
    which: str = "both"
    config: ConfigModel = Field(default_factory=ConfigModel)


class ExportRegionsResponse(BaseModel):
    out_dir: str
    view_ids: list[str]
