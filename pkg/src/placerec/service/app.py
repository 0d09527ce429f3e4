"""HTTP service holding reference databases in memory.

Databases are built or loaded once and then served to any number of ranking
and evaluation calls; they are immutable after registration, so concurrent
reads need no locking. Domain errors surface as 400s, unknown resources as
404s.
"""
from __future__ import annotations

import itertools
import logging
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..config import ConfigError
from ..descriptor import DatabaseFormatError, DescriptorDB, load_db, save_db
from ..evaluation import ManifestError, load_manifest, rank_references
from ..features import FeatureFileError
from ..imaging import ImageFormatError
from ..pipeline import (
    DEFAULT_TAU_GRID,
    build_database,
    describe_view,
    evaluate_database,
    export_regions,
    match_images,
    outcome_summary,
    propose_image,
    query_config,
    write_reports,
)
from . import schemas

log = logging.getLogger("placerec.service")

_DOMAIN_ERRORS = (
    ConfigError,
    ManifestError,
    DatabaseFormatError,
    FeatureFileError,
    ImageFormatError,
    ValueError,
    FileNotFoundError,
)


class _Registry:
    """In-memory database store with generated ids."""

    def __init__(self):
        self._dbs: dict[str, DescriptorDB] = {}
        self._paths: dict[str, str | None] = {}
        self._counter = itertools.count(1)

    def register(self, db: DescriptorDB, db_id: str | None, path: str | None) -> str:
        if db_id is None:
            db_id = f"db-{next(self._counter)}"
        if db_id in self._dbs:
            raise ValueError(f"database id {db_id!r} already registered")
        self._dbs[db_id] = db
        self._paths[db_id] = path
        return db_id

    def get(self, db_id: str) -> DescriptorDB:
        if db_id not in self._dbs:
            raise KeyError(db_id)
        return self._dbs[db_id]

    def drop(self, db_id: str) -> None:
        if db_id not in self._dbs:
            raise KeyError(db_id)
        del self._dbs[db_id]
        del self._paths[db_id]

    def info(self, db_id: str) -> schemas.DatabaseInfo:
        db = self.get(db_id)
        meta = db.meta
        return schemas.DatabaseInfo(
            db_id=db_id,
            views=len(db),
            feature_dim=meta.feature_dim,
            section_count=meta.section_count,
            budgets=list(meta.budgets),
            seed=meta.seed,
            image_width=meta.image_width,
            image_height=meta.image_height,
            save_path=self._paths[db_id],
        )

    def ids(self) -> list[str]:
        return list(self._dbs)


def create_app() -> FastAPI:
    app = FastAPI(title="placerec", version=__version__)
    registry = _Registry()
    app.state.registry = registry

    def bad_request(exc: Exception) -> HTTPException:
        return HTTPException(status_code=400, detail=str(exc))

    def get_db(db_id: str) -> DescriptorDB:
        try:
            return registry.get(db_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no database {db_id!r}") from None

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/proposals", response_model=schemas.ProposalsResponse)
    def proposals(req: schemas.ProposalsRequest) -> schemas.ProposalsResponse:
        try:
            config = req.config.to_config()
            records = propose_image(req.image_path, config, top=req.top)
        except _DOMAIN_ERRORS as exc:
            raise bad_request(exc) from exc
        return schemas.ProposalsResponse(
            image_path=req.image_path,
            count=len(records),
            proposals=[schemas.ProposalRecord(**r) for r in records],
        )

    @app.post("/match", response_model=schemas.MatchResponse)
    def match(req: schemas.MatchRequest) -> schemas.MatchResponse:
        try:
            config = req.config.to_config()
            _, payload = match_images(req.image_a, req.image_b, config)
        except _DOMAIN_ERRORS as exc:
            raise bad_request(exc) from exc
        return schemas.MatchResponse(**payload)

    @app.post("/databases/build", response_model=schemas.DatabaseInfo)
    def build(req: schemas.BuildRequest) -> schemas.DatabaseInfo:
        try:
            config = req.config.to_config()
            manifest = load_manifest(req.manifest_path)
            db = build_database(manifest, config, which=req.which, jobs=req.jobs)
            if req.save_path is not None:
                Path(req.save_path).parent.mkdir(parents=True, exist_ok=True)
                save_db(db, req.save_path)
            db_id = registry.register(db, req.db_id, req.save_path)
        except _DOMAIN_ERRORS as exc:
            raise bad_request(exc) from exc
        return registry.info(db_id)

    @app.post("/databases/load", response_model=schemas.DatabaseInfo)
    def load(req: schemas.LoadRequest) -> schemas.DatabaseInfo:
        try:
            db = load_db(req.path)
            db_id = registry.register(db, req.db_id, req.path)
        except _DOMAIN_ERRORS as exc:
            raise bad_request(exc) from exc
        return registry.info(db_id)

    @app.get("/databases", response_model=schemas.DatabaseList)
    def list_databases() -> schemas.DatabaseList:
        return schemas.DatabaseList(databases=[registry.info(i) for i in registry.ids()])

    @app.delete("/databases/{db_id}")
    def drop_database(db_id: str) -> dict:
        get_db(db_id)
        registry.drop(db_id)
        return {"dropped": db_id}

    @app.post("/databases/{db_id}/rank", response_model=schemas.RankResponse)
    def rank(db_id: str, req: schemas.RankRequest) -> schemas.RankResponse:
        db = get_db(db_id)
        try:
            config = query_config(db.meta, req.config.to_config())
            query = describe_view(req.image_path, Path(req.image_path).stem, config, vp_x=req.vp_x)
            result = rank_references(query, db, req.method)
        except _DOMAIN_ERRORS as exc:
            raise bad_request(exc) from exc
        entries = [schemas.RankEntry(reference_id=r, score=s) for r, s in result.ranked]
        return schemas.RankResponse(
            query_id=result.query_id,
            method=req.method,
            ranked=entries,
            best=entries[0],
            second_best=entries[1] if len(entries) > 1 else None,
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
        if (req.db_id is None) == (req.db_path is None):
            raise HTTPException(
                status_code=400, detail="provide exactly one of db_id and db_path"
            )
        try:
            db = get_db(req.db_id) if req.db_id is not None else load_db(req.db_path)
            config = req.config.to_config()
            manifest = load_manifest(req.manifest_path)
            outcome = evaluate_database(
                manifest,
                db,
                config,
                req.method,
                tau_grid=req.tau_grid or DEFAULT_TAU_GRID,
                jobs=req.jobs,
                confusion_limit=req.confusion_limit,
            )
            report_paths = None
            if req.out_dir is not None:
                report_paths = {
                    k: str(v) for k, v in write_reports(outcome, req.out_dir).items()
                }
        except _DOMAIN_ERRORS as exc:
            raise bad_request(exc) from exc
        return schemas.EvaluateResponse(summary=outcome_summary(outcome), report_paths=report_paths)

    @app.post("/export-regions", response_model=schemas.ExportRegionsResponse)
    def export(req: schemas.ExportRegionsRequest) -> schemas.ExportRegionsResponse:
        try:
            config = req.config.to_config()
            manifest = load_manifest(req.manifest_path)
            listings = export_regions(manifest, config, req.out_dir, which=req.which)
        except _DOMAIN_ERRORS as exc:
            raise bad_request(exc) from exc
        return schemas.ExportRegionsResponse(
            out_dir=req.out_dir, view_ids=[item["view_id"] for item in listings]
        )

    return app
