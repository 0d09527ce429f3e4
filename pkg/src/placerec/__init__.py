"""Place recognition from landmark distribution descriptors.

Views are described by stacking region features left to right and slicing the
frame into overlapping sections; matching picks the best landmark pair per
section without reuse. The package ships the full pipeline (proposal
generation, features, projection, matching, evaluation), a file format pair
(LDDF features, LDDB databases), an HTTP service and a CLI.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .config import ConfigError, FeatureSource, PipelineConfig
from .descriptor import (
    DatabaseFormatError,
    DbMeta,
    DescriptorDB,
    LandmarkDescriptor,
    LandmarkEntry,
    build_descriptor,
    load_db,
    save_db,
)
from .evaluation import (
    DatasetManifest,
    LocationRecord,
    ManifestError,
    RankedQueryResult,
    load_manifest,
    precision_recall,
    pr_curve,
    rank_references,
    ratio_accept,
)
from .features import (
    FeatureFileError,
    FeatureVector,
    ProjectionMatrix,
    builtin_descriptor,
    load_features,
    make_projection,
    project,
    project_batch,
    save_features,
)
from .imaging import GrayImage, ImageFormatError, gradient_map, load_image, resize_bilinear
from .matching import (
    MatchResult,
    SectionMatch,
    clm_score,
    cosine,
    cwi_score,
    match_ldd,
    shape_similarity,
)
from .pipeline import (
    build_database,
    describe_view,
    evaluate_database,
    export_regions,
    match_images,
    write_reports,
)
from .proposals import (
    Box,
    LandmarkProposal,
    ProposalConfig,
    SectionLayout,
    generate_proposals,
    score_box,
    section_layout,
    select_per_section,
)

__all__ = [
    "__version__",
    "Box",
    "ConfigError",
    "DatabaseFormatError",
    "DatasetManifest",
    "DbMeta",
    "DescriptorDB",
    "FeatureFileError",
    "FeatureSource",
    "FeatureVector",
    "GrayImage",
    "ImageFormatError",
    "LandmarkDescriptor",
    "LandmarkEntry",
    "LandmarkProposal",
    "LocationRecord",
    "ManifestError",
    "MatchResult",
    "PipelineConfig",
    "ProjectionMatrix",
    "ProposalConfig",
    "RankedQueryResult",
    "SectionLayout",
    "SectionMatch",
    "build_database",
    "build_descriptor",
    "builtin_descriptor",
    "clm_score",
    "cosine",
    "cwi_score",
    "describe_view",
    "evaluate_database",
    "export_regions",
    "generate_proposals",
    "gradient_map",
    "load_db",
    "load_features",
    "load_image",
    "load_manifest",
    "match_images",
    "match_ldd",
    "make_projection",
    "pr_curve",
    "precision_recall",
    "project",
    "project_batch",
    "rank_references",
    "ratio_accept",
    "resize_bilinear",
    "save_db",
    "save_features",
    "score_box",
    "section_layout",
    "select_per_section",
    "shape_similarity",
    "write_reports",
]
