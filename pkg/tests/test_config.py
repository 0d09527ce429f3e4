from dataclasses import FrozenInstanceError
from pathlib import Path

import pytest

from placerec.config import (
    FEATURES_BUILTIN,
    FEATURES_LDDF,
    ConfigError,
    FeatureSource,
    PipelineConfig,
)


class TestFeatureSource:
    def test_parse_builtin(self):
        src = FeatureSource.parse("builtin")
        assert src.kind == FEATURES_BUILTIN
        assert src.directory is None
        assert str(src) == "builtin"

    def test_parse_lddf(self):
        src = FeatureSource.parse("lddf:/data/features")
        assert src.kind == FEATURES_LDDF
        assert src.directory == Path("/data/features")
        assert str(src) == "lddf:/data/features"

    def test_parse_lddf_without_directory(self):
        with pytest.raises(ConfigError):
            FeatureSource.parse("lddf:")

    def test_parse_unknown(self):
        with pytest.raises(ConfigError):
            FeatureSource.parse("resnet")

    def test_lddf_requires_directory(self):
        with pytest.raises(ConfigError):
            FeatureSource(kind=FEATURES_LDDF)

    def test_builtin_takes_no_directory(self):
        with pytest.raises(ConfigError):
            FeatureSource(kind=FEATURES_BUILTIN, directory=Path("/x"))


class TestPipelineConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert cfg.proposals_per_view == 50
        assert cfg.budgets == (10, 30, 10)
        assert cfg.section_count == 3
        assert cfg.feature_source.kind == FEATURES_BUILTIN
        assert cfg.projected_dim == 1024

    def test_frozen(self):
        with pytest.raises(FrozenInstanceError):
            PipelineConfig().seed = 1

    def test_budget_sum_must_match(self):
        with pytest.raises(ConfigError):
            PipelineConfig(proposals_per_view=25, budgets=(5, 15, 10))

    def test_budget_floor(self):
        with pytest.raises(ConfigError):
            PipelineConfig(proposals_per_view=20, budgets=(0, 15, 5))

    def test_overlap_range(self):
        with pytest.raises(ConfigError):
            PipelineConfig(overlap=1.0)
        with pytest.raises(ConfigError):
            PipelineConfig(overlap=-0.1)

    def test_projected_dim_floor(self):
        with pytest.raises(ConfigError):
            PipelineConfig(projected_dim=0)

    def test_minimum_image_size(self):
        with pytest.raises(ConfigError):
            PipelineConfig(image_width=2, section_width=2)

    def test_section_width_within_image(self):
        with pytest.raises(ConfigError):
            PipelineConfig(section_width=700)

    def test_seed_range(self):
        with pytest.raises(ConfigError):
            PipelineConfig(seed=-1)
        with pytest.raises(ConfigError):
            PipelineConfig(seed=2**64)

    def test_kappa_nonnegative(self):
        with pytest.raises(ConfigError):
            PipelineConfig(kappa=-0.5)

    def test_nms_iou_range(self):
        with pytest.raises(ConfigError):
            PipelineConfig(nms_iou=0.0)
        PipelineConfig(nms_iou=1.0)

    def test_standard_25_proposal_point(self):
        cfg = PipelineConfig(proposals_per_view=25, budgets=(5, 15, 5))
        assert cfg.section_count == 3
