import pytest

from specfuse import CompatibilityTable, PipelineConfig


@pytest.fixture
def config() -> PipelineConfig:
    return PipelineConfig()


@pytest.fixture
def table() -> CompatibilityTable:
    return CompatibilityTable.default()
