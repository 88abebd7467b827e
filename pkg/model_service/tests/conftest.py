import pytest

from model_service.engine import GenerationEngine


@pytest.fixture(scope="session")
def tiny_engine() -> GenerationEngine:
    return GenerationEngine.build_tiny(seed=0)
