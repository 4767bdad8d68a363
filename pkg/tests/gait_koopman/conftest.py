"""Shared fixtures: a small synthetic population and small models."""

import pytest

from gait_koopman.data.synthetic import Population, generate_population
from gait_koopman.lds.model import LdsModel
from gait_koopman.recognition.head import HeadArchitecture, RecognitionHead


@pytest.fixture(scope="session")
def small_population() -> Population:
    """3 subjects x 3 sequences x 16 frames."""
    return generate_population(3, 3, 16, seed=0, noise=0.01, max_workers=1, progress=False)


@pytest.fixture
def lds_model() -> LdsModel:
    """Untrained LDS with the default 216/198/180 layout."""
    return LdsModel(seed=0)


@pytest.fixture
def small_head() -> RecognitionHead:
    """Narrow recognition head for fast tests."""
    head = RecognitionHead(HeadArchitecture(hidden_dim=32, embedding_dim=8), seed=0)
    head.eval()
    return head
