import pytest

from vrcomfort.dataset import synth_dataset
from vrcomfort.forest import CybersicknessForest


@pytest.fixture(scope="session")
def corpus():
    """Full-size planted-signal corpus: 20 participants, 1160 windows."""
    return synth_dataset(20, seed=0)


@pytest.fixture(scope="session")
def small_corpus():
    """Quick corpus for forest/grid tests: 6 participants, 20 s captures."""
    return synth_dataset(6, duration_s=20.0, seed=1)


@pytest.fixture(scope="session")
def default_model(corpus):
    """Default-hyperparameter forest trained on the full corpus."""
    ds = corpus[0]
    return CybersicknessForest(random_state=0).fit(ds.X, ds.y)
