import tempfile

import pytest
import ray


@pytest.fixture
def ray_init():
    ray.init(num_cpus=1, local_mode=True)
    yield None
    ray.shutdown()


@pytest.fixture(scope="class")
def tmpdirname():
    """
    A directory for reports, logs and golden files.
    """
    with tempfile.TemporaryDirectory() as tmpdir:
        yield tmpdir


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv("QLAX_SEED", raising=False)
