import numpy as np
import pandas as pd
import pytest

from collarforge.manifold_atlas import builtin_manifold


def pytest_configure(config):
    # Enable Copy-on-Write for the entire test session
    pd.options.mode.copy_on_write = True
    np.set_printoptions(precision=6, suppress=True)


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    """Keep the user's config directory and environment out of every test."""
    config_dir = tmp_path / "config"
    config_dir.mkdir()
    monkeypatch.setenv("COLLARFORGE_CONFIG_DIR", str(config_dir))
    monkeypatch.delenv("COLLARFORGE_SEED", raising=False)
    monkeypatch.delenv("COLLARFORGE_LOG_LEVEL", raising=False)
    return config_dir


# Coarse grids keep the geometry tests fast. Builtin manifolds are immutable,
# so the session-scoped ones are shared by every test that asks for them.


@pytest.fixture(scope="session")
def flat_box():
    return builtin_manifold("flat_box", {"side": 10.0, "resolution": 4})


@pytest.fixture(scope="session")
def flat_slab():
    return builtin_manifold("flat_slab", {"resolution": 8})


@pytest.fixture(scope="session")
def flat_torus():
    return builtin_manifold("flat_torus", {"side": 1.0, "resolution": 32})


@pytest.fixture(scope="session")
def euclidean_ball():
    return builtin_manifold("euclidean_ball", {"radius": 3.0, "resolution": 24})


@pytest.fixture(scope="session")
def spherical_cap():
    return builtin_manifold("spherical_cap", {"sphere_radius": 2.0, "resolution": 32})
