import sys
from textwrap import dedent

import pytest

import collarforge.family_loader as family_loader
from collarforge.family_base import FamilyBase
from collarforge.family_loader import (
    family_names,
    get_family,
    load_families,
)


@pytest.fixture(autouse=True)
def clean_registry():
    """Ensure a fresh registry for every test."""
    family_loader._registry = {}
    yield
    # Later tests build builtin manifolds through the registry.
    family_loader._registry = {}


def test_load_families_dynamic_discovery(tmp_path, monkeypatch):
    """
    Tests loading families from a throwaway package. This test needs to use
    temp files because importlib is very sensitive to mocking and fake
    in-memory filesystems.
    """

    # Create a temporary 'fake_families' directory and make it a package.
    pkg_dir = tmp_path / "fake_families"
    pkg_dir.mkdir()
    (pkg_dir / "__init__.py").write_text("")

    family_file = pkg_dir / "shapes.py"
    family_file.write_text(
        dedent(
            """
        from collarforge.family_base import FamilyBase

        class WedgeFamily(FamilyBase):
            @property
            def name(self): return "wedge"
            @property
            def summary(self): return "a wedge"
            def build(self, params): return None

        class AnnulusFamily(FamilyBase):
            @property
            def name(self): return "Annulus Sector"
            @property
            def summary(self): return "an annulus"
            def build(self, params): return None
        """
        )
    )

    # Add the temp directory to sys.path so Python can 'import' it
    monkeypatch.syspath_prepend(str(tmp_path))
    monkeypatch.delitem(sys.modules, "fake_families", raising=False)
    monkeypatch.delitem(sys.modules, "fake_families.shapes", raising=False)

    load_families("fake_families")

    # Verify sorting (A before w)
    assert family_names() == ["Annulus Sector", "wedge"]
    f = get_family("wedge")
    assert isinstance(f, FamilyBase)
    assert f.__class__.__name__ == "WedgeFamily"
    assert get_family("Not Found") is None


def test_builtin_families():
    load_families()
    assert family_names() == [
        "euclidean_ball",
        "flat_box",
        "flat_cylinder",
        "flat_slab",
        "flat_torus",
        "revolution_surface",
        "round_sphere",
        "spherical_cap",
    ]
    for name in family_names():
        assert get_family(name).summary


def test_ensure_families_keeps_an_existing_registry():
    family_loader._registry = {"only": object()}
    family_loader.ensure_families()
    assert family_names() == ["only"]
