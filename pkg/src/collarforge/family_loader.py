import importlib
import inspect
import pkgutil

from collarforge.family_base import FamilyBase

# These functions could live next to FamilyBase. They are kept apart so that
# load_families can be tested on its own, the location of the families package
# is not tied to the base class, and plugins importing the base never import
# the loader back.

DEFAULT_PACKAGE = "collarforge.families"

# Private registry to prevent modification
_registry: dict[str, FamilyBase] = {}


def load_families(package_name: str = DEFAULT_PACKAGE) -> None:
    """
    Enumerates the modules of `package_name` and registers one instance of
    every FamilyBase subclass found in them, keyed by its name.
    """
    global _registry
    tmp_registry = {}

    package = importlib.import_module(package_name)
    for _loader, module_name, _is_pkg in pkgutil.iter_modules(package.__path__):
        module = importlib.import_module(f"{package_name}.{module_name}")
        for _name, obj in inspect.getmembers(module, inspect.isclass):
            if (
                issubclass(obj, FamilyBase)
                and obj is not FamilyBase
                and not inspect.isabstract(obj)
            ):
                instance = obj()
                tmp_registry[instance.name] = instance

    _registry = {k: tmp_registry[k] for k in sorted(tmp_registry.keys())}


def ensure_families() -> None:
    """Loads the builtin families unless some registry is already in place."""
    if not _registry:
        load_families()


def family_names() -> list[str]:
    """Returns the names of all the families found."""
    return list(_registry.keys())


def get_family(name: str) -> FamilyBase | None:
    return _registry.get(name)
