"""Aggregation-aware single-layer graph representation learning toolkit."""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "graph",
    "reconstruct",
    "model",
    "evaluate",
    "synth",
    "dataio",
    "cli",
    "errors",
)

__all__ = list(_SUBMODULES)


def __getattr__(name):
    # submodules are imported lazily so the CLI can pin thread env vars
    # before numpy loads
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
