"""Photonic VQE simulator package."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("photonic-vqe")
except PackageNotFoundError:
    # package is not installed
    __version__ = "unknown"
