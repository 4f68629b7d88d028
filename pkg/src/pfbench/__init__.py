"""Reference toolkit for benchmarking pathology image restoration.

Degradation synthesis, full-reference metrics, tiled processing, diffusion sampler
numerics, pretraining loss kernels and a reproducible evaluation harness.
"""

from .errors import DataError, ExternalFailure, IoFailure, PfError

__version__ = "0.1.0"

__all__ = ["DataError", "ExternalFailure", "IoFailure", "PfError", "__version__"]
