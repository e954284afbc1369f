"""Encoder-to-MFV1 export adapter.

Runs a pretrained text encoder over mention surfaces (or their contexts)
and writes the vectors in the MFV1 binary format consumed by the kNN
normalization engines.
"""

__version__ = "0.1.0"

from . import cli  # noqa: F401  (embed_adapter.cli reachable after bare import)
