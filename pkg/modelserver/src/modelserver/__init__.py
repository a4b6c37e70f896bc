"""Sidecar model server for the semantic communication simulator.

Serves the documented HTTP protocol (info, caption, embeddings, rewrite,
review, generate) over a deterministic procedural backend, so the full
service path runs on any machine. Real captioner/diffusion backends can be
slotted in behind the same Backend interface.
"""

from .backend import ProceduralBackend
from .app import ModelServer

__version__ = "0.1.0"

__all__ = ["ProceduralBackend", "ModelServer", "__version__"]
