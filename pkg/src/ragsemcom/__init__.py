"""Retrieval-augmented generative semantic communication, desk scale.

An image is encoded into multimodal semantic information (caption + edge
map), source-coded, framed, pushed through a seeded binary symmetric
channel, and reconstructed at the receiver by a pluggable generator guided
by knowledge retrieved from a local store. Fidelity is tracked with MS-SSIM
and embedding-cosine similarity.
"""

from ._kernels import lane as kernel_lane

__version__ = "0.1.0"

__all__ = ["kernel_lane", "__version__"]
