"""Spectral analysis of graphs held encrypted by an untrusted cloud.

Two backends: Paillier (additive, plaintext query vectors blinded by a
masking pool) and a symmetric RLWE scheme with one multiplicative level
(packed rows times an encrypted query vector).
"""
from .errors import EncGraphError
from .ring import HAVE_EXTENSION, kernel_name

__version__ = "0.1.0"

__all__ = ["EncGraphError", "HAVE_EXTENSION", "kernel_name", "__version__"]
