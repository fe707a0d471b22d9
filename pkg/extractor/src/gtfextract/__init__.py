"""Batch feature extraction into GTF1 containers and a dataset index."""

from .manifest import Item, Manifest, ManifestError, load_manifest
from .pipeline import ExtractionError, ExtractionResult, extract

__version__ = "0.1.0"

__all__ = [
    "ExtractionError",
    "ExtractionResult",
    "Item",
    "Manifest",
    "ManifestError",
    "extract",
    "load_manifest",
    "__version__",
]
