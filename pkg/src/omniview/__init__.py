"""
Omniview Toolkit

Data and evaluation tooling for person detection in top-view omnidirectional
(fisheye) images: box geometry, dataset assembly, seeded augmentation,
virtual fisheye synthesis, VOC-protocol evaluation, NMS and latency benchmarks.
"""

__version__ = "0.1.0"

from .errors import OmniviewError
from .geometry import BoundingBox, ImageDims, iou

__all__ = ["BoundingBox", "ImageDims", "OmniviewError", "iou", "__version__"]
