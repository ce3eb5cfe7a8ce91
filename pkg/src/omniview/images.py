"""
Image file helpers. Pixel arrays are (H, W, 3) uint8 in RGB order.
"""

from pathlib import Path

import cv2
import numpy as np

from .errors import ImageIOError
from .utils import PathLike, atomic_write_bytes


def read_image(path: PathLike) -> np.ndarray:
    """
    Decode an image file into an RGB uint8 array.

    Raises:
        ImageIOError: If the file is missing or cannot be decoded
    """
    image_path = Path(path)
    if not image_path.is_file():
        raise ImageIOError(f"Image file not found: {image_path}")
    buffer = np.frombuffer(image_path.read_bytes(), dtype=np.uint8)
    bgr = cv2.imdecode(buffer, cv2.IMREAD_COLOR)
    if bgr is None:
        raise ImageIOError(f"Could not decode image: {image_path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def encode_png(image: np.ndarray) -> bytes:
    """Encode an RGB (or single-channel) uint8 array as PNG bytes."""
    if image.dtype != np.uint8:
        raise ImageIOError(f"PNG encoding needs uint8 pixels, got {image.dtype}")
    if image.ndim == 3:
        image = cv2.cvtColor(image, cv2.COLOR_RGB2BGR)
    ok, encoded = cv2.imencode(".png", image)
    if not ok:
        raise ImageIOError("PNG encoding failed")
    return encoded.tobytes()


def write_png(path: PathLike, image: np.ndarray) -> Path:
    """Atomically write an RGB uint8 array as PNG."""
    return atomic_write_bytes(path, encode_png(image))
