"""
Utility functions and helpers for the omniview toolkit.
"""

import hashlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Union

PathLike = Union[str, os.PathLike]


def setup_logging(log_level: str = "INFO") -> logging.Logger:
    """
    Set up logging configuration for the toolkit.
    Logging goes to stderr so that stdout stays free for command output.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)

    Returns:
        logging.Logger: Configured package logger
    """
    logger = logging.getLogger("omniview")

    # Clear any existing handlers
    logger.handlers.clear()

    try:
        logger.setLevel(getattr(logging, log_level.upper()))
    except AttributeError:
        logger.setLevel(logging.INFO)  # Default to INFO if invalid level

    handler = logging.StreamHandler(sys.stderr)
    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    handler.setFormatter(formatter)
    logger.addHandler(handler)

    # Prevent propagation to root logger to avoid duplicate messages
    logger.propagate = False

    return logger


def format_error_message(error: Exception, context: Optional[str] = None) -> str:
    """
    Format error messages for consistent logging and user feedback.

    Args:
        error: Exception that occurred
        context: Optional context information

    Returns:
        str: Formatted error message
    """
    error_type = type(error).__name__
    error_msg = str(error)

    if context:
        return f"{context}: {error_type} - {error_msg}"
    else:
        return f"{error_type}: {error_msg}"


def derive_stream_id(*parts: Any) -> int:
    """
    Derive a 64-bit RNG stream id from identifying values.

    Args:
        parts: Values identifying the stream (e.g. image id, pass index)

    Returns:
        int: Unsigned 64-bit stream id, identical on every platform
    """
    key = json.dumps([str(p) for p in parts], separators=(',', ':'))
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def dumps_compact(data: Any) -> str:
    """Serialize to JSON without whitespace, keeping key order."""
    return json.dumps(data, separators=(',', ':'), ensure_ascii=False)


def atomic_write_bytes(path: PathLike, payload: bytes) -> Path:
    """
    Write bytes to `path` via a temp file in the same directory and a rename.

    Args:
        path: Destination path
        payload: File content

    Returns:
        Path: The destination path
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Atomically write UTF-8 text."""
    return atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: PathLike, data: Any) -> Path:
    """Atomically write pretty-printed JSON with a trailing newline."""
    return atomic_write_text(path, json.dumps(data, indent=2, ensure_ascii=False) + "\n")


def write_jsonl(path: PathLike, rows: Iterable[Dict[str, Any]]) -> Path:
    """Atomically write one compact JSON object per line."""
    return atomic_write_text(path, "".join(dumps_compact(row) + "\n" for row in rows))


def iter_jsonl(path: PathLike) -> Iterator[Dict[str, Any]]:
    """
    Iterate over JSON objects stored one per line, skipping blank lines.

    Raises:
        ValueError: If a line is not valid JSON (message carries the line number)
    """
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"Invalid JSON in {path} at line {line_no}: {e}")


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    """Read a whole JSON-lines file."""
    return list(iter_jsonl(path))


def load_json(path: PathLike) -> Any:
    """Load a JSON document, reporting the offending file on decode errors."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in {path}: {e}")


def package_data_path(*parts: str) -> Path:
    """Path of a data file bundled with the package."""
    return Path(__file__).parent / "data" / Path(*parts)
