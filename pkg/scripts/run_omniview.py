#!/usr/bin/env python3
"""
Run the omniview command line from a source checkout, without installing.

All arguments are passed through to the `omniview` CLI.
"""

import os
import sys
from pathlib import Path

# Add the src directory to the Python path
project_root = Path(__file__).parent.parent
src_path = project_root / "src"
sys.path.insert(0, str(src_path))

from omniview.cli import run


if __name__ == "__main__":
    # Log level can also come from the environment (OMNIVIEW_LOG_LEVEL)
    os.environ.setdefault("OMNIVIEW_LOG_LEVEL", "INFO")

    try:
        sys.exit(run(sys.argv[1:]))
    except KeyboardInterrupt:
        print("\nInterrupted by user", file=sys.stderr)
        sys.exit(130)
