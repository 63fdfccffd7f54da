import os
import sys
import tempfile


def out_dir(name):
    """Output folder: first CLI argument, or a fresh temp dir."""
    d = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix=f"lenticolor-{name}-")
    os.makedirs(d, exist_ok=True)
    print(f"writing to {d}")
    return d
