#!/usr/bin/env python3
"""Download the standard MNIST IDX files into a data directory.

Usage: python scripts/fetch_mnist.py [DEST_DIR]

The library itself never downloads anything; point FLATPRIOR_DATA at
DEST_DIR afterwards.
"""

import gzip
import sys
import urllib.request
from pathlib import Path

MIRRORS = [
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
]
FILES = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]


def fetch(dest: Path) -> int:
    dest.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        out = dest / name.removesuffix(".gz")
        if out.exists():
            print(f"{out} already present")
            continue
        data = None
        for base in MIRRORS:
            try:
                print(f"fetching {base}{name}")
                with urllib.request.urlopen(base + name, timeout=60) as resp:
                    data = resp.read()
                break
            except OSError as exc:
                print(f"  failed: {exc}")
        if data is None:
            print(f"could not download {name} from any mirror", file=sys.stderr)
            return 1
        out.write_bytes(gzip.decompress(data))
        print(f"wrote {out} ({out.stat().st_size} bytes)")
    return 0


if __name__ == "__main__":
    sys.exit(fetch(Path(sys.argv[1] if len(sys.argv) > 1 else "data")))
