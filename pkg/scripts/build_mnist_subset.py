"""Convert the digit JSON files of the npm ``mnist`` package into IDX files.

The package (MIT, Juan Cazala) bundles 10,000 MNIST digits as pixel/255
floats rounded to three decimals, which is fine enough to recover the
original bytes exactly.  Usage::

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python scripts/build_mnist_subset.py package/src/digits data/mnist
"""

import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np


def main(digits_dir, out_dir):
    digits_dir, out_dir = Path(digits_dir), Path(out_dir)
    images, labels = [], []
    for k in range(10):
        raw = np.asarray(json.loads((digits_dir / f"{k}.json").read_text())["data"])
        n = raw.size // 784
        pixels = np.rint(raw[: n * 784].reshape(n, 784) * 255.0)
        assert np.abs(pixels / 255.0 - raw[: n * 784].reshape(n, 784)).max() < 1e-3
        images.append(pixels.astype(np.uint8))
        labels.append(np.full(n, k, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    # interleave classes so any prefix is a usable subset
    order = np.random.default_rng(0).permutation(len(labels))
    images, labels = images[order], labels[order]

    out_dir.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(out_dir / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        f.write(images.tobytes())
    with gzip.GzipFile(out_dir / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(labels.tobytes())
    print(f"wrote {len(labels)} digits to {out_dir}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
