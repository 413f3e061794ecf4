"""Write the 5000-image MNIST subset shipped with mlxtend as gzipped IDX files.

The sandbox this project was built in had no route to the MNIST mirrors, so
``data/`` carries this subset (500 images per digit, original 28x28 uint8
pixels). Point ``mnist_images`` / ``mnist_labels`` in a run config at the
official ``train-*-ubyte.gz`` files to use the full set instead.

    pip install mlxtend
    python scripts/build_mnist_subset.py data/
"""
import gzip
import struct
import sys
from pathlib import Path

import numpy as np
from mlxtend.data import mnist_data


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    X, y = mnist_data()
    X = X.astype(np.uint8).reshape(-1, 28, 28)
    y = y.astype(np.uint8)
    images = struct.pack(">IIII", 0x803, len(X), 28, 28) + X.tobytes()
    labels = struct.pack(">II", 0x801, len(y)) + y.tobytes()
    # mtime=0 keeps the archives byte-reproducible
    for name, blob in [("mnist5k-images-idx3-ubyte.gz", images),
                       ("mnist5k-labels-idx1-ubyte.gz", labels)]:
        with open(out / name, "wb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(blob)
    print(f"wrote {len(X)} images to {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data")
