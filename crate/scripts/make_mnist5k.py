#!/usr/bin/env python3
"""Write the 5000-digit MNIST subset shipped with mlxtend as gzipped IDX files.

Usage: pip download --no-deps mlxtend && python3 scripts/make_mnist5k.py mlxtend-*.whl data/
"""
import gzip
import io
import struct
import sys
import zipfile

import numpy as np


def main(wheel, out_dir):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",")
    pixels = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    n = len(labels)
    images = struct.pack(">IIII", 0x00000803, n, 28, 28) + pixels.tobytes()
    label_bytes = struct.pack(">II", 0x00000801, n) + labels.tobytes()
    # mtime=0 keeps the archives byte-reproducible
    with gzip.GzipFile(f"{out_dir}/mnist5k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(images)
    with gzip.GzipFile(f"{out_dir}/mnist5k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(label_bytes)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
