"""Convert the 5000-sample MNIST subset shipped in the mlxtend wheel to IDX files.

Usage: python3 scripts/mnist5k_to_idx.py path/to/mlxtend-*.whl data/mnist5k

Writes a stratified 4000/1000 train/test split (seeded) as gzip-compressed IDX.
"""
import gzip
import struct
import sys
import zipfile

import numpy as np


def write_idx(path, arr, magic_type):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">BBBB", 0, 0, magic_type, arr.ndim))
        for d in arr.shape:
            f.write(struct.pack(">I", d))
        f.write(arr.astype(np.uint8).tobytes())


def main(wheel, out):
    z = zipfile.ZipFile(wheel)
    raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    tab = np.array([[int(float(v)) for v in l.split(",")] for l in raw.splitlines()])
    x, y = tab[:, :-1], tab[:, -1]
    rng = np.random.default_rng(20240101)
    train, test = [], []
    for c in range(10):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        k = len(idx) // 5
        test.extend(idx[:k])
        train.extend(idx[k:])
    train, test = np.array(train), np.array(test)
    rng.shuffle(train)
    rng.shuffle(test)
    for name, idx in (("train", train), ("t10k", test)):
        write_idx(f"{out}/{name}-images-idx3-ubyte.gz", x[idx].reshape(-1, 28, 28), 0x08)
        write_idx(f"{out}/{name}-labels-idx1-ubyte.gz", y[idx], 0x08)
        print(name, len(idx), np.bincount(y[idx]))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
