#!/usr/bin/env python3
"""Builds the bundled desk-scale digit dataset as gzipped IDX files.

Source: the 5000-sample MNIST subset shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz, 784 pixel columns then the label).
The rows are shuffled with a fixed seed and split 4000 train / 1000 test.

    pip download --no-deps mlxtend -d /tmp/wheel
    python3 tools/make_digit_idx.py /tmp/wheel/mlxtend-*.whl data/
"""
import gzip
import random
import struct
import sys
import zipfile
from pathlib import Path

SEED = 20200513
N_TEST = 1000


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    # mtime=0 keeps the archives byte-identical between runs.
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
        gz.write(header + payload)


def main():
    wheel, out = Path(sys.argv[1]), Path(sys.argv[2])
    with zipfile.ZipFile(wheel) as z:
        text = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = [[int(v) for v in line.split(",")] for line in text.strip().splitlines()]
    random.Random(SEED).shuffle(rows)
    out.mkdir(parents=True, exist_ok=True)
    splits = {"test": rows[:N_TEST], "train": rows[N_TEST:]}
    for name, part in splits.items():
        pixels = bytes(v for r in part for v in r[:784])
        labels = bytes(r[784] for r in part)
        write_idx(out / f"digits-{name}-images-idx3-ubyte.gz", 0x803, [len(part), 28, 28], pixels)
        write_idx(out / f"digits-{name}-labels-idx1-ubyte.gz", 0x801, [len(part)], labels)
        print(f"{name}: {len(part)} images")


if __name__ == "__main__":
    main()
