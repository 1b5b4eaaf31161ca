#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the `mnist` npm package into
gzip-compressed IDX files (the container format of the original corpus).

usage: mnist_json_to_idx.py <package/src/digits> <out_dir> [--seed 0]

Each JSON file holds a flat list of 28*28 floats per sample, scaled to [0, 1]
and rounded to three decimals; pixels are restored to uint8 by rounding
value * 255. Samples are shuffled with a fixed seed so classes are mixed.
"""
import argparse
import gzip
import json
import pathlib
import random
import struct


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = []
    for label in range(10):
        raw = json.loads((pathlib.Path(args.digits_dir) / f"{label}.json").read_text())["data"]
        assert len(raw) % 784 == 0
        for i in range(len(raw) // 784):
            pix = bytes(min(255, max(0, round(v * 255))) for v in raw[i * 784:(i + 1) * 784])
            samples.append((pix, label))
    random.Random(args.seed).shuffle(samples)

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(samples)
    with gzip.GzipFile(out / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 2051, n, 28, 28))
        for pix, _ in samples:
            f.write(pix)
    with gzip.GzipFile(out / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main()
