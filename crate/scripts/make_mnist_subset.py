#!/usr/bin/env python3
"""Build a 10k-digit MNIST subset in gzipped IDX format.

Source: the `mnist` npm package (MIT), which bundles 10,000 real MNIST
digits as JSON arrays of pixel intensities in [0, 1] rounded to 3 decimals.

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 scripts/make_mnist_subset.py package/src/digits data/mnist-subset

Pixels are mapped back to bytes with round(v * 255). The digits are shuffled
with a fixed seed and split 5000 / 2000 / 3000 into train / validation / test.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

SPLITS = (("train", 5000), ("validation", 2000), ("test", 3000))
SEED = 20160709


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(struct.pack(">I", magic))
        for d in dims:
            fh.write(struct.pack(">I", d))
        fh.write(payload)


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(len(data) // 784):
            px = bytes(min(255, max(0, round(v * 255))) for v in data[i * 784:(i + 1) * 784])
            samples.append((px, digit))
    random.Random(SEED).shuffle(samples)
    start = 0
    for name, count in SPLITS:
        part = samples[start:start + count]
        start += count
        write_idx(dst / f"{name}-images-idx3-ubyte.gz", 0x803, (len(part), 28, 28),
                  b"".join(p for p, _ in part))
        write_idx(dst / f"{name}-labels-idx1-ubyte.gz", 0x801, (len(part),),
                  bytes(l for _, l in part))
    manifest = {
        "name": "mnist-subset",
        "classes": 10,
        "normalization": "global",
        "train": {"idx": {"images": "train-images-idx3-ubyte.gz", "labels": "train-labels-idx1-ubyte.gz"}},
        "validation": {"idx": {"images": "validation-images-idx3-ubyte.gz", "labels": "validation-labels-idx1-ubyte.gz"}},
        "test": {"idx": {"images": "test-images-idx3-ubyte.gz", "labels": "test-labels-idx1-ubyte.gz"}},
    }
    (dst / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
