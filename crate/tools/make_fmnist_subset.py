#!/usr/bin/env python3
"""Build the desk-scale Fashion-MNIST subset shipped under data/fmnist/.

Source: the `fashion-mnist` npm package (MIT), which redistributes the
Zalando Fashion-MNIST images as per-class JSON arrays of 784 u8 pixels
(`src/clothes/<class>.json`, key "data").

Output: standard IDX files with a class-balanced, round-robin-interleaved
selection — per class, samples 0..999 go to train and 1000..1199 to test:

    train-images-idx3-ubyte   10000 x 28 x 28
    train-labels-idx1-ubyte   10000
    t10k-images-idx3-ubyte     2000 x 28 x 28
    t10k-labels-idx1-ubyte     2000

Usage: make_fmnist_subset.py <package-src-dir> <out-dir>
"""

import json
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 1000
TEST_PER_CLASS = 200


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    src = Path(sys.argv[1])
    out = Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)

    per_class = []
    for c in range(10):
        data = json.loads((src / f"{c}.json").read_text())["data"]
        # class 0 of the package contains a couple of empty placeholder rows
        data = [img for img in data if len(img) == 784]
        assert len(data) >= TRAIN_PER_CLASS + TEST_PER_CLASS
        per_class.append(data)

    train_imgs, train_labels = [], []
    for i in range(TRAIN_PER_CLASS):
        for c in range(10):
            train_imgs.append(per_class[c][i])
            train_labels.append(c)

    test_imgs, test_labels = [], []
    for i in range(TRAIN_PER_CLASS, TRAIN_PER_CLASS + TEST_PER_CLASS):
        for c in range(10):
            test_imgs.append(per_class[c][i])
            test_labels.append(c)

    write_idx_images(out / "train-images-idx3-ubyte", train_imgs)
    write_idx_labels(out / "train-labels-idx1-ubyte", train_labels)
    write_idx_images(out / "t10k-images-idx3-ubyte", test_imgs)
    write_idx_labels(out / "t10k-labels-idx1-ubyte", test_labels)
    print(f"wrote {len(train_imgs)} train / {len(test_imgs)} test images to {out}")


if __name__ == "__main__":
    main()
