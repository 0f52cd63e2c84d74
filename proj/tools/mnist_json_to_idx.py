#!/usr/bin/env python3
"""Convert the digit JSON files of the `mnist` npm package to IDX files.

Each <digit>.json holds {"data": [...]} with 784 grey values in [0, 1] per
image, concatenated. Images are interleaved round-robin over the digits so
that any prefix is close to class-balanced.
"""
import argparse
import json
import pathlib
import struct


def load_digits(src):
    per_digit = []
    for digit in range(10):
        values = json.loads((src / f"{digit}.json").read_text())["data"]
        if len(values) % 784:
            raise SystemExit(f"{digit}.json: {len(values)} values is not a multiple of 784")
        per_digit.append([values[i:i + 784] for i in range(0, len(values), 784)])
    return per_digit


def interleave(per_digit):
    images, labels = [], []
    longest = max(len(d) for d in per_digit)
    for i in range(longest):
        for digit, imgs in enumerate(per_digit):
            if i < len(imgs):
                images.append(imgs[i])
                labels.append(digit)
    return images, labels


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("src", type=pathlib.Path, help="directory with 0.json .. 9.json")
    ap.add_argument("out", type=pathlib.Path, help="output directory")
    args = ap.parse_args()

    images, labels = interleave(load_digits(args.src))
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(min(255, max(0, round(v * 255))) for v in img))
    with open(args.out / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} images to {args.out}")


if __name__ == "__main__":
    main()
