#!/usr/bin/env python3
"""Package the scikit-learn handwritten digits as IDX files.

Upsamples the 8x8 images to 28x28 so the files are drop-in compatible with
loaders expecting 784-pixel rows. Writes an uncompressed pair plus a gzipped
copy of the image file for exercising the .gz path.
"""
import gzip
import struct
import sys

import numpy as np
from sklearn.datasets import load_digits


def write_idx_images(path: str, images: np.ndarray) -> None:
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main(out_dir: str) -> None:
    digits = load_digits()
    imgs8 = digits.images  # (n, 8, 8), values 0..16
    # nearest-neighbour upsample 8x8 -> 28x28 (indices 0..7 repeated)
    idx = (np.arange(28) * 8) // 28
    imgs28 = imgs8[:, idx][:, :, idx]
    imgs28 = np.clip(imgs28 * (255.0 / 16.0), 0, 255).round()

    img_path = f"{out_dir}/digits-images-idx3-ubyte"
    lab_path = f"{out_dir}/digits-labels-idx1-ubyte"
    write_idx_images(img_path, imgs28)
    write_idx_labels(lab_path, digits.target)
    with open(img_path, "rb") as f, gzip.open(img_path + ".gz", "wb") as g:
        g.write(f.read())
    print(f"wrote {len(digits.target)} images to {out_dir}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else ".")
