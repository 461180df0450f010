#!/usr/bin/env python3
# Copyright 2026 The Comfetch Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================
"""Builds a 28x28 IDX digit set from the scikit-learn 8x8 digits.

Source images are split before augmentation so no test image shares a
source with a training image. Each output image is the source upscaled to
20x20 (bilinear), lightly rotated, and placed at a jittered offset inside a
28x28 frame.
"""

import argparse
import pathlib
import struct

import numpy as np
from PIL import Image
from sklearn.datasets import load_digits


def write_idx(prefix, images, labels):
    with open(f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())
    with open(f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def render(src, rng):
    img = Image.fromarray((src * (255.0 / 16.0)).astype(np.uint8))
    img = img.resize((20, 20), Image.BILINEAR)
    img = img.rotate(rng.uniform(-10, 10), resample=Image.BILINEAR)
    frame = np.zeros((28, 28), dtype=np.uint8)
    dy, dx = rng.integers(2, 7, size=2)
    frame[dy:dy + 20, dx:dx + 20] = np.asarray(img)
    return frame


def build(sources, labels, count, rng):
    pick = rng.integers(0, len(sources), size=count)
    images = np.stack([render(sources[i], rng) for i in pick])
    return images, labels[pick]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="tests/data")
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--test", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    digits = load_digits()
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(digits.images))
    cut = int(0.75 * len(order))
    train_idx, test_idx = order[:cut], order[cut:]

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tr_x, tr_y = build(digits.images[train_idx], digits.target[train_idx], args.train, rng)
    te_x, te_y = build(digits.images[test_idx], digits.target[test_idx], args.test, rng)
    write_idx(out / "digits-train", tr_x, tr_y)
    write_idx(out / "digits-test", te_x, te_y)
    print(f"wrote {len(tr_x)} train / {len(te_x)} test images to {out}")


if __name__ == "__main__":
    main()
