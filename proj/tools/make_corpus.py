#!/usr/bin/env python3
"""Builds the desk-scale grayscale corpus from the sample photos bundled with
scikit-image, scikit-learn and matplotlib.

Output: data/corpus/train/*.pgm (25 tiles) and data/corpus/test/*.pgm (5 tiles).
Held-out tiles come from photos that contribute nothing to the training split.
"""
import argparse
import os

import numpy as np
import skimage
import skimage.io
from skimage.color import rgb2gray
from skimage.transform import downscale_local_mean

TILE = 160

TRAIN = [
    ("skimage", "camera.png", 2), ("skimage", "astronaut.png", 2),
    ("skimage", "gravel.png", 2), ("skimage", "brick.png", 2),
    ("skimage", "motorcycle_left.png", 2), ("skimage", "grass.png", 2),
    ("skimage", "chelsea.png", 2), ("skimage", "coins.png", 2),
    ("skimage", "moon.png", 2), ("skimage", "rocket.jpg", 2),
    ("skimage", "ihc.png", 2), ("skimage", "cell.png", 2),
    ("sklearn", "china.jpg", 1),
]
TEST = [
    ("skimage", "coffee.png", 1), ("sklearn", "flower.jpg", 1),
    ("matplotlib", "grace_hopper.jpg", 1), ("skimage", "clock_motion.png", 1),
    ("skimage", "retina.jpg", 1),
]


def source_path(kind, name):
    if kind == "skimage":
        return os.path.join(os.path.dirname(skimage.__file__), "data", name)
    if kind == "sklearn":
        import sklearn
        return os.path.join(os.path.dirname(sklearn.__file__), "datasets", "images", name)
    import matplotlib
    return os.path.join(matplotlib.get_data_path(), "sample_data", name)


def load_gray(path):
    img = skimage.io.imread(path)
    if img.ndim == 3:
        img = rgb2gray(img[..., :3]) * 255.0
    img = img.astype(np.float64)
    # halve large photos; also washes out any prior JPEG blocking
    if min(img.shape) >= 2 * TILE + 64:
        img = downscale_local_mean(img, (2, 2))
    return img


def tiles(img, count):
    h, w = img.shape
    out = []
    # evenly spaced, non-overlapping where possible, along the longer axis
    for i in range(count):
        if w >= h:
            c = int(round((w - TILE) * (i + 1) / (count + 1)))
            r = (h - TILE) // 2
        else:
            r = int(round((h - TILE) * (i + 1) / (count + 1)))
            c = (w - TILE) // 2
        out.append(img[r:r + TILE, c:c + TILE])
    return out


def write_pgm(path, tile):
    data = np.clip(np.floor(tile + 0.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (data.shape[1], data.shape[0]))
        f.write(data.tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "corpus"))
    args = ap.parse_args()
    for split, entries in (("train", TRAIN), ("test", TEST)):
        os.makedirs(os.path.join(args.out, split), exist_ok=True)
        for kind, name, count in entries:
            img = load_gray(source_path(kind, name))
            for i, t in enumerate(tiles(img, count)):
                stem = os.path.splitext(name)[0]
                write_pgm(os.path.join(args.out, split, f"{stem}_{i}.pgm"), t)


if __name__ == "__main__":
    main()
