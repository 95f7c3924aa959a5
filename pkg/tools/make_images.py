"""Regenerate the bundled 32x32 test images from scikit-image sample data.

run command: python tools/make_images.py
"""
from pathlib import Path

import numpy as np
import skimage.data

from multiteach import netpbm

OUT = Path(__file__).resolve().parents[1] / "src" / "multiteach" / "data"


def shrink(img, size=32):
    h, w = img.shape[:2]
    s = min(h, w) // size * size
    top, left = (h - s) // 2, (w - s) // 2
    img = img[top : top + s, left : left + s].astype(np.float64)
    f = s // size
    return img.reshape(size, f, size, f, -1).mean(axis=(1, 3))


def gray(img):
    return img @ np.array([0.299, 0.587, 0.114])


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rgb = shrink(skimage.data.astronaut())
    netpbm.write(OUT / "rgb32.ppm", np.rint(rgb).astype(int))
    for name, src in (("gray_a32.pgm", skimage.data.chelsea()), ("gray_b32.pgm", skimage.data.coffee())):
        netpbm.write(OUT / name, np.rint(gray(shrink(src))).astype(int))


if __name__ == "__main__":
    main()
