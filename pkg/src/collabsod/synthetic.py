"""Procedural RGB-D saliency scenes so training and tests need no downloads.

Each scene is a smooth colour-gradient background with one salient ellipse or
rectangle in a contrasting colour. Depth is a radial gradient (far at the
centre-top) with the object pushed toward the camera.
"""

from pathlib import Path

import cv2
import numpy as np

from .data import DEPTH_DIR, GT_DIR, RGB_DIR


def make_scene(rng, side=64):
    """Return (rgb uint8 HxWx3, depth uint16 HxW, mask uint8 HxW in {0,255})."""
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float32) / side
    base = rng.uniform(40, 120, size=3)
    tilt = rng.uniform(-40, 40, size=(2, 3))
    rgb = base + yy[..., None] * tilt[0] + xx[..., None] * tilt[1]
    rgb += rng.normal(0, 4, size=rgb.shape)

    mask = np.zeros((side, side), np.uint8)
    cy, cx = rng.uniform(0.3, 0.7, size=2) * side
    ry, rx = rng.uniform(0.12, 0.28, size=2) * side
    if rng.random() < 0.5:
        angle = rng.uniform(0, 180)
        cv2.ellipse(mask, (int(cx), int(cy)), (int(rx), int(ry)), angle, 0, 360, 255, -1)
    else:
        cv2.rectangle(mask, (int(cx - rx), int(cy - ry)), (int(cx + rx), int(cy + ry)), 255, -1)
    obj = mask > 0
    colour = rng.uniform(150, 255, size=3)
    colour[rng.integers(0, 3)] = rng.uniform(0, 60)
    rgb[obj] = colour + rng.normal(0, 6, size=(obj.sum(), 3))
    rgb = np.clip(rgb, 0, 255).astype(np.uint8)

    radial = np.sqrt((yy - 0.2) ** 2 + (xx - 0.5) ** 2)
    depth = 0.2 + 0.5 * radial / radial.max()
    depth[obj] = rng.uniform(0.8, 1.0)
    depth = (depth * 65535).astype(np.uint16)
    return rgb, depth, mask


def generate_dataset(root, n, split="train", side=64, seed=0, with_depth=True):
    """Write ``n`` scenes under ``<root>/<split>/{RGB,depth,GT}``; returns the split path."""
    base = Path(root) / split
    for sub in (RGB_DIR, GT_DIR) + ((DEPTH_DIR,) if with_depth else ()):
        (base / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        rgb, depth, mask = make_scene(rng, side)
        stem = f"{i:04d}"
        cv2.imwrite(str(base / RGB_DIR / f"{stem}.png"), cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR))
        cv2.imwrite(str(base / GT_DIR / f"{stem}.png"), mask)
        if with_depth:
            cv2.imwrite(str(base / DEPTH_DIR / f"{stem}.png"), depth)
    return base
