"""Synthetic test images shared by the test modules."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter


def disk_image(size=64, radius=15.0, inside=200.0, outside=60.0, blur=1.0, noise=3.0, seed=3):
    """High-contrast disk on a flat background with mild noise."""
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2 + 0.2
    img = np.where((xx - c) ** 2 + (yy - c) ** 2 < radius ** 2, inside, outside)
    rng = np.random.default_rng(seed)
    img = img + rng.normal(0.0, noise, img.shape)
    return np.clip(np.rint(gaussian_filter(img, blur)), 0, 255)


def nested_disk_image(size=48, radius=12.0, inside=220.0, outside=20.0, blur=2.0):
    """Noise-free blurred disk: one long chain of nested level lines."""
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2 + 0.3
    img = np.where((xx - c) ** 2 + (yy - c) ** 2 < radius ** 2, inside, outside)
    return np.rint(gaussian_filter(img.astype(float), blur))


def natural_image(size=96, seed=7):
    """A small scene: shaded background, a few objects, texture and sensor noise."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    img = 90 + 40 * xx / size + 20 * np.sin(yy / 9.0)
    img[(xx - 30) ** 2 + (yy - 35) ** 2 < 14 ** 2] = 190
    img[(xx > 55) & (xx < 85) & (yy > 15) & (yy < 40)] = 40
    tri = (yy > 55) & (yy < 88) & (np.abs(xx - 65) < (yy - 55) * 0.6)
    img[tri] = 150
    img[(xx - 22) ** 2 / 64 + (yy - 75) ** 2 / 25 < 1] = 230
    img = gaussian_filter(img, 1.2)
    img += gaussian_filter(rng.normal(0, 6, img.shape), 0.7) + rng.normal(0, 2, img.shape)
    return np.clip(np.rint(img), 0, 255)


def single_bright_pixel(size=4, at=(1, 1)):
    img = np.zeros((size, size))
    img[at[1], at[0]] = 255
    return img


def split_image(size=8):
    img = np.zeros((size, size))
    img[:, size // 2:] = 255
    return img


def bright_ring(size=9):
    """3x3 block of 200 with a dark centre pixel, on a dark background."""
    img = np.zeros((size, size))
    c = size // 2
    img[c - 1:c + 2, c - 1:c + 2] = 200
    img[c, c] = 0
    return img


def two_peaks(size=11):
    """A plateau holding two separate peaks."""
    img = np.zeros((size, size))
    img[2:9, 2:9] = 100
    img[4, 4] = 200
    img[6, 7] = 180
    return img
