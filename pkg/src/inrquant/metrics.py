"""PSNR, SSIM and Sobel gradient PSNR for [0, 1] images."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage, signal

from .data import as_image
from .errors import ConfigurationError

PSNR_CAP = 100.0
MSE_EPS = 1e-10


def _pair(a, b):
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ConfigurationError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _db(mse: float) -> float:
    if mse < MSE_EPS:
        return PSNR_CAP
    return 10.0 * math.log10(1.0 / mse)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for (near) identical inputs."""
    a, b = _pair(a, b)
    return _db(float(np.mean((a - b) ** 2)))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b, win_size: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Single-scale SSIM with a Gaussian window, data range 1.

    Local statistics use population (not sample) covariances over windows
    fully inside the image; the map is averaged over positions and channels.
    """
    a, b = _pair(a, b)
    if min(a.shape[:2]) < win_size:
        raise ConfigurationError(f"image {a.shape[:2]} smaller than {win_size}x{win_size} window")
    win = gaussian_window(win_size, sigma)
    c1, c2 = k1**2, k2**2
    vals = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]

        def filt(z):
            return signal.correlate2d(z, win, mode="valid")

        mx, my = filt(x), filt(y)
        sxx = filt(x * x) - mx * mx
        syy = filt(y * y) - my * my
        sxy = filt(x * y) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def sobel_magnitude(img) -> np.ndarray:
    """Per-channel Sobel gradient magnitude with half-sample symmetric borders."""
    img = as_image(img)
    out = np.empty_like(img)
    for ch in range(img.shape[2]):
        gx = ndimage.sobel(img[:, :, ch], axis=1, mode="reflect")
        gy = ndimage.sobel(img[:, :, ch], axis=0, mode="reflect")
        out[:, :, ch] = np.hypot(gx, gy)
    return out


def gradient_psnr(pred, target) -> float:
    """10 log10 of the inverse mean squared difference of Sobel magnitudes."""
    pred, target = _pair(pred, target)
    d = sobel_magnitude(pred) - sobel_magnitude(target)
    return _db(float(np.mean(d * d)))


def evaluate_images(pred, target) -> dict:
    return {
        "psnr": psnr(pred, target),
        "ssim": ssim(pred, target),
        "gradient_psnr": gradient_psnr(pred, target),
    }
