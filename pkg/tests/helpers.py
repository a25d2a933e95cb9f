"""Test utilities: finite-difference oracles and weight fingerprints."""

from __future__ import annotations

import hashlib
from typing import Callable

import numpy as np
import torch


def gradient_vs_central_difference(f: Callable[[torch.Tensor], torch.Tensor],
                                   w0: torch.Tensor, n_probes: int, seed: int,
                                   step: float = 1e-4) -> float:
    """Worst relative error between autograd and central differences.

    ``f`` maps a float64 latent tensor to a scalar. Probed coordinates are
    drawn at random; each probe evaluates f twice for the two-sided
    difference. The analytic gradient comes from one reverse-mode pass.
    """
    w = w0.detach().clone().double().requires_grad_(True)
    value = f(w)
    value.backward()
    grad = w.grad.detach().clone()

    rng = np.random.default_rng(seed)
    worst = 0.0
    flat_size = w.numel()
    for _ in range(n_probes):
        flat_index = int(rng.integers(0, flat_size))
        index = np.unravel_index(flat_index, tuple(w.shape))
        wp = w.detach().clone()
        wm = w.detach().clone()
        wp[index] += step
        wm[index] -= step
        with torch.no_grad():
            fd = float((f(wp) - f(wm)) / (2 * step))
        an = float(grad[index])
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-12)
        worst = max(worst, rel)
    return worst


def weights_fingerprint(module: torch.nn.Module) -> str:
    """SHA-256 over all parameter bytes in named order (byte-equality probe)."""
    digest = hashlib.sha256()
    for name, param in sorted(module.named_parameters()):
        digest.update(name.encode())
        digest.update(param.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def bilinear_upsample_oracle(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Closed-form align-corners-false bilinear resize of a 2-d array."""
    in_h, in_w = image.shape
    out = np.zeros((out_h, out_w), dtype=np.float64)
    for oy in range(out_h):
        for ox in range(out_w):
            sy = (oy + 0.5) * in_h / out_h - 0.5
            sx = (ox + 0.5) * in_w / out_w - 0.5
            y0 = int(np.floor(sy))
            x0 = int(np.floor(sx))
            wy = sy - y0
            wx = sx - x0
            y0c, y1c = np.clip(y0, 0, in_h - 1), np.clip(y0 + 1, 0, in_h - 1)
            x0c, x1c = np.clip(x0, 0, in_w - 1), np.clip(x0 + 1, 0, in_w - 1)
            out[oy, ox] = ((1 - wy) * (1 - wx) * image[y0c, x0c]
                           + (1 - wy) * wx * image[y0c, x1c]
                           + wy * (1 - wx) * image[y1c, x0c]
                           + wy * wx * image[y1c, x1c])
    return out
