"""Fixed random-weight convolutional features.

One seeded, never-trained conv pyramid stands in for the pretrained
perceptual / identity / benchmark feature networks that full-scale systems
use. It ships with the code (the seed is the checkpoint), so every run and
every machine sees identical features. Random convolutional features are a
crude perceptual proxy, but the roles they play here only need a fixed,
smooth, multi-scale measurement of image structure.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

DEFAULT_FEATURE_SEED = 907

_EPS = 1e-10


class FeaturePyramid(nn.Module):
    """Three-stage conv pyramid with SiLU activations and 2x average pooling.

    ``pyramid(x)`` returns [x, f1, f2, f3]: the raw image plus each stage's
    activation. Weights are frozen at construction.
    """

    def __init__(self, seed: int = DEFAULT_FEATURE_SEED, widths: tuple[int, ...] = (16, 32, 64)):
        super().__init__()
        self.seed = seed
        self.widths = tuple(widths)
        gen = torch.Generator().manual_seed(seed)
        weights = []
        biases = []
        in_ch = 3
        for out_ch in self.widths:
            std = 1.0 / math.sqrt(in_ch * 9)
            weights.append(nn.Parameter(torch.randn(out_ch, in_ch, 3, 3, generator=gen) * std,
                                        requires_grad=False))
            biases.append(nn.Parameter(torch.zeros(out_ch), requires_grad=False))
            in_ch = out_ch
        self.conv_w = nn.ParameterList(weights)
        self.conv_b = nn.ParameterList(biases)

    def pyramid(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = [x]
        h = x
        for i, (w, b) in enumerate(zip(self.conv_w, self.conv_b)):
            h = F.silu(F.conv2d(h, w.to(x.dtype), b.to(x.dtype), padding=1))
            feats.append(h)
            if i < len(self.conv_w) - 1 and min(h.shape[-2:]) >= 2:
                h = F.avg_pool2d(h, 2)
        return feats

    def pooled(self, x: torch.Tensor) -> torch.Tensor:
        """Global-average-pooled conv features, concatenated: (B, sum(widths))."""
        feats = self.pyramid(x)[1:]
        return torch.cat([f.mean(dim=(2, 3)) for f in feats], dim=1)


_shared: dict[int, FeaturePyramid] = {}


def shared_pyramid(seed: int = DEFAULT_FEATURE_SEED) -> FeaturePyramid:
    """Process-wide cache of the frozen extractor (weights are immutable)."""
    if seed not in _shared:
        _shared[seed] = FeaturePyramid(seed)
    return _shared[seed]


def perceptual_distance_torch(a: torch.Tensor, b: torch.Tensor,
                              net: FeaturePyramid | None = None) -> torch.Tensor:
    """Multi-scale feature distance between image batches (B, 3, H, W).

    Level 0 is the raw pixel MSE, which makes the distance strictly positive
    for any differing pair; deeper levels compare conv features normalized to
    unit length along channels at each position. Symmetric by construction,
    differentiable, and exactly zero for identical inputs.
    """
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    if net is None:
        net = shared_pyramid()
    feats_a = net.pyramid(a)
    feats_b = net.pyramid(b)
    total = torch.zeros((), dtype=a.dtype)
    for level, (fa, fb) in enumerate(zip(feats_a, feats_b)):
        if level == 0:
            total = total + F.mse_loss(fa, fb)
        else:
            na = fa * torch.rsqrt(fa.pow(2).sum(dim=1, keepdim=True) + _EPS)
            nb = fb * torch.rsqrt(fb.pow(2).sum(dim=1, keepdim=True) + _EPS)
            total = total + (na - nb).pow(2).mean()
    return total / len(feats_a)


def identity_features_torch(x: torch.Tensor, net: FeaturePyramid | None = None) -> torch.Tensor:
    """Pooled identity embedding of an image batch, (B, D); differentiable."""
    if net is None:
        net = shared_pyramid()
    return net.pooled(x)


def _to_batch(image: np.ndarray | torch.Tensor) -> torch.Tensor:
    if isinstance(image, torch.Tensor):
        t = image
    else:
        arr = np.asarray(image, dtype=np.float32)
        if arr.ndim == 3 and arr.shape[2] == 3:
            arr = arr.transpose(2, 0, 1)
        t = torch.from_numpy(arr.copy())
    if t.ndim == 3:
        t = t.unsqueeze(0)
    if t.ndim != 4 or t.shape[1] != 3:
        raise ValueError("expected an HxWx3 image or (B, 3, H, W) tensor")
    return t


def image_features(images, net: FeaturePyramid | None = None) -> np.ndarray:
    """Pooled feature vectors for a collection of HxWx3 images: (N, D)."""
    if net is None:
        net = shared_pyramid()
    rows = []
    with torch.no_grad():
        for img in images:
            rows.append(identity_features_torch(_to_batch(img), net)[0].numpy())
    return np.stack(rows, axis=0)
