"""Per-pixel segmentation classifier over generator features.

A three-layer MLP maps each pixel's concatenated upsampled feature vector to
label logits. Training embeds nothing itself: it consumes labeled pairs that
already carry extended latents, freezes the generator, and fits only the
head by sampling small pixel batches uniformly across all training images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from maskedit.generator import ExtendedLatent, JointGenerator


@dataclass(frozen=True)
class HeadConfig:
    hidden_widths: tuple[int, int] = (128, 64)
    learning_rate: float = 0.001
    pixels_per_batch: int = 64
    max_steps: int = 20000
    target_train_accuracy: float = 0.99
    eval_every: int = 500

    def __post_init__(self):
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive")
        if not 0 < self.target_train_accuracy <= 1:
            raise ValueError("target_train_accuracy must be in (0, 1]")


@dataclass
class LabeledPair:
    """An image, its label mask, and (once embedded) its extended latent."""

    image: np.ndarray
    mask: np.ndarray
    w_plus: Optional[ExtendedLatent] = None

    def __post_init__(self):
        if self.image.shape[:2] != self.mask.shape:
            raise ValueError("image and mask resolutions differ")


class SegmentationHead(nn.Module):
    """Three-layer per-pixel MLP classifier."""

    def __init__(self, in_features: int, hidden_widths: tuple[int, int],
                 num_labels: int, seed: int = 23):
        super().__init__()
        self.in_features = in_features
        self.hidden_widths = tuple(hidden_widths)
        self.num_labels = num_labels
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        dims = [in_features, *self.hidden_widths, num_labels]
        ws, bs = [], []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            ws.append(nn.Parameter(torch.randn(d_out, d_in, generator=gen) / math.sqrt(d_in)))
            bs.append(nn.Parameter(torch.zeros(d_out)))
        self.w = nn.ParameterList(ws)
        self.b = nn.ParameterList(bs)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        """Accepts (N, F) pixel rows or (B, F, H, W) maps; returns logits."""
        if features.ndim == 4:
            batch, ch, h, wid = features.shape
            flat = features.permute(0, 2, 3, 1).reshape(-1, ch)
            out = self._mlp(flat)
            return out.reshape(batch, h, wid, self.num_labels).permute(0, 3, 1, 2)
        return self._mlp(features)

    def _mlp(self, x: torch.Tensor) -> torch.Tensor:
        for i, (w, b) in enumerate(zip(self.w, self.b)):
            x = F.linear(x, w.to(x.dtype), b.to(x.dtype))
            if i < len(self.w) - 1:
                x = F.silu(x)
        return x

    def config_dict(self) -> dict:
        return {"in_features": self.in_features, "hidden_widths": list(self.hidden_widths),
                "num_labels": self.num_labels, "seed": self.seed}

    @classmethod
    def from_config_dict(cls, d: dict) -> "SegmentationHead":
        return cls(in_features=d["in_features"], hidden_widths=tuple(d["hidden_widths"]),
                   num_labels=d["num_labels"], seed=d["seed"])


@dataclass
class HeadTrainResult:
    head: SegmentationHead
    log: list[dict] = field(default_factory=list)
    final_train_accuracy: float = 0.0
    steps_run: int = 0


def pixel_accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of pixels where the two masks agree."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    return float(np.mean(pred == truth))


def stack_training_pixels(generator: JointGenerator,
                          pairs: Sequence[LabeledPair]) -> tuple[torch.Tensor, torch.Tensor]:
    """Feature rows and labels for every pixel of every training pair."""
    feats, labels = [], []
    with torch.no_grad():
        for pair in pairs:
            if pair.w_plus is None:
                raise ValueError("labeled pair is missing its extended latent")
            if pair.mask.min() < 0 or pair.mask.max() >= generator.config.num_labels:
                raise ValueError("mask label out of range for the generator's label count")
            stack = generator.features_from_w(generator._w_tensor(pair.w_plus))
            ch = stack.shape[1]
            feats.append(stack[0].permute(1, 2, 0).reshape(-1, ch))
            labels.append(torch.from_numpy(np.asarray(pair.mask, dtype=np.int64)).reshape(-1))
    return torch.cat(feats, dim=0), torch.cat(labels, dim=0)


def sample_pixel_batch(rng: np.random.Generator, n_pixels: int, batch: int) -> np.ndarray:
    """Uniform pixel draw over the union of all training images' pixels."""
    return rng.integers(0, n_pixels, size=batch)


def train_head(generator: JointGenerator, pairs: Sequence[LabeledPair],
               config: HeadConfig = HeadConfig(), seed: int = 17,
               attach: bool = True) -> HeadTrainResult:
    """Fit the head on embedded labeled pairs with the generator frozen.

    Each step draws ``pixels_per_batch`` pixels uniformly from the union of
    all training images and takes one Adam step on the cross-entropy.
    Training stops when the full-training-set pixel accuracy reaches the
    target, or at ``max_steps``. Feature stacks are precomputed without
    gradients, so only head parameters can change.
    """
    if len(pairs) == 0:
        raise ValueError("need at least one labeled pair")
    features, labels = stack_training_pixels(generator, pairs)
    n_pixels = features.shape[0]

    head = SegmentationHead(generator.config.feature_dim, config.hidden_widths,
                            generator.config.num_labels, seed=seed)
    opt = torch.optim.Adam(head.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(seed)
    log: list[dict] = []

    def train_accuracy() -> float:
        with torch.no_grad():
            pred = head(features).argmax(dim=1)
        return float((pred == labels).float().mean())

    accuracy = train_accuracy()
    steps_run = 0
    for step in range(config.max_steps):
        idx = torch.from_numpy(sample_pixel_batch(rng, n_pixels, config.pixels_per_batch))
        logits = head(features[idx])
        loss = F.cross_entropy(logits, labels[idx])
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        steps_run = step + 1
        if step % config.eval_every == config.eval_every - 1 or step == config.max_steps - 1:
            accuracy = train_accuracy()
            log.append({"step": step, "loss": float(loss.detach()), "train_accuracy": accuracy})
            if accuracy >= config.target_train_accuracy:
                break
        else:
            log.append({"step": step, "loss": float(loss.detach())})

    accuracy = train_accuracy()
    if attach:
        generator.attach_head(head)
    return HeadTrainResult(head=head, log=log, final_train_accuracy=accuracy,
                           steps_run=steps_run)
