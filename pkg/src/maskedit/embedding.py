"""Embedding images into the extended latent space.

An encoder maps images to per-layer latents and initializes a per-image
iterative refinement: a few hundred optimization steps on the reconstruction
objective (perceptual plus pixel L2), run with Adam wrapped in lookahead.
The encoder trains on two objectives: reconstruction of real images, and a
sampling loss on generator outputs whose known latents additionally
regularize the encoder toward the mapped code.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from maskedit import containers
from maskedit.containers import LATENT_MAGIC
from maskedit.features import perceptual_distance_torch, shared_pyramid
from maskedit.generator import ExtendedLatent, JointGenerator


@dataclass(frozen=True)
class EncoderConfig:
    """Encoder training hyperparameters.

    The five loss weights cover, in order: perceptual and L2 reconstruction
    of real images, perceptual and L2 reconstruction of generator samples,
    and latent regression toward the mapped code of those samples.
    ``warmup_sampling_steps`` only applies to datasets flagged hard, which
    first train on generator samples alone.
    """

    lambda1: float = 10.0
    lambda2: float = 1.0
    lambda3: float = 10.0
    lambda4: float = 1.0
    lambda5: float = 5.0
    learning_rate: float = 3e-5
    batch_size: int = 8
    warmup_sampling_steps: int = 20000
    hard_dataset: bool = False

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class RefinementConfig:
    """Per-image latent refinement schedule (Adam with lookahead)."""

    steps: int = 500
    learning_rate: float = 0.001
    lookahead_k: int = 5
    lookahead_alpha: float = 0.5
    lambda_perceptual: float = 10.0
    lambda_l2: float = 1.0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be non-negative")


@dataclass
class EmbeddingResult:
    w_plus: ExtendedLatent
    reconstruction: np.ndarray
    final_loss: float
    loss_trace: list[float] = field(default_factory=list)


class Encoder(nn.Module):
    """Strided conv encoder from images to (K+1) x latent_dim codes."""

    def __init__(self, resolution: int, latent_dim: int, num_rows: int,
                 widths: Optional[tuple[int, ...]] = None, seed: int = 11):
        super().__init__()
        if widths is None:
            depth = max(1, int(math.log2(resolution / 4)))
            widths = tuple(min(32 * 2 ** i, 128) for i in range(depth))
        self.resolution = resolution
        self.latent_dim = latent_dim
        self.num_rows = num_rows
        self.widths = tuple(widths)
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        ws, bs = [], []
        in_ch = 3
        res = resolution
        for out_ch in self.widths:
            std = 1.0 / math.sqrt(in_ch * 9)
            ws.append(nn.Parameter(torch.randn(out_ch, in_ch, 3, 3, generator=gen) * std))
            bs.append(nn.Parameter(torch.zeros(out_ch)))
            in_ch = out_ch
            res //= 2
        self.conv_w = nn.ParameterList(ws)
        self.conv_b = nn.ParameterList(bs)
        flat = in_ch * res * res
        self.fc_w = nn.Parameter(torch.randn(num_rows * latent_dim, flat,
                                             generator=gen) / math.sqrt(flat))
        self.fc_b = nn.Parameter(torch.zeros(num_rows * latent_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 3, H, W) -> (B, K+1, latent_dim)."""
        h = x
        for w, b in zip(self.conv_w, self.conv_b):
            h = F.silu(F.conv2d(h, w, b, stride=2, padding=1))
        out = F.linear(h.flatten(1), self.fc_w, self.fc_b)
        return out.reshape(x.shape[0], self.num_rows, self.latent_dim)

    def config_dict(self) -> dict:
        return {"resolution": self.resolution, "latent_dim": self.latent_dim,
                "num_rows": self.num_rows, "widths": list(self.widths), "seed": self.seed}

    @classmethod
    def from_config_dict(cls, d: dict) -> "Encoder":
        return cls(resolution=d["resolution"], latent_dim=d["latent_dim"],
                   num_rows=d["num_rows"], widths=tuple(d["widths"]), seed=d["seed"])

    def embed(self, image: np.ndarray) -> ExtendedLatent:
        """Deterministic encoder-only embedding of one HxWx3 image."""
        t = _image_to_tensor(image)
        with torch.no_grad():
            w = self.forward(t)[0]
        return ExtendedLatent(w.numpy().astype(np.float32, copy=False))


def _image_to_tensor(image: np.ndarray) -> torch.Tensor:
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got shape {arr.shape}")
    return torch.from_numpy(arr.copy()).permute(2, 0, 1).unsqueeze(0)


def perceptual_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Perceptual distance between two HxWx3 images in [-1, 1].

    Symmetric, non-negative, and zero only for identical inputs (the raw
    pixel level of the feature pyramid guarantees strict positivity).
    """
    ta, tb = _image_to_tensor(a), _image_to_tensor(b)
    if ta.shape != tb.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    with torch.no_grad():
        return float(perceptual_distance_torch(ta, tb))


def reconstruction_loss_torch(x: torch.Tensor, recon: torch.Tensor,
                              lambda_perc: float, lambda_l2: float) -> torch.Tensor:
    return (lambda_perc * perceptual_distance_torch(recon, x)
            + lambda_l2 * F.mse_loss(recon, x))


def sampling_loss_torch(generator: JointGenerator, encoder: nn.Module,
                        z: torch.Tensor, cfg: EncoderConfig) -> torch.Tensor:
    """Generator-sample loss: reconstruction plus latent regression.

    The regression target is the mapped code m(z), broadcast across rows,
    which is exactly the latent that produced the sample.
    """
    with torch.no_grad():
        w = generator.map_z(z)
        w_plus = w.unsqueeze(1).repeat(1, generator.config.num_style_layers, 1)
        x = generator.image_from_w(w_plus)
    w_hat = encoder(x)
    recon = generator.image_from_w(w_hat)
    loss = reconstruction_loss_torch(x, recon, cfg.lambda3, cfg.lambda4)
    return loss + cfg.lambda5 * F.mse_loss(w_hat, w_plus)


@dataclass
class EncoderTrainResult:
    encoder: nn.Module
    log: list[dict] = field(default_factory=list)


def train_encoder(generator: JointGenerator, real_images: Sequence[np.ndarray],
                  config: EncoderConfig, steps: int,
                  encoder: Optional[Encoder] = None, seed: int = 5) -> EncoderTrainResult:
    """Train the encoder against a frozen generator.

    Hard datasets warm up on generator samples only for
    ``config.warmup_sampling_steps`` steps, then train jointly; everything
    else trains jointly from the start. The log records both loss
    components each logged step.
    """
    images = np.asarray(real_images, dtype=np.float32)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValueError("real image collection must be non-empty (N, H, W, 3)")
    cfg = generator.config
    if encoder is None:
        encoder = Encoder(cfg.output_resolution, cfg.latent_dim, cfg.num_style_layers)

    frozen = [p.requires_grad for p in generator.parameters()]
    for p in generator.parameters():
        p.requires_grad_(False)
    try:
        opt = torch.optim.Adam(encoder.parameters(), lr=config.learning_rate)
        rng = np.random.default_rng(seed)
        zgen = torch.Generator().manual_seed(seed + 1)
        log: list[dict] = []
        for step in range(steps):
            z = torch.randn(config.batch_size, cfg.latent_dim, generator=zgen)
            loss_sampling = sampling_loss_torch(generator, encoder, z, config)
            warm = config.hard_dataset and step < config.warmup_sampling_steps
            if warm:
                loss_rgb = torch.zeros(())
                loss = loss_sampling
            else:
                idx = rng.integers(0, images.shape[0], size=min(config.batch_size, len(images)))
                x = torch.from_numpy(images[idx]).permute(0, 3, 1, 2).contiguous()
                recon = generator.image_from_w(encoder(x))
                loss_rgb = reconstruction_loss_torch(x, recon, config.lambda1, config.lambda2)
                loss = loss_rgb + loss_sampling
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            if step % 50 == 0 or step == steps - 1:
                log.append({"step": step, "loss_rgb": float(loss_rgb.detach()),
                            "loss_sampling": float(loss_sampling.detach())})
    finally:
        for p, req in zip(generator.parameters(), frozen):
            p.requires_grad_(req)
    return EncoderTrainResult(encoder=encoder, log=log)


class _LookaheadAdam:
    """Adam on one tensor with lookahead slow weights."""

    def __init__(self, param: torch.Tensor, lr: float, k: int, alpha: float):
        self.param = param
        self.inner = torch.optim.Adam([param], lr=lr)
        self.slow = param.detach().clone()
        self.k = max(1, k)
        self.alpha = alpha
        self._t = 0

    def step(self) -> None:
        self.inner.step()
        self._t += 1
        if self._t % self.k == 0:
            with torch.no_grad():
                self.slow.add_(self.param.detach() - self.slow, alpha=self.alpha)
                self.param.copy_(self.slow)


def embed_image(generator: JointGenerator, encoder: Optional[Encoder],
                image: np.ndarray, config: RefinementConfig = RefinementConfig(),
                initial_latent: Optional[ExtendedLatent] = None) -> EmbeddingResult:
    """Embed an image: encoder initialization, then latent refinement.

    The reported result is the best iterate seen, so the final loss is never
    worse than the initialization's. ``initial_latent`` overrides the
    encoder (useful when the true latent is known).
    """
    x = _image_to_tensor(image)
    res = generator.config.output_resolution
    if x.shape[-1] != res or x.shape[-2] != res:
        raise ValueError(f"image resolution {tuple(x.shape[-2:])} does not match "
                         f"generator output {res}x{res}")
    if initial_latent is not None:
        w0 = torch.as_tensor(initial_latent.w_plus, dtype=torch.float32).clone()
    elif encoder is not None:
        with torch.no_grad():
            w0 = encoder(x)[0]
    else:
        raise ValueError("need either a trained encoder or an initial latent")

    w = w0.detach().clone().unsqueeze(0).requires_grad_(True)

    def loss_at(wt: torch.Tensor) -> torch.Tensor:
        recon = generator.image_from_w(wt)
        return reconstruction_loss_torch(x, recon, config.lambda_perceptual, config.lambda_l2)

    trace: list[float] = []
    best_loss = math.inf
    best_w = w.detach().clone()
    opt = _LookaheadAdam(w, lr=config.learning_rate,
                         k=config.lookahead_k, alpha=config.lookahead_alpha)
    # trace[t] is the loss at iterate t; one forward per step plus a final one
    for _ in range(config.steps):
        loss = loss_at(w)
        trace.append(float(loss.detach()))
        if trace[-1] < best_loss:
            best_loss = trace[-1]
            best_w = w.detach().clone()
        opt.inner.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
    with torch.no_grad():
        final = float(loss_at(w))
    trace.append(final)
    if final < best_loss:
        best_loss = final
        best_w = w.detach().clone()

    with torch.no_grad():
        recon = generator.image_from_w(best_w)[0].permute(1, 2, 0).numpy()
    latent = ExtendedLatent(best_w[0].numpy().astype(np.float32, copy=False))
    return EmbeddingResult(w_plus=latent, reconstruction=recon,
                           final_loss=best_loss, loss_trace=trace)


# -- latent container ---------------------------------------------------------

def save_latent(path: str | os.PathLike, latent: ExtendedLatent, source_hash: str = "") -> None:
    meta = {"rows": int(latent.w_plus.shape[0]),
            "latent_dim": int(latent.w_plus.shape[1]),
            "source_hash": source_hash}
    containers.write_container(path, LATENT_MAGIC, meta, [("w_plus", latent.w_plus)])


def load_latent(path: str | os.PathLike) -> tuple[ExtendedLatent, dict]:
    meta, arrays = containers.read_container(path, LATENT_MAGIC)
    if "w_plus" not in arrays:
        raise containers.CorruptFileError(f"{path}: missing w_plus array")
    w = arrays["w_plus"]
    if tuple(w.shape) != (meta.get("rows"), meta.get("latent_dim")):
        raise containers.CorruptFileError(f"{path}: header shape disagrees with data")
    return ExtendedLatent(w), meta
