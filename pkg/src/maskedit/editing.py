"""Mask-conditioned latent editing.

Everything here revolves around one objective: inside the user-declared edit
region the generator's predicted segmentation should match the edited mask
(cross-entropy), while outside it the image should not change (masked
perceptual plus L2), optionally with an identity-preservation term. The only
learnable quantity is a latent offset; all network weights stay frozen.
Optimizing that offset yields a reusable editing vector which can later be
applied at any scale, composed with others, or refined per image in a
self-supervised way using its own predicted mask as the target.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from maskedit.containers import sha256_hex
from maskedit.embedding import (EmbeddingResult, Encoder, RefinementConfig, embed_image,
                                _image_to_tensor)
from maskedit.features import identity_features_torch, perceptual_distance_torch
from maskedit.generator import ExtendedLatent, JointGenerator, JointSample, argmax_mask

DEFAULT_BUFFER_PX = 5


class EmptyEditRegionError(ValueError):
    """The requested labels occur in neither the original nor edited mask."""


class NonFiniteLossError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"editing loss became non-finite at step {step}")
        self.step = step


class EditCancelled(RuntimeError):
    """Raised when a should_stop callback aborts an optimization."""


@dataclass(frozen=True)
class EditRegion:
    """Pixel region an edit is allowed to change, including its buffer."""

    mask: np.ndarray
    buffer_px: int = DEFAULT_BUFFER_PX
    label_set: frozenset[int] = frozenset()

    @property
    def pixel_count(self) -> int:
        return int(self.mask.sum())

    @property
    def empty(self) -> bool:
        return not bool(self.mask.any())


@dataclass(frozen=True)
class EditingLossConfig:
    """Weights and schedule of the edit objective.

    Learning a vector uses weights (15, 1, 10); self-supervised refinement
    uses (5, 1, 5). The identity term only participates when
    ``use_identity`` is set (it targets face-like data; the synthetic scenes
    leave it off).
    """

    lambda_rgb: float = 15.0
    lambda_ce: float = 1.0
    lambda_id: float = 10.0
    learning_rate: float = 0.02
    steps: int = 100
    use_identity: bool = False

    def __post_init__(self):
        if min(self.lambda_rgb, self.lambda_ce, self.lambda_id) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")

    @classmethod
    def learn_defaults(cls, **overrides) -> "EditingLossConfig":
        return replace(cls(lambda_rgb=15.0, lambda_ce=1.0, lambda_id=10.0), **overrides)

    @classmethod
    def refine_defaults(cls, **overrides) -> "EditingLossConfig":
        return replace(cls(lambda_rgb=5.0, lambda_ce=1.0, lambda_id=5.0), **overrides)


@dataclass(frozen=True)
class EditingVector:
    """A learned latent offset realizing one semantic edit."""

    delta: np.ndarray
    name: str
    label_set: frozenset[int]
    source_image_hash: str = ""
    trained_scale: float = 1.0

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=np.float32)
        if delta.ndim != 2:
            raise ValueError("delta must be a (K+1) x latent_dim matrix")
        if not np.all(np.isfinite(delta)):
            raise ValueError("delta must be finite")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "label_set", frozenset(int(q) for q in self.label_set))

    @property
    def key(self) -> str:
        """Content key used for exact merge/cancellation of applied terms."""
        return sha256_hex(self.delta.tobytes())


def compute_edit_region(y: np.ndarray, y_edited: np.ndarray, q: Sequence[int],
                        buffer_px: int = DEFAULT_BUFFER_PX) -> EditRegion:
    """Pixels whose label (in either mask) lies in q, dilated by a buffer.

    Dilation uses the square (Chebyshev) structuring element of radius
    ``buffer_px``, clipped at the frame.
    """
    y = np.asarray(y)
    y_edited = np.asarray(y_edited)
    if y.shape != y_edited.shape:
        raise ValueError(f"mask shapes differ: {y.shape} vs {y_edited.shape}")
    labels = sorted(int(v) for v in q)
    if not labels:
        raise ValueError("edit label set q must be non-empty")
    member = np.isin(y, labels) | np.isin(y_edited, labels)
    if buffer_px > 0 and member.any():
        size = 2 * buffer_px + 1
        member = ndimage.binary_dilation(member, structure=np.ones((size, size), dtype=bool))
    return EditRegion(mask=member, buffer_px=buffer_px, label_set=frozenset(labels))


@contextlib.contextmanager
def _frozen(module: torch.nn.Module):
    states = [p.requires_grad for p in module.parameters()]
    for p in module.parameters():
        p.requires_grad_(False)
    try:
        yield
    finally:
        for p, s in zip(module.parameters(), states):
            p.requires_grad_(s)


def editing_loss_torch(generator: JointGenerator, delta: torch.Tensor,
                       base_w: torch.Tensor, x: torch.Tensor,
                       y_edited: torch.Tensor, region: torch.Tensor,
                       cfg: EditingLossConfig,
                       target_id_features: Optional[torch.Tensor] = None
                       ) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Differentiable edit objective at ``base_w + delta``.

    ``region`` is a boolean HxW tensor; the cross-entropy averages over its
    pixels (zero when empty) and the appearance terms act on images
    multiplied by its complement, so their L2 part is exactly zero inside.
    """
    if region.shape != y_edited.shape:
        raise ValueError("region and edited mask shapes differ")
    w = base_w + delta
    image, logits = generator.forward_joint(w)
    keep = (~region).to(image.dtype)[None, None, :, :]

    x_masked = x * keep
    gen_masked = image * keep
    loss_rgb = perceptual_distance_torch(gen_masked, x_masked) + F.mse_loss(gen_masked, x_masked)

    if bool(region.any()):
        sel = region.reshape(-1)
        flat_logits = logits[0].permute(1, 2, 0).reshape(-1, logits.shape[1])[sel]
        flat_target = y_edited.reshape(-1)[sel]
        loss_ce = F.cross_entropy(flat_logits, flat_target)
    else:
        loss_ce = torch.zeros((), dtype=image.dtype)

    if cfg.use_identity:
        if target_id_features is None:
            with torch.no_grad():
                target_id_features = identity_features_torch(x)
        edited_feat = identity_features_torch(image)
        loss_id = 1.0 - F.cosine_similarity(edited_feat, target_id_features, dim=1).mean()
    else:
        loss_id = torch.zeros((), dtype=image.dtype)

    total = cfg.lambda_rgb * loss_rgb + cfg.lambda_ce * loss_ce + cfg.lambda_id * loss_id
    return total, {"rgb": loss_rgb, "ce": loss_ce, "id": loss_id, "total": total}


def editing_loss(generator: JointGenerator, delta: np.ndarray, base_w: ExtendedLatent,
                 image: np.ndarray, y_edited: np.ndarray, region: EditRegion,
                 cfg: EditingLossConfig) -> dict[str, float]:
    """Loss components at a fixed offset, as plain floats."""
    dtype = generator.param_dtype
    with torch.no_grad():
        total, comps = editing_loss_torch(
            generator,
            torch.as_tensor(np.asarray(delta), dtype=dtype).unsqueeze(0),
            generator._w_tensor(base_w),
            _image_to_tensor(image).to(dtype),
            torch.from_numpy(np.asarray(y_edited, dtype=np.int64)),
            torch.from_numpy(np.asarray(region.mask, dtype=bool)),
            cfg)
    return {k: float(v) for k, v in comps.items()}


@dataclass
class EditOptimizationResult:
    vector: EditingVector
    loss_trace: list[float] = field(default_factory=list)
    component_trace: list[dict] = field(default_factory=list)
    best_step: int = 0


def _optimize_delta(generator: JointGenerator, base_w: torch.Tensor, x: torch.Tensor,
                    y_edited: torch.Tensor, region: torch.Tensor, cfg: EditingLossConfig,
                    steps: int, init_delta: Optional[torch.Tensor] = None,
                    progress: Optional[Callable[[int, dict], None]] = None,
                    should_stop: Optional[Callable[[], bool]] = None
                    ) -> tuple[np.ndarray, list[float], list[dict], int]:
    """Adam on the latent offset; returns the best-loss iterate and traces."""
    dtype = generator.param_dtype
    delta = (torch.zeros_like(base_w) if init_delta is None
             else init_delta.detach().clone().to(dtype))
    delta.requires_grad_(True)
    opt = torch.optim.Adam([delta], lr=cfg.learning_rate)

    target_feat = None
    if cfg.use_identity:
        with torch.no_grad():
            target_feat = identity_features_torch(x)

    trace: list[float] = []
    comp_trace: list[dict] = []
    best_loss = float("inf")
    best_delta = delta.detach().clone()
    best_step = 0

    with _frozen(generator):
        for step in range(steps + 1):
            if should_stop is not None and should_stop():
                raise EditCancelled(f"optimization cancelled at step {step}")
            need_grad = step < steps
            with torch.enable_grad() if need_grad else torch.no_grad():
                total, comps = editing_loss_torch(
                    generator, delta, base_w, x, y_edited, region, cfg,
                    target_id_features=target_feat)
            if not torch.isfinite(total):
                raise NonFiniteLossError(step)
            value = float(total.detach())
            trace.append(value)
            comp_trace.append({k: float(v.detach()) for k, v in comps.items()})
            if value < best_loss:
                best_loss = value
                best_delta = delta.detach().clone()
                best_step = step
            if progress is not None:
                progress(step, comp_trace[-1])
            if need_grad:
                opt.zero_grad(set_to_none=True)
                total.backward()
                opt.step()

    return best_delta[0].cpu().numpy().astype(np.float32), trace, comp_trace, best_step


def learn_editing_vector(generator: JointGenerator, base_w: ExtendedLatent,
                         image: np.ndarray, y_edited: np.ndarray, region: EditRegion,
                         cfg: EditingLossConfig = EditingLossConfig.learn_defaults(),
                         name: str = "edit",
                         progress: Optional[Callable[[int, dict], None]] = None,
                         should_stop: Optional[Callable[[], bool]] = None
                         ) -> EditOptimizationResult:
    """Optimize a latent offset that realizes the edited mask.

    Returns the best-loss iterate; the loss trace has ``cfg.steps + 1``
    entries (initial point included).
    """
    x = _image_to_tensor(image).to(generator.param_dtype)
    base = generator._w_tensor(base_w)
    target = torch.from_numpy(np.asarray(y_edited, dtype=np.int64))
    region_t = torch.from_numpy(np.asarray(region.mask, dtype=bool))
    delta, trace, comps, best_step = _optimize_delta(
        generator, base, x, target, region_t, cfg, cfg.steps,
        progress=progress, should_stop=should_stop)
    vector = EditingVector(
        delta=delta, name=name, label_set=region.label_set,
        source_image_hash=sha256_hex(np.ascontiguousarray(image, dtype=np.float32).tobytes()),
        trained_scale=1.0)
    return EditOptimizationResult(vector=vector, loss_trace=trace,
                                  component_trace=comps, best_step=best_step)


def apply_editing_vector(generator: JointGenerator, base_w: ExtendedLatent,
                         vector: EditingVector, scale: float
                         ) -> tuple[JointSample, ExtendedLatent]:
    """Pure application: latent moves by scale times the vector, then synthesis.

    Latent arithmetic is exact at the term level: scale 0 is the identity
    and applying +s then -s merges coefficients back to zero, restoring the
    anchor latent bit-for-bit.
    """
    if vector.delta.shape != base_w.w_plus.shape:
        raise ValueError(f"vector shape {vector.delta.shape} does not match "
                         f"latent shape {base_w.w_plus.shape}")
    latent = base_w.with_edits([(vector.key, vector.delta, float(scale))])
    return generator.synthesize(latent), latent


def compose_edits(generator: JointGenerator, base_w: ExtendedLatent,
                  vectors: Sequence[tuple[EditingVector, float]]
                  ) -> tuple[JointSample, ExtendedLatent]:
    """Apply several vectors at once: latent = base + sum of scaled deltas.

    Terms merge by content key in canonical order, so the result is
    independent of sequence order and exact cancellations drop out.
    """
    additions = []
    for vector, scale in vectors:
        if vector.delta.shape != base_w.w_plus.shape:
            raise ValueError(f"vector {vector.name!r} shape mismatch")
        additions.append((vector.key, vector.delta, float(scale)))
    latent = base_w.with_edits(additions)
    return generator.synthesize(latent), latent


@dataclass
class RefineResult:
    sample: JointSample
    latent: ExtendedLatent
    loss_trace: list[float] = field(default_factory=list)
    component_trace: list[dict] = field(default_factory=list)
    region: Optional[EditRegion] = None
    target_mask: Optional[np.ndarray] = None


def refine_edit(generator: JointGenerator, base_w: ExtendedLatent,
                vector: EditingVector, scale: float, steps: int,
                cfg: Optional[EditingLossConfig] = None,
                source_image: Optional[np.ndarray] = None,
                progress: Optional[Callable[[int, dict], None]] = None,
                should_stop: Optional[Callable[[], bool]] = None) -> RefineResult:
    """Vector application followed by self-supervised cleanup.

    The mask predicted right after applying the vector becomes the frozen
    optimization target; the offset (initialized at scale times the vector)
    is then re-optimized with the refine-mode weights, which keeps the
    edited segmentation while pulling the image back toward the source
    outside the recomputed edit region. ``steps=0`` degenerates to plain
    application.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if steps == 0:
        sample, latent = apply_editing_vector(generator, base_w, vector, scale)
        return RefineResult(sample=sample, latent=latent, loss_trace=[],
                            component_trace=[], region=None,
                            target_mask=sample.mask)
    if cfg is None:
        cfg = EditingLossConfig.refine_defaults()

    base_sample = generator.synthesize(base_w)
    if base_sample.mask is None:
        raise RuntimeError("refinement needs a segmentation head")
    applied_sample, _ = apply_editing_vector(generator, base_w, vector, scale)
    target_mask = applied_sample.mask
    region = compute_edit_region(base_sample.mask, target_mask, sorted(vector.label_set),
                                 buffer_px=DEFAULT_BUFFER_PX)

    x_np = source_image if source_image is not None else base_sample.image
    x = _image_to_tensor(x_np).to(generator.param_dtype)
    base = generator._w_tensor(base_w)
    init = torch.as_tensor(vector.delta, dtype=generator.param_dtype).unsqueeze(0) * scale
    target = torch.from_numpy(np.asarray(target_mask, dtype=np.int64))
    region_t = torch.from_numpy(region.mask)

    delta, trace, comps, _ = _optimize_delta(
        generator, base, x, target, region_t, cfg, steps, init_delta=init,
        progress=progress, should_stop=should_stop)
    latent = ExtendedLatent(base_w.w_plus + delta)
    return RefineResult(sample=generator.synthesize(latent), latent=latent,
                        loss_trace=trace, component_trace=comps,
                        region=region, target_mask=target_mask)


@dataclass
class FromScratchResult:
    sample: JointSample
    latent: ExtendedLatent
    embedding: EmbeddingResult
    edit: EditOptimizationResult
    region: EditRegion


def optimize_edit_from_scratch(generator: JointGenerator, encoder: Optional[Encoder],
                               image: np.ndarray, y_edited: np.ndarray,
                               q: Sequence[int],
                               cfg: EditingLossConfig = EditingLossConfig.learn_defaults(),
                               embed_config: RefinementConfig = RefinementConfig(),
                               name: str = "from-scratch",
                               progress: Optional[Callable[[int, dict], None]] = None,
                               should_stop: Optional[Callable[[], bool]] = None
                               ) -> FromScratchResult:
    """Image-specific editing: embed, derive the region, optimize, synthesize.

    Used for large edits that do not transfer through vectors. The returned
    provenance carries the embedding result and the full edit loss trace.
    """
    embedding = embed_image(generator, encoder, image, embed_config)
    predicted = generator.predict_mask(embedding.w_plus)
    region = compute_edit_region(predicted, y_edited, q, buffer_px=DEFAULT_BUFFER_PX)
    if region.empty:
        raise EmptyEditRegionError(
            "empty edit region: none of the labels "
            f"{sorted(q)} occur in the predicted or edited mask")
    edit = learn_editing_vector(generator, embedding.w_plus, image, y_edited, region,
                                cfg=cfg, name=name, progress=progress,
                                should_stop=should_stop)
    sample, latent = apply_editing_vector(generator, embedding.w_plus, edit.vector, 1.0)
    return FromScratchResult(sample=sample, latent=latent, embedding=embedding,
                             edit=edit, region=region)
