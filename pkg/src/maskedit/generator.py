"""Joint image/segmentation generator.

A miniature style-based generator: a 2-layer mapping MLP sends z to an
intermediate code w, which is broadcast to K+1 per-layer rows (the extended
latent). Each style layer is a modulated 3x3 convolution whose modulation is
a learned affine of its w row; the image branch skip-sums a per-resolution
toRGB projection. Per-pixel segmentation logits come from a classifier head
applied to the layer-wise concatenated, bilinearly upsampled feature maps,
so images and masks share one latent code.

All forward operations are deterministic pure functions of (weights, inputs)
and differentiable with respect to the extended latent; SiLU activations
keep every path smooth enough for finite-difference gradient checks.
"""

from __future__ import annotations

import copy
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from maskedit import containers
from maskedit.containers import CHECKPOINT_MAGIC, sha256_hex


# ---------------------------------------------------------------------------
# configuration and domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture hyperparameters of the joint generator.

    ``channels_per_layer`` has one entry per resolution level; the spatial
    size doubles at each level, so the output resolution is
    ``base_resolution * 2 ** (len(channels_per_layer) - 1)``.
    ``num_style_layers`` (K+1) modulated convolutions are distributed across
    the levels, earliest levels first, each consuming one row of the
    extended latent.
    """

    latent_dim: int = 64
    num_style_layers: int = 8
    base_resolution: int = 4
    output_resolution: int = 64
    channels_per_layer: tuple[int, ...] = (64, 64, 48, 32, 24)
    num_labels: int = 8
    rng_seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be positive")
        if self.num_style_layers < 2:
            raise ValueError("num_style_layers (K+1) must be at least 2")
        if self.num_labels < 2:
            raise ValueError("num_labels must be at least 2")
        if not self.channels_per_layer or any(c < 1 for c in self.channels_per_layer):
            raise ValueError("channels_per_layer must be positive integers")
        levels = len(self.channels_per_layer)
        expected = self.base_resolution * 2 ** (levels - 1)
        if self.output_resolution != expected:
            raise ValueError(
                f"output_resolution {self.output_resolution} inconsistent with "
                f"base_resolution {self.base_resolution} and {levels} levels "
                f"(expected {expected})")
        if self.num_style_layers < levels:
            raise ValueError("need at least one style layer per resolution level")

    @property
    def num_levels(self) -> int:
        return len(self.channels_per_layer)

    def layers_per_level(self) -> list[int]:
        """Distribute K+1 style layers over levels, extras to early levels."""
        levels = self.num_levels
        n, rem = divmod(self.num_style_layers, levels)
        return [n + (1 if i < rem else 0) for i in range(levels)]

    def level_of_layer(self) -> list[int]:
        out = []
        for level, count in enumerate(self.layers_per_level()):
            out.extend([level] * count)
        return out

    @property
    def feature_dim(self) -> int:
        """Channel count of the concatenated per-layer feature stack."""
        return sum(self.channels_per_layer[lvl] for lvl in self.level_of_layer())

    def to_dict(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "num_style_layers": self.num_style_layers,
            "base_resolution": self.base_resolution,
            "output_resolution": self.output_resolution,
            "channels_per_layer": list(self.channels_per_layer),
            "num_labels": self.num_labels,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        d["channels_per_layer"] = tuple(d["channels_per_layer"])
        return cls(**d)


@dataclass(frozen=True)
class LatentCode:
    """A point z in the input latent space."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float32)
        if z.ndim != 1:
            raise ValueError("z must be a 1-d vector")
        if not np.all(np.isfinite(z)):
            raise ValueError("z must be finite")
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class EditTerm:
    """One editing-vector contribution to an extended latent."""

    key: str
    delta: np.ndarray
    coeff: float


@dataclass(frozen=True)
class ExtendedLatent:
    """A point in the extended latent space: one w row per style layer.

    Latents produced by applying editing vectors additionally carry their
    anchor latent and the applied (delta, coefficient) terms. Keeping the
    decomposition symbolic makes cancellation exact: re-applying a vector
    with the opposite scale merges coefficients to zero and restores the
    anchor bit-for-bit, which plain floating-point add/subtract cannot
    guarantee.
    """

    w_plus: np.ndarray
    base: Optional[np.ndarray] = None
    edit_terms: tuple[EditTerm, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.w_plus)
        if w.dtype not in (np.float32, np.float64):
            w = w.astype(np.float32)
        if w.ndim != 2:
            raise ValueError("w_plus must be a (K+1) x latent_dim matrix")
        if not np.all(np.isfinite(w)):
            raise ValueError("w_plus must be finite")
        object.__setattr__(self, "w_plus", w)

    @property
    def num_rows(self) -> int:
        return self.w_plus.shape[0]

    def with_edits(self, additions: Sequence[tuple[str, np.ndarray, float]]) -> "ExtendedLatent":
        """Return the latent with extra editing-vector terms merged in.

        Terms are keyed by the delta's content hash; coefficients of matching
        keys add as scalars, exact zeros drop out, and materialization sums
        the surviving terms in key order, so the result is independent of
        application order.
        """
        anchor = self.base if self.base is not None else self.w_plus
        merged: dict[str, tuple[np.ndarray, float]] = {
            t.key: (t.delta, t.coeff) for t in self.edit_terms}
        for key, delta, coeff in additions:
            delta = np.asarray(delta, dtype=anchor.dtype)
            if delta.shape != anchor.shape:
                raise ValueError(
                    f"delta shape {delta.shape} does not match latent shape {anchor.shape}")
            if key in merged:
                merged[key] = (delta, merged[key][1] + float(coeff))
            else:
                merged[key] = (delta, float(coeff))
        terms = tuple(
            EditTerm(key, delta, coeff)
            for key, (delta, coeff) in sorted(merged.items())
            if coeff != 0.0)
        w = anchor.copy()
        for term in terms:
            w = w + term.coeff * term.delta
        if not terms:
            return ExtendedLatent(anchor.copy())
        return ExtendedLatent(w, base=anchor.copy(), edit_terms=terms)


@dataclass
class FeatureStack:
    """Per-layer feature maps and their upsampled concatenation."""

    maps: list[np.ndarray]
    upsampled: np.ndarray


@dataclass
class JointSample:
    """Paired image and segmentation produced from one extended latent.

    ``status`` is "ok" when the segmentation head ran, "no-head" when the
    generator has no head attached (logits and mask are then None).
    """

    image: np.ndarray
    logits: Optional[np.ndarray]
    mask: Optional[np.ndarray]
    status: str = "ok"

    def probabilities(self) -> np.ndarray:
        """Per-pixel softmax of the logits, channels first."""
        if self.logits is None:
            raise ValueError("sample has no segmentation logits")
        z = self.logits - self.logits.max(axis=0, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=0, keepdims=True)


def argmax_mask(logits: np.ndarray) -> np.ndarray:
    """Label map from CxHxW logits; ties resolve to the lowest label id."""
    return np.argmax(logits, axis=0).astype(np.int64)


def sample_latent(seed: int, latent_dim: int = 64) -> LatentCode:
    """Draw z with i.i.d. standard normal entries, deterministically."""
    rng = np.random.default_rng(seed)
    return LatentCode(rng.standard_normal(latent_dim).astype(np.float32))


# ---------------------------------------------------------------------------
# torch building blocks
# ---------------------------------------------------------------------------

def _randn(gen: torch.Generator, *shape: int, std: float = 1.0) -> torch.Tensor:
    return torch.randn(*shape, generator=gen) * std


def upsample2(x: torch.Tensor) -> torch.Tensor:
    """The fixed spatial doubling used everywhere: bilinear, align-corners false."""
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


def upsample_to(x: torch.Tensor, size: int) -> torch.Tensor:
    if x.shape[-1] == size and x.shape[-2] == size:
        return x
    return F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False)


class MappingNetwork(nn.Module):
    """Two-layer MLP sending z to the intermediate code w."""

    def __init__(self, latent_dim: int, gen: torch.Generator):
        super().__init__()
        std = 1.0 / math.sqrt(latent_dim)
        self.w1 = nn.Parameter(_randn(gen, latent_dim, latent_dim, std=std))
        self.b1 = nn.Parameter(torch.zeros(latent_dim))
        self.w2 = nn.Parameter(_randn(gen, latent_dim, latent_dim, std=std))
        self.b2 = nn.Parameter(torch.zeros(latent_dim))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h = F.silu(F.linear(z, self.w1, self.b1))
        return F.linear(h, self.w2, self.b2)


class ModulatedConv2d(nn.Module):
    """Convolution whose kernel is scaled per-sample by an affine of w.

    The affine initializes to the identity style (bias 1) so modulation is
    benign at the start of training. Demodulation renormalizes each output
    filter of the modulated kernel to unit norm.
    """

    def __init__(self, in_ch: int, out_ch: int, latent_dim: int, kernel: int,
                 gen: torch.Generator, demodulate: bool = True):
        super().__init__()
        fan_in = in_ch * kernel * kernel
        self.weight = nn.Parameter(_randn(gen, out_ch, in_ch, kernel, kernel,
                                          std=1.0 / math.sqrt(fan_in)))
        self.affine_w = nn.Parameter(_randn(gen, in_ch, latent_dim,
                                            std=1.0 / math.sqrt(latent_dim)))
        self.affine_b = nn.Parameter(torch.ones(in_ch))
        self.demodulate = demodulate
        self.padding = kernel // 2

    def forward(self, x: torch.Tensor, w_row: torch.Tensor) -> torch.Tensor:
        style = F.linear(w_row, self.affine_w, self.affine_b)  # (B, in_ch)
        # modulating input channels and demodulating output channels is
        # algebraically identical to per-sample kernel modulation but avoids
        # the grouped convolution, which is slow on CPU
        out = F.conv2d(x * style[:, :, None, None], self.weight, padding=self.padding)
        if self.demodulate:
            norm_sq = torch.einsum("oikl,bi->bo", self.weight.pow(2), style.pow(2))
            out = out * torch.rsqrt(norm_sq + 1e-8)[:, :, None, None]
        return out


class SynthesisNetwork(nn.Module):
    """Style-layer stack producing the image and the per-layer feature maps."""

    def __init__(self, config: GeneratorConfig, gen: torch.Generator):
        super().__init__()
        self.config = config
        channels = config.channels_per_layer
        self.layer_counts = config.layers_per_level()
        self.const = nn.Parameter(_randn(gen, channels[0],
                                         config.base_resolution, config.base_resolution))
        convs: list[ModulatedConv2d] = []
        biases: list[nn.Parameter] = []
        in_ch = channels[0]
        for level, count in enumerate(self.layer_counts):
            out_ch = channels[level]
            for _ in range(count):
                convs.append(ModulatedConv2d(in_ch, out_ch, config.latent_dim, 3, gen))
                biases.append(nn.Parameter(torch.zeros(out_ch)))
                in_ch = out_ch
        self.convs = nn.ModuleList(convs)
        self.biases = nn.ParameterList(biases)
        self.to_rgb = nn.ModuleList(
            ModulatedConv2d(channels[lvl], 3, config.latent_dim, 1, gen, demodulate=False)
            for lvl in range(config.num_levels))
        self.rgb_bias = nn.ParameterList(
            nn.Parameter(torch.zeros(3)) for _ in range(config.num_levels))

    def forward(self, w_plus: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Map (B, K+1, D) latents to (image in [-1,1], feature maps S^0..S^K)."""
        batch = w_plus.shape[0]
        x = self.const.unsqueeze(0).expand(batch, -1, -1, -1)
        feats: list[torch.Tensor] = []
        rgb: Optional[torch.Tensor] = None
        k = 0
        for level, count in enumerate(self.layer_counts):
            if level > 0:
                x = upsample2(x)
            for _ in range(count):
                x = F.silu(self.convs[k](x, w_plus[:, k]) + self.biases[k][None, :, None, None])
                feats.append(x)
                k += 1
            skip = self.to_rgb[level](x, w_plus[:, k - 1]) + self.rgb_bias[level][None, :, None, None]
            rgb = skip if rgb is None else upsample2(rgb) + skip
        return torch.tanh(rgb), feats


# ---------------------------------------------------------------------------
# the joint generator
# ---------------------------------------------------------------------------

class JointGenerator(nn.Module):
    """Generator of (image, segmentation) pairs from extended latents.

    Construction is deterministic in ``config.rng_seed``. The segmentation
    head is attached after its own training (see ``maskedit.seghead``);
    random-weight generators are fully usable for everything that does not
    require a trained model.
    """

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        gen = torch.Generator().manual_seed(config.rng_seed)
        self.mapping = MappingNetwork(config.latent_dim, gen)
        self.synthesis = SynthesisNetwork(config, gen)
        self.seg_head: Optional[nn.Module] = None

    # -- latent plumbing ---------------------------------------------------

    @property
    def param_dtype(self) -> torch.dtype:
        return self.synthesis.const.dtype

    def attach_head(self, head: nn.Module) -> None:
        self.seg_head = head

    def sample_latent(self, seed: int) -> LatentCode:
        return sample_latent(seed, self.config.latent_dim)

    def _w_tensor(self, latent: ExtendedLatent | np.ndarray | torch.Tensor) -> torch.Tensor:
        if isinstance(latent, ExtendedLatent):
            arr = latent.w_plus
        else:
            arr = latent
        t = torch.as_tensor(arr, dtype=self.param_dtype)
        if t.ndim == 2:
            t = t.unsqueeze(0)
        if t.shape[1] != self.config.num_style_layers or t.shape[2] != self.config.latent_dim:
            raise ValueError(
                f"latent shape {tuple(t.shape[1:])} does not match generator "
                f"({self.config.num_style_layers}, {self.config.latent_dim})")
        return t

    def map_z(self, z: torch.Tensor) -> torch.Tensor:
        """Mapping network m(z), torch-level (used by encoder regularization)."""
        return self.mapping(z)

    def map_to_w_plus(self, latent: LatentCode) -> ExtendedLatent:
        """Broadcast m(z) to one identical row per style layer."""
        z = torch.as_tensor(latent.z, dtype=self.param_dtype)
        if z.shape[-1] != self.config.latent_dim:
            raise ValueError(
                f"z has dimension {z.shape[-1]}, generator expects {self.config.latent_dim}")
        with torch.no_grad():
            w = self.mapping(z.unsqueeze(0))[0]
        w_plus = w.unsqueeze(0).repeat(self.config.num_style_layers, 1)
        return ExtendedLatent(w_plus.cpu().numpy().astype(np.float32, copy=False))

    # -- differentiable forward paths ---------------------------------------

    def image_from_w(self, w_plus: torch.Tensor) -> torch.Tensor:
        """Image branch, (B, K+1, D) -> (B, 3, H, W); differentiable."""
        image, _ = self.synthesis(w_plus)
        return image

    def features_from_w(self, w_plus: torch.Tensor) -> torch.Tensor:
        """Concatenated upsampled feature stack, (B, F, H, W); differentiable."""
        _, feats = self.synthesis(w_plus)
        size = self.config.output_resolution
        return torch.cat([upsample_to(f, size) for f in feats], dim=1)

    def logits_from_w(self, w_plus: torch.Tensor) -> torch.Tensor:
        """Segmentation logits, (B, C, H, W); differentiable through the head."""
        if self.seg_head is None:
            raise RuntimeError("generator has no segmentation head attached")
        return self.seg_head(self.features_from_w(w_plus))

    def forward_joint(self, w_plus: torch.Tensor) -> tuple[torch.Tensor, Optional[torch.Tensor]]:
        """One synthesis pass shared by both branches: (image, logits or None)."""
        image, feats = self.synthesis(w_plus)
        if self.seg_head is None:
            return image, None
        size = self.config.output_resolution
        stacked = torch.cat([upsample_to(f, size) for f in feats], dim=1)
        return image, self.seg_head(stacked)

    # -- public numpy-level operations --------------------------------------

    def synthesize(self, latent: ExtendedLatent) -> JointSample:
        """Joint sample at a latent; pure and deterministic."""
        w = self._w_tensor(latent)
        with torch.no_grad():
            image, logits = self.forward_joint(w)
        img = image[0].permute(1, 2, 0).cpu().numpy()
        if logits is None:
            return JointSample(image=img, logits=None, mask=None, status="no-head")
        lg = logits[0].cpu().numpy()
        return JointSample(image=img, logits=lg, mask=argmax_mask(lg), status="ok")

    def build_feature_stack(self, latent: ExtendedLatent) -> FeatureStack:
        w = self._w_tensor(latent)
        with torch.no_grad():
            _, feats = self.synthesis(w)
            size = self.config.output_resolution
            up = torch.cat([upsample_to(f, size) for f in feats], dim=1)
        return FeatureStack(
            maps=[f[0].cpu().numpy() for f in feats],
            upsampled=up[0].cpu().numpy(),
        )

    def predict_mask(self, latent: ExtendedLatent) -> np.ndarray:
        sample = self.synthesize(latent)
        if sample.mask is None:
            raise RuntimeError("generator has no segmentation head attached")
        return sample.mask

    # -- identity / persistence ----------------------------------------------

    def _named_arrays(self, prefix: str, module: nn.Module) -> list[tuple[str, np.ndarray]]:
        return [(f"{prefix}/{name}", p.detach().cpu().numpy())
                for name, p in sorted(module.named_parameters())]

    def state_arrays(self, encoder: Optional[nn.Module] = None) -> list[tuple[str, np.ndarray]]:
        arrays = [(f"generator/mapping.{name}", p.detach().cpu().numpy())
                  for name, p in sorted(self.mapping.named_parameters())]
        arrays += [(f"generator/synthesis.{name}", p.detach().cpu().numpy())
                   for name, p in sorted(self.synthesis.named_parameters())]
        if self.seg_head is not None:
            arrays += self._named_arrays("seg_head", self.seg_head)
        if encoder is not None:
            arrays += self._named_arrays("encoder", encoder)
        return arrays

    def _checkpoint_meta(self, encoder: Optional[nn.Module] = None) -> dict:
        meta = {"config": self.config.to_dict()}
        if self.seg_head is not None and hasattr(self.seg_head, "config_dict"):
            meta["head"] = self.seg_head.config_dict()
        if encoder is not None and hasattr(encoder, "config_dict"):
            meta["encoder"] = encoder.config_dict()
        return meta

    def weights_hash(self) -> str:
        """Content hash of generator plus head weights.

        Editing vectors are latent-space objects tied to these weights; the
        hash is what vector records store and check. The encoder does not
        participate: it only initializes embeddings.
        """
        blob = containers.container_bytes(
            CHECKPOINT_MAGIC, self._checkpoint_meta(), self.state_arrays())
        return sha256_hex(blob)

    def save_checkpoint(self, path: str | os.PathLike,
                        encoder: Optional[nn.Module] = None) -> None:
        containers.write_container(
            path, CHECKPOINT_MAGIC, self._checkpoint_meta(encoder),
            self.state_arrays(encoder))


def load_checkpoint(path: str | os.PathLike):
    """Load a checkpoint container.

    Returns (generator, encoder-or-None); the segmentation head, when
    present in the file, comes back attached to the generator.
    """
    from maskedit.embedding import Encoder  # deferred to avoid an import cycle
    from maskedit.seghead import SegmentationHead

    meta, arrays = containers.read_container(path, CHECKPOINT_MAGIC)
    config = GeneratorConfig.from_dict(meta["config"])
    generator = JointGenerator(config)

    def _load_section(module: nn.Module, prefix: str) -> None:
        with torch.no_grad():
            for name, param in module.named_parameters():
                key = f"{prefix}/{name}"
                if key not in arrays:
                    raise containers.CorruptFileError(f"{path}: missing array {key!r}")
                value = torch.from_numpy(arrays[key]).to(param.dtype)
                if value.shape != param.shape:
                    raise containers.CorruptFileError(
                        f"{path}: array {key!r} has shape {tuple(value.shape)}, "
                        f"expected {tuple(param.shape)}")
                param.copy_(value)

    with torch.no_grad():
        for module, section in ((generator.mapping, "generator/mapping"),
                                (generator.synthesis, "generator/synthesis")):
            for name, param in module.named_parameters():
                key = f"{section}.{name}"
                if key not in arrays:
                    raise containers.CorruptFileError(f"{path}: missing array {key!r}")
                value = torch.from_numpy(arrays[key]).to(param.dtype)
                if value.shape != param.shape:
                    raise containers.CorruptFileError(
                        f"{path}: array {key!r} has shape {tuple(value.shape)}, "
                        f"expected {tuple(param.shape)}")
                param.copy_(value)

    if "head" in meta:
        head = SegmentationHead.from_config_dict(meta["head"])
        _load_section(head, "seg_head")
        generator.attach_head(head)

    encoder = None
    if "encoder" in meta:
        encoder = Encoder.from_config_dict(meta["encoder"])
        _load_section(encoder, "encoder")
    return generator, encoder


# ---------------------------------------------------------------------------
# toy adversarial trainer
# ---------------------------------------------------------------------------

class Discriminator(nn.Module):
    """Small strided conv critic for the toy trainer."""

    def __init__(self, resolution: int, seed: int):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        chans = [3, 32, 64, 128]
        layers = []
        res = resolution
        in_ch = 3
        for out_ch in chans[1:]:
            w = nn.Parameter(_randn(gen, out_ch, in_ch, 3, 3, std=1.0 / math.sqrt(in_ch * 9)))
            layers.append((w, nn.Parameter(torch.zeros(out_ch))))
            in_ch = out_ch
            res //= 2
        self.weights = nn.ParameterList(w for w, _ in layers)
        self.bias = nn.ParameterList(b for _, b in layers)
        self.fc_w = nn.Parameter(_randn(gen, 1, in_ch * res * res,
                                        std=1.0 / math.sqrt(in_ch * res * res)))
        self.fc_b = nn.Parameter(torch.zeros(1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for w, b in zip(self.weights, self.bias):
            x = F.silu(F.conv2d(x, w, b, stride=2, padding=1))
        return F.linear(x.flatten(1), self.fc_w, self.fc_b).squeeze(1)


@dataclass
class ToyGanResult:
    generator: JointGenerator
    log: list[dict] = field(default_factory=list)
    holdout_disc_accuracy: Optional[float] = None


def _image_batch(images: np.ndarray, idx: np.ndarray) -> torch.Tensor:
    batch = torch.from_numpy(images[idx]).float()
    return batch.permute(0, 3, 1, 2).contiguous()


def train_toy_gan(images: Sequence[np.ndarray] | np.ndarray,
                  config: GeneratorConfig,
                  steps: int,
                  batch_size: int = 16,
                  lr: float = 2e-3,
                  lr_disc: Optional[float] = None,
                  r1_gamma: float = 5.0,
                  holdout_images: Optional[np.ndarray] = None,
                  log_every: int = 100) -> ToyGanResult:
    """Minimal nonsaturating GAN loop with a single R1 penalty.

    Trains a fresh generator built from ``config``; with ``steps=0`` the
    returned generator equals that initialization. Deterministic for a fixed
    seed and dataset. Quality is not the point: the editing math downstream
    only needs a generator whose samples resemble the data.
    """
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValueError("dataset must be a non-empty (N, H, W, 3) array")
    if images.shape[1] != config.output_resolution:
        raise ValueError("dataset resolution does not match generator config")

    generator = JointGenerator(config)
    disc = Discriminator(config.output_resolution, seed=config.rng_seed + 1)
    opt_g = torch.optim.Adam(generator.parameters(), lr=lr, betas=(0.0, 0.99))
    opt_d = torch.optim.Adam(disc.parameters(), lr=lr if lr_disc is None else lr_disc,
                             betas=(0.0, 0.99))
    rng = np.random.default_rng(config.rng_seed + 2)
    zgen = torch.Generator().manual_seed(config.rng_seed + 3)
    log: list[dict] = []

    def sample_w(n: int) -> torch.Tensor:
        z = torch.randn(n, config.latent_dim, generator=zgen)
        w = generator.mapping(z)
        return w.unsqueeze(1).repeat(1, config.num_style_layers, 1)

    for step in range(steps):
        # discriminator step
        idx = rng.integers(0, images.shape[0], size=batch_size)
        real = _image_batch(images, idx).requires_grad_(True)
        with torch.no_grad():
            fake = generator.image_from_w(sample_w(batch_size))
        d_real = disc(real)
        d_fake = disc(fake)
        r1 = torch.autograd.grad(d_real.sum(), real, create_graph=True)[0]
        r1 = r1.pow(2).sum(dim=(1, 2, 3)).mean()
        loss_d = F.softplus(-d_real).mean() + F.softplus(d_fake).mean() + 0.5 * r1_gamma * r1
        opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        opt_d.step()

        # generator step
        fake = generator.image_from_w(sample_w(batch_size))
        loss_g = F.softplus(-disc(fake)).mean()
        opt_g.zero_grad(set_to_none=True)
        loss_g.backward()
        opt_g.step()

        if step % log_every == 0 or step == steps - 1:
            log.append({"step": step, "loss_d": float(loss_d.detach()),
                        "loss_g": float(loss_g.detach())})

    def _holdout_accuracy() -> float:
        hold = np.asarray(holdout_images, dtype=np.float32)
        with torch.no_grad():
            real_scores = disc(_image_batch(hold, np.arange(len(hold))))
            fake = generator.image_from_w(sample_w(len(hold)))
            fake_scores = disc(fake)
        correct = (real_scores > 0).float().sum() + (fake_scores <= 0).float().sum()
        return float(correct / (2 * len(hold)))

    holdout_acc = None
    if holdout_images is not None and len(holdout_images) > 0:
        # averaged over several draws to damp snapshot noise
        holdout_acc = float(np.mean([_holdout_accuracy() for _ in range(5)]))

    return ToyGanResult(generator=generator, log=log, holdout_disc_accuracy=holdout_acc)


def clone_generator(generator: JointGenerator) -> JointGenerator:
    """Deep copy, detached from the original's parameters."""
    return copy.deepcopy(generator)
