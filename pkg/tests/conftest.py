"""Shared fixtures.

Two tiers: cheap random-weight models for property tests (the editing math
is weight-agnostic), and one session-scoped trained stack on the synthetic
scenes used by the acceptance suite and the heavier derived tests. The
trained stack caches its artifacts on disk keyed by its recipe so repeated
test runs skip retraining; set MASKEDIT_TEST_CACHE=0 to disable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
import torch

torch.set_num_threads(2)

from maskedit.embedding import (Encoder, EncoderConfig, RefinementConfig, embed_image,
                                train_encoder)
from maskedit.generator import GeneratorConfig, JointGenerator, train_toy_gan
from maskedit.seghead import HeadConfig, LabeledPair, SegmentationHead, train_head
from maskedit.scenes import SceneDataset, sample_dataset

# bump to invalidate cached training artifacts when the recipe changes
CACHE_VERSION = 2

TINY_CONFIG = GeneratorConfig(
    latent_dim=16, num_style_layers=4, base_resolution=4, output_resolution=16,
    channels_per_layer=(16, 16, 8), num_labels=4, rng_seed=3)

STACK_RESOLUTION = 32
STACK_GENERATOR_CONFIG = GeneratorConfig(
    latent_dim=64, num_style_layers=6, base_resolution=4, output_resolution=32,
    channels_per_layer=(48, 48, 32, 24), num_labels=8, rng_seed=7)
STACK_GAN_STEPS = 2000
STACK_GAN_LR_DISC = 7e-4
STACK_GAN_R1 = 8.0
STACK_ENCODER_STEPS = 1500
STACK_ENCODER_LR = 3e-4
STACK_EMBED_STEPS = 300
STACK_DATASET_SEED = 42
STACK_DATASET_SIZE = 220


@pytest.fixture(scope="session")
def tiny_generator() -> JointGenerator:
    """Random-weight 16x16 generator with a head attached; no training."""
    generator = JointGenerator(TINY_CONFIG)
    head = SegmentationHead(TINY_CONFIG.feature_dim, (16, 8), TINY_CONFIG.num_labels, seed=5)
    generator.attach_head(head)
    return generator


@pytest.fixture(scope="session")
def tiny_generator_f64(tiny_generator) -> JointGenerator:
    import copy

    return copy.deepcopy(tiny_generator).double()


@pytest.fixture(scope="session")
def scene_data() -> SceneDataset:
    return sample_dataset(STACK_DATASET_SIZE, STACK_RESOLUTION, seed=STACK_DATASET_SEED,
                          labeled_size=16)


@dataclass
class TrainedStack:
    generator: JointGenerator
    encoder: Encoder
    dataset: SceneDataset
    labeled_pairs: list[LabeledPair]
    head_train_accuracy: float
    holdout_disc_accuracy: float
    embed_config: RefinementConfig


def _cache_dir() -> Path:
    return Path(__file__).parent / ".train_cache"


def _cache_key() -> str:
    recipe = {
        "version": CACHE_VERSION,
        "gen": STACK_GENERATOR_CONFIG.to_dict(),
        "gan_steps": STACK_GAN_STEPS,
        "gan": [STACK_GAN_LR_DISC, STACK_GAN_R1],
        "enc_steps": STACK_ENCODER_STEPS,
        "enc_lr": STACK_ENCODER_LR,
        "embed_steps": STACK_EMBED_STEPS,
        "data": [STACK_DATASET_SEED, STACK_DATASET_SIZE],
    }
    from maskedit.containers import sha256_hex
    return sha256_hex(json.dumps(recipe, sort_keys=True).encode())[:16]


def _build_stack(scene_data: SceneDataset) -> TrainedStack:
    images = scene_data.images
    result = train_toy_gan(images[:200], STACK_GENERATOR_CONFIG, steps=STACK_GAN_STEPS,
                           batch_size=12, lr_disc=STACK_GAN_LR_DISC,
                           r1_gamma=STACK_GAN_R1, holdout_images=images[200:])
    generator = result.generator
    enc = train_encoder(generator, images[:200],
                        EncoderConfig(learning_rate=STACK_ENCODER_LR),
                        steps=STACK_ENCODER_STEPS)
    embed_cfg = RefinementConfig(steps=STACK_EMBED_STEPS)
    pairs = []
    for ex in scene_data.labeled:
        emb = embed_image(generator, enc.encoder, ex.image, embed_cfg)
        pairs.append(LabeledPair(image=ex.image, mask=ex.mask, w_plus=emb.w_plus))
    head_result = train_head(generator, pairs,
                             HeadConfig(max_steps=20000, target_train_accuracy=0.97))
    return TrainedStack(
        generator=generator,
        encoder=enc.encoder,
        dataset=scene_data,
        labeled_pairs=pairs,
        head_train_accuracy=head_result.final_train_accuracy,
        holdout_disc_accuracy=result.holdout_disc_accuracy,
        embed_config=embed_cfg,
    )


@pytest.fixture(scope="session")
def trained_stack(scene_data) -> TrainedStack:
    """GAN + encoder + head trained on scenes; cached across runs."""
    use_cache = os.environ.get("MASKEDIT_TEST_CACHE", "1") != "0"
    cache = _cache_dir() / _cache_key()
    ckpt = cache / "stack.egw"
    meta_path = cache / "stack.json"
    if use_cache and ckpt.exists() and meta_path.exists():
        from maskedit.generator import load_checkpoint

        generator, encoder = load_checkpoint(ckpt)
        meta = json.loads(meta_path.read_text())
        embed_cfg = RefinementConfig(steps=STACK_EMBED_STEPS)
        pairs = []
        for ex, w in zip(scene_data.labeled, meta["pair_latents"]):
            from maskedit.generator import ExtendedLatent

            pairs.append(LabeledPair(image=ex.image, mask=ex.mask,
                                     w_plus=ExtendedLatent(np.asarray(w, dtype=np.float32))))
        return TrainedStack(generator=generator, encoder=encoder, dataset=scene_data,
                            labeled_pairs=pairs,
                            head_train_accuracy=meta["head_train_accuracy"],
                            holdout_disc_accuracy=meta["holdout_disc_accuracy"],
                            embed_config=embed_cfg)

    stack = _build_stack(scene_data)
    if use_cache:
        cache.mkdir(parents=True, exist_ok=True)
        stack.generator.save_checkpoint(ckpt, encoder=stack.encoder)
        meta = {
            "head_train_accuracy": stack.head_train_accuracy,
            "holdout_disc_accuracy": stack.holdout_disc_accuracy,
            "pair_latents": [p.w_plus.w_plus.tolist() for p in stack.labeled_pairs],
        }
        meta_path.write_text(json.dumps(meta))
    return stack


def median_headlight_off_index(dataset: SceneDataset) -> int:
    """Labeled off-headlight instance of median headlight area.

    The canonical turn-headlight-on edit is learned on a typical-size
    instance: extreme sizes either under-drive the edit or push the 1.7x
    sweep far outside the data distribution.
    """
    candidates = []
    for i, ex in enumerate(dataset.labeled):
        if ex.params.headlight_on:
            continue
        r = ex.params.headlight
        candidates.append((i, (r.x1 - r.x0) * (r.y1 - r.y0)))
    candidates.sort(key=lambda t: (t[1], t[0]))
    return candidates[len(candidates) // 2][0]


@pytest.fixture(scope="session")
def holdout_embeddings(trained_stack):
    """Embeddings of the first 50 held-out labeled scenes (cached)."""
    use_cache = os.environ.get("MASKEDIT_TEST_CACHE", "1") != "0"
    cache = _cache_dir() / _cache_key() / "holdout.json"
    examples = trained_stack.dataset.unlabeled[:50]
    if use_cache and cache.exists():
        from maskedit.generator import ExtendedLatent

        rows = json.loads(cache.read_text())
        latents = [ExtendedLatent(np.asarray(r, dtype=np.float32)) for r in rows]
        return list(zip(examples, latents))
    latents = []
    for ex in examples:
        emb = embed_image(trained_stack.generator, trained_stack.encoder, ex.image,
                          trained_stack.embed_config)
        latents.append(emb.w_plus)
    if use_cache:
        cache.parent.mkdir(parents=True, exist_ok=True)
        cache.write_text(json.dumps([l.w_plus.tolist() for l in latents]))
    return list(zip(examples, latents))
