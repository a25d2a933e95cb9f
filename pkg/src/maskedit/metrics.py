"""Evaluation harness: attribute accuracy, FID, KID, identity score.

Feature vectors come from the shared fixed feature pyramid, so the absolute
metric values are not comparable to published numbers computed with
pretrained backbones; orderings, identities (zero at no edit), and the
scale-sweep protocol are what these desk-scale metrics are for.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from maskedit.editing import EditingVector, apply_editing_vector, refine_edit
from maskedit.features import image_features, identity_features_torch, _to_batch
from maskedit.generator import ExtendedLatent, JointGenerator


@dataclass
class MetricsReport:
    scale: float
    n_images: int
    attribute_accuracy: float
    fid: float
    kid: float
    id_score: float
    refinement_steps: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


# -- distribution metrics -------------------------------------------------------

def _validate_feature_sets(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("feature sets must be 2-d (n_samples, dim)")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("need at least 2 samples per set")
    return a, b


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root by eigendecomposition, eigenvalues clamped at 0."""
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with the matrix
    square root evaluated as sqrt(S_a)^T S_b sqrt(S_a) sandwiched symmetric
    form for stability at small sample counts.
    """
    a, b = _validate_feature_sets(features_a, features_b)
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False)
    cov_b = np.cov(b, rowvar=False)
    root_a = _psd_sqrt(cov_a)
    cross = _psd_sqrt(root_a @ cov_b @ root_a)
    value = float(np.sum((mu_a - mu_b) ** 2)
                  + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross))
    return value


def _poly_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def kid(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Unbiased squared MMD with the cubic polynomial kernel (x.y/d + 1)^3.

    Within-set sums exclude the diagonal, which makes the estimator unbiased
    and allows slightly negative values.
    """
    a, b = _validate_feature_sets(features_a, features_b)
    n, m = a.shape[0], b.shape[0]
    k_aa = _poly_kernel(a, a)
    k_bb = _poly_kernel(b, b)
    k_ab = _poly_kernel(a, b)
    sum_aa = (k_aa.sum() - np.trace(k_aa)) / (n * (n - 1))
    sum_bb = (k_bb.sum() - np.trace(k_bb)) / (m * (m - 1))
    return float(sum_aa + sum_bb - 2.0 * k_ab.mean())


def id_score(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of pooled identity features of two images."""
    ta, tb = _to_batch(a), _to_batch(b)
    if ta.shape != tb.shape:
        raise ValueError(f"image shapes differ: {tuple(ta.shape)} vs {tuple(tb.shape)}")
    with torch.no_grad():
        fa = identity_features_torch(ta)[0]
        fb = identity_features_torch(tb)[0]
    na, nb = float(fa.norm()), float(fb.norm())
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm identity feature vector")
    return float(np.clip(float(torch.dot(fa, fb)) / (na * nb), -1.0, 1.0))


# -- attribute classifier -------------------------------------------------------

class AttributeClassifier:
    """Tiny conv detector for a binary scene attribute.

    One 5x5 convolution, ReLU, global max pooling, then a linear logit:
    position-invariant by construction, which suits attributes realized as a
    local blob anywhere in the frame.
    """

    def __init__(self, conv_w: torch.Tensor, conv_b: torch.Tensor,
                 head_w: torch.Tensor, head_b: torch.Tensor):
        self.conv_w = conv_w
        self.conv_b = conv_b
        self.head_w = head_w
        self.head_b = head_b

    def _logits(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(F.conv2d(x, self.conv_w, self.conv_b, padding=2))
        pooled = h.amax(dim=(2, 3))
        return pooled @ self.head_w + self.head_b

    @staticmethod
    def _to_batch(images: Sequence[np.ndarray]) -> torch.Tensor:
        return torch.stack([
            torch.from_numpy(np.asarray(img, dtype=np.float32)).permute(2, 0, 1)
            for img in images])

    def predict_proba(self, images: Sequence[np.ndarray]) -> np.ndarray:
        with torch.no_grad():
            return torch.sigmoid(self._logits(self._to_batch(images))).squeeze(1).numpy()

    def predict(self, images: Sequence[np.ndarray]) -> np.ndarray:
        return (self.predict_proba(images) >= 0.5).astype(np.int64)

    def accuracy(self, images: Sequence[np.ndarray], flags: Sequence[bool]) -> float:
        pred = self.predict(images)
        truth = np.asarray(flags, dtype=np.int64)
        return float(np.mean(pred == truth))


@dataclass
class AttributeTrainResult:
    classifier: AttributeClassifier
    holdout_accuracy: float


def train_attribute_classifier(images: Sequence[np.ndarray], flags: Sequence[bool],
                               holdout_fraction: float = 0.25, steps: int = 500,
                               lr: float = 0.02, channels: int = 8,
                               seed: int = 31) -> AttributeTrainResult:
    """Fit the binary attribute classifier and report held-out accuracy.

    Training applies deterministic brightness/channel jitter so the detector
    tolerates the color drift of generated and strongly edited images rather
    than keying on one exact shade.
    """
    flags_arr = np.asarray(flags, dtype=np.int64)
    if len(images) != len(flags_arr):
        raise ValueError("images and flags must align")
    classes = np.unique(flags_arr)
    if classes.size < 2:
        raise ValueError("attribute data contains a single class; need both")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(flags_arr))
    n_hold = max(1, int(len(order) * holdout_fraction))
    hold_idx, train_idx = order[:n_hold], order[n_hold:]
    if np.unique(flags_arr[train_idx]).size < 2:
        raise ValueError("training split degenerated to a single class")

    gen = torch.Generator().manual_seed(seed)
    conv_w = (torch.randn(channels, 3, 5, 5, generator=gen) * 0.2).requires_grad_(True)
    conv_b = torch.zeros(channels, requires_grad=True)
    head_w = (torch.randn(channels, 1, generator=gen) * 0.1).requires_grad_(True)
    head_b = torch.zeros(1, requires_grad=True)
    clf = AttributeClassifier(conv_w, conv_b, head_w, head_b)

    x = clf._to_batch([images[i] for i in train_idx])
    y = torch.from_numpy(flags_arr[train_idx]).float()
    aug_gen = torch.Generator().manual_seed(seed + 1)
    opt = torch.optim.Adam([conv_w, conv_b, head_w, head_b], lr=lr)
    for _ in range(steps):
        gain = 0.55 + 0.65 * torch.rand(x.shape[0], 3, 1, 1, generator=aug_gen)
        shift = 0.16 * torch.rand(x.shape[0], 3, 1, 1, generator=aug_gen) - 0.08
        noise = 0.03 * torch.randn(x.shape, generator=aug_gen)
        batch = (x * gain + shift + noise).clamp(-1, 1)
        loss = F.binary_cross_entropy_with_logits(clf._logits(batch).squeeze(1), y)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()

    for t in (conv_w, conv_b, head_w, head_b):
        t.requires_grad_(False)
    holdout_acc = clf.accuracy([images[i] for i in hold_idx], flags_arr[hold_idx])
    return AttributeTrainResult(classifier=clf, holdout_accuracy=holdout_acc)


# -- scale-sweep benchmark ------------------------------------------------------

DEFAULT_SCALE_GRID = (0.7, 1.0, 1.3, 1.5, 1.7)


def run_benchmark(generator: JointGenerator, vector: EditingVector,
                  scales: Sequence[float], test_latents: Sequence[ExtendedLatent],
                  reference_features: np.ndarray,
                  classifier: Optional[AttributeClassifier] = None,
                  refinement_steps: Sequence[int] = (0,),
                  originals: Optional[list[np.ndarray]] = None) -> list[MetricsReport]:
    """Apply one vector at several scales (and refinement depths) and score.

    Produces one report row per (scale, refinement setting). The reference
    feature set is parameterized: pass reconstruction features to measure
    drift from the unedited set, or dataset features for the conventional
    comparison.
    """
    if len(test_latents) < 2:
        raise ValueError("need at least 2 test latents")
    if originals is None:
        originals = [generator.synthesize(w).image for w in test_latents]

    reports: list[MetricsReport] = []
    for refine_steps in refinement_steps:
        for scale in scales:
            edited_images = []
            for w in test_latents:
                if refine_steps > 0:
                    result = refine_edit(generator, w, vector, scale, refine_steps)
                    edited_images.append(result.sample.image)
                else:
                    sample, _ = apply_editing_vector(generator, w, vector, scale)
                    edited_images.append(sample.image)
            feats = image_features(edited_images)
            id_scores = [id_score(orig, edit) for orig, edit in zip(originals, edited_images)]
            attr = math.nan
            if classifier is not None:
                attr = float(np.mean(classifier.predict(edited_images)))
            reports.append(MetricsReport(
                scale=float(scale),
                n_images=len(edited_images),
                attribute_accuracy=attr,
                fid=fid(feats, reference_features),
                kid=kid(feats, reference_features),
                id_score=float(np.mean(id_scores)),
                refinement_steps=int(refine_steps),
            ))
    return reports


def reports_to_csv(reports: Sequence[MetricsReport], path: str | os.PathLike) -> None:
    fieldnames = ["scale", "refinement_steps", "n_images", "attribute_accuracy",
                  "fid", "kid", "id_score"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for report in reports:
            writer.writerow({k: report.to_dict()[k] for k in fieldnames})


def reports_to_json(reports: Sequence[MetricsReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2)
