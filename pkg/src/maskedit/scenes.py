"""Procedural part-composed scenes with exact masks.

Each scene is a toy side-view vehicle: body and cabin rectangles, a window,
two wheel discs, and an optional headlight square, drawn over a background
and ground plane. Labels come from the analytic geometry, so masks are exact
by construction. The binary headlight flag is the dataset's editable
attribute: scenes where it is off contain no headlight pixels at all.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from maskedit.imageio import image_to_png_bytes, mask_to_png_bytes
from maskedit.labels import LabelSchema

SCENE_SCHEMA = LabelSchema(
    names=("background", "ground", "body", "cabin", "window",
           "wheel_rear", "wheel_front", "headlight"),
    palette=((40, 40, 48), (106, 142, 35), (178, 34, 34), (70, 130, 180),
             (135, 206, 235), (255, 140, 0), (255, 215, 0), (255, 255, 102)),
)

BACKGROUND, GROUND, BODY, CABIN, WINDOW, WHEEL_REAR, WHEEL_FRONT, HEADLIGHT = range(8)

WHEEL_LABELS = frozenset({WHEEL_REAR, WHEEL_FRONT})

HEADLIGHT_COLOR = np.array([1.0, 1.0, 0.2], dtype=np.float32)
WHEEL_COLOR = np.array([-0.85, -0.85, -0.85], dtype=np.float32)


@dataclass(frozen=True)
class Rect:
    """Integer half-open pixel rectangle: cols in [x0, x1), rows in [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def contains_grid(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return (cols >= self.x0) & (cols < self.x1) & (rows >= self.y0) & (rows < self.y1)

    @property
    def empty(self) -> bool:
        return self.x1 <= self.x0 or self.y1 <= self.y0


@dataclass(frozen=True)
class Disc:
    """Disc membership on integer pixel coordinates: (col-cx)^2+(row-cy)^2 <= r^2."""

    cx: float
    cy: float
    r: float

    def contains_grid(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return (cols - self.cx) ** 2 + (rows - self.cy) ** 2 <= self.r ** 2


@dataclass
class SceneParams:
    resolution: int
    ground_y: int
    body: Rect
    cabin: Rect
    window: Rect
    wheel_rear: Disc
    wheel_front: Disc
    headlight: Rect
    headlight_on: bool
    background_rgb: tuple[float, float, float]
    ground_rgb: tuple[float, float, float]
    body_rgb: tuple[float, float, float]
    cabin_rgb: tuple[float, float, float]
    window_rgb: tuple[float, float, float]

    def validate(self) -> None:
        res = self.resolution
        for name, rect in (("body", self.body), ("cabin", self.cabin),
                           ("window", self.window), ("headlight", self.headlight)):
            if rect.empty:
                raise ValueError(f"{name} rectangle is empty")
            if rect.x0 < 0 or rect.y0 < 0 or rect.x1 > res or rect.y1 > res:
                raise ValueError(f"{name} rectangle out of frame")
        for name, disc in (("wheel_rear", self.wheel_rear), ("wheel_front", self.wheel_front)):
            if disc.r <= 0:
                raise ValueError(f"{name} radius must be positive")
            if (disc.cx - disc.r < 0 or disc.cx + disc.r > res - 1
                    or disc.cy - disc.r < 0 or disc.cy + disc.r > res - 1):
                raise ValueError(f"{name} out of frame")
        if not 0 < self.ground_y < res:
            raise ValueError("ground line out of frame")

    @property
    def attributes(self) -> dict:
        return {"headlight_on": bool(self.headlight_on),
                "wheel_radius": float((self.wheel_rear.r + self.wheel_front.r) / 2)}

    def to_dict(self) -> dict:
        def rect(r: Rect):
            return [r.x0, r.y0, r.x1, r.y1]

        return {
            "resolution": self.resolution,
            "ground_y": self.ground_y,
            "body": rect(self.body),
            "cabin": rect(self.cabin),
            "window": rect(self.window),
            "wheel_rear": [self.wheel_rear.cx, self.wheel_rear.cy, self.wheel_rear.r],
            "wheel_front": [self.wheel_front.cx, self.wheel_front.cy, self.wheel_front.r],
            "headlight": rect(self.headlight),
            "headlight_on": self.headlight_on,
            "background_rgb": list(self.background_rgb),
            "ground_rgb": list(self.ground_rgb),
            "body_rgb": list(self.body_rgb),
            "cabin_rgb": list(self.cabin_rgb),
            "window_rgb": list(self.window_rgb),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneParams":
        return cls(
            resolution=d["resolution"],
            ground_y=d["ground_y"],
            body=Rect(*d["body"]),
            cabin=Rect(*d["cabin"]),
            window=Rect(*d["window"]),
            wheel_rear=Disc(*d["wheel_rear"]),
            wheel_front=Disc(*d["wheel_front"]),
            headlight=Rect(*d["headlight"]),
            headlight_on=d["headlight_on"],
            background_rgb=tuple(d["background_rgb"]),
            ground_rgb=tuple(d["ground_rgb"]),
            body_rgb=tuple(d["body_rgb"]),
            cabin_rgb=tuple(d["cabin_rgb"]),
            window_rgb=tuple(d["window_rgb"]),
        )


def sample_scene_params(resolution: int, rng: np.random.Generator) -> SceneParams:
    """Draw a random in-frame scene. Geometry scales with resolution."""
    res = resolution
    u = rng.uniform

    ground_y = int(round(u(0.72, 0.80) * res))
    body_h = int(round(u(0.20, 0.28) * res))
    body_w = int(round(u(0.55, 0.70) * res))
    body_x0 = int(round(u(0.10, 0.92 - body_w / res) * res))
    body = Rect(body_x0, ground_y - body_h, body_x0 + body_w, ground_y)

    cabin_h = max(3, int(round(u(0.12, 0.17) * res)))
    cabin_w = max(4, int(round(body_w * u(0.40, 0.55))))
    cabin_x0 = body.x0 + int(round(u(0.15, 0.35) * body_w))
    cabin = Rect(cabin_x0, body.y0 - cabin_h, cabin_x0 + cabin_w, body.y0)

    window = Rect(cabin.x0 + 1, cabin.y0 + 1, cabin.x1 - 1, cabin.y1 - 1)

    r = u(0.07, 0.105) * res
    wheel_y = ground_y - 0.15 * r
    rear = Disc(cx=body.x0 + r + 1.0, cy=wheel_y, r=r)
    front = Disc(cx=body.x1 - r - 1.0, cy=wheel_y, r=r)

    # headlights span a size range so enlarged ones stay in-distribution
    hl = max(2, int(round(u(0.065, 0.14) * res)))
    hl_y0 = body.y0 + 1
    hl_y1 = min(hl_y0 + hl, body.y1)
    headlight = Rect(body.x1 - hl - 1, hl_y0, body.x1 - 1, hl_y1)

    def jitter(base, lo=-0.08, hi=0.08):
        return tuple(float(np.clip(b + u(lo, hi), -1, 1)) for b in base)

    # keep body colors away from the headlight's yellow signature so the
    # headlight flag stays trivially detectable: (r+g)/2 - b stays below 0.6
    br, bg = u(-0.5, 0.9), u(-0.5, 0.9)
    bb = u(max(-0.5, (br + bg) / 2 - 0.6), 0.9)

    params = SceneParams(
        resolution=res,
        ground_y=ground_y,
        body=body,
        cabin=cabin,
        window=window,
        wheel_rear=rear,
        wheel_front=front,
        headlight=headlight,
        headlight_on=bool(rng.random() < 0.5),
        background_rgb=jitter((-0.70, -0.68, -0.55)),
        ground_rgb=jitter((-0.20, 0.12, -0.45)),
        body_rgb=(float(br), float(bg), float(bb)),
        cabin_rgb=jitter((-0.1, 0.15, 0.45), -0.15, 0.15),
        window_rgb=jitter((0.55, 0.75, 0.9)),
    )
    params.validate()
    return params


def render_scene(params: SceneParams, resolution: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Rasterize a scene to (HxWx3 image in [-1,1], HxW label mask).

    The mask is the exact analytic rasterization of the parts; the image is
    piecewise constant per part over a seed-determined smooth background
    shading. Deterministic in (params, seed).
    """
    if resolution != params.resolution:
        raise ValueError("render resolution must match the parameters' resolution")
    params.validate()
    res = resolution
    rows, cols = np.mgrid[0:res, 0:res]

    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * np.pi)
    tilt = rng.uniform(-1.0, 1.0)
    shade = 0.04 * np.sin(2 * np.pi * (cols + tilt * rows) / res + phase)

    image = np.zeros((res, res, 3), dtype=np.float32)
    image += np.asarray(params.background_rgb, dtype=np.float32)
    image += shade[:, :, None].astype(np.float32)
    mask = np.full((res, res), BACKGROUND, dtype=np.int64)

    def paint(region: np.ndarray, color, label: int) -> None:
        image[region] = np.asarray(color, dtype=np.float32)
        mask[region] = label

    paint(rows >= params.ground_y, params.ground_rgb, GROUND)
    paint(params.body.contains_grid(rows, cols), params.body_rgb, BODY)
    paint(params.cabin.contains_grid(rows, cols), params.cabin_rgb, CABIN)
    paint(params.window.contains_grid(rows, cols), params.window_rgb, WINDOW)
    paint(params.wheel_rear.contains_grid(rows, cols), WHEEL_COLOR, WHEEL_REAR)
    paint(params.wheel_front.contains_grid(rows, cols), WHEEL_COLOR, WHEEL_FRONT)
    if params.headlight_on:
        paint(params.headlight.contains_grid(rows, cols), HEADLIGHT_COLOR, HEADLIGHT)

    # mild edge softening: photographic data has no one-pixel-perfect edges,
    # and razor edges make the toy GAN's balance needlessly hard
    padded = np.pad(image, ((1, 1), (1, 1), (0, 0)), mode="edge")
    cross = (padded[:-2, 1:-1] + padded[2:, 1:-1]
             + padded[1:-1, :-2] + padded[1:-1, 2:])
    image = 0.68 * image + 0.08 * cross

    return np.clip(image, -1.0, 1.0), mask


@dataclass
class SceneExample:
    image: np.ndarray
    mask: np.ndarray
    params: SceneParams


@dataclass
class SceneDataset:
    resolution: int
    seed: int
    labeled: list[SceneExample] = field(default_factory=list)
    unlabeled: list[SceneExample] = field(default_factory=list)

    @property
    def images(self) -> np.ndarray:
        """All images, labeled split first: (N, H, W, 3)."""
        exs = self.labeled + self.unlabeled
        return np.stack([e.image for e in exs], axis=0)

    @property
    def unlabeled_images(self) -> np.ndarray:
        return np.stack([e.image for e in self.unlabeled], axis=0)


def sample_dataset(n: int, resolution: int, seed: int, labeled_size: int = 16) -> SceneDataset:
    """Deterministic dataset of n scenes, the first ``labeled_size`` labeled."""
    if n < labeled_size:
        raise ValueError(f"n={n} smaller than the labeled split size {labeled_size}")
    rng = np.random.default_rng(seed)
    dataset = SceneDataset(resolution=resolution, seed=seed)
    for i in range(n):
        params = sample_scene_params(resolution, rng)
        image, mask = render_scene(params, resolution, seed=seed + 1000 + i)
        example = SceneExample(image=image, mask=mask, params=params)
        (dataset.labeled if i < labeled_size else dataset.unlabeled).append(example)
    return dataset


def write_dataset(dataset: SceneDataset, directory: str | os.PathLike) -> Path:
    """Emit PNG pairs plus a manifest JSON; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"resolution": dataset.resolution, "seed": dataset.seed,
                "schema": SCENE_SCHEMA.to_dict(), "examples": []}
    for split, examples in (("labeled", dataset.labeled), ("unlabeled", dataset.unlabeled)):
        for i, ex in enumerate(examples):
            stem = f"{split}_{i:04d}"
            (directory / f"{stem}.png").write_bytes(image_to_png_bytes(ex.image))
            (directory / f"{stem}_mask.png").write_bytes(mask_to_png_bytes(ex.mask, SCENE_SCHEMA))
            manifest["examples"].append({
                "split": split, "image": f"{stem}.png", "mask": f"{stem}_mask.png",
                "params": ex.params.to_dict(), "attributes": ex.params.attributes,
            })
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


# -- canonical mask edits used by demos and tests ------------------------------

def paint_wheels(mask: np.ndarray, params: SceneParams, delta_r: float) -> np.ndarray:
    """Paint wheel discs with radius grown by ``delta_r`` onto a mask copy.

    Mimics a user enlarging both wheels on the predicted mask: pixels inside
    the enlarged discs get the wheel labels, everything else is untouched.
    """
    res = mask.shape[0]
    rows, cols = np.mgrid[0:res, 0:res]
    out = mask.copy()
    for disc, label in ((params.wheel_rear, WHEEL_REAR), (params.wheel_front, WHEEL_FRONT)):
        grown = Disc(disc.cx, disc.cy, max(disc.r + delta_r, 1.0))
        out[grown.contains_grid(rows, cols)] = label
    return out


def paint_headlight(mask: np.ndarray, params: SceneParams, on: bool = True) -> np.ndarray:
    """Toggle the headlight on a mask copy.

    Turning on paints the parametric rectangle; turning off repaints that
    rectangle and every other headlight-labeled pixel as body, so no
    headlight pixels survive anywhere.
    """
    res = mask.shape[0]
    rows, cols = np.mgrid[0:res, 0:res]
    out = mask.copy()
    region = params.headlight.contains_grid(rows, cols)
    if on:
        out[region] = HEADLIGHT
    else:
        out[region | (mask == HEADLIGHT)] = BODY
    return out
