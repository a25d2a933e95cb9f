"""Synthetic scenes: exact masks, determinism, dataset splits."""

import json

import numpy as np
import pytest

from maskedit.scenes import (BACKGROUND, HEADLIGHT, SCENE_SCHEMA, WHEEL_FRONT, WHEEL_REAR,
                             Disc, paint_headlight, paint_wheels, render_scene,
                             sample_dataset, sample_scene_params, write_dataset)


def _mask_oracle(params):
    """Per-pixel recomputation of every part's analytic membership."""
    res = params.resolution
    mask = np.full((res, res), BACKGROUND, dtype=np.int64)
    for row in range(res):
        for col in range(res):
            if row >= params.ground_y:
                mask[row, col] = 1
    for label, rect in ((2, params.body), (3, params.cabin), (4, params.window)):
        for row in range(res):
            for col in range(res):
                if rect.x0 <= col < rect.x1 and rect.y0 <= row < rect.y1:
                    mask[row, col] = label
    for label, disc in ((WHEEL_REAR, params.wheel_rear), (WHEEL_FRONT, params.wheel_front)):
        for row in range(res):
            for col in range(res):
                if (col - disc.cx) ** 2 + (row - disc.cy) ** 2 <= disc.r ** 2:
                    mask[row, col] = label
    if params.headlight_on:
        rect = params.headlight
        for row in range(res):
            for col in range(res):
                if rect.x0 <= col < rect.x1 and rect.y0 <= row < rect.y1:
                    mask[row, col] = HEADLIGHT
    return mask


class TestRenderScene:
    def test_mask_matches_brute_force_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            params = sample_scene_params(24, rng)
            _, mask = render_scene(params, 24, seed=0)
            np.testing.assert_array_equal(mask, _mask_oracle(params))

    def test_wheel_pixel_count_matches_disc_oracle(self):
        rng = np.random.default_rng(4)
        params = sample_scene_params(32, rng)
        _, mask = render_scene(params, 32, seed=1)
        rows, cols = np.mgrid[0:32, 0:32]
        for label, disc in ((WHEEL_REAR, params.wheel_rear),
                            (WHEEL_FRONT, params.wheel_front)):
            inside = (cols - disc.cx) ** 2 + (rows - disc.cy) ** 2 <= disc.r ** 2
            # wheels are drawn last before headlight, nothing occludes them
            assert (mask == label).sum() == inside.sum()

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        params = sample_scene_params(32, rng)
        a_img, a_mask = render_scene(params, 32, seed=9)
        b_img, b_mask = render_scene(params, 32, seed=9)
        np.testing.assert_array_equal(a_img, b_img)
        np.testing.assert_array_equal(a_mask, b_mask)

    def test_headlight_flag_semantics(self):
        rng = np.random.default_rng(6)
        params = sample_scene_params(32, rng)
        from dataclasses import replace

        off = replace(params, headlight_on=False)
        on = replace(params, headlight_on=True)
        _, mask_off = render_scene(off, 32, seed=0)
        _, mask_on = render_scene(on, 32, seed=0)
        assert (mask_off == HEADLIGHT).sum() == 0
        assert (mask_on == HEADLIGHT).sum() > 0

    def test_out_of_frame_geometry_rejected(self):
        rng = np.random.default_rng(7)
        params = sample_scene_params(32, rng)
        from dataclasses import replace

        bad = replace(params, wheel_front=Disc(cx=31.0, cy=28.0, r=5.0))
        with pytest.raises(ValueError, match="out of frame"):
            render_scene(bad, 32, seed=0)

    def test_minimal_wheel_radius_renders(self):
        rng = np.random.default_rng(8)
        params = sample_scene_params(32, rng)
        from dataclasses import replace

        tiny = replace(params, wheel_front=Disc(params.wheel_front.cx,
                                                params.wheel_front.cy, 1.0))
        _, mask = render_scene(tiny, 32, seed=0)
        rows, cols = np.mgrid[0:32, 0:32]
        inside = ((cols - tiny.wheel_front.cx) ** 2
                  + (rows - tiny.wheel_front.cy) ** 2) <= 1.0
        assert (mask == WHEEL_FRONT).sum() == inside.sum() > 0


class TestSampleDataset:
    def test_split_sizes_and_default(self):
        ds = sample_dataset(40, 32, seed=0)
        assert len(ds.labeled) == 16  # default labeled split size
        assert len(ds.unlabeled) == 24

    def test_n_too_small_rejected(self):
        with pytest.raises(ValueError, match="smaller"):
            sample_dataset(8, 32, seed=0, labeled_size=16)

    def test_identical_across_runs(self):
        a = sample_dataset(30, 32, seed=3)
        b = sample_dataset(30, 32, seed=3)
        np.testing.assert_array_equal(a.images, b.images)
        for ex_a, ex_b in zip(a.labeled, b.labeled):
            np.testing.assert_array_equal(ex_a.mask, ex_b.mask)

    def test_attribute_prevalence_balanced(self):
        ds = sample_dataset(1000, 16, seed=11, labeled_size=16)
        flags = [e.params.headlight_on for e in ds.labeled + ds.unlabeled]
        assert 0.4 <= np.mean(flags) <= 0.6

    def test_write_dataset_emits_pngs_and_manifest(self, tmp_path):
        ds = sample_dataset(20, 16, seed=2, labeled_size=4)
        manifest_path = write_dataset(ds, tmp_path / "scenes")
        manifest = json.loads(manifest_path.read_text())
        assert len(manifest["examples"]) == 20
        assert manifest["schema"]["names"] == list(SCENE_SCHEMA.names)
        first = manifest["examples"][0]
        assert (tmp_path / "scenes" / first["image"]).exists()
        assert (tmp_path / "scenes" / first["mask"]).exists()
        assert "headlight_on" in first["attributes"]


class TestMaskEdits:
    def test_paint_wheels_only_adds_wheel_labels(self):
        rng = np.random.default_rng(12)
        params = sample_scene_params(32, rng)
        _, mask = render_scene(params, 32, seed=0)
        edited = paint_wheels(mask, params, delta_r=2.0)
        changed = edited != mask
        assert set(np.unique(edited[changed])) <= {WHEEL_REAR, WHEEL_FRONT}
        assert (np.isin(edited, (WHEEL_REAR, WHEEL_FRONT)).sum()
                > np.isin(mask, (WHEEL_REAR, WHEEL_FRONT)).sum())

    def test_paint_headlight_toggles_region(self):
        rng = np.random.default_rng(13)
        params = sample_scene_params(32, rng)
        _, mask = render_scene(params, 32, seed=0)
        on = paint_headlight(mask, params, on=True)
        assert (on == HEADLIGHT).sum() > 0
        off = paint_headlight(on, params, on=False)
        assert (off == HEADLIGHT).sum() == 0
