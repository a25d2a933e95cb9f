"""Encoder, perceptual distance, and latent refinement."""

import numpy as np
import pytest
import torch

from maskedit.containers import CorruptFileError
from maskedit.embedding import (Encoder, EncoderConfig, RefinementConfig, embed_image,
                                load_latent, perceptual_distance, sampling_loss_torch,
                                save_latent, train_encoder)
from maskedit.generator import ExtendedLatent, sample_latent

from helpers import gradient_vs_central_difference, weights_fingerprint


class TestPerceptualDistance:
    def test_zero_on_identical(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, size=(16, 16, 3))
        assert perceptual_distance(x, x.copy()) == pytest.approx(0.0, abs=1e-10)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            a = rng.uniform(-1, 1, size=(16, 16, 3))
            b = rng.uniform(-1, 1, size=(16, 16, 3))
            assert perceptual_distance(a, b) == pytest.approx(perceptual_distance(b, a),
                                                              rel=1e-12)

    def test_positive_for_different_inputs(self):
        a = np.zeros((8, 8, 3))
        b = np.zeros((8, 8, 3))
        b[4, 4, 0] = 1e-3
        assert perceptual_distance(a, b) > 0

    def test_monotone_along_noise_path(self):
        # d(a, a + t*noise) strictly increases with t on 20 random seeds
        for seed in range(20):
            rng = np.random.default_rng(seed)
            a = rng.uniform(-0.5, 0.5, size=(16, 16, 3))
            noise = rng.standard_normal((16, 16, 3))
            values = [perceptual_distance(a, a + t * noise) for t in (0.1, 0.2, 0.4)]
            assert values[0] < values[1] < values[2]

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="differ"):
            perceptual_distance(np.zeros((8, 8, 3)), np.zeros((16, 16, 3)))


class TestTrainEncoder:
    def test_latent_regression_fixed_point(self, tiny_generator):
        """An oracle encoder that returns the exact broadcast latent zeroes
        the sampling loss when only the latent term is active."""
        g = tiny_generator
        cfg = EncoderConfig(lambda1=0, lambda2=0, lambda3=0, lambda4=0, lambda5=5.0)

        class OracleEncoder(torch.nn.Module):
            def forward(self, x):
                # recompute the known mapping for the drawn z (captured below)
                return oracle_w

        z = torch.randn(2, 16, generator=torch.Generator().manual_seed(0))
        with torch.no_grad():
            w = g.map_z(z)
        oracle_w = w.unsqueeze(1).repeat(1, g.config.num_style_layers, 1)
        loss = sampling_loss_torch(g, OracleEncoder(), z, cfg)
        assert float(loss.detach()) == pytest.approx(0.0, abs=1e-10)

    def test_rgb_loss_descends(self, tiny_generator):
        rng = np.random.default_rng(2)
        images = rng.uniform(-0.8, 0.8, size=(64, 16, 16, 3)).astype(np.float32)
        result = train_encoder(tiny_generator, images,
                               EncoderConfig(learning_rate=1e-3), steps=200, seed=3)
        first = result.log[0]["loss_rgb"]
        last = result.log[-1]["loss_rgb"]
        assert last < first

    def test_generator_frozen(self, tiny_generator):
        before = weights_fingerprint(tiny_generator)
        rng = np.random.default_rng(4)
        images = rng.uniform(-1, 1, size=(8, 16, 16, 3)).astype(np.float32)
        train_encoder(tiny_generator, images, EncoderConfig(), steps=5, seed=5)
        assert weights_fingerprint(tiny_generator) == before

    def test_hard_dataset_warmup_schedule(self, tiny_generator):
        """Hard datasets first train on generator samples only, then jointly."""
        rng = np.random.default_rng(11)
        images = rng.uniform(-1, 1, size=(8, 16, 16, 3)).astype(np.float32)
        cfg = EncoderConfig(hard_dataset=True, warmup_sampling_steps=60,
                            learning_rate=1e-3)
        result = train_encoder(tiny_generator, images, cfg, steps=120, seed=6)
        warm = [row for row in result.log if row["step"] < 60]
        joint = [row for row in result.log if row["step"] >= 60]
        assert warm and all(row["loss_rgb"] == 0.0 for row in warm)
        assert joint and all(row["loss_rgb"] > 0.0 for row in joint)

    def test_empty_collection_rejected(self, tiny_generator):
        with pytest.raises(ValueError, match="non-empty"):
            train_encoder(tiny_generator, np.zeros((0, 16, 16, 3)), EncoderConfig(), steps=1)


class TestEmbedImage:
    def test_oracle_init_zero_loss(self, tiny_generator):
        g = tiny_generator
        w = g.map_to_w_plus(sample_latent(3, 16))
        target = g.synthesize(w).image
        result = embed_image(g, None, target, RefinementConfig(steps=0), initial_latent=w)
        assert result.final_loss == pytest.approx(0.0, abs=1e-10)
        assert len(result.loss_trace) == 1

    def test_refinement_never_worse_than_init(self, tiny_generator):
        g = tiny_generator
        rng = np.random.default_rng(5)
        target = rng.uniform(-0.5, 0.5, size=(16, 16, 3)).astype(np.float32)
        init = ExtendedLatent(rng.standard_normal((4, 16)).astype(np.float32))
        r0 = embed_image(g, None, target, RefinementConfig(steps=0), initial_latent=init)
        r50 = embed_image(g, None, target, RefinementConfig(steps=50), initial_latent=init)
        assert r50.final_loss <= r0.final_loss
        assert len(r50.loss_trace) == 51

    def test_final_loss_is_trace_minimum(self, tiny_generator):
        g = tiny_generator
        rng = np.random.default_rng(6)
        target = rng.uniform(-0.5, 0.5, size=(16, 16, 3)).astype(np.float32)
        init = ExtendedLatent(rng.standard_normal((4, 16)).astype(np.float32))
        result = embed_image(g, None, target, RefinementConfig(steps=30), initial_latent=init)
        assert result.final_loss == pytest.approx(min(result.loss_trace), abs=0)

    def test_deterministic_with_encoder(self, tiny_generator):
        g = tiny_generator
        encoder = Encoder(16, 16, 4, seed=9)
        rng = np.random.default_rng(7)
        target = rng.uniform(-0.5, 0.5, size=(16, 16, 3)).astype(np.float32)
        a = embed_image(g, encoder, target, RefinementConfig(steps=5))
        b = embed_image(g, encoder, target, RefinementConfig(steps=5))
        np.testing.assert_array_equal(a.w_plus.w_plus, b.w_plus.w_plus)

    def test_resolution_mismatch_rejected(self, tiny_generator):
        with pytest.raises(ValueError, match="resolution"):
            embed_image(tiny_generator, None, np.zeros((8, 8, 3)),
                        RefinementConfig(steps=0),
                        initial_latent=ExtendedLatent(np.zeros((4, 16), dtype=np.float32)))

    def test_reconstruction_loss_gradient_matches_fd(self, tiny_generator_f64):
        g = tiny_generator_f64
        from maskedit.embedding import reconstruction_loss_torch

        rng = np.random.default_rng(8)
        target = torch.from_numpy(
            rng.uniform(-0.5, 0.5, size=(1, 3, 16, 16))).double()
        w0 = torch.from_numpy(rng.standard_normal((4, 16)))

        def f(wt):
            recon = g.image_from_w(wt.unsqueeze(0))
            return reconstruction_loss_torch(target, recon, 10.0, 1.0)

        err = gradient_vs_central_difference(f, w0, n_probes=15, seed=2)
        assert err < 1e-4


class TestLatentFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        latent = ExtendedLatent(rng.standard_normal((4, 16)).astype(np.float32))
        path = tmp_path / "w.egl"
        save_latent(path, latent, source_hash="abc123")
        loaded, meta = load_latent(path)
        np.testing.assert_array_equal(loaded.w_plus, latent.w_plus)
        assert meta["source_hash"] == "abc123"
        assert meta["rows"] == 4 and meta["latent_dim"] == 16

    def test_header_data_disagreement_rejected(self, tmp_path):
        rng = np.random.default_rng(10)
        latent = ExtendedLatent(rng.standard_normal((4, 16)).astype(np.float32))
        path = tmp_path / "w.egl"
        save_latent(path, latent)
        data = bytearray(path.read_bytes())
        # corrupt the header's row count
        text = data.decode("latin1").replace('"rows":4', '"rows":5').encode("latin1")
        path.write_bytes(text)
        with pytest.raises(CorruptFileError):
            load_latent(path)
