import numpy as np
import pytest
import torch

from embdiff.data.phantom import PhantomSpec, generate_phantom
from embdiff.errors import ConfigError, ContractError, TrainingError
from embdiff.vae import Vae, VaeConfig, build_vae, train_vae

# Reconstruction tolerance (mean abs error, uint8 scale) observed on the
# seeded 500-image/20-epoch run in TestTraining; frozen as a regression bound.
ROUNDTRIP_MAE_BOUND = 14.0


@pytest.fixture(scope="module")
def images():
    records = generate_phantom(PhantomSpec(seed=21), 500)
    return np.stack([rec.image for rec in records])


@pytest.fixture(scope="module")
def trained_vae(images):
    cfg = VaeConfig(side=64, down_factor=4, channels=4, epochs=20, seed=13)
    return train_vae(images, cfg)


class TestShapes:
    def test_latent_shape(self):
        vae = build_vae(VaeConfig(side=64, down_factor=4, channels=4))
        z = vae.encode(np.zeros((64, 64, 3), dtype=np.uint8))
        assert z.shape == (16, 16, 4)

    def test_decode_shape_round_trip(self):
        vae = build_vae(VaeConfig(side=64, down_factor=4, channels=4))
        img = np.zeros((64, 64, 3), dtype=np.uint8)
        out = vae.decode(vae.encode(img))
        assert out.shape == img.shape and out.dtype == np.uint8

    def test_encode_deterministic(self, images):
        vae = build_vae(VaeConfig(side=64, down_factor=4, channels=4))
        assert np.array_equal(vae.encode(images[0]), vae.encode(images[0]))

    def test_all_zero_latent_decodes_in_range(self):
        vae = build_vae(VaeConfig(side=64, down_factor=4, channels=4))
        img = vae.decode(np.zeros((16, 16, 4), dtype=np.float32))
        assert img.dtype == np.uint8 and np.isfinite(img.astype(float)).all()

    def test_latent_shape_mismatch_rejected(self):
        vae = build_vae(VaeConfig(side=64, down_factor=4, channels=4))
        with pytest.raises(ContractError):
            vae.decode(np.zeros((8, 8, 4), dtype=np.float32))


class TestPassthrough:
    def test_exact_inverse(self, images):
        vae = build_vae(VaeConfig(side=64, down_factor=1, channels=3))
        for img in images[:5]:
            z = vae.encode(img)
            assert z.shape == (64, 64, 3)
            assert np.array_equal(vae.decode(z), img)

    def test_latent_is_scaled_image(self, images):
        vae = build_vae(VaeConfig(side=64, down_factor=1, channels=3))
        z = vae.encode(images[0])
        assert np.allclose(z, images[0].astype(np.float32) / 127.5 - 1.0)

    def test_passthrough_needs_three_channels(self):
        with pytest.raises(ConfigError):
            VaeConfig(down_factor=1, channels=4)


class TestTraining:
    def test_reconstruction_improves_by_half(self, trained_vae):
        history = trained_vae.history["eval_recon"]
        assert history[-1] < 0.5 * history[0]

    def test_roundtrip_error_within_bound(self, trained_vae, images):
        errs = []
        for img in images[:32]:
            recon = trained_vae.decode(trained_vae.encode(img))
            errs.append(np.abs(recon.astype(float) - img.astype(float)).mean())
        assert np.mean(errs) < ROUNDTRIP_MAE_BOUND

    def test_zero_lr_leaves_loss_unchanged(self, images):
        cfg = VaeConfig(side=64, down_factor=4, channels=4, epochs=3, lr=0.0, seed=7)
        vae = train_vae(images[:128], cfg)
        history = vae.history["eval_recon"]
        assert all(abs(v - history[0]) < 1e-12 for v in history)

    def test_seeded_determinism(self, images):
        cfg = VaeConfig(side=64, down_factor=4, channels=4, epochs=2, seed=5)
        a = train_vae(images[:128], cfg)
        b = train_vae(images[:128], cfg)
        assert a.weight_hash() == b.weight_hash()

    def test_too_few_samples_rejected(self, images):
        with pytest.raises(ContractError):
            train_vae(images[:50], VaeConfig(epochs=1))

    def test_divergence_aborts(self, images):
        # absurd learning rate blows the KL term up to inf within a few epochs
        cfg = VaeConfig(side=64, down_factor=4, channels=4, epochs=10, lr=1e12, seed=0)
        with pytest.raises(TrainingError):
            train_vae(images[:128], cfg)

    def test_save_load_round_trip(self, trained_vae, images, tmp_path):
        path = tmp_path / "vae.npz"
        trained_vae.save(path)
        loaded = Vae.load(path)
        assert loaded.latent_scale == trained_vae.latent_scale
        assert np.allclose(loaded.encode(images[0]), trained_vae.encode(images[0]), atol=1e-7)


class TestFrozenInvariant:
    def test_diffusion_step_does_not_touch_vae(self, trained_vae, images):
        from embdiff.diffusion import CondUNet, DenoiserConfig, build_schedule, training_step

        before = trained_vae.weight_hash()
        latents = trained_vae.encode_batch(images[:8]) * trained_vae.latent_scale
        cfg = DenoiserConfig(
            latent_side=16, latent_channels=4, base_channels=8, channel_mults=(1, 2),
            attention_levels=(0,), heads=2, cond_dim=16, cond_len=2, seed=0,
        )
        model = CondUNet(cfg)
        opt = torch.optim.Adam(model.parameters(), lr=1e-3)
        schedule = build_schedule(100, "linear")
        z = torch.from_numpy(latents).permute(0, 3, 1, 2)
        c = torch.randn(8, 2, 16, generator=torch.Generator().manual_seed(0))
        gen = torch.Generator().manual_seed(1)
        for _ in range(3):
            training_step(model, opt, z, c, schedule, gen)
        assert trained_vae.weight_hash() == before
