import numpy as np
import pytest

from embdiff.encoder import (
    EncoderConfig,
    GlobalCondition,
    VitImageEncoder,
    embed,
    embed_global_batch,
    global_tokens,
    lerp_condition,
)
from embdiff.errors import ConfigError, ContractError


@pytest.fixture(scope="module")
def image():
    rng = np.random.default_rng(0)
    return rng.integers(0, 256, size=(64, 64, 3)).astype(np.uint8)


@pytest.fixture(scope="module")
def enc_v1():
    return VitImageEncoder(EncoderConfig(variant="v1", seed=0))


@pytest.fixture(scope="module")
def enc_v2():
    return VitImageEncoder(EncoderConfig(variant="v2", seed=0))


class TestTokenShapes:
    def test_patch_count(self, image, enc_v1):
        tokens = embed(image, enc_v1)
        assert tokens.patches.shape == (64, 128)  # (64/8)^2 patches
        assert tokens.cls.shape == (128,)
        assert tokens.pooler is not None
        assert tokens.registers.shape == (0, 128)

    def test_v2_registers(self, image, enc_v2):
        tokens = embed(image, enc_v2)
        assert tokens.registers.shape == (4, 128)
        assert tokens.pooler is None

    def test_indivisible_side_rejected(self, enc_v1):
        bad = np.zeros((60, 60, 3), dtype=np.uint8)
        with pytest.raises(ContractError):
            embed(bad, enc_v1)

    def test_frozen_determinism(self, image, enc_v1):
        t1 = embed(image, enc_v1)
        t2 = embed(image, enc_v1)
        assert np.array_equal(t1.cls, t2.cls)
        assert np.array_equal(t1.patches, t2.patches)

    def test_same_seed_same_weights(self, image):
        a = VitImageEncoder(EncoderConfig(seed=4))
        b = VitImageEncoder(EncoderConfig(seed=4))
        assert np.array_equal(embed(image, a).cls, embed(image, b).cls)

    def test_all_finite(self, image, enc_v2):
        tokens = embed(image, enc_v2)
        for arr in (tokens.cls, tokens.registers, tokens.patches):
            assert np.isfinite(arr).all()


class TestGlobalTokens:
    def test_v1_has_two_rows(self, image, enc_v1):
        cond = global_tokens(embed(image, enc_v1))
        assert cond.tokens.shape == (2, 128)

    def test_v2_has_five_rows(self, image, enc_v2):
        cond = global_tokens(embed(image, enc_v2))
        assert cond.tokens.shape == (5, 128)

    def test_patch_independence(self, image, enc_v1):
        tokens = embed(image, enc_v1)
        before = global_tokens(tokens)
        tokens.patches = np.random.default_rng(1).normal(size=tokens.patches.shape)
        after = global_tokens(tokens)
        assert np.array_equal(before.tokens, after.tokens)

    def test_row_order(self, image, enc_v2):
        tokens = embed(image, enc_v2)
        cond = global_tokens(tokens)
        assert np.array_equal(cond.tokens[0], tokens.cls)
        assert np.array_equal(cond.tokens[1:], tokens.registers)

    def test_batch_matches_single(self, image, enc_v1):
        batch = embed_global_batch(image[None], enc_v1)
        single = global_tokens(embed(image, enc_v1))
        assert np.allclose(batch[0], single.tokens, atol=1e-6)


class TestLerpCondition:
    def _cond(self, fill, n=128):
        return GlobalCondition(tokens=np.full((2, n), fill, dtype=np.float32), encoder_id="e")

    def test_endpoints_exact(self):
        rng = np.random.default_rng(2)
        c1 = GlobalCondition(rng.normal(size=(2, 8)).astype(np.float32), "e")
        c2 = GlobalCondition(rng.normal(size=(2, 8)).astype(np.float32), "e")
        assert np.array_equal(lerp_condition(c1, c2, 0.0).tokens, c1.tokens)
        assert np.array_equal(lerp_condition(c1, c2, 1.0).tokens, c2.tokens)

    def test_midpoint(self):
        mixed = lerp_condition(self._cond(1.0), self._cond(3.0), 0.5)
        assert np.allclose(mixed.tokens, 2.0)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        c1 = GlobalCondition(rng.normal(size=(3, 16)).astype(np.float32), "e")
        c2 = GlobalCondition(rng.normal(size=(3, 16)).astype(np.float32), "e")
        for r in (0.0, 0.25, 0.5, 0.9, 1.0):
            assert np.array_equal(
                lerp_condition(c1, c2, r).tokens, lerp_condition(c2, c1, 1.0 - r).tokens
            )

    def test_rows_stay_on_segment(self):
        rng = np.random.default_rng(4)
        c1 = GlobalCondition(rng.normal(size=(4, 16)).astype(np.float32), "e")
        c2 = GlobalCondition(rng.normal(size=(4, 16)).astype(np.float32), "e")
        for r in np.linspace(0, 1, 7):
            mixed = lerp_condition(c1, c2, float(r))
            for row in range(4):
                bound = max(np.linalg.norm(c1.tokens[row]), np.linalg.norm(c2.tokens[row]))
                assert np.linalg.norm(mixed.tokens[row]) <= bound + 1e-5

    def test_contract_errors(self):
        c1 = self._cond(1.0)
        with pytest.raises(ContractError):
            lerp_condition(c1, self._cond(1.0, n=64), 0.5)
        c3 = GlobalCondition(np.ones((2, 128), dtype=np.float32), "other")
        with pytest.raises(ContractError):
            lerp_condition(c1, c3, 0.5)
        with pytest.raises(ContractError):
            lerp_condition(c1, self._cond(2.0), 1.5)


class TestWeightsFile:
    def test_save_load_round_trip(self, image, tmp_path):
        enc = VitImageEncoder(EncoderConfig(seed=8))
        path = tmp_path / "encoder.npz"
        enc.save(path)
        loaded = VitImageEncoder(EncoderConfig(seed=999, weights_file=str(path)))
        assert np.allclose(embed(image, enc).cls, embed(image, loaded).cls, atol=1e-7)

    def test_bad_variant_rejected(self):
        with pytest.raises(ConfigError):
            EncoderConfig(variant="v3")
        with pytest.raises(ConfigError):
            EncoderConfig(embed_dim=130, heads=4)
