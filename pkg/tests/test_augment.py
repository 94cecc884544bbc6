import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelaug import augment
from labelaug.augment import (AugOpDescriptor, CorruptionSpec, apply_corruption,
                              apply_gamma, apply_op, apply_planckian_jitter,
                              apply_plasma, crop, diamond_square_field,
                              flip_horizontal, pad_reflect, planckian_gains,
                              preprocess_flip_crop, sample_training_op,
                              severity_table, severity_table_version)
from labelaug.errors import ValidationError


def image(rng, c=3, h=8, w=8, lo=0.0, hi=1.0):
    return rng.uniform(lo, hi, (c, h, w))


class TestGamma:
    def test_gamma_one_bit_identical(self, rng):
        img = image(rng).astype(np.float32)
        out = apply_gamma(img, 1.0)
        assert out.tobytes() == img.tobytes()

    def test_analytic_values(self):
        img = np.full((1, 1, 1), 0.25)
        assert apply_gamma(img, 2.0)[0, 0, 0] == pytest.approx(0.0625, abs=0.0)
        img = np.full((1, 1, 1), 0.16)
        assert apply_gamma(img, 0.5)[0, 0, 0] == pytest.approx(0.4, abs=1e-12)

    def test_range_validated(self, rng):
        with pytest.raises(ValidationError):
            apply_gamma(image(rng), 2.5)
        with pytest.raises(ValidationError):
            apply_gamma(image(rng), 0.3)


class TestPlanckianJitter:
    def test_reference_temperature_is_identity(self, rng):
        img = image(rng).astype(np.float32)
        out = apply_planckian_jitter(img, augment.REFERENCE_TEMPERATURE)
        assert out.tobytes() == img.tobytes()

    def test_golden_triple_at_3000k(self):
        # frozen from the locus-approximation oracle (piecewise cubic
        # chromaticity -> XYZ -> linear sRGB, reference 6500 K)
        r, g, b = planckian_gains(3000.0)
        assert (r, g, b) == (1.9718034375768914, 1.0, 0.30650286860900466)

    def test_grayscale_image_stays_proportional_to_gains(self):
        img = np.full((3, 4, 4), 0.25)
        out = apply_planckian_jitter(img, 9000.0)
        gains = np.array(planckian_gains(9000.0))
        expected = np.clip(0.25 * gains, 0.0, 1.0)
        for ch in range(3):
            assert np.allclose(out[ch], expected[ch])

    def test_temperature_range_validated(self, rng):
        with pytest.raises(ValidationError):
            apply_planckian_jitter(image(rng), 2000.0)

    def test_needs_three_channels(self, rng):
        with pytest.raises(ValidationError):
            apply_planckian_jitter(image(rng, c=1), 5000.0)


class TestPlasma:
    def test_alpha_zero_bit_identical(self, rng):
        img = image(rng).astype(np.float32)
        out = apply_plasma(img, 0.5, 0.0, seed=3)
        assert out.tobytes() == img.tobytes()

    def test_same_seed_identical_different_seed_differs(self, rng):
        img = image(rng, h=32, w=32)
        a = apply_plasma(img, 0.5, 0.6, seed=11)
        b = apply_plasma(img, 0.5, 0.6, seed=11)
        c = apply_plasma(img, 0.5, 0.6, seed=12)
        assert a.tobytes() == b.tobytes()
        frac_differs = np.mean(np.any(a != c, axis=0))
        assert frac_differs >= 0.01

    def test_three_by_three_hand_executed_level(self):
        # one diamond-square level executed by hand with the documented
        # draw order: 4 corners, center displacement, then the four edge
        # midpoints row by row (in-bounds neighbors averaged up/down/left/right)
        rng = np.random.default_rng(42)
        c = rng.uniform(0.0, 1.0, 4)
        d_center = rng.uniform(-1.0, 1.0, (1, 1))[0, 0]
        center = (c[0] + c[1] + c[2] + c[3]) * 0.25 + d_center * 1.0
        top = (center + c[0] + c[1]) / 3 + rng.uniform(-1.0, 1.0, 1)[0] * 1.0
        lr = rng.uniform(-1.0, 1.0, 2)
        left = (c[0] + c[2] + center) / 3 + lr[0] * 1.0
        right = (c[1] + c[3] + center) / 3 + lr[1] * 1.0
        bottom = (center + c[2] + c[3]) / 3 + rng.uniform(-1.0, 1.0, 1)[0] * 1.0
        grid = np.array([[c[0], top, c[1]], [left, center, right],
                         [c[2], bottom, c[3]]])
        expected = (grid - grid.min()) / (grid.max() - grid.min())

        field = diamond_square_field(3, 0.5, np.random.default_rng(42))
        assert field[1, 1] == expected[1, 1]
        assert np.array_equal(field, expected)

    def test_field_covers_non_square_images(self, rng):
        img = image(rng, h=20, w=32)
        out = apply_plasma(img, 0.5, 0.5, seed=5)
        assert out.shape == img.shape

    def test_parameter_validation(self, rng):
        with pytest.raises(ValidationError):
            apply_plasma(image(rng), 0.0, 0.5, 1)
        with pytest.raises(ValidationError):
            apply_plasma(image(rng), 0.5, 1.5, 1)

    def test_grid_side_must_be_pow2_plus1(self):
        with pytest.raises(ValidationError):
            diamond_square_field(4, 0.5, 0)


class TestFlipCrop:
    def test_flip_is_involution(self, rng):
        img = image(rng)
        assert np.array_equal(flip_horizontal(flip_horizontal(img)), img)

    def test_center_crop_of_padded_is_identity(self, rng):
        img = image(rng, h=8, w=8)
        padded = pad_reflect(img, 4)
        assert np.array_equal(crop(padded, 4, 4, 8, 8), img)

    def test_deterministic_under_seed(self, rng):
        img = image(rng, h=32, w=32)
        a = preprocess_flip_crop(img, 9)
        b = preprocess_flip_crop(img, 9)
        assert a.tobytes() == b.tobytes()
        assert a.shape == img.shape

    def test_small_image_rejected(self, rng):
        with pytest.raises(ValidationError):
            preprocess_flip_crop(image(rng, h=3, w=3), 0)

    def test_crop_bounds_checked(self, rng):
        with pytest.raises(ValidationError):
            crop(image(rng), 5, 5, 8, 8)


class _ZeroNoise:
    """Degenerate RNG stub: noise-free gaussian corruption."""

    def normal(self, loc, scale, size):
        return np.zeros(size)


class TestCorruptions:
    def test_zero_variance_stub_returns_original(self, rng):
        img = image(rng).astype(np.float32)
        out = apply_corruption(img, CorruptionSpec("gaussian_noise", 3), _ZeroNoise())
        assert out.tobytes() == img.tobytes()

    def test_brightness_table_strictly_increasing(self):
        shifts = severity_table()["brightness"]
        assert all(a < b for a, b in zip(shifts, shifts[1:]))

    def test_all_tables_strictly_monotone(self):
        table = severity_table()
        increasing = {"gaussian_noise", "impulse_noise", "box_blur", "brightness"}
        decreasing = {"shot_noise", "contrast", "pixelate"}
        for cid in increasing:
            assert all(a < b for a, b in zip(table[cid], table[cid][1:])), cid
        for cid in decreasing:
            assert all(a > b for a, b in zip(table[cid], table[cid][1:])), cid
        assert severity_table_version() == 1

    def test_gaussian_severity5_matches_folded_normal(self):
        # E|N(0, sigma)| = sigma * sqrt(2/pi); images kept off the clamp walls
        rng = np.random.default_rng(77)
        sigma = severity_table()["gaussian_noise"][4]
        expected = sigma * np.sqrt(2.0 / np.pi)
        total, count = 0.0, 0
        spec = CorruptionSpec("gaussian_noise", 5)
        for i in range(1000):
            img = rng.uniform(0.3, 0.7, (3, 8, 8))
            out = apply_corruption(img, spec, i)
            total += np.abs(out - img).sum()
            count += img.size
        assert total / count == pytest.approx(expected, rel=0.05)

    def test_unknown_corruption_rejected(self):
        with pytest.raises(ValidationError, match="unknown corruption"):
            CorruptionSpec("fog", 1)

    def test_severity_bounds(self):
        with pytest.raises(ValidationError):
            CorruptionSpec("gaussian_noise", 0)
        with pytest.raises(ValidationError):
            CorruptionSpec("gaussian_noise", 6)

    def test_deterministic_under_seed(self, rng):
        img = image(rng)
        for cid in augment.CORRUPTION_IDS:
            spec = CorruptionSpec(cid, 4)
            a = apply_corruption(img, spec, 123)
            b = apply_corruption(img, spec, 123)
            assert a.tobytes() == b.tobytes(), cid

    def test_pixelate_reuses_source_values(self, rng):
        img = image(rng)
        out = apply_corruption(img, CorruptionSpec("pixelate", 5), 0)
        assert set(np.unique(out)).issubset(set(np.unique(img)))

    def test_golden_fixture_dumps_bit_exact(self):
        # frozen raw tensor dumps pin every corruption's exact output,
        # so severity-table or algorithm drift cannot pass silently
        from pathlib import Path

        golden = np.load(Path(__file__).parent / "data" / "golden_corruptions.npz")
        img = golden["input"]
        for cid in augment.CORRUPTION_IDS:
            out = apply_corruption(img, CorruptionSpec(cid, 3), seed=5)
            assert out.tobytes() == golden[cid].tobytes(), cid


class TestOpDescriptors:
    def test_identity_carries_no_params(self):
        with pytest.raises(ValidationError):
            AugOpDescriptor("identity", {"gamma": 1.0})

    def test_unknown_op(self):
        with pytest.raises(ValidationError):
            AugOpDescriptor("rotate")

    def test_apply_dispatch(self, rng):
        img = image(rng)
        out = apply_op(img, AugOpDescriptor("gamma", {"gamma": 1.5}))
        assert np.array_equal(out, apply_gamma(img, 1.5))
        ident = apply_op(img, AugOpDescriptor("identity"))
        assert np.array_equal(ident, img)
        assert ident is not img  # fresh buffer

    def test_sampling_rate(self):
        rng = np.random.default_rng(5)
        ops = ("plasma", "gamma")
        drawn = [sample_training_op(rng, ops)[0] for _ in range(4000)]
        identity_frac = sum(1 for j in drawn if j is None) / len(drawn)
        assert abs(identity_frac - 0.5) < 0.03
        used = {j for j in drawn if j is not None}
        assert used == {0, 1}

    def test_empty_op_list_never_draws(self):
        rng = np.random.default_rng(6)
        before = rng.bit_generator.state["state"]["state"]
        j, desc = sample_training_op(rng, ())
        assert j is None and desc.op_id == "identity"
        assert rng.bit_generator.state["state"]["state"] == before

    def test_unknown_training_op_rejected(self):
        with pytest.raises(ValidationError):
            sample_training_op(np.random.default_rng(0), ("identity",))


@st.composite
def small_images(draw):
    h = draw(st.integers(4, 12))
    w = draw(st.integers(4, 12))
    seed = draw(st.integers(0, 2 ** 31))
    return np.random.default_rng(seed).uniform(0.0, 1.0, (3, h, w))


class TestRangeProperties:
    @given(small_images(), st.floats(0.5, 2.0))
    @settings(max_examples=40, deadline=None)
    def test_gamma_stays_in_unit_range(self, img, gamma):
        out = apply_gamma(img, gamma)
        assert out.min() >= 0.0 and out.max() <= 1.0

    @given(small_images(), st.floats(3000.0, 15000.0))
    @settings(max_examples=40, deadline=None)
    def test_jitter_stays_in_unit_range(self, img, temp):
        out = apply_planckian_jitter(img, temp)
        assert out.min() >= 0.0 and out.max() <= 1.0

    @given(small_images(), st.floats(0.05, 1.0), st.floats(0.0, 1.0),
           st.integers(0, 2 ** 31))
    @settings(max_examples=40, deadline=None)
    def test_plasma_stays_in_unit_range(self, img, roughness, alpha, seed):
        out = apply_plasma(img, roughness, alpha, seed)
        assert out.min() >= 0.0 and out.max() <= 1.0

    @given(small_images(), st.sampled_from(augment.CORRUPTION_IDS),
           st.integers(1, 5), st.integers(0, 2 ** 31))
    @settings(max_examples=60, deadline=None)
    def test_corruptions_stay_in_unit_range(self, img, cid, severity, seed):
        out = apply_corruption(img, CorruptionSpec(cid, severity), seed)
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert out.shape == img.shape

    @given(small_images())
    @settings(max_examples=20, deadline=None)
    def test_out_of_range_input_rejected(self, img):
        bad = img + 0.5
        if bad.max() > 1.0:
            with pytest.raises(ValidationError):
                apply_gamma(bad, 1.2)
