"""Positional statistics, dense modulation, and the fixed toy decoder."""

from pathlib import Path

import numpy as np
import pytest

from densestyle.style import (
    VARIANCE_EPSILON,
    ModulationWeights,
    ToyDecoderWeights,
    dnorm,
    global_style,
    mix_style,
    pono_stats,
    project_modulation,
    toy_decode,
)

FIXTURES = Path(__file__).parent / "fixtures"


def pono_oracle(p):
    """Two-pass per-position mean/std, independent of the implementation."""
    p = np.asarray(p, dtype=np.float64)
    mu = np.array([p[:, l].sum() / p.shape[0] for l in range(p.shape[1])])
    var = np.array(
        [((p[:, l] - mu[l]) ** 2).sum() / p.shape[0] for l in range(p.shape[1])]
    )
    return mu, np.sqrt(var + VARIANCE_EPSILON)


class TestPonoStats:
    def test_constant_column(self):
        s = pono_stats(np.array([[1.0], [1.0], [1.0]]))
        assert s.mu[0] == pytest.approx(1.0)
        assert s.sigma[0] == pytest.approx(np.sqrt(VARIANCE_EPSILON))

    def test_two_point_column(self):
        s = pono_stats(np.array([[-1.0], [1.0]]))
        assert s.mu[0] == pytest.approx(0.0)
        assert s.sigma[0] == pytest.approx(np.sqrt(1.0 + VARIANCE_EPSILON))

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(23)
        p = rng.normal(size=(8, 16))
        s = pono_stats(p)
        mu, sigma = pono_oracle(p)
        np.testing.assert_allclose(s.mu, mu, atol=1e-6)
        np.testing.assert_allclose(s.sigma, sigma, atol=1e-6)


class TestDnorm:
    def test_own_stats_invert_normalization(self):
        rng = np.random.default_rng(31)
        p = rng.normal(size=(5, 7))
        s = pono_stats(p)
        alpha = np.tile(s.mu, (5, 1))
        beta = np.tile(s.sigma, (5, 1))
        np.testing.assert_allclose(dnorm(p, alpha, beta), p, atol=1e-6)

    def test_pure_normalization_standardizes(self):
        rng = np.random.default_rng(37)
        p = rng.normal(size=(16, 9))
        # pin per-position variance to 1 so the epsilon guard stays below tolerance
        p = (p - p.mean(axis=0)) / p.std(axis=0)
        out = dnorm(p, np.zeros_like(p), np.ones_like(p))
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-5)

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(41)
        p = rng.normal(size=(6, 10))
        alpha = rng.normal(size=(6, 10))
        beta = rng.normal(size=(6, 10))
        mu, sigma = pono_oracle(p)
        expected = (p - mu) / sigma * beta + alpha
        np.testing.assert_allclose(dnorm(p, alpha, beta), expected, atol=1e-6)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            dnorm(np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 3)))

    def test_channel_constant_modulation_sets_position_stats(self):
        rng = np.random.default_rng(43)
        p = rng.normal(scale=4.0, size=(64, 12))
        a = rng.normal(size=12)
        b = rng.uniform(0.5, 1.5, size=12)
        out = dnorm(p, np.tile(a, (64, 1)), np.tile(b, (64, 1)))
        np.testing.assert_allclose(out.mean(axis=0), a, atol=1e-5)
        np.testing.assert_allclose(out.std(axis=0), b, atol=1e-5)

    @pytest.mark.parametrize("s", [0.5, 2.0])
    @pytest.mark.parametrize("t", [-1.0, 1.0])
    def test_invariant_to_channel_uniform_relighting(self, s, t):
        rng = np.random.default_rng(47)
        p = rng.normal(scale=4.0, size=(32, 11))
        alpha = rng.normal(size=(32, 11))
        beta = rng.uniform(0.5, 1.5, size=(32, 11))
        base = dnorm(p, alpha, beta)
        shifted = dnorm(s * p + t, alpha, beta)
        np.testing.assert_allclose(shifted, base, atol=1e-5)


class TestModulation:
    def test_identity_weights_pass_style_through(self):
        s = np.array([[1.0, 2.0], [3.0, 4.0]])
        w = ModulationWeights(
            w_alpha=np.eye(2),
            b_alpha=np.zeros(2),
            w_beta=2.0 * np.eye(2),
            b_beta=np.zeros(2),
        )
        alpha, beta = project_modulation(s, w)
        np.testing.assert_allclose(alpha, s)
        np.testing.assert_allclose(beta, 2.0 * s)

    def test_zero_style_yields_bias(self):
        w = ModulationWeights(
            w_alpha=np.ones((3, 2)),
            b_alpha=np.array([1.0, 2.0, 3.0]),
            w_beta=np.ones((3, 2)),
            b_beta=np.zeros(3),
        )
        alpha, _ = project_modulation(np.zeros((2, 4)), w)
        np.testing.assert_allclose(alpha, np.tile([[1.0], [2.0], [3.0]], (1, 4)))

    def test_matches_matmul_oracle(self):
        rng = np.random.default_rng(53)
        s = rng.normal(size=(4, 6))
        w = ModulationWeights(
            w_alpha=rng.normal(size=(5, 4)),
            b_alpha=rng.normal(size=5),
            w_beta=rng.normal(size=(5, 4)),
            b_beta=rng.normal(size=5),
        )
        alpha, beta = project_modulation(s, w)
        np.testing.assert_allclose(alpha, w.w_alpha @ s + w.b_alpha[:, None], atol=1e-6)
        np.testing.assert_allclose(beta, w.w_beta @ s + w.b_beta[:, None], atol=1e-6)

    def test_channel_mismatch_rejected(self):
        w = ModulationWeights(
            w_alpha=np.eye(2),
            b_alpha=np.zeros(2),
            w_beta=np.eye(2),
            b_beta=np.zeros(2),
        )
        with pytest.raises(ValueError):
            project_modulation(np.zeros((3, 1)), w)

    def test_non_finite_weights_rejected(self):
        with pytest.raises(ValueError):
            ModulationWeights(
                w_alpha=np.array([[np.inf]]),
                b_alpha=np.zeros(1),
                w_beta=np.eye(1),
                b_beta=np.zeros(1),
            )


class TestGlobalAndMix:
    def test_constant_style_is_fixed_point(self):
        s = np.full((2, 3, 3), 5.0, dtype=np.float32)
        np.testing.assert_allclose(global_style(s), s)
        np.testing.assert_allclose(mix_style(s), s)

    def test_two_position_arithmetic(self):
        s = np.array([[[0.0, 2.0]]], dtype=np.float32)
        np.testing.assert_allclose(global_style(s), [[[1.0, 1.0]]])
        np.testing.assert_allclose(mix_style(s), [[[0.5, 1.5]]])

    def test_mix_of_global_is_global(self):
        rng = np.random.default_rng(59)
        s = rng.normal(size=(4, 5, 6)).astype(np.float32)
        g = global_style(s)
        np.testing.assert_allclose(mix_style(g), g, atol=1e-6)

    def test_global_commutes_with_spatial_permutation(self):
        rng = np.random.default_rng(61)
        s = rng.normal(size=(3, 2, 4)).astype(np.float32)
        perm = rng.permutation(8)
        shuffled = s.reshape(3, 8)[:, perm].reshape(3, 2, 4)
        np.testing.assert_allclose(
            global_style(shuffled)[:, 0, 0], global_style(s)[:, 0, 0], atol=1e-6
        )


def random_weights(rng, content_channels=3, style_channels=2, hidden=4):
    return ToyDecoderWeights(
        w_in=rng.normal(size=(hidden, content_channels)).astype(np.float32),
        modulation=ModulationWeights(
            w_alpha=rng.normal(size=(hidden, style_channels)).astype(np.float32),
            b_alpha=rng.normal(size=hidden).astype(np.float32),
            w_beta=rng.normal(size=(hidden, style_channels)).astype(np.float32),
            b_beta=rng.normal(size=hidden).astype(np.float32),
        ),
        w_out=rng.normal(size=(3, hidden)).astype(np.float32),
        b_out=rng.normal(size=3).astype(np.float32),
    )


def zero_weights(content_channels=3, style_channels=2, hidden=4):
    return ToyDecoderWeights(
        w_in=np.zeros((hidden, content_channels), dtype=np.float32),
        modulation=ModulationWeights(
            w_alpha=np.zeros((hidden, style_channels), dtype=np.float32),
            b_alpha=np.zeros(hidden, dtype=np.float32),
            w_beta=np.zeros((hidden, style_channels), dtype=np.float32),
            b_beta=np.zeros(hidden, dtype=np.float32),
        ),
        w_out=np.zeros((3, hidden), dtype=np.float32),
        b_out=np.zeros(3, dtype=np.float32),
    )


class TestToyDecoder:
    def test_zero_weights_collapse_to_mid_gray(self):
        rng = np.random.default_rng(67)
        content = rng.normal(size=(3, 4, 5)).astype(np.float32)
        style = rng.normal(size=(2, 4, 5)).astype(np.float32)
        img = toy_decode(content, style, zero_weights())
        np.testing.assert_allclose(img, 0.5, atol=1e-7)

    def test_output_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(71)
        img = toy_decode(
            rng.normal(size=(3, 3, 3)).astype(np.float32),
            rng.normal(size=(2, 3, 3)).astype(np.float32),
            random_weights(rng),
        )
        assert img.min() > 0.0 and img.max() < 1.0
        assert img.dtype == np.float32

    def test_spatial_mismatch_rejected(self):
        rng = np.random.default_rng(73)
        with pytest.raises(ValueError):
            toy_decode(
                np.zeros((3, 2, 2), dtype=np.float32),
                np.zeros((2, 3, 3), dtype=np.float32),
                random_weights(rng),
            )

    def test_deterministic_across_runs(self):
        rng = np.random.default_rng(79)
        content = rng.normal(size=(3, 5, 4)).astype(np.float32)
        style = rng.normal(size=(2, 5, 4)).astype(np.float32)
        w = random_weights(rng)
        first = toy_decode(content, style, w)
        second = toy_decode(content, style, w)
        assert first.tobytes() == second.tobytes()

    def test_matches_frozen_regression_fixture(self):
        rng = np.random.default_rng(83)
        content = rng.normal(size=(3, 4, 6)).astype(np.float32)
        style = rng.normal(size=(2, 4, 6)).astype(np.float32)
        img = toy_decode(content, style, random_weights(rng))
        frozen = np.load(FIXTURES / "toy_decode_reference.npy")
        assert img.tobytes() == frozen.tobytes()


class TestWeightsIO:
    def test_directory_round_trip(self, tmp_path):
        rng = np.random.default_rng(89)
        w = random_weights(rng)
        w.save_to_dir(tmp_path)
        expected = {
            "w_in.dst",
            "w_alpha.dst",
            "b_alpha.dst",
            "w_beta.dst",
            "b_beta.dst",
            "w_out.dst",
            "b_out.dst",
        }
        assert {p.name for p in tmp_path.iterdir()} == expected
        back = ToyDecoderWeights.load_from_dir(tmp_path)
        np.testing.assert_array_equal(back.w_in, w.w_in)
        np.testing.assert_array_equal(back.modulation.w_alpha, w.modulation.w_alpha)
        np.testing.assert_array_equal(back.b_out, w.b_out)

    def test_missing_file_is_an_error(self, tmp_path):
        with pytest.raises(Exception):
            ToyDecoderWeights.load_from_dir(tmp_path)

    def test_inconsistent_channels_rejected(self):
        rng = np.random.default_rng(97)
        w = random_weights(rng)
        with pytest.raises(ValueError):
            ToyDecoderWeights(
                w_in=w.w_in,
                modulation=w.modulation,
                w_out=rng.normal(size=(3, 9)).astype(np.float32),
                b_out=w.b_out,
            )
