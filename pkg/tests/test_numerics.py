"""Tests for the shared linear-algebra and random-generation layer."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tncn.numerics import (
    ActivationKind,
    NumericsError,
    apply_activation,
    clip_update_norm,
    gaussian_init,
    make_rng,
    project_columns_l2,
    spectral_radius,
    spectral_radius_rescale,
)


class TestGaussianInit:
    def test_zero_variance_is_all_zero(self):
        m = gaussian_init(2, 2, 0.0, make_rng(123))
        np.testing.assert_array_equal(m, np.zeros((2, 2)))

    def test_sample_moments(self):
        # Law-of-large-numbers bounds for 10^6 draws: SE(mean) ~ 1.6e-4,
        # SE(var) ~ 3.5e-5, so +-0.001 / +-0.002 are wide.
        m = gaussian_init(1000, 1000, 0.025, make_rng(7))
        assert abs(m.mean()) < 0.001
        assert abs(m.var() - 0.025) < 0.002

    def test_same_seed_bit_identical(self):
        a = gaussian_init(17, 5, 0.3, make_rng(99))
        b = gaussian_init(17, 5, 0.3, make_rng(99))
        assert a.tobytes() == b.tobytes()

    def test_negative_variance_rejected(self):
        with pytest.raises(NumericsError):
            gaussian_init(2, 2, -1.0, make_rng(0))

    def test_dtype_is_float64(self):
        assert gaussian_init(3, 3, 1.0, make_rng(0)).dtype == np.float64


class TestApplyActivation:
    def test_signum_definition(self):
        out = apply_activation(ActivationKind.SIGNUM, np.array([-2.0, 0.0, 3.0]))
        np.testing.assert_array_equal(out, [-1.0, 0.0, 1.0])

    def test_identity(self):
        x = np.array([[1.5, -2.0], [0.0, 7.0]])
        np.testing.assert_array_equal(apply_activation("identity", x), x)

    def test_tanh_odd(self):
        np.testing.assert_array_equal(
            apply_activation("tanh", np.array([0.0])), [0.0]
        )

    def test_sigmoid_relu_values(self):
        np.testing.assert_allclose(
            apply_activation("sigmoid", np.array([0.0])), [0.5]
        )
        np.testing.assert_array_equal(
            apply_activation("relu", np.array([-3.0, 2.0])), [0.0, 2.0]
        )

    def test_softmax_columns_sum_to_one(self):
        rng = make_rng(5)
        x = gaussian_init(11, 7, 4.0, rng)
        out = apply_activation("softmax", x)
        np.testing.assert_allclose(out.sum(axis=0), np.ones(7), atol=1e-12)
        assert np.all(out > 0)

    def test_softmax_stable_for_large_inputs(self):
        out = apply_activation("softmax", np.array([[1000.0], [1000.5]]))
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out.sum(axis=0), [1.0], atol=1e-12)

    @settings(deadline=None, max_examples=50)
    @given(
        st.sampled_from(["identity", "tanh", "sigmoid", "relu", "signum"]),
        st.lists(st.floats(-50, 50), min_size=1, max_size=8),
        st.lists(st.floats(0, 10), min_size=8, max_size=8),
    )
    def test_monotone_nondecreasing(self, kind, xs, bumps):
        x = np.array(xs)
        x2 = x + np.array(bumps[: len(xs)])
        a, b = apply_activation(kind, x), apply_activation(kind, x2)
        assert np.all(b >= a)

    def test_unknown_kind_rejected(self):
        with pytest.raises(NumericsError):
            apply_activation("swish", np.array([1.0]))


class TestClipUpdateNorm:
    def test_zero_matrix_unchanged(self):
        z = np.zeros((3, 2))
        np.testing.assert_array_equal(clip_update_norm(z), z)

    def test_norm_five_scaled_to_one(self):
        u = np.array([[3.0], [4.0]])
        np.testing.assert_allclose(clip_update_norm(u), [[0.6], [0.8]])

    def test_below_threshold_unchanged(self):
        u = np.array([[0.3], [0.4]])
        np.testing.assert_array_equal(clip_update_norm(u), u)

    def test_always_mode_normalizes_small_updates(self):
        u = np.array([[0.3], [0.4]])
        np.testing.assert_allclose(clip_update_norm(u, always=True), [[0.6], [0.8]])

    @settings(deadline=None, max_examples=50)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4))
    def test_never_increases_norm(self, vals):
        u = np.array(vals).reshape(2, 2)
        out = clip_update_norm(u)
        n_in = np.linalg.norm(u)
        n_out = np.linalg.norm(out)
        assert n_out <= max(1.0, n_in) + 1e-12
        assert n_out <= n_in + 1e-12


class TestProjectColumnsL2:
    def test_overlong_column_rescaled(self):
        w = np.array([[40.0, 1.0], [0.0, 2.0]])
        out = project_columns_l2(w, 30.0)
        np.testing.assert_allclose(out[:, 0], [30.0, 0.0])
        np.testing.assert_array_equal(out[:, 1], [1.0, 2.0])

    def test_all_within_radius_identity(self):
        w = np.array([[1.0], [2.0]])
        np.testing.assert_array_equal(project_columns_l2(w, 30.0), w)

    def test_zero_column_stays_zero(self):
        w = np.zeros((4, 3))
        np.testing.assert_array_equal(project_columns_l2(w, 5.0), w)

    def test_nonpositive_radius_rejected(self):
        with pytest.raises(NumericsError):
            project_columns_l2(np.ones((2, 2)), 0.0)

    @settings(deadline=None, max_examples=50)
    @given(
        st.lists(st.floats(-100, 100), min_size=6, max_size=6),
        st.floats(0.1, 50),
    )
    def test_idempotent(self, vals, radius):
        w = np.array(vals).reshape(3, 2)
        once = project_columns_l2(w, radius)
        twice = project_columns_l2(once, radius)
        np.testing.assert_allclose(twice, once, atol=1e-12)


class TestSpectralRadiusRescale:
    def test_diagonal_example(self):
        w = np.diag([2.0, 1.0])
        out = spectral_radius_rescale(w, 0.9)
        np.testing.assert_allclose(out, np.diag([0.9, 0.45]), atol=1e-12)

    def test_already_at_target_unchanged(self):
        w = np.diag([0.9, 0.45])
        np.testing.assert_allclose(spectral_radius_rescale(w, 0.9), w, atol=1e-9)

    def test_zero_matrix_rejected(self):
        with pytest.raises(NumericsError):
            spectral_radius_rescale(np.zeros((3, 3)), 0.9)

    def test_nilpotent_rejected(self):
        w = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(NumericsError):
            spectral_radius_rescale(w, 0.5)

    def test_non_square_rejected(self):
        with pytest.raises(NumericsError):
            spectral_radius_rescale(np.ones((2, 3)), 0.5)

    def test_random_matrix_hits_target(self):
        w = gaussian_init(40, 40, 1.0, make_rng(3))
        out = spectral_radius_rescale(w, 0.95)
        assert abs(spectral_radius(out) - 0.95) < 1e-6


class TestRng:
    def test_distinct_seeds_differ(self):
        a = make_rng(1).standard_normal(8)
        b = make_rng(2).standard_normal(8)
        assert not np.array_equal(a, b)

    def test_stream_is_reproducible(self):
        r = make_rng(42)
        first = r.standard_normal(4)
        r2 = make_rng(42)
        np.testing.assert_array_equal(first, r2.standard_normal(4))
