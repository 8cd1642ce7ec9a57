import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_coeffs
from oracles import convolution_product, quadrature_coefficient
from stratbous.basis import (
    B,
    C,
    DimensionError,
    InvalidModeError,
    ModeIndex,
    SpectralField,
    Truncation,
    derivative,
    evaluate_basis,
    from_grid,
    product,
    to_grid,
    transform,
    vertical_sign,
)


class TestModeIndex:
    def test_scaled_wavenumbers(self):
        m = ModeIndex((1, -2), 3)
        np.testing.assert_array_equal(m.ntilde, 2 * np.pi * np.array([1, -2]))
        assert m.qtilde == np.pi * 3 / 2
        assert m.eta_norm == pytest.approx(np.sqrt(4 * np.pi**2 * 5 + (1.5 * np.pi) ** 2))

    def test_b_mode_requires_positive_q(self):
        with pytest.raises(InvalidModeError):
            ModeIndex((0,), 0).check(B)
        ModeIndex((0,), 0).check(C)

    def test_negative_q_rejected(self):
        with pytest.raises(InvalidModeError):
            ModeIndex((0,), -1)


class TestEvaluateBasis:
    def test_constant_c_mode(self):
        x = np.array([[0.3, 0.7], [0.1, -0.2]])
        np.testing.assert_allclose(evaluate_basis(ModeIndex((0,), 0), C, x), 1.0)

    def test_dirichlet_trace_even_q(self):
        assert abs(evaluate_basis(ModeIndex((0,), 2), B, np.array([0.2, 1.0]))) < 1e-15

    def test_odd_q_is_cosine(self):
        assert evaluate_basis(ModeIndex((0,), 1), B, np.array([0.4, 0.0])) == pytest.approx(1.0)

    def test_invalid_mode(self):
        with pytest.raises(InvalidModeError):
            evaluate_basis(ModeIndex((1,), 0), B, np.array([0.0, 0.0]))

    def test_sign_table_frozen(self):
        # b_q = s_q sin(pi q (x_d+1)/2), c_q = s_q cos(pi q (x_d+1)/2)
        frozen = [1, 1, -1, -1, 1, 1, -1, -1, 1, 1]
        np.testing.assert_array_equal(vertical_sign(np.arange(10)), frozen)
        xd = np.linspace(-1, 1, 17)
        pts = np.stack([np.zeros_like(xd), xd], axis=-1)
        for q, s in enumerate(frozen):
            y = np.pi * q * (xd + 1) / 2
            np.testing.assert_allclose(evaluate_basis(ModeIndex((0,), q), C, pts).real, s * np.cos(y), atol=1e-13)
            if q:
                np.testing.assert_allclose(evaluate_basis(ModeIndex((0,), q), B, pts).real, s * np.sin(y), atol=1e-13)


class TestTruncation:
    def test_dealiasing_inequalities_enforced(self):
        with pytest.raises(ValueError):
            Truncation(2, 4, 8, M_h=12)
        with pytest.raises(ValueError):
            Truncation(2, 4, 8, M_v=12)
        with pytest.raises(ValueError):
            Truncation(2, 4, 3)

    def test_default_grid(self):
        tr = Truncation(2, 4, 8)
        assert tr.M_h >= 3 * 4 + 1 and tr.M_v >= 3 * 8 / 2 + 1


class TestTransforms:
    @pytest.mark.parametrize("tag", [B, C])
    def test_one_hot(self, tag):
        tr = Truncation(2, 3, 6)
        worst = 0.0
        for n in range(-3, 4):
            for q in range(0 if tag == C else 1, 7):
                f = SpectralField.unit(tag, tr, (n,), q)
                back = from_grid(to_grid(f), tag, tr, real=f.real).coeff
                worst = max(worst, np.max(np.abs(back - f.coeff)))
        assert worst < 1e-12

    def test_one_hot_3d(self, small3d):
        f = SpectralField.unit(B, small3d, (1, -2), 3)
        back = from_grid(to_grid(f), B, small3d, real=False).coeff
        assert np.max(np.abs(back - f.coeff)) < 1e-12

    def test_grid_matches_pointwise_evaluation(self, small2d):
        f = SpectralField.unit(B, small2d, (2,), 3)
        g = to_grid(f)
        x = np.stack(small2d.points, axis=-1)
        np.testing.assert_allclose(g, evaluate_basis(ModeIndex((2,), 3), B, x), atol=1e-12)

    @given(st.integers(0, 2**31 - 1), st.sampled_from([B, C]))
    def test_roundtrip(self, seed, tag):
        tr = Truncation(2, 5, 9)
        f = SpectralField(tag, tr, random_coeffs(tr, np.random.default_rng(seed)))
        g = to_grid(f)
        f2 = transform(g, tag, "forward", tr)
        assert np.max(np.abs(f2.coeff - f.coeff)) < 1e-12
        assert np.max(np.abs(transform(f2, direction="inverse") - g)) < 1e-12

    def test_quadrature_oracle(self):
        tr = Truncation(2, 3, 6)
        grid = np.sin(np.pi * tr.points[1]) * np.cos(2 * np.pi * tr.points[0])
        f = from_grid(grid, B, tr)
        expected = np.zeros(tr.coeff_shape, complex)
        for n in (-1, 1):
            expected[tr.mode_slice((n,), 2)] = quadrature_coefficient(
                lambda x, y: np.sin(np.pi * y) * np.cos(2 * np.pi * x), B, (n,), 2
            )
        np.testing.assert_allclose(expected[tr.mode_slice((1,), 2)], 0.5, atol=1e-12)
        assert np.max(np.abs(f.coeff - expected)) < 1e-12

    def test_grid_shape_mismatch(self, small2d):
        with pytest.raises(DimensionError):
            from_grid(np.zeros((3, 3)), B, small2d)

    def test_b_field_vanishes_at_walls(self, small2d):
        f = SpectralField(B, small2d, random_coeffs(small2d, np.random.default_rng(3)))
        g = to_grid(f)
        assert np.max(np.abs(g[..., 0])) < 1e-10 and np.max(np.abs(g[..., -1])) < 1e-10


class TestDerivative:
    def test_vertical_b_to_c(self, small2d):
        f = derivative(SpectralField.unit(B, small2d, (1,), 3), 1)
        assert f.tag == C
        assert f.coeff[small2d.mode_slice((1,), 3)] == pytest.approx(3 * np.pi / 2)

    def test_constant_mode_has_zero_vertical_derivative(self, small2d):
        f = derivative(SpectralField.unit(C, small2d, (2,), 0), 1)
        assert f.tag == B and np.all(f.coeff == 0)

    def test_mixed_derivative_against_finite_differences(self):
        tr = Truncation(2, 2, 4)
        f = SpectralField.unit(B, tr, (1,), 2)
        d = derivative(derivative(f, 0), 1)
        assert d.tag == C
        assert d.coeff[tr.mode_slice((1,), 2)] == pytest.approx(1j * 2 * np.pi * np.pi)
        # central differences of e^{2 pi i x} sin(pi y) at a point vs the C-series value
        h = 1e-4
        x0, y0 = 0.13, 0.37

        def fun(x, y):
            return np.exp(2j * np.pi * x) * np.sin(np.pi * y)

        fd = (fun(x0 + h, y0 + h) - fun(x0 + h, y0 - h) - fun(x0 - h, y0 + h) + fun(x0 - h, y0 - h)) / (4 * h * h)
        series = d.coeff[tr.mode_slice((1,), 2)] * evaluate_basis(ModeIndex((1,), 2), C, np.array([x0, y0]))
        assert abs(fd - series) / abs(series) < 1e-6

    @given(st.integers(0, 2**31 - 1))
    def test_second_vertical_derivative(self, seed):
        tr = Truncation(2, 3, 7)
        f = SpectralField(B, tr, random_coeffs(tr, np.random.default_rng(seed)))
        dd = derivative(derivative(f, 1), 1)
        assert dd.tag == B
        np.testing.assert_allclose(dd.coeff, -tr.qtilde**2 * f.coeff, atol=1e-12)

    def test_bad_axis(self, small2d):
        with pytest.raises(DimensionError):
            derivative(SpectralField.zeros(B, small2d), 5)


class TestProduct:
    def test_times_constant(self, small2d):
        f = SpectralField.unit(B, small2d, (0,), 2)
        g = SpectralField.unit(C, small2d, (0,), 0)
        p = product(f, g)
        assert p.tag == B
        np.testing.assert_allclose(p.coeff, f.coeff, atol=1e-14)

    def test_sine_squared(self, small2d):
        f = SpectralField.unit(B, small2d, (0,), 2)
        p = product(f, f)
        expected = np.zeros(small2d.coeff_shape, complex)
        expected[small2d.mode_slice((0,), 0)] = 0.5
        expected[small2d.mode_slice((0,), 4)] = -0.5
        assert p.tag == C
        np.testing.assert_allclose(p.coeff, expected, atol=1e-14)

    @pytest.mark.parametrize("tags", [(B, C), (B, B), (C, C), (C, B)])
    @given(seed=st.integers(0, 2**31 - 1))
    def test_convolution_oracle(self, tags, seed):
        tr = Truncation(2, 3, 6)
        rng = np.random.default_rng(seed)
        f = SpectralField(tags[0], tr, random_coeffs(tr, rng))
        g = SpectralField(tags[1], tr, random_coeffs(tr, rng))
        p = product(f, g)
        ref = convolution_product(f.tag, f.coeff, g.tag, g.coeff, tr.N_h, tr.Q)
        other = C if p.tag == B else B
        assert np.max(np.abs(ref[other])) < 1e-12 * np.max(np.abs(ref[p.tag]))
        assert np.max(np.abs(p.coeff - ref[p.tag])) <= 1e-11 * np.max(np.abs(ref[p.tag]))

    @given(st.integers(0, 2**31 - 1))
    def test_l1_submultiplicative(self, seed):
        tr = Truncation(2, 3, 6)
        rng = np.random.default_rng(seed)
        f = SpectralField(B, tr, random_coeffs(tr, rng))
        g = SpectralField(C, tr, random_coeffs(tr, rng))
        assert np.sum(np.abs(product(f, g).coeff)) <= np.sum(np.abs(f.coeff)) * np.sum(np.abs(g.coeff))

    def test_incompatible_truncations(self):
        f = SpectralField.zeros(B, Truncation(2, 2, 4))
        g = SpectralField.zeros(C, Truncation(2, 3, 4))
        with pytest.raises(DimensionError):
            product(f, g)

    def test_complex_fields_rejected(self, small2d):
        f = SpectralField.unit(B, small2d, (1,), 2)
        with pytest.raises(ValueError):
            product(f, f)
