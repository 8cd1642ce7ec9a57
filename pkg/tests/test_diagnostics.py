import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_state
from stratbous.basis import B, C, SpectralField, Truncation
from stratbous.diagnostics import (
    Collector,
    DiagnosticDomainError,
    EnergyWitness,
    FitError,
    KeyQuantities,
    RunRecord,
    SigmaAccumulator,
    _tail_estimate,
    complete_homogeneous,
    cross_A,
    energy_E,
    field_norm,
    fit_decay_exponent,
    key_quantities_step,
    mean_profile,
    norm_column,
    sigma_profile,
)
from stratbous.dynamics import integrate, step
from stratbous.fields import FlowState, NormSpec, sobolev_norm, velocity_norm


def _pair_state(tr, n, q, vd_val, th_val, alpha=0):
    """v_d and theta on one real mode pair (+-n, q)."""
    vd = SpectralField.unit(B, tr, n, q, vd_val).coeff
    th = SpectralField.unit(B, tr, n, q, th_val).coeff
    if any(n):
        m = tuple(-k for k in n)
        vd = vd + SpectralField.unit(B, tr, m, q, np.conj(vd_val)).coeff
        th = th + SpectralField.unit(B, tr, m, q, np.conj(th_val)).coeff
    s = FlowState.zeros(tr, alpha)
    return s.replace(v_d=SpectralField(B, tr, vd), theta=SpectralField(B, tr, th))


class TestEnergy:
    def test_unit_theta(self, small2d):
        th = SpectralField.unit(B, small2d, (1,), 2, 1.0)
        s = FlowState.zeros(small2d, 0).replace(theta=th)
        eta2 = (2 * np.pi) ** 2 + np.pi**2
        for k in (0, 1, 3):
            assert energy_E(s, k) == pytest.approx((1 + eta2) ** (k / 2), rel=1e-14)

    def test_constant_mode_gram(self, small2d):
        vh = SpectralField.unit(C, small2d, (0,), 0, 1.0)
        s = FlowState.zeros(small2d, 0).replace(v_h=(vh,))
        assert energy_E(s, 2) == pytest.approx(np.sqrt(2.0))

    def test_recomposition(self, small3d):
        s = random_state(small3d, 1, seed=21)
        for k in (0, 1.5, 3):
            ref = velocity_norm(s, NormSpec(k, homogeneous=False)) ** 2 + sobolev_norm(s.theta, NormSpec(k, homogeneous=False)) ** 2
            assert energy_E(s, k) ** 2 == pytest.approx(ref, rel=1e-13)

    def test_monotone_in_k(self, small2d):
        s = random_state(small2d, 0, seed=22)
        vals = [energy_E(s, k) for k in range(5)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_zero_state(self, small2d):
        assert energy_E(FlowState.zeros(small2d, 0), 3) == 0.0

    def test_negative_k(self, small2d):
        with pytest.raises(DiagnosticDomainError):
            energy_E(FlowState.zeros(small2d, 0), -1)


class TestCross:
    def test_homogeneous_polynomial(self):
        xs = [2.0, 3.0, 5.0]
        h = complete_homogeneous(xs, 4)
        for j in range(5):
            ref = sum(math.prod(c) for c in itertools.combinations_with_replacement(xs, j)) if j else 1.0
            assert float(h[j]) == pytest.approx(ref)

    def test_single_pair_multi_index_sum(self, small3d):
        tr = small3d
        n, q = (1, -1), 3
        s = _pair_state(tr, n, q, 0.3, 0.5)
        nt = 2 * np.pi * np.array(n, float)
        qt = np.pi * q / 2
        for k in (1, 2, 3):
            symbol = 0.0
            for g in itertools.product(range(k + 1), repeat=3):
                if 1 <= sum(g) <= k:
                    symbol += nt[0] ** (2 * g[0]) * nt[1] ** (2 * g[1]) * qt ** (2 * g[2])
            # two conjugate partners each contribute 0.3 * 0.5
            assert cross_A(s, k) == pytest.approx(2 * 0.15 * symbol, rel=1e-13)

    def test_disjoint_support(self, small2d):
        tr = small2d
        s = _pair_state(tr, (1,), 2, 1.0, 0.0)
        th = _pair_state(tr, (2,), 3, 0.0, 1.0).theta
        assert cross_A(s.replace(theta=th), 3) == 0.0

    def test_unit_pair_first_order(self, small2d):
        s = _pair_state(small2d, (0,), 3, 1.0, 1.0)
        assert cross_A(s, 1) == pytest.approx((1.5 * np.pi) ** 2)

    def test_k_zero(self, small2d):
        with pytest.raises(DiagnosticDomainError):
            cross_A(FlowState.zeros(small2d, 0), 0)

    @given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.sampled_from([0, 1]))
    def test_bounded_by_energy(self, seed, k, alpha):
        s = random_state(Truncation(3, 2, 6), alpha, seed=seed)
        assert abs(cross_A(s, k)) <= 0.5 * energy_E(s, k) ** 2 * (1 + 1e-12)

    def test_monotone_for_aligned_fields(self, small2d):
        s = _pair_state(small2d, (1,), 2, 1.0, 1.0)
        vals = [cross_A(s, k) for k in range(1, 5)]
        assert all(b > a for a, b in zip(vals, vals[1:]))


class TestNorms:
    def test_theta_bar_drops_mean(self, small2d):
        th = SpectralField.unit(B, small2d, (0,), 2, 1.0)
        s = FlowState.zeros(small2d, 0).replace(theta=th)
        assert field_norm(s, "theta", NormSpec()) == pytest.approx(1.0)
        assert field_norm(s, "theta_bar", NormSpec()) == 0.0

    def test_unknown(self, small2d):
        with pytest.raises(KeyError):
            field_norm(FlowState.zeros(small2d, 0), "pressure", NormSpec())


class TestKeyQuantities:
    def test_example(self, small2d):
        s = _pair_state(small2d, (1,), 3, 0.5, 0.0)
        kq = key_quantities_step(s, 0.1, KeyQuantities())
        eta2 = (2 * np.pi) ** 2 + (1.5 * np.pi) ** 2
        assert kq.K2 == pytest.approx(0.1 * 1.5 * np.pi * 1.0)
        assert kq.K1 == pytest.approx(0.1 * eta2 * 1.0)


    def test_zero_velocity(self, small2d):
        th = SpectralField.unit(B, small2d, (0,), 2, 1.0)
        kq = key_quantities_step(FlowState.zeros(small2d, 0).replace(theta=th), 0.3, KeyQuantities(1.0, 2.0))
        assert (kq.K1, kq.K2) == (1.0, 2.0)

    def test_single_vh_pair(self, small2d):
        c = SpectralField.unit(C, small2d, (1,), 2, 0.5).coeff + SpectralField.unit(C, small2d, (-1,), 2, 0.5).coeff
        s = FlowState.zeros(small2d, 0).replace(v_h=(SpectralField(C, small2d, c),))
        kq = key_quantities_step(s, 0.1, KeyQuantities())
        eta = np.hypot(2 * np.pi, np.pi)
        assert kq.K1 == pytest.approx(0.1 * eta * 1.0)

    def test_bounded_on_linear_run(self):
        tr = Truncation(2, 3, 8)
        s = random_state(tr, 0, seed=23, decay=0.5)
        kq = KeyQuantities()
        totals = []
        for horizon in (10.0, 20.0, 40.0):
            while s.t < horizon - 1e-9:
                key_quantities_step(s, 0.1, kq)
                s = step(s, 0.1, nonlinear=False)
            totals.append(kq.K1)
        assert totals[2] - totals[1] < 1e-3 * totals[0]


class TestWitness:
    def test_rest(self, small2d):
        w = EnergyWitness(3)
        s = FlowState.zeros(small2d, 0)
        w.start(s)
        w.update(s, s, 1.0)
        assert w.value == 0.0

    @pytest.mark.parametrize("alpha", [0, 1])
    def test_dominates_initial_energy(self, alpha):
        tr = Truncation(2, 3, 8)
        s = random_state(tr, alpha, seed=1, amplitude=0.01, decay=0.5)
        w = EnergyWitness(3)
        w.start(s)
        e0 = energy_E(s, 3) ** 2
        integrate(s, 1.0, 0.05, on_step=w.update)
        assert w.value > e0
        assert w.sup_energy_sq == pytest.approx(e0)  # the energy decays


class TestFit:
    def test_exact_power(self):
        t = np.geomspace(1, 1000, 64)
        res = fit_decay_exponent(t, (1 + t) ** -1.5)
        assert res.slope == pytest.approx(-1.5, abs=1e-12)
        assert res.window == (100.0, 1000.0)
        assert res.samples >= 8

    def test_transient_fades_with_window(self):
        t = np.geomspace(1, 400, 200)
        y = (1 + t) ** -2.0 + np.exp(-t / 4)
        errs = [abs(fit_decay_exponent(t, y, window=(a, 400)).slope + 2) for a in (5, 40, 120)]
        assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-3

    def test_custom_window(self):
        t = np.linspace(0, 10, 101)
        res = fit_decay_exponent(t, 3.0 * (1 + t) ** -0.5, window=(2, 8))
        assert res.slope == pytest.approx(-0.5, abs=1e-12)

    def test_errors(self):
        t = np.linspace(0, 10, 5)
        with pytest.raises(FitError):
            fit_decay_exponent(t, np.ones(5))
        t = np.geomspace(1, 100, 40)
        y = (1 + t) ** -1.0
        y[-1] = 0.0
        with pytest.raises(FitError):
            fit_decay_exponent(t, y)

    def test_tail_estimate(self):
        t = np.linspace(0, 100, 201)
        y = (1 + t) ** -3.0
        assert _tail_estimate(t, y) == pytest.approx(0.5 * 101.0**-2, rel=1e-10)
        assert _tail_estimate(t, (1 + t) ** -0.5) == np.inf


class TestSigma:
    def test_uniform_profile_is_steady(self, small2d):
        # horizontally uniform theta is balanced by pressure: no flow, sigma = theta
        th = SpectralField.unit(B, small2d, (0,), 1, 0.3).coeff + SpectralField.unit(B, small2d, (0,), 4, -0.2).coeff
        s = FlowState.zeros(small2d, 0).replace(theta=SpectralField(B, small2d, th))
        hist = [s]
        for _ in range(5):
            hist.append(step(hist[-1], 0.2))
        res = sigma_profile(hist)
        np.testing.assert_array_equal(res.coeff, mean_profile(s))
        np.testing.assert_array_equal(hist[-1].theta.coeff, th)
        assert res.converged and res.tail_error == 0.0

    def test_linear_run_keeps_mean(self, small2d):
        s = random_state(small2d, 0, seed=2)
        hist = [s]
        for _ in range(5):
            hist.append(step(hist[-1], 0.2, nonlinear=False))
        res = sigma_profile(hist, nonlinear=False)
        np.testing.assert_array_equal(res.coeff, mean_profile(s))

    def test_mean_free_linear_run(self, small2d):
        s = random_state(small2d, 1, seed=3)
        th = s.theta.coeff.copy()
        th[small2d.N_h] = 0.0
        s = s.replace(theta=SpectralField(B, small2d, th))
        hist = [s, step(s, 0.5, nonlinear=False)]
        assert np.max(np.abs(sigma_profile(hist, nonlinear=False).coeff)) == 0.0

    def test_rest_gives_zero(self, small2d):
        s = FlowState.zeros(small2d, 1)
        res = sigma_profile([s, step(s, 0.5)])
        assert np.max(np.abs(res.coeff)) == 0.0

    def test_too_short(self, small2d):
        with pytest.raises(DiagnosticDomainError):
            sigma_profile([FlowState.zeros(small2d, 0)])

    def test_tracks_mean_to_second_order(self):
        tr = Truncation(2, 4, 12)
        s0 = random_state(tr, 0, seed=4, amplitude=0.2, decay=0.6)

        def defect(dt):
            acc = SigmaAccumulator(s0)
            final, _ = integrate(s0, 0.5, dt, on_step=lambda o, n, h: acc.update(n, h), adaptive=False, cfl=10)
            return np.max(np.abs(acc.result().coeff - mean_profile(final)))

        e1, e2 = defect(0.02), defect(0.01)
        assert e1 < 1e-4 * np.max(np.abs(mean_profile(s0))) + 1e-12
        assert e1 / e2 > 3.0


class TestRecord:
    def test_roundtrip(self, tmp_path):
        r = RunRecord()
        r.add_sample(0.0, {"a": 1.0, "b": 0.1})
        r.add_sample(0.5, {"a": 0.5, "b": 1e-300})
        r.fits["a"] = {"slope": -1.0}
        r.metadata["seed"] = 3
        p = tmp_path / "r.json"
        r.to_json(p)
        back = RunRecord.from_json(p)
        assert back.to_dict() == r.to_dict()
        assert RunRecord.from_json(r.to_json()).to_csv() == r.to_csv()
        assert r.to_csv().splitlines()[0] == "t,a,b"

    def test_order_and_columns(self):
        r = RunRecord()
        r.add_sample(1.0, {"a": 1.0})
        with pytest.raises(ValueError):
            r.add_sample(1.0, {"a": 1.0})
        with pytest.raises(ValueError):
            r.add_sample(2.0, {"b": 1.0})


class TestCollector:
    def test_columns(self):
        tr = Truncation(2, 3, 8)
        s = random_state(tr, 0, seed=5, amplitude=0.05, decay=0.5)
        col = Collector(s, norms=[("theta", NormSpec(1))], energies=[0, 2], cross=[2], witness_m=2, track_sigma=True)
        integrate(s, 0.5, 0.05, sample_times=[0.0, 0.25, 0.5], on_sample=col.on_sample, on_step=col.on_step)
        res = col.finish_sigma()
        rec = col.record
        assert rec.times == [0.0, 0.25, 0.5]
        assert set(rec.columns) == {norm_column("theta", NormSpec(1)), "E_0", "E_2", "A_2", "K1", "K2", "B_2_sq", "theta_minus_sigma:L2"}
        assert col.cross_violations == 0
        assert rec.metadata["sigma"]["horizon"] == 0.5
        assert res.coeff.shape == (tr.Q + 1,)
