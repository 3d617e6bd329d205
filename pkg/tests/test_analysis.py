import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boussinesq_lab.analysis import (
    NORM_CONVENTION,
    cumulative_trapezoid,
    energy_budget,
    gronwall_check,
    hs_norm,
    increment_moment,
    mean_trajectory,
    x_distance,
)
from boussinesq_lab.dynamics import SimParams, run_deterministic, run_stochastic
from boussinesq_lab.noise import sigma_example, split_seed
from boussinesq_lab.presets import initial_condition
from boussinesq_lab.spectral import SpectralField, WaveGrid, gradient
from fieldgen import random_field, synthetic_record

TWO_PI = 2 * np.pi
FAST = settings(max_examples=20, deadline=None)


def heat_run(amplitude, kappa=1.0, nu=1.0, T=0.1, dt=1e-4, stride=1):
    th, om = initial_condition("heat-mode", 32)
    return run_deterministic(th * amplitude, om, SimParams(kappa, nu, T, dt, 32, record_stride=stride))


class TestHsNorm:
    grid = WaveGrid(32)

    def test_s_zero_is_l2(self):
        f = random_field(self.grid, 0)
        assert hs_norm(f, 0) == pytest.approx(f.l2_norm(), rel=1e-14)

    @pytest.mark.parametrize("s", [-3.0, -1.0, 0.5, 2.0])
    def test_unit_shell(self, s):
        x1, x2 = self.grid.x
        f = SpectralField.from_physical(self.grid, np.sin(TWO_PI * x2))
        assert hs_norm(f, s) == pytest.approx(TWO_PI**s * f.l2_norm(), rel=1e-12)

    def test_h1_is_gradient_norm(self):
        x1, x2 = self.grid.x
        f = SpectralField.from_physical(self.grid, np.sin(TWO_PI * x2))
        g1, g2 = gradient(f)
        assert abs(hs_norm(f, 1) - np.hypot(g1.l2_norm(), g2.l2_norm())) < 1e-12

    @FAST
    @given(st.integers(0, 2**31), st.floats(-4, 2), st.floats(0, 3))
    def test_monotone_in_s(self, seed, s1, gap):
        # every retained mode has 2 pi |k| > 1, so the weights grow with s
        f = random_field(self.grid, seed)
        assert hs_norm(f, s1) <= hs_norm(f, s1 + gap) * (1 + 1e-12)
        assert hs_norm(f, -3) <= hs_norm(f, -1) <= f.l2_norm() * (1 + 1e-12)


class TestXDistance:
    def test_identical_records(self):
        a = heat_run(1.0, T=0.01, dt=1e-3)
        r = x_distance(a, a)
        assert r.theta_l2l2 == r.theta_sup_hneg == r.omega_sup_hneg == r.total == 0
        assert r.convention == NORM_CONVENTION

    def test_against_zero_trajectory(self):
        a = heat_run(1.0, T=0.02, dt=1e-3)
        z = heat_run(0.0, T=0.02, dt=1e-3)
        r = x_distance(a, z)
        expect = np.sqrt(cumulative_trapezoid(a.theta_l2**2, a.times)[-1])
        assert r.theta_l2l2 == pytest.approx(expect, rel=1e-12)

    def test_heat_modes_closed_form(self):
        A1, A2, T, lam = 1.0, 0.4, 0.1, 8 * np.pi**2
        a, b = heat_run(A1, T=T), heat_run(A2, T=T)
        r = x_distance(a, b)
        dA = (A1 - A2) / np.sqrt(2)
        l2l2 = dA * np.sqrt((1 - np.exp(-2 * lam * T)) / (2 * lam))
        sup = dA * TWO_PI**-3
        assert r.theta_l2l2 == pytest.approx(l2l2, rel=1e-4)
        assert r.theta_sup_hneg == pytest.approx(sup, rel=1e-12)
        assert r.omega_sup_hneg == 0
        assert r.total == pytest.approx(l2l2 + sup, rel=1e-4)

    def test_total_is_max_of_components(self):
        th, om = initial_condition("two-mode", 32)
        p = SimParams(1.0, 1.0, 0.02, 1e-3, 32)
        a = run_deterministic(th, om, p)
        b = run_deterministic(th * 0.5, om * 1.5, p)
        r = x_distance(a, b)
        assert r.total == max(r.theta_l2l2 + r.theta_sup_hneg, r.omega_sup_hneg)

    def test_horizon_mismatch(self):
        with pytest.raises(ValueError, match="horizon mismatch"):
            x_distance(heat_run(1.0, T=0.01, dt=1e-3), heat_run(1.0, T=0.02, dt=1e-3))

    def test_resampled_flag(self):
        a = heat_run(1.0, T=0.02, dt=1e-3, stride=4)
        b = heat_run(1.0, T=0.02, dt=1e-3, stride=2)
        r = x_distance(a, b)
        assert r.resampled and r.total == pytest.approx(0.0, abs=1e-15)
        assert not x_distance(a, a).resampled

    def test_rejects_nonnegative_exponent(self):
        a = heat_run(1.0, T=0.01, dt=1e-3)
        with pytest.raises(ValueError):
            x_distance(a, a, s_neg=0.5)

    @FAST
    @given(st.integers(0, 2**31))
    def test_pseudometric(self, seed):
        g = WaveGrid(16)
        times = np.linspace(0, 0.05, 4)

        def rec(k):
            th = [random_field(g, seed + 10 * k + i) for i in range(4)]
            om = [random_field(g, seed + 10 * k + 5 + i) for i in range(4)]
            return synthetic_record(th, om, times)

        a, b, c = rec(0), rec(1), rec(2)
        ab, ba = x_distance(a, b).total, x_distance(b, a).total
        assert ab == pytest.approx(ba, rel=1e-12)
        assert ab <= x_distance(a, c).total + x_distance(c, b).total + 1e-10
        assert ab >= 0


class TestEnergyBudget:
    def test_heat_mode_against_profile(self):
        kappa, nu, T = 1.0, 0.5, 0.05
        lam = (kappa + nu) * 4 * np.pi**2
        errs = []
        for dt in (1e-3, 5e-4):
            th, om = initial_condition("heat-mode", 32)
            rec = run_deterministic(th, om, SimParams(kappa, nu, T, dt, 32))
            bud = energy_budget(rec, kappa)
            exact = 0.5 * (1 - np.exp(-2 * lam * bud.times)) * nu / (kappa + nu)
            errs.append(np.abs(bud.theta_deficit - exact).max())
            assert np.all(bud.theta_deficit[1:] > 0)
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    def test_zero_trajectory(self):
        z = heat_run(0.0, T=0.01, dt=1e-3)
        bud = energy_budget(z, 1.0)
        assert not bud.theta_deficit.any() and not bud.omega_excess.any()

    def test_missing_series(self):
        rec = heat_run(1.0, T=0.01, dt=1e-3)
        rec.theta_h1 = np.array([])
        with pytest.raises(ValueError, match="theta_h1"):
            energy_budget(rec, 1.0)

    def test_stochastic_deficit_refines(self):
        th, om = initial_condition("two-mode", 32)
        sigma = sigma_example(4, 0.0, nu=0.2)
        worst = []
        for dt, sub in ((1e-3, 2), (5e-4, 1)):
            p = SimParams(0.2, 0.2, 0.1, dt, 32, galerkin_N=4, record_stride=50)
            v = [
                -energy_budget(run_stochastic(th, om, p, sigma, split_seed(3, j), substeps=sub), 0.2).theta_deficit.min()
                for j in range(8)
            ]
            worst.append(max(v))
        assert worst[1] < worst[0]
        assert worst[0] < 10 * 1e-3 * 0.5


class TestIncrementMoment:
    def deterministic_ensemble(self):
        th, om = initial_condition("two-mode", 32)
        p = SimParams(0.05, 0.05, 0.02, 1e-3, 32, galerkin_N=6)
        return [run_stochastic(th, om, p, sigma_example(2, 0.0, 0.05), j, zero_noise=True, probes=[(0, 1)]) for j in range(2)]

    def test_deterministic_slope_is_four(self):
        ens = self.deterministic_ensemble()
        fit = increment_moment(ens, (0, 1), [(0.0, 0.001 * m) for m in (1, 2, 4, 8)])
        assert fit.slope == pytest.approx(4.0, abs=0.05)
        assert fit.moments[0] == pytest.approx(abs(ens[0].mode_series[(0, 1)][1] - ens[0].mode_series[(0, 1)][0]) ** 4)

    def test_falls_back_to_snapshots(self):
        ens = self.deterministic_ensemble()
        for r in ens:
            r.mode_series = {}
        fit = increment_moment(ens, (0, 1), [(0.0, 0.01), (0.0, 0.02)])
        assert np.isfinite(fit.slope)
        with pytest.raises(ValueError, match="insufficient snapshots"):
            increment_moment(ens, (0, 1), [(0.0, 0.005)])

    def test_mode_off_grid(self):
        with pytest.raises(ValueError):
            increment_moment(self.deterministic_ensemble(), (16, 0), [(0.0, 0.01)])

    def test_bad_pairs_and_tiny_ensemble(self):
        ens = self.deterministic_ensemble()
        with pytest.raises(ValueError):
            increment_moment(ens, (0, 1), [(0.01, 0.01)])
        with pytest.raises(ValueError):
            increment_moment(ens[:1], (0, 1), [(0.0, 0.01)])


class TestGronwall:
    def runs(self, delta, dt=1e-3):
        th, om = initial_condition("two-mode", 32)
        p = SimParams(0.5, 0.5, 0.1, dt, 32)
        bump = random_field(th.grid, 0, kmax=4)
        bump = bump * (delta / bump.l2_norm()) if delta else bump * 0.0
        return run_deterministic(th, om, p), run_deterministic(th + bump, om, p)

    def test_identical_inputs(self):
        a, b = self.runs(0.0)
        np.testing.assert_array_equal(a.theta_l2, b.theta_l2)
        rep = gronwall_check(a, b)
        assert not rep.distance_sq.any() and rep.max_violation_ratio == 0

    def test_small_perturbation_within_envelope(self):
        a, b = self.runs(1e-6)
        rep = gronwall_check(a, b)
        assert rep.delta == pytest.approx(1e-6, rel=1e-9)
        assert rep.max_violation_ratio <= 1.0 + 1e-6 or rep.minimal_constant > rep.constant
        assert rep.terminal_ratio < 1.0

    def test_symmetric(self):
        a, b = self.runs(1e-6)
        r1, r2 = gronwall_check(a, b), gronwall_check(b, a)
        np.testing.assert_allclose(r1.distance_sq, r2.distance_sq, rtol=1e-12)
        assert r1.constant == pytest.approx(r2.constant, rel=1e-9)

    def test_mismatched_params(self):
        a, _ = self.runs(0.0)
        th, om = initial_condition("two-mode", 32)
        c = run_deterministic(th, om, SimParams(0.4, 0.5, 0.1, 1e-3, 32))
        with pytest.raises(ValueError):
            gronwall_check(a, c)


class TestMeanTrajectory:
    def test_mean_of_two(self):
        a = heat_run(1.0, T=0.01, dt=1e-3)
        b = heat_run(3.0, T=0.01, dt=1e-3)
        m = mean_trajectory([a, b])
        c = heat_run(2.0, T=0.01, dt=1e-3)
        assert x_distance(m, c).total < 1e-14

    def test_empty(self):
        with pytest.raises(ValueError):
            mean_trajectory([])


def test_cumulative_trapezoid_exact_for_linear():
    t = np.linspace(0, 2, 11)
    np.testing.assert_allclose(cumulative_trapezoid(3 * t, t), 1.5 * t**2, atol=1e-14)
