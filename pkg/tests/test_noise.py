import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boussinesq_lab.noise import (
    BrownianDriver,
    GalerkinOverflowError,
    SigmaFamily,
    ZeroDriver,
    covariance_origin,
    in_positive_cone,
    ito_correction,
    noise_ratio,
    noise_term,
    sigma_example,
    split_seed,
    splitmix64,
)
from boussinesq_lab.spectral import SpectralField, WaveGrid, gradient, project_galerkin
from fieldgen import random_field

TWO_PI = 2 * np.pi
FAST = settings(max_examples=25, deadline=None)


def lattice_count(N):
    return sum(1 for a in range(-N, N + 1) for b in range(-N, N + 1) if 0 < a * a + b * b <= N * N)


def covariance_by_loop(coeffs, nu):
    """Direct summation of 2 nu / ||sigma||^2 sum sigma_k^2 k_perp k_perp^T / |k|^2."""
    q = np.zeros((2, 2))
    norm2 = 0.0
    for (a, b), s in coeffs.items():
        kp = np.array([-b, a], float)
        q += s * s * np.outer(kp, kp) / (a * a + b * b)
        norm2 += s * s
    return 2 * nu / norm2 * q


class TestSigmaExample:
    def test_unit_shell(self):
        s = sigma_example(1, 0.0)
        assert sorted(map(tuple, s.modes.tolist())) == [(-1, 0), (0, -1), (0, 1), (1, 0)]
        assert s.l2_norm == 2.0 and s.linf_norm == 1.0

    def test_n2_support_and_ratio(self):
        s = sigma_example(2, 0.0)
        assert len(s.modes) == 12
        assert noise_ratio(s) == pytest.approx(1 / np.sqrt(12), rel=1e-15)

    def test_large_beta_uses_annulus(self):
        s = sigma_example(1, 2.0)
        r2 = (s.modes**2).sum(axis=1)
        assert set(r2.tolist()) == {1, 2, 4}
        np.testing.assert_allclose(s.values, r2 ** (-1.0))

    @pytest.mark.parametrize("N, beta", [(0, 0.0), (2, -0.5)])
    def test_rejects_bad_arguments(self, N, beta):
        with pytest.raises(ValueError):
            sigma_example(N, beta)

    @pytest.mark.parametrize("beta", [0.0, 0.5, 1.0, 2.0])
    def test_shell_symmetry_by_construction(self, beta):
        assert sigma_example(5, beta).symmetric

    def test_modes_are_even_and_exclude_zero(self):
        s = sigma_example(3, 0.5)
        d = s.as_dict()
        assert (0, 0) not in d
        assert all(d[(-a, -b)] == v for (a, b), v in d.items())


class TestSigmaFamily:
    def test_rejects_non_even(self):
        with pytest.raises(ValueError, match="even"):
            SigmaFamily.from_mapping(1.0, {(1, 0): 1.0})

    def test_rejects_asymmetric_unless_allowed(self):
        coeffs = {(1, 0): 1.0, (-1, 0): 1.0}
        with pytest.raises(ValueError, match="symmetry"):
            SigmaFamily.from_mapping(1.0, coeffs)
        s = SigmaFamily.from_mapping(1.0, coeffs, require_symmetry=False)
        assert not s.symmetric

    @pytest.mark.parametrize("nu", [0.0, -1.0])
    def test_rejects_bad_intensity(self, nu):
        with pytest.raises(ValueError):
            sigma_example(1, 0.0, nu)

    def test_rejects_zero_mode_and_empty(self):
        with pytest.raises(ValueError):
            SigmaFamily.from_mapping(1.0, {(0, 0): 1.0})
        with pytest.raises(ValueError):
            SigmaFamily.from_mapping(1.0, {})

    def test_positive_cone_partition(self):
        s = sigma_example(4, 0.0)
        pos = {tuple(k) for k in s.positive_modes.tolist()}
        neg = {(-a, -b) for a, b in pos}
        assert pos.isdisjoint(neg)
        assert pos | neg == {tuple(k) for k in s.modes.tolist()}
        assert all(in_positive_cone(k) for k in pos)


class TestNoiseRatio:
    def test_single_shell(self):
        assert noise_ratio(sigma_example(1, 0.0)) == 0.5

    def test_beta_zero_matches_lattice_count(self):
        ratios = [noise_ratio(sigma_example(N, 0.0)) for N in range(1, 13)]
        expect = [1 / np.sqrt(lattice_count(N)) for N in range(1, 13)]
        np.testing.assert_allclose(ratios, expect, rtol=1e-14)
        assert np.all(np.diff(ratios) < 0)

    @given(st.floats(1e-3, 1e3))
    def test_scale_invariant(self, c):
        s = sigma_example(3, 0.5)
        assert noise_ratio(s.scaled(c)) == pytest.approx(noise_ratio(s), rel=1e-12)

    @pytest.mark.parametrize("beta", [0.0, 0.5, 1.0, 1.5, 3.0])
    def test_vanishes_as_support_grows(self, beta):
        ratios = np.array([noise_ratio(sigma_example(N, beta)) for N in range(1, 65)])
        assert ratios[-1] < 0.5 * ratios[0]
        # the tail keeps shrinking
        assert ratios[48:].max() < ratios[:16].min()


class TestCovariance:
    def test_unit_shell_by_hand(self):
        q = covariance_origin(sigma_example(1, 0.0, nu=0.1))
        np.testing.assert_allclose(q, 0.1 * np.eye(2), rtol=0, atol=1e-15)

    @pytest.mark.parametrize("nu", [0.1, 1.0, 7.5])
    def test_identity_for_example(self, nu):
        q = covariance_origin(sigma_example(4, 0.5, nu))
        assert np.abs(q - nu * np.eye(2)).max() < 1e-12

    def test_asymmetric_family_breaks_identity(self):
        coeffs = {(1, 0): 1.0, (-1, 0): 1.0}
        s = SigmaFamily.from_mapping(0.3, coeffs, require_symmetry=False)
        q = covariance_origin(s)
        np.testing.assert_allclose(q, covariance_by_loop(coeffs, 0.3), atol=1e-15)
        np.testing.assert_allclose(q, np.diag([0.0, 0.6]), atol=1e-15)

    @FAST
    @given(st.lists(st.floats(0.05, 5.0), min_size=1, max_size=12), st.floats(0.01, 10.0))
    def test_identity_for_any_shell_symmetric_family(self, shell_values, nu):
        coeffs = {}
        r2_list = sorted({a * a + b * b for a in range(-6, 7) for b in range(-6, 7)} - {0})
        for r2, v in zip(r2_list, shell_values):
            for a in range(-6, 7):
                for b in range(-6, 7):
                    if a * a + b * b == r2:
                        coeffs[(a, b)] = v
        s = SigmaFamily.from_mapping(nu, coeffs)
        q = covariance_origin(s)
        assert np.abs(q - nu * np.eye(2)).max() < 1e-12 * max(1.0, nu)
        np.testing.assert_allclose(q, covariance_by_loop(coeffs, nu), atol=1e-12)


class TestSeeds:
    def test_splitmix_reference_output(self):
        # first output of the reference SplitMix64 generator seeded with 0
        assert splitmix64(0) == 0xE220A8397B1DCDAF

    def test_split_seed_is_stable_and_distinct(self):
        assert split_seed(0, 0) == split_seed(0, 0)
        children = {split_seed(12345, j) for j in range(1000)}
        assert len(children) == 1000
        assert split_seed(1, 0) != split_seed(0, 1)
        assert all(0 <= c < 2**64 for c in children)


class TestBrownianDriver:
    def test_moments(self):
        d = BrownianDriver(2024, np.array([[1, 0]]))
        w = np.array([d.sample_increments(1.0)[0] for _ in range(100_000)])
        assert np.mean(np.abs(w) ** 2) == pytest.approx(2.0, abs=0.02)
        sq = np.mean(w**2)
        assert abs(sq.real) < 0.02 and abs(sq.imag) < 0.02
        assert abs(np.mean(w)) < 0.02

    def test_same_seed_same_stream(self):
        modes = sigma_example(3, 0.0).positive_modes
        a, b = BrownianDriver(7, modes), BrownianDriver(7, modes)
        for _ in range(5):
            np.testing.assert_array_equal(a.sample_increments(0.01), b.sample_increments(0.01))
        c = BrownianDriver(8, modes)
        assert not np.array_equal(a.sample_increments(0.01), c.sample_increments(0.01))

    def test_substeps_follow_the_fine_path(self):
        modes = sigma_example(2, 0.0).positive_modes
        coarse = BrownianDriver(3, modes, substeps=2)
        fine = BrownianDriver(3, modes)
        for _ in range(4):
            expect = fine.sample_increments(0.005) + fine.sample_increments(0.005)
            np.testing.assert_allclose(coarse.sample_increments(0.01), expect, rtol=1e-15)

    def test_independent_modes(self):
        d = BrownianDriver(5, sigma_example(1, 0.0).positive_modes)
        w = np.array([d.sample_increments(1.0) for _ in range(40_000)])
        assert abs(np.mean(w[:, 0] * np.conj(w[:, 1]))) < 0.05

    def test_zero_driver_and_bad_dt(self):
        z = ZeroDriver(1, np.array([[1, 0], [0, 1]]))
        assert not z.sample_increments(0.1).any()
        with pytest.raises(ValueError):
            BrownianDriver(1, np.array([[1, 0]])).sample_increments(0.0)


def physical_noise(f, sigma, increments):
    """Independent evaluation on the grid: 2 Re[sum over Z^2_+ of p sigma_k dW^k e_k . grad f]."""
    g = f.grid
    x1, x2 = g.x
    d1, d2 = (c.to_physical() for c in gradient(f))
    total = np.zeros_like(x1)
    pref = np.sqrt(2 * sigma.nu) / sigma.l2_norm
    for (a, b), s, dw in zip(sigma.positive_modes, sigma.values[sigma.positive], increments):
        kn = np.hypot(a, b)
        wave = np.exp(2j * np.pi * (a * x1 + b * x2))
        total += 2 * np.real(pref * s * dw * wave * ((-b) / kn * d1 + a / kn * d2))
    return total


class TestNoiseTerm:
    grid = WaveGrid(32)
    sigma = sigma_example(2, 0.0, nu=0.4)

    def increments(self, seed):
        return BrownianDriver(seed, self.sigma.positive_modes).sample_increments(0.01)

    def test_zero_field(self):
        out = noise_term(SpectralField.zeros(self.grid), self.sigma, self.increments(0))
        assert out.l2_norm() == 0

    def test_zero_increments(self):
        f = random_field(self.grid, 1, kmax=5)
        out = noise_term(f, self.sigma, np.zeros(len(self.sigma.positive_modes)))
        assert out.l2_norm() == 0

    def test_single_pair_two_paths(self):
        sigma = SigmaFamily.from_mapping(0.5, {(1, 0): 1.0, (-1, 0): 1.0, (0, 1): 1.0, (0, -1): 1.0})
        f = SpectralField.from_modes(self.grid, {(2, 1): 0.3 - 0.7j})
        inc = np.zeros(2, complex)
        inc[0] = 0.4 + 0.9j
        a = noise_term(f, sigma, inc, method="shift")
        # by hand: shift m -> m + k with amplitude 2 pi i (k_perp/|k| . m) f_m
        k, m = np.array(sigma.positive_modes[0]), np.array([2, 1])
        amp = sigma.prefactor * inc[0] * 2j * np.pi * np.dot([-k[1], k[0]], m) * f.coeff((2, 1))
        assert a.coeff(tuple(k + m)) == pytest.approx(amp, abs=1e-14)
        np.testing.assert_allclose(a.to_physical(), physical_noise(f, sigma, inc), atol=1e-12)
        np.testing.assert_allclose(noise_term(f, sigma, inc, method="fft").coeffs, a.coeffs, atol=1e-12)

    @FAST
    @given(st.integers(0, 2**31), st.integers(0, 2**31))
    def test_paths_agree_and_output_is_real(self, fseed, wseed):
        f = random_field(self.grid, fseed, kmax=6)
        inc = self.increments(wseed)
        a = noise_term(f, self.sigma, inc, method="shift")
        b = noise_term(f, self.sigma, inc, method="fft")
        assert a.is_hermitian() and a.coeffs[0, 0] == 0
        np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-13)
        np.testing.assert_allclose(a.to_physical(), physical_noise(f, self.sigma, inc), atol=1e-11)

    @FAST
    @given(st.integers(0, 2**31), st.integers(0, 2**31))
    def test_energy_neutral(self, fseed, wseed):
        f = random_field(self.grid, fseed, kmax=6)
        out = noise_term(f, self.sigma, self.increments(wseed))
        assert abs(out.inner(f)) < 1e-12 * max(1.0, f.l2_norm() ** 2)

    def test_projection(self):
        f = random_field(self.grid, 3, kmax=6)
        inc = self.increments(3)
        full = noise_term(f, self.sigma, inc)
        cut = noise_term(f, self.sigma, inc, galerkin_N=4)
        np.testing.assert_array_equal(cut.coeffs, project_galerkin(full, 4).coeffs)
        on_grid = noise_term(SpectralField(WaveGrid(32, 4), f.coeffs), self.sigma, inc)
        np.testing.assert_array_equal(on_grid.coeffs, cut.coeffs)

    def test_overflow(self):
        f = random_field(self.grid, 2, kmax=14)
        with pytest.raises(GalerkinOverflowError, match="galerkin overflow"):
            noise_term(f, self.sigma, self.increments(0))
        with pytest.raises(GalerkinOverflowError):
            noise_term(f, sigma_example(20, 0.0), np.zeros(len(sigma_example(20, 0.0).positive_modes)))

    def test_bad_increment_shape(self):
        with pytest.raises(ValueError):
            noise_term(random_field(self.grid, 0, kmax=3), self.sigma, np.zeros(3))


class TestItoCorrection:
    @FAST
    @given(st.integers(0, 2**31), st.sampled_from([(1, 0.0), (2, 0.0), (3, 0.5), (2, 2.0)]), st.floats(0.05, 5.0))
    def test_parseval_identity(self, seed, family, nu):
        grid = WaveGrid(32)
        sigma = sigma_example(*family, nu)
        f = random_field(grid, seed, kmax=15 - sigma.extent)
        g1, g2 = gradient(f)
        rhs = 2 * nu * (g1.l2_norm() ** 2 + g2.l2_norm() ** 2)
        assert ito_correction(f, sigma) == pytest.approx(rhs, rel=1e-10)
        assert ito_correction(f, sigma, galerkin_N=6) <= rhs * (1 + 1e-12)

    def test_projection_loses_energy_at_the_edge(self):
        grid = WaveGrid(32)
        sigma = sigma_example(2, 0.0)
        f = random_field(grid, 0, kmax=6)
        full = ito_correction(f, sigma)
        assert ito_correction(f, sigma, galerkin_N=6) < full
