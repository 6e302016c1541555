import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmvp.errors import ValidationError
from vmvp.spectral import SpectralField
from vmvp.transport import (
    EmpiricalMeasure,
    circular_w2_sq,
    circular_w2_sq_brute,
    cost_matrix_sq,
    coupling_Q,
    loeper_check,
    pairing_cost_sq,
    rejection_sample_positions,
    torus_distance_sq,
    w2_exact,
    w2_exact_brute,
    w2_sliced,
)

TWO_PI = 2 * np.pi


def random_cloud(rng, n, d=2, dv=2, spread=1.0):
    x = rng.uniform(0, TWO_PI, (n, d))
    xi = rng.normal(0, spread, (n, dv))
    return EmpiricalMeasure.uniform(x, xi)


class FakeCloud:
    def __init__(self, x_vp, xi_vp, x_vm, xi_vm, weights):
        self.x_vp, self.xi_vp = np.asarray(x_vp, float), np.asarray(xi_vp, float)
        self.x_vm, self.xi_vm = np.asarray(x_vm, float), np.asarray(xi_vm, float)
        self.weights = np.asarray(weights, float)


class TestMetric:
    def test_geodesic_wrap(self):
        assert torus_distance_sq(np.array([0.1, 0.0]), np.array([TWO_PI - 0.1, 0.0])) == pytest.approx(0.04)

    def test_axis_distance_capped_at_pi(self):
        d2 = torus_distance_sq(np.array([0.0]), np.array([np.pi + 1.0]))
        assert d2 == pytest.approx((np.pi - 1.0) ** 2)


class TestW2Exact:
    def test_identical_clouds(self):
        mu = random_cloud(np.random.default_rng(0), 32)
        assert w2_exact(mu, mu) == pytest.approx(0.0, abs=1e-12)

    def test_dirac_pair(self):
        r = 1.3
        mu = EmpiricalMeasure.uniform(np.array([[0.0, 0.0]]), np.array([[0.0, 0.0]]))
        nu = EmpiricalMeasure.uniform(np.array([[r, 0.0]]), np.array([[0.0, 0.0]]))
        assert w2_exact(mu, nu) == pytest.approx(r, rel=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(42)
        for _ in range(30):
            n = rng.integers(2, 8)
            mu = random_cloud(rng, int(n))
            nu = random_cloud(rng, int(n))
            assert w2_exact(mu, nu) == pytest.approx(w2_exact_brute(mu, nu), abs=1e-12)

    def test_lp_path_matches_assignment(self):
        rng = np.random.default_rng(7)
        mu = random_cloud(rng, 12)
        nu = random_cloud(rng, 12)
        exact = w2_exact(mu, nu)
        mu_w = EmpiricalMeasure(mu.x, mu.xi, np.full(12, 1 / 12))
        lp = w2_exact(EmpiricalMeasure(mu_w.x, mu_w.xi, _perturb_uniform(12)), nu)
        # nearly-uniform weights must give nearly the assignment value
        assert lp == pytest.approx(exact, rel=5e-2)

    def test_general_weights_dirac(self):
        mu = EmpiricalMeasure(np.array([[0.0]]), None, np.array([1.0]))
        nu = EmpiricalMeasure(np.array([[1.0], [TWO_PI - 1.0]]), None, np.array([0.5, 0.5]))
        val = w2_exact(mu, nu)
        assert val == pytest.approx(1.0, rel=1e-9)

    def test_size_cap(self):
        rng = np.random.default_rng(1)
        mu = random_cloud(rng, 8)
        nu = random_cloud(rng, 8)
        with pytest.raises(ValidationError):
            w2_exact(mu, nu, n_exact=4)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 100_000))
    def test_metric_axioms(self, seed):
        rng = np.random.default_rng(seed)
        mu, nu, la = (random_cloud(rng, 12) for _ in range(3))
        dmn = w2_exact(mu, nu)
        assert w2_exact(nu, mu) == pytest.approx(dmn, abs=1e-12)
        assert dmn + w2_exact(nu, la) >= w2_exact(mu, la) - 1e-10

    def test_translation_invariance(self):
        rng = np.random.default_rng(3)
        mu, nu = random_cloud(rng, 24), random_cloud(rng, 24)
        shift = np.array([1.7, 5.1])
        mu2 = EmpiricalMeasure.uniform((mu.x + shift) % TWO_PI, mu.xi)
        nu2 = EmpiricalMeasure.uniform((nu.x + shift) % TWO_PI, nu.xi)
        assert w2_exact(mu2, nu2) == pytest.approx(w2_exact(mu, nu), abs=1e-12)


def _perturb_uniform(n):
    w = np.full(n, 1.0 / n)
    w[0] += 1e-3
    w[1] -= 1e-3
    return w


class TestCircular:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            n = int(rng.integers(2, 7))
            a = rng.uniform(0, TWO_PI, n)
            b = rng.uniform(0, TWO_PI, n)
            assert circular_w2_sq(a, b) == pytest.approx(circular_w2_sq_brute(a, b), abs=1e-12)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(8)
        a = rng.uniform(0, TWO_PI, 50)
        b = rng.uniform(0, TWO_PI, 50)
        base = circular_w2_sq(a, b)
        s = 2.2
        assert circular_w2_sq((a + s) % TWO_PI, (b + s) % TWO_PI) == pytest.approx(base, abs=1e-12)


class TestSliced:
    def test_identical(self):
        mu = random_cloud(np.random.default_rng(0), 64)
        assert w2_sliced(mu, mu, 32, seed=1) == pytest.approx(0.0, abs=1e-12)

    def test_velocity_translation_recovered(self):
        rng = np.random.default_rng(11)
        n, shift = 512, np.array([0.6, -0.3])
        x = rng.uniform(0, TWO_PI, (n, 2))
        xi = rng.normal(0, 0.5, (n, 2))
        mu = EmpiricalMeasure.uniform(x, xi)
        nu = EmpiricalMeasure.uniform(x, xi + shift)
        est = w2_sliced(mu, nu, 256, seed=2)
        assert est == pytest.approx(np.linalg.norm(shift), rel=0.02)

    def test_translation_invariance_exact(self):
        rng = np.random.default_rng(12)
        mu, nu = random_cloud(rng, 64), random_cloud(rng, 64)
        base = w2_sliced(mu, nu, 64, seed=3)
        s = np.array([2.9, 0.4])
        mu2 = EmpiricalMeasure.uniform((mu.x + s) % TWO_PI, mu.xi)
        nu2 = EmpiricalMeasure.uniform((nu.x + s) % TWO_PI, nu.xi)
        assert w2_sliced(mu2, nu2, 64, seed=3) == pytest.approx(base, abs=1e-12)

    def test_seed_deterministic(self):
        rng = np.random.default_rng(13)
        mu, nu = random_cloud(rng, 64), random_cloud(rng, 64)
        assert w2_sliced(mu, nu, 32, seed=5) == w2_sliced(mu, nu, 32, seed=5)

    def test_correlation_with_exact(self):
        # pairs of genuinely different measures (random location/scale per pair):
        # the estimator must track the exact distance across the collection
        rng = np.random.default_rng(14)

        def draw(n=512):
            cx = rng.uniform(0, TWO_PI, 2)
            sx = rng.uniform(0.3, 1.2)
            x = (cx + rng.normal(0, sx, (n, 2))) % TWO_PI
            cv = rng.uniform(-1, 1, 2)
            sv = rng.uniform(0.2, 0.8)
            xi = cv + rng.normal(0, sv, (n, 2))
            return EmpiricalMeasure.uniform(x, xi)

        exact, sliced = [], []
        for _ in range(50):
            mu, nu = draw(), draw()
            exact.append(w2_exact(mu, nu))
            sliced.append(w2_sliced(mu, nu, 64, seed=int(rng.integers(1 << 30))))
        r = np.corrcoef(exact, sliced)[0, 1]
        assert r >= 0.99

    def test_rejects_bad_nproj(self):
        mu = random_cloud(np.random.default_rng(0), 8)
        with pytest.raises(ValidationError):
            w2_sliced(mu, mu, 0, seed=0)


class TestCouplingQ:
    def test_zero_at_shared_start(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0, TWO_PI, (16, 2))
        xi = rng.normal(0, 1, (16, 2))
        cloud = FakeCloud(x, xi, x, xi, np.full(16, 1 / 16))
        assert coupling_Q(cloud) == 0.0

    def test_hand_value(self):
        x_vp = np.array([[0.0, 0.0], [0.0, 0.0]])
        x_vm = np.array([[1.0, 0.0], [0.0, 0.0]])
        xi_vp = np.zeros((2, 2))
        xi_vm = np.array([[0.0, 0.0], [0.0, 1.0]])
        cloud = FakeCloud(x_vp, xi_vp, x_vm, xi_vm, np.array([0.5, 0.5]))
        assert coupling_Q(cloud) == pytest.approx(0.5)

    def test_w2_bounded_by_pairing(self):
        rng = np.random.default_rng(9)
        n = 64
        x = rng.uniform(0, TWO_PI, (n, 2))
        xi = rng.normal(0, 1, (n, 2))
        x2 = (x + rng.normal(0, 0.1, (n, 2))) % TWO_PI
        xi2 = xi + rng.normal(0, 0.1, (n, 2))
        cloud = FakeCloud(x, xi, x2, xi2, np.full(n, 1 / n))
        w2 = w2_exact(EmpiricalMeasure.uniform(x, xi), EmpiricalMeasure.uniform(x2, xi2))
        assert w2 ** 2 <= pairing_cost_sq(cloud) + 1e-12


def bounded_density(K, rng, amp=0.3):
    entries = [(0, [0, 0], 1.0)]
    for _ in range(4):
        k = [int(rng.integers(-2, 3)), int(rng.integers(-2, 3))]
        if k == [0, 0]:
            continue
        c = complex(rng.uniform(-amp, amp), rng.uniform(-amp, amp)) / 8
        entries.append((0, k, c))
    return SpectralField.from_modes(2, K, 1, entries)


class TestLoeper:
    def test_identical_densities(self):
        rho = bounded_density(8, np.random.default_rng(0))
        lhs, rhs, ok = loeper_check(rho, rho, n_samples=256, seed=1)
        assert lhs == pytest.approx(0.0, abs=1e-12)
        assert ok

    def test_translation_pair_strict(self):
        K, s = 8, 0.15
        rho1 = SpectralField.from_modes(2, K, 1, [(0, [0, 0], 1.0), (0, [1, 0], 0.1)])
        rho2 = SpectralField.from_modes(2, K, 1, [(0, [0, 0], 1.0), (0, [1, 0], 0.1 * np.exp(-1j * s))])
        lhs, rhs, ok = loeper_check(rho1, rho2, n_samples=1024, seed=2)
        assert ok
        assert lhs < rhs  # strictly inside the bound for a small translation

    def test_rejects_nonpositive(self):
        K = 8
        rho1 = SpectralField.from_modes(2, K, 1, [(0, [0, 0], 1.0), (0, [1, 0], 0.6)])
        rho2 = SpectralField.constant(2, K, 1.0)
        with pytest.raises(ValidationError):
            loeper_check(rho1, rho2, 64, seed=0)


class TestSampling:
    def test_uniform_density(self):
        rho = SpectralField.constant(2, 4, 1.0)
        pts = rejection_sample_positions(rho, 500, np.random.default_rng(0))
        assert pts.shape == (500, 2)
        assert (pts >= 0).all() and (pts < TWO_PI).all()

    def test_mode_density_statistics(self):
        # P(x1 < pi) for rho = 1 + 0.5 sin(x1) is 1/2 + 1/(2pi)
        rho = SpectralField.from_modes(2, 6, 1, [(0, [1, 0], -0.25j)])
        rho = rho + SpectralField.constant(2, 6, 1.0)
        pts = rejection_sample_positions(rho, 20000, np.random.default_rng(3))
        frac = (pts[:, 0] < np.pi).mean()
        expect = 0.5 + 0.5 / np.pi
        assert frac == pytest.approx(expect, abs=0.01)
