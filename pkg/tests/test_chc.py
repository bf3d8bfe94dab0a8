import math
from fractions import Fraction

import numpy as np
import pytest

from chctopo.chc import (
    INIT_AMPLITUDE,
    ArchiveError,
    ChcParams,
    Integrator,
    SpectralState,
    energy,
    growth_rate,
    init_state,
    make_rng,
    mass,
    nonlinearity_coeffs,
    read_archive,
    simulate,
    step,
    synthesize,
    trajectory,
    write_archive,
)
from chctopo.field import ScalarField2D

DESK = ChcParams(epsilon=0.01, sigma=0.001, mu=0.0, K=64, steps=2000, seed=7)


def fastest_modes(params, count):
    k = np.arange(params.K)
    rates = [(growth_rate(params, a, b), a, b) for a in k for b in k if a or b]
    rates.sort(key=lambda t: -t[0])
    return [(a, b) for _, a, b in rates[:count]]


def measured_rates(params, modes, horizon_frac=0.1, amplitude=1e-6):
    """Log-growth per unit time of seeded modes under the deterministic scheme."""
    c = np.zeros((params.K, params.K))
    c[0, 0] = params.mu
    for a, b in modes:
        # field amplitude of a basis function is c_a c_b times its coefficient
        c[a, b] = amplitude / ((math.sqrt(2) if a else 1) * (math.sqrt(2) if b else 1))
    state = SpectralState(c.copy())
    integ = Integrator(params)
    n = round(horizon_frac * params.steps)
    for _ in range(n):
        state = integ.step(state)
    H = n * integ.dt
    return [math.log(state.coeffs[a, b] / c[a, b]) / H for a, b in modes]


class TestParams:
    @pytest.mark.parametrize("mu", [0.0, 0.1, 0.3, -0.45, 0.5, 0.7])
    def test_endtime_identity_exact(self, mu):
        p = ChcParams(epsilon=0.005, mu=mu)
        fpp = 3 * Fraction(mu) ** 2 - 1
        assert p.endtime_exact * fpp**2 == 80 * Fraction(0.005) ** 2
        assert math.isclose(p.endtime * p.fpp**2, 80 * 0.005**2, rel_tol=4e-16)

    def test_spinodal_flag(self):
        assert ChcParams(mu=0.57).spinodal and not ChcParams(mu=0.58).spinodal

    @pytest.mark.parametrize("kw", [{"epsilon": 0}, {"sigma": -1}, {"K": 0}, {"steps": 0},
                                    {"K": 8, "grid": 4}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ChcParams(**kw)


class TestInit:
    def test_deterministic_and_sigma_independent(self):
        a = init_state(DESK)
        b = init_state(DESK.replace(sigma=0.0))
        assert np.array_equal(a.coeffs, b.coeffs)
        assert not np.array_equal(a.coeffs, init_state(DESK.replace(seed=8)).coeffs)

    @pytest.mark.parametrize("mu", [0.0, 0.3])
    def test_mean_and_sup_norm(self, mu):
        p = DESK.replace(mu=mu)
        u = synthesize(init_state(p), 2 * p.K)
        assert abs(u.mean() - mu) <= 1e-12
        assert abs(np.abs(u.values - mu).max() - INIT_AMPLITUDE) <= 1e-10


class TestSynthesis:
    def test_constant_mode(self):
        c = np.zeros((8, 8))
        c[0, 0] = 0.3
        assert np.allclose(synthesize(c, 16).values, 0.3, atol=1e-15, rtol=0)

    def test_single_cosine(self):
        c = np.zeros((8, 8))
        c[1, 0] = 1.0
        u = synthesize(c, 16).values
        x = (np.arange(16) + 0.5) / 16
        # k1 runs along axis 0 of the coefficients: first array axis of the field
        assert np.allclose(u, math.sqrt(2) * np.cos(math.pi * x)[:, None] * np.ones((1, 16)), atol=1e-14)
        assert np.allclose(u, -u[::-1, :], atol=1e-14)

    def test_parseval(self):
        rng = np.random.default_rng(0)
        K = 16
        c = rng.standard_normal((K, K)) * np.exp(-np.add.outer(np.arange(K), np.arange(K)) / 3)
        u = synthesize(c, 64).values
        assert np.mean(u**2) == pytest.approx(np.sum(c**2), rel=1e-6)

    def test_mean_is_zero_mode(self):
        rng = np.random.default_rng(1)
        c = rng.standard_normal((16, 16))
        assert abs(synthesize(c, 32).mean() - c[0, 0]) <= 1e-10


class TestNonlinearity:
    def test_constant(self):
        c = np.zeros((8, 8))
        c[0, 0] = 0.4
        N = nonlinearity_coeffs(c, 16)
        assert N[0, 0] == pytest.approx(0.4**3 - 0.4, abs=1e-15)
        N[0, 0] = 0
        assert np.abs(N).max() <= 1e-15

    def test_cosine_cubed_against_quadrature(self):
        a = 0.1
        c = np.zeros((8, 8))
        c[1, 0] = a / math.sqrt(2)  # u = a cos(pi x1)
        N = nonlinearity_coeffs(c, 32)
        # projection of (u^3 - u) on sqrt(2) cos(pi x1), by fine midpoint quadrature
        x = (np.arange(20000) + 0.5) / 20000
        u = a * np.cos(math.pi * x)
        ref = np.mean((u**3 - u) * math.sqrt(2) * np.cos(math.pi * x))
        assert N[1, 0] == pytest.approx(ref, rel=1e-9)
        assert ref == pytest.approx((3 * a**3 / 4 - a) / math.sqrt(2), rel=1e-9)

    def test_parity(self):
        rng = np.random.default_rng(2)
        c = np.zeros((8, 8))
        c[0::2, :] = rng.standard_normal((4, 8)) * 0.1
        N = nonlinearity_coeffs(c, 16)
        assert np.abs(N[1::2, :]).max() <= 1e-14

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            nonlinearity_coeffs(np.zeros((8, 8)), 4)


class TestStep:
    def test_homogeneous_fixed_point(self):
        p = DESK.replace(sigma=0.0, mu=0.2)
        c = np.zeros((p.K, p.K))
        c[0, 0] = 0.2
        out = step(SpectralState(c), p, p.dt)
        assert np.array_equal(out.coeffs, c)

    def test_zero_mode_bitwise_constant(self):
        s = init_state(DESK.replace(mu=0.123))
        rng = make_rng(1)
        integ = Integrator(DESK.replace(mu=0.123))
        for _ in range(20):
            s = integ.step(s, rng)
            assert s.coeffs[0, 0] == 0.123

    def test_requires_rng_with_noise(self):
        with pytest.raises(ValueError):
            step(init_state(DESK), DESK, DESK.dt)

    def test_positive_dt(self):
        with pytest.raises(ValueError):
            Integrator(DESK, dt=0.0)

    def test_single_mode_growth(self):
        p = DESK.replace(sigma=0.0, steps=20000)
        (rate,) = measured_rates(p, [(4, 0)])
        lam = growth_rate(p, 4, 0)
        assert lam > 0
        assert rate == pytest.approx(lam, rel=0.02)


class TestSimulate:
    def test_constant_start_stays_constant(self):
        p = DESK.replace(sigma=0.0, mu=0.1, steps=50)
        c = np.zeros((p.K, p.K))
        c[0, 0] = 0.1
        states = list(trajectory(p, [10, 50], SpectralState(c)))
        for s in states:
            assert np.allclose(synthesize(s, 128).values, 0.1, atol=1e-15, rtol=0)

    def test_deterministic(self):
        p = DESK.replace(steps=40)
        a = simulate(p, [p.endtime / 2, p.endtime])
        b = simulate(p, [p.endtime / 2, p.endtime])
        assert a == b

    def test_bad_times(self):
        p = DESK.replace(steps=40)
        with pytest.raises(ValueError):
            simulate(p, [p.endtime, p.endtime / 2])
        with pytest.raises(ValueError):
            simulate(p, [0.0])
        with pytest.raises(ValueError):
            simulate(p, [2 * p.endtime])

    def test_nearest_step(self):
        p = DESK.replace(steps=10, sigma=0.0)
        a = simulate(p, [0.3 * p.endtime])
        b = simulate(p, [0.31 * p.endtime])
        assert a == b


class TestEnergy:
    def test_pure_phases(self):
        assert energy(ScalarField2D(np.ones((8, 8))), 0.01) == 0.0
        assert energy(ScalarField2D(-np.ones((8, 8))), 0.01) == 0.0

    def test_zero_field(self):
        assert energy(ScalarField2D(np.zeros((8, 8))), 0.01) == pytest.approx(0.25, rel=1e-15)

    def test_gradient_term(self):
        x = (np.arange(256) + 0.5) / 256
        u = np.tile(0.1 * x, (256, 1))
        e = energy(ScalarField2D(u), 0.5)
        ref = 0.5 * 0.25 * 0.01 + np.mean(0.25 * (u**2 - 1) ** 2)
        # one-sided boundary stencils halve the gradient in the edge columns
        assert e == pytest.approx(ref, rel=1e-2)

    def test_mass(self):
        assert mass(ScalarField2D([[0.0, 1.0]])) == 0.5


class TestArchive:
    def test_round_trip(self, tmp_path):
        p = DESK.replace(steps=20)
        times = [p.endtime / 2, p.endtime]
        fields = simulate(p, times, 64)
        write_archive(tmp_path / "a", p, times, fields, {"run": 3})
        manifest, q, t, f = read_archive(tmp_path / "a")
        assert q == p and t == times and f == fields and manifest["run"] == "3"
        assert manifest["seed"] == str(p.seed)

    def test_corrupt_snapshot_named(self, tmp_path):
        p = DESK.replace(steps=20)
        times = [p.endtime / 2, p.endtime]
        write_archive(tmp_path / "a", p, times, simulate(p, times, 64))
        (tmp_path / "a" / "snap_0001.fld").write_bytes(b"garbage")
        with pytest.raises(ArchiveError, match="snapshot 1"):
            read_archive(tmp_path / "a")

    def test_missing_manifest(self, tmp_path):
        (tmp_path / "a").mkdir()
        with pytest.raises(ArchiveError):
            read_archive(tmp_path / "a")
