import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipskpz.dynamics import ABC, ssep, wasep
from ipskpz.engine import ScalingSpec, ensemble_run, simulate
from ipskpz.fields import (FourierMode, IdentityApprox, MovingFrame, Tabulated, bg_envelope,
                           bg_residual, box_average, box_averages, current_field, density_field,
                           density_speed, discrete_norm2, discrete_operators,
                           energy_estimate_stats, grid_values, martingale_decomposition,
                           nonlinear_functional, predictable_qv, realized_qv, structure_function)
from ipskpz.lattice import A, B, ABCProduct, Bernoulli, Configuration, Lattice, sample_configuration
from ipskpz.oracle import build_generator, semigroup
from ipskpz.rng import split


def ring_ensemble(model, n, rho, sc, count, seed, **kw):
    return list(ensemble_run(model, Bernoulli(rho), Lattice(n), sc, count, seed, **kw))


# ---------------------------------------------------------------- test functions

def test_fourier_modes_orthonormal():
    u = np.arange(4096) / 4096
    modes = [FourierMode(k) for k in (0, 1, -1, 2, -3)]
    gram = np.array([[np.mean(f(u) * g(u)) for g in modes] for f in modes])
    assert np.allclose(gram, np.eye(len(modes)), atol=1e-12)


def test_identity_approx_integrates_to_one():
    for n, ell in ((100, 10), (64, 16)):
        f = IdentityApprox(0.3, ell / n)
        assert np.sum(f(np.arange(n) / n)) / n == pytest.approx(1.0)
    with pytest.raises(ValueError):
        IdentityApprox(0.0, 0.0)


def test_discrete_operators_on_linear_and_constant():
    n = 64
    vals = np.where(np.arange(n) < 32, 0.5 * np.arange(n) / n, 0.0)
    grad, lap = discrete_operators(Tabulated(vals), n)
    inner = np.arange(2, 30)
    assert np.allclose(grad.values[inner], 0.5)
    assert np.allclose(lap.values[inner], 0.0, atol=1e-9)
    grad, lap = discrete_operators(FourierMode(0), n)
    assert not grad.values.any() and not lap.values.any()


def test_discrete_laplacian_error_bound():
    n, f = 512, FourierMode(1)
    _, lap = discrete_operators(f, n)
    u = np.arange(n) / n
    err = np.abs(lap.values - f.second_derivative(u)).max()
    assert err <= (2 * np.pi) ** 4 / n ** 2


def test_discrete_norm():
    assert discrete_norm2(grid_values(FourierMode(3), 200)) == pytest.approx(1.0)


# ---------------------------------------------------------------- density field

def test_density_field_zero_at_mean():
    lat = Lattice(8)
    rec = simulate(ssep(), Configuration.from_string("10101010"), lat, ScalingSpec.grid(2.0, 0.1, 3), 1)
    rec.sites = np.full(rec.sites.shape, 0.5)
    for k in (0, 1, 3, -2):
        assert np.all(density_field(rec, FourierMode(k), Bernoulli(0.5)).values == 0.0)


def test_constant_mode_is_conserved():
    lat = Lattice(40)
    init = sample_configuration(Bernoulli(0.4), lat, 3)
    rec = simulate(wasep(2.0, 0.5), init, lat, ScalingSpec.grid(2.0, 0.02, 10), 4)
    y = density_field(rec, FourierMode(0), Bernoulli(0.4))
    assert np.allclose(y.values, y.values[0])
    assert len(y) == len(rec)


def test_density_field_at_time():
    lat = Lattice(16)
    rec = simulate(ssep(), sample_configuration(Bernoulli(0.5), lat, 1), lat,
                   ScalingSpec.grid(2.0, 0.01, 4), 2)
    y = density_field(rec, FourierMode(2), Bernoulli(0.5))
    assert density_field(rec, FourierMode(2), Bernoulli(0.5), t=rec.times[2]) == y.values[2]
    with pytest.raises(ValueError):
        density_field(rec, FourierMode(2), Bernoulli(0.5), t=0.00123)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(-4, 4), st.integers(-4, 4))
def test_density_field_linear(a, b, k1, k2):
    lat = Lattice(20)
    rec = simulate(ssep(), sample_configuration(Bernoulli(0.5), lat, 9), lat,
                   ScalingSpec.grid(2.0, 0.01, 3), 1)
    f, g = FourierMode(k1), FourierMode(k2)
    combo = Tabulated(a * f(np.arange(20) / 20) + b * g(np.arange(20) / 20))
    m = Bernoulli(0.5)
    lhs = density_field(rec, combo, m).values
    rhs = a * density_field(rec, f, m).values + b * density_field(rec, g, m).values
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_frame_equals_translated_test_function():
    lat, n = Lattice(32), 32
    rec = simulate(wasep(1.0, 0.5), sample_configuration(Bernoulli(0.5), lat, 2), lat,
                   ScalingSpec.grid(2.0, 0.01, 5), 3)
    m, f, v = Bernoulli(0.5), FourierMode(1), 120.0
    moving = density_field(rec, f, m, MovingFrame(v)).values
    for k, t in enumerate(rec.times):
        shifted = Tabulated(f((np.arange(n) + v * t) / n))
        assert moving[k] == pytest.approx(density_field(rec, shifted, m, t=t), abs=1e-12)


def test_frame_wraparound_warns():
    lat = Lattice(16)
    rec = simulate(ssep(), sample_configuration(Bernoulli(0.5), lat, 1), lat,
                   ScalingSpec.grid(2.0, 1.0, 2), 1)
    with pytest.warns(RuntimeWarning):
        density_field(rec, FourierMode(1), Bernoulli(0.5), MovingFrame(100.0))


def test_static_variance_and_white_noise():
    n, count = 512, 10000
    f1, f2 = FourierMode(1), FourierMode(-2)
    rng = np.random.default_rng(11)
    sites = (rng.random((count, n)) < 0.5) - 0.5
    y1 = sites @ grid_values(f1, n) / math.sqrt(n)
    y2 = sites @ grid_values(f2, n) / math.sqrt(n)
    sq = y1 ** 2
    assert abs(sq.mean() - 0.25) < 4 * sq.std(ddof=1) / math.sqrt(count)
    prod = y1 * y2
    assert abs(prod.mean()) < 4 * prod.std(ddof=1) / math.sqrt(count)


# ---------------------------------------------------------------- currents

def test_current_telescopes():
    lat = Lattice(12)
    rec = simulate(wasep(3.0, 0.5), sample_configuration(Bernoulli(0.5), lat, 5), lat,
                   ScalingSpec.grid(2.0, 0.2, 4), 6)
    j = np.stack([current_field(rec, x) for x in range(12)], axis=1)
    # J_{x-1} - J_x is the occupation change at x; the sum over bonds is the total displacement
    gain = np.roll(j, 1, axis=1) - j
    assert np.array_equal(gain, rec.sites.astype(int) - rec.sites[0])
    assert np.array_equal(j.sum(axis=1), rec.current().sum(axis=1))
    assert current_field(rec, 3, rec.times[2]) == j[2, 3]


def test_current_needs_counters():
    lat = Lattice(8)
    rec = simulate(ssep(), Configuration.from_string("10101010"), lat, ScalingSpec(2.0, 0.1), 1,
                   counters=False)
    with pytest.raises(ValueError):
        current_field(rec, 0)


def test_wasep_mean_current_rate():
    # mean crossings per bond = a chi n^(2 - gamma) t
    n, a, g, t = 512, 1.0, 0.5, 0.002
    ens = ring_ensemble(wasep(a, g), n, 0.5, ScalingSpec(2.0, t), 40, 17)
    per = np.array([r.current()[-1].mean() for r in ens])
    want = a * 0.25 * n ** (2 - g) * t
    assert abs(per.mean() - want) < 4 * per.std(ddof=1) / math.sqrt(per.size)


def test_symmetric_current_mean_zero():
    ens = ring_ensemble(ssep(), 64, 0.5, ScalingSpec(2.0, 0.05), 200, 3)
    j = np.array([current_field(r, 0)[-1] for r in ens], dtype=float)
    assert abs(j.mean()) < 4 * j.std(ddof=1) / math.sqrt(j.size)


# ---------------------------------------------------------------- boxes

def test_box_average_examples():
    c = Configuration.from_string("01101001")
    m = Bernoulli(0.5)
    for x in range(8):
        assert box_average(c, x, 1, "right", m) == c.sites[(x + 1) % 8] - 0.5
        assert box_average(c, x, 1, "left", m) == c.sites[(x - 1) % 8] - 0.5
    ones = Configuration.from_string("11111111")
    assert box_average(ones, 2, 3, "left", m) == 0.5
    with pytest.raises(ValueError):
        box_average(c, 0, 5, "right", m)


def test_box_averages_match_loops():
    rng = np.random.default_rng(0)
    xb = rng.normal(size=(3, 17))
    ell = 5
    got = box_averages(xb, ell, "right")
    want = np.array([[xb[r, [(x + j) % 17 for j in range(1, ell + 1)]].mean() for x in range(17)]
                     for r in range(3)])
    assert np.allclose(got, want)
    got = box_averages(xb, ell, "left")
    want = np.array([[xb[r, [(x - j) % 17 for j in range(1, ell + 1)]].mean() for x in range(17)]
                     for r in range(3)])
    assert np.allclose(got, want)


def test_box_variance():
    rng = np.random.default_rng(5)
    rho, ell = 0.3, 8
    sites = (rng.random((20000, 64)) < rho) - rho
    b = box_averages(sites, ell)[:, 0]
    sq = b ** 2
    assert abs(sq.mean() - rho * (1 - rho) / ell) < 4 * sq.std(ddof=1) / math.sqrt(sq.size)


# ---------------------------------------------------------------- Boltzmann-Gibbs

def test_bg_zero_weight_and_grid_check():
    sc = ScalingSpec.grid(2.0, 0.01, 200)
    ens = ring_ensemble(ssep(), 32, 0.5, sc, 3, 1, counters=False)
    assert bg_residual(ens, np.zeros(32), 0.01, 4, Bernoulli(0.5)) == (0.0, 0.0)
    v = np.cos(2 * np.pi * np.arange(32) / 32)
    mean, se = bg_residual(ens, v, 0.01, [2, 4], Bernoulli(0.5))
    assert mean.shape == (2,) and np.all(mean >= 0)
    coarse = ring_ensemble(ssep(), 32, 0.5, ScalingSpec.grid(2.0, 0.01, 50), 2, 1, counters=False)
    with pytest.raises(ValueError):
        bg_residual(coarse, v, 0.01, 4, Bernoulli(0.5))


def test_bg_envelope_minimizer():
    n, t = 1024, 0.1
    L = np.linspace(8, 512, 50001)
    best = L[np.argmin(bg_envelope(t, L, n))]
    assert best == pytest.approx((2 * t) ** (1 / 3) * n ** (2 / 3), rel=1e-3)


# ---------------------------------------------------------------- decomposition

@pytest.mark.parametrize("model,integrate", [(wasep(2.0, 0.5), True), (wasep(2.0, 0.5), False),
                                             (ssep(), True)])
def test_decomposition_telescopes(model, integrate):
    lat = Lattice(32)
    rec = simulate(model, sample_configuration(Bernoulli(0.5), lat, 1), lat,
                   ScalingSpec.grid(2.0, 0.01, 100), 2, integrate=integrate)
    d = martingale_decomposition(rec, FourierMode(1), model, Bernoulli(0.5))
    assert d.exact_integrals == integrate
    resid = d.Y.values - d.Y.values[0] - d.M.values - d.I.values - d.K.values
    assert np.abs(resid).max() < 1e-12
    if model.a == 0:
        assert not np.any(d.K.values)


def test_decomposition_abc_telescopes():
    lat = Lattice(30)
    model = ABC(2.0, 0.0, 0.0, gamma=0.5)
    rec = simulate(model, sample_configuration(ABCProduct(1 / 3, 1 / 3), lat, 1), lat,
                   ScalingSpec.grid(2.0, 0.01, 100), 2)
    d = martingale_decomposition(rec, FourierMode(1), model, ABCProduct(1 / 3, 1 / 3), species=A)
    resid = d.Y.values - d.Y.values[0] - d.M.values - d.I.values - d.K.values
    assert np.abs(resid).max() < 1e-12
    with pytest.raises(ValueError):
        martingale_decomposition(rec, FourierMode(1), model, ABCProduct(1 / 3, 1 / 3))


def test_exact_and_trapezoid_integrals_agree():
    lat = Lattice(32)
    model = wasep(2.0, 0.5)
    rec = simulate(model, sample_configuration(Bernoulli(0.5), lat, 4), lat,
                   ScalingSpec.grid(2.0, 0.01, 4000), 5, integrate=True)
    exact = martingale_decomposition(rec, FourierMode(1), model, Bernoulli(0.5))
    rec.occupation_integral = rec.pair_integral = None
    trap = martingale_decomposition(rec, FourierMode(1), model, Bernoulli(0.5))
    scale = np.abs(exact.I.values).max()
    assert np.abs(exact.I.values - trap.I.values).max() < 0.05 * scale


def test_martingale_second_moment_matches_predictable_qv():
    # E[M_t^2] = E[int Gamma] for the Dynkin martingale
    n, t = 64, 0.01
    model = wasep(1.0, 1.0)
    sc = ScalingSpec.grid(2.0, t, 10)
    m2, pq = [], []
    for rec in ring_ensemble(model, n, 0.5, sc, 600, 21, integrate=True):
        d = martingale_decomposition(rec, FourierMode(1), model, Bernoulli(0.5))
        m2.append(d.M.values[-1] ** 2)
        pq.append(predictable_qv(rec, FourierMode(1), model)[-1])
    diff = np.array(m2) - np.array(pq)
    assert abs(diff.mean()) < 4 * diff.std(ddof=1) / math.sqrt(diff.size)


def test_realized_qv_of_linear_path():
    v = np.linspace(0.0, 1.0, 11)
    q = realized_qv(v)
    assert q[-1] == pytest.approx(10 * 0.01)
    assert realized_qv(v, stride=2)[-1] == pytest.approx(5 * 0.04)


# ---------------------------------------------------------------- energy estimates

def test_energy_estimate_trivial_cases():
    sc = ScalingSpec.grid(2.0, 0.01, 20)
    ens = ring_ensemble(wasep(1.0, 0.5), 40, 0.5, sc, 4, 7, counters=False)
    m = Bernoulli(0.5)
    (l1, _), (l2, _) = energy_estimate_stats(ens, FourierMode(1), 0.1, 0.05, 0.005, 0.005, m)
    assert l1 == 0.0 and l2 == 0.0
    (l1, _), (l2, _) = energy_estimate_stats(ens, FourierMode(0), 0.1, 0.05, 0.0, 0.01, m)
    assert l1 == 0.0 and l2 == 0.0
    with pytest.raises(ValueError):
        energy_estimate_stats(ens, FourierMode(1), 0.05, 0.1, 0.0, 0.01, m)


def test_nonlinear_functional_matches_identity_field():
    n, ell = 40, 4
    lat = Lattice(n)
    rec = simulate(ssep(), sample_configuration(Bernoulli(0.5), lat, 1), lat,
                   ScalingSpec.grid(2.0, 0.01, 3), 1)
    f, eps, m = FourierMode(1), ell / n, Bernoulli(0.5)
    grad, _ = discrete_operators(f, n)
    direct = []
    for k in range(len(rec)):
        ys = [density_field(rec, IdentityApprox(x / n, eps), m, t=rec.times[k]) for x in range(n)]
        direct.append(np.sum(grad.values * np.square(ys)) / n)
    assert np.allclose(nonlinear_functional(rec, f, eps, m), direct)
    with pytest.raises(ValueError):
        nonlinear_functional(rec, f, 0.013, m)


# ---------------------------------------------------------------- structure function

def test_structure_function_at_zero_lag():
    ens = ring_ensemble(ssep(), 64, 0.3, ScalingSpec.grid(2.0, 0.001, 2), 400, 2, counters=False)
    sf = structure_function(ens, Bernoulli(0.3), lags=[0])
    want = np.where(sf.x == 0, 0.21, 0.0)
    assert np.all(np.abs(sf.S[0] - want) < 4 * sf.se[0] + 1e-12)
    # the control variate makes the mass exact
    assert sf.S[0].sum() == pytest.approx(0.21)


def test_control_variate_is_unbiased():
    ens = ring_ensemble(ssep(), 32, 0.5, ScalingSpec.grid(2.0, 0.002, 4), 600, 8, counters=False)
    on = structure_function(ens, Bernoulli(0.5), control=True)
    off = structure_function(ens, Bernoulli(0.5), control=False)
    diff = on.S - off.S
    # at rho = 1/2 the uncontrolled S(0, 0) = 1/4 is deterministic, so pool both errors
    assert np.all(np.abs(diff) < 4 * np.hypot(on.se, off.se))
    assert on.se.mean() < off.se.mean()


def test_structure_mass_constant():
    ens = ring_ensemble(wasep(2.0, 0.5), 64, 0.5, ScalingSpec.grid(2.0, 0.01, 5), 200, 4,
                        counters=False)
    sf = structure_function(ens, Bernoulli(0.5), control=False)
    mass = sf.S.sum(axis=1)
    se = sf.se.sum(axis=1)
    assert np.all(np.abs(mass - mass[0]) < 4 * se)


def test_mode_field_structure_function():
    meas = ABCProduct(1 / 3, 1 / 3)
    ens = list(ensemble_run(ABC(1.0, 0.0, 0.0, gamma=0.5), meas, Lattice(48),
                            ScalingSpec.grid(2.0, 0.001, 2), 200, 5, counters=False))
    w = (1.0, 2.0)
    sf = structure_function(ens, meas, lags=[0], species=(w, w))
    # (1, 2) cov (1, 2)^T = 2/9 - 4/9 + 8/9
    assert sf.S[0].sum() == pytest.approx(2 / 3)
    ab = structure_function(ens, meas, lags=[0], species=(A, B))
    assert ab.S[0].sum() == pytest.approx(-1 / 9)


def ssep_oracle_spread(n_small, micro_times):
    # single-particle kernel: S(x, t) is chi times the transition probability
    space, q = build_generator(ssep(), Lattice(n_small), 0.0, sector=1)
    start = np.zeros(len(space))
    start[[i for i in range(len(space)) if space.config(i).sites[0] == 1][0]] = 1.0
    x = np.arange(n_small)
    x = np.where(x >= n_small - n_small // 2, x - n_small, x)
    out = []
    for t in micro_times:
        p = start @ semigroup(q, t)
        pos = np.array([np.argmax(space.config(i).sites) for i in range(len(space))])
        out.append(np.sum(p * x[pos] ** 2))
    return np.array(out)


def test_ssep_spread_grows_diffusively():
    micro = np.array([0.0, 0.25, 0.5])
    oracle = ssep_oracle_spread(10, micro)
    slope_oracle = np.polyfit(micro, oracle, 1)[0]
    n = 128
    sc = ScalingSpec.grid(2.0, 6.0 / n ** 2, 6)
    ens = ring_ensemble(ssep(), n, 0.5, sc, 300, 31, counters=False)
    # far tails carry only noise weighted by x^2; the spread stays below 3 sites
    sf = structure_function(ens, Bernoulli(0.5)).window(16)
    mass, _, var = sf.moments(center=np.zeros(len(sf.times)))
    slope = np.polyfit(sf.times * n ** 2, var, 1)[0]
    assert slope == pytest.approx(slope_oracle, rel=0.15)


def test_density_speed():
    sp = density_speed(wasep(2.0, 0.5))
    lat = Lattice(100)
    rec = simulate(ssep(), Configuration(np.r_[np.ones(30), np.zeros(70)].astype(np.uint8)), lat,
                   ScalingSpec(2.0, 0.0, (0.0,)), 1)
    p, q = wasep(2.0, 0.5).rates(100)
    assert sp(rec) == pytest.approx((p - q) * 0.4 * 100 ** 2)
    with pytest.raises(TypeError):
        density_speed(ABC(1.0, 0.0, 0.0))


def test_structure_csv(tmp_path):
    ens = ring_ensemble(ssep(), 8, 0.5, ScalingSpec.grid(2.0, 0.01, 2), 3, 1, counters=False)
    path = structure_function(ens, Bernoulli(0.5)).to_csv(str(tmp_path / "s.csv"))
    lines = open(path).read().splitlines()
    assert lines[0] == "t,x,S,se" and len(lines) == 1 + 3 * 8
