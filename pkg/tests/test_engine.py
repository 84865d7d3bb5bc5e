import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipskpz.dynamics import ABC, LongJumpExclusion, Reservoir, SlowBond, ssep, wasep
from ipskpz.engine import ScalingSpec, TrajectoryRecord, ensemble_run, simulate, trajectory_seeds
from ipskpz.lattice import ABCProduct, Bernoulli, Configuration, Lattice, sample_configuration
from ipskpz.oracle import build_generator, transient_expectation, transient_integral
from ipskpz.rng import split


def cfg(text):
    return Configuration.from_string(text)


def test_scaling_spec_validates():
    with pytest.raises(ValueError):
        ScalingSpec(2.0, 1.0, (0.5, 0.2))
    with pytest.raises(ValueError):
        ScalingSpec(2.0, 1.0, (0.0, 1.5))
    sc = ScalingSpec.grid(2.0, 1.0, 4)
    assert sc.sample_times == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert sc.accel(10) == 100.0


def test_full_ring_is_frozen():
    rec = simulate(ssep(), cfg("1111"), Lattice(4), ScalingSpec(2.0, 5.0), 1)
    assert rec.events == 0
    assert np.all(rec.sites == 1)


def test_same_seed_same_record():
    sc = ScalingSpec.grid(2.0, 0.05, 10)
    init = sample_configuration(Bernoulli(0.5), Lattice(32), 3)
    a = simulate(wasep(1.0, 0.5), init, Lattice(32), sc, 99, integrate=True)
    b = simulate(wasep(1.0, 0.5), init, Lattice(32), sc, 99, integrate=True)
    c = simulate(wasep(1.0, 0.5), init, Lattice(32), sc, 100, integrate=True)
    assert a == b and a != c


def test_integrate_flag_does_not_change_path():
    sc = ScalingSpec.grid(2.0, 0.05, 10)
    init = sample_configuration(Bernoulli(0.5), Lattice(32), 3)
    a = simulate(ssep(), init, Lattice(32), sc, 5)
    b = simulate(ssep(), init, Lattice(32), sc, 5, integrate=True)
    assert np.array_equal(a.sites, b.sites) and a.events == b.events


def test_single_particle_event_count():
    # exit rate 2 * 1/2 * n^2 = 16 per unit time on a ring of 4
    counts = [simulate(ssep(), cfg("1000"), Lattice(4), ScalingSpec(2.0, 1.0), split(5, i)).events
              for i in range(10000)]
    counts = np.array(counts)
    assert abs(counts.mean() - 16.0) < 4 * counts.std(ddof=1) / np.sqrt(counts.size)


def test_event_count_matches_counters():
    sc = ScalingSpec.grid(2.0, 0.02, 5)
    for model, lat, meas in [
        (wasep(2.0, 0.5), Lattice(20), Bernoulli(0.4)),
        (SlowBond(1.0, 1.0, 0.3, 0.5), Lattice(20), Bernoulli(0.4)),
        (Reservoir(0.2, 0.8, 1.0), Lattice(20, "segment"), Bernoulli(0.5)),
    ]:
        rec = simulate(model, sample_configuration(meas, lat, 1), lat, sc, 2)
        assert rec.events > 0
        assert rec.events == rec.forward[-1].sum() + rec.backward[-1].sum()
        assert np.all(np.diff(rec.forward, axis=0) >= 0)
    rec = simulate(ABC(2.0, 1.0, 0.0), sample_configuration(ABCProduct(0.3, 0.3), Lattice(20), 1),
                   Lattice(20), sc, 2)
    # every exchange moves one species right and another left
    assert rec.events == rec.forward[-1].sum() == rec.backward[-1].sum()


def test_counters_track_particle_motion():
    sc = ScalingSpec.grid(2.0, 0.05, 10)
    lat = Lattice(16)
    rec = simulate(wasep(1.0, 0.5), sample_configuration(Bernoulli(0.5), lat, 4), lat, sc, 8)
    j = rec.current()
    # site x gains J_{x-1} - J_x
    for k in range(1, len(rec)):
        gain = np.roll(j[k], 1) - j[k]
        assert np.array_equal(rec.sites[k].astype(int) - rec.sites[0], gain)


@pytest.mark.parametrize("model,meas", [
    (wasep(3.0, 0.5), Bernoulli(0.3)),
    (ABC(3.0, 1.0, 0.0, gamma=0.5), ABCProduct(0.2, 0.5)),
    (LongJumpExclusion(1.5), Bernoulli(0.6)),
])
def test_conservation_on_ring(model, meas):
    lat = Lattice(24)
    sc = ScalingSpec.grid(2.0, 0.01, 8)
    rec = simulate(model, sample_configuration(meas, lat, 0), lat, sc, 6)
    for row in rec.sites:
        assert np.array_equal(np.bincount(row, minlength=3), np.bincount(rec.sites[0], minlength=3))


def test_geometry_checks():
    with pytest.raises(ValueError):
        simulate(Reservoir(0.2, 0.4), cfg("0000"), Lattice(4), ScalingSpec(2.0, 1.0), 1)
    with pytest.raises(ValueError):
        simulate(ssep(), cfg("000"), Lattice(4, "segment"), ScalingSpec(2.0, 1.0), 1)
    with pytest.raises(TypeError):
        simulate(ssep(), cfg("ABCA"), Lattice(4), ScalingSpec(2.0, 1.0), 1)


def test_ensemble_reduces_to_simulate():
    lat, sc, meas = Lattice(16), ScalingSpec.grid(2.0, 0.01, 4), Bernoulli(0.5)
    rec = next(ensemble_run(ssep(), meas, lat, sc, 1, 77))
    s_init, s_dyn = trajectory_seeds(77, 0)
    assert (s_init, s_dyn) == (split(77, 0), split(77, 1))
    assert rec == simulate(ssep(), sample_configuration(meas, lat, s_init), lat, sc, s_dyn)


def test_ensemble_independent_of_workers():
    lat, sc, meas = Lattice(32), ScalingSpec.grid(2.0, 0.01, 4), ABCProduct(0.3, 0.3)
    model = ABC(2.0, 0.0, 0.0, gamma=0.5)
    a = list(ensemble_run(model, meas, lat, sc, 12, 5, workers=1))
    b = list(ensemble_run(model, meas, lat, sc, 12, 5, workers=3))
    assert a == b
    with pytest.raises(ValueError):
        list(ensemble_run(model, meas, lat, sc, 0, 5))


def test_stationary_moments():
    # single-site and adjacent-pair moments at time T under the invariant measure
    lat, rho = Lattice(64), 0.3
    sc = ScalingSpec(2.0, 0.02, (0.0, 0.02))
    ens = list(ensemble_run(wasep(2.0, 0.5), Bernoulli(rho), lat, sc, 400, 12, counters=False))
    last = np.array([r.sites[-1] for r in ens], dtype=float)
    site = last.mean(axis=1)
    pair = (last * np.roll(last, -1, axis=1)).mean(axis=1)
    for vals, want in ((site, rho), (pair, rho * rho)):
        assert abs(vals.mean() - want) < 4 * vals.std(ddof=1) / np.sqrt(vals.size)


def test_abc_stationary_frequencies():
    lat, meas = Lattice(60), ABCProduct(1 / 3, 1 / 3)
    sc = ScalingSpec(2.0, 0.02, (0.0, 0.01, 0.02))
    ens = list(ensemble_run(ABC(3.0, 0.0, 0.0, gamma=0.5), meas, lat, sc, 300, 4, counters=False))
    for k in range(3):
        for s in range(3):
            f = np.array([(r.sites[k] == s).mean() for r in ens])
            assert abs(f.mean() - 1 / 3) < 4 * f.std(ddof=1) / np.sqrt(f.size)


def test_integrals_match_oracle():
    # exact time integrals: E int_0^t eta_0 eta_1 ds against the oracle
    lat = Lattice(5)
    model = wasep(1.5, 0.5)
    init = cfg("11000")
    sc = ScalingSpec(2.0, 0.05, (0.0, 0.05))
    vals = np.array([simulate(model, init, lat, sc, split(9, i), integrate=True).pair_integral[-1, 0]
                     for i in range(4000)])
    space, q = build_generator(model, lat, 2.0)
    w = np.zeros(len(space))
    w[space.lookup(init.sites)] = 1.0
    g = space.observable(lambda s: float(s[0] * s[1]))
    want = transient_integral(q, space, g, w, 0.05)
    assert abs(vals.mean() - want) < 4 * vals.std(ddof=1) / np.sqrt(vals.size)


def test_csv_layout(tmp_path):
    lat = Lattice(6)
    rec = simulate(ssep(), cfg("110100"), lat, ScalingSpec.grid(2.0, 0.01, 2), 3)
    path, cpath = rec.to_csv(str(tmp_path / "traj.csv"))
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t"] + [f"site_{i}" for i in range(6)]
    assert len(rows) == 4 and rows[1][1:] == ["1", "1", "0", "1", "0", "0"]
    crow = list(csv.reader(open(cpath)))
    assert crow[0] == ["t", "bond", "J"] and len(crow) == 1 + 3 * 6
    rec = simulate(ABC(1.0, 0.0, 0.0), cfg("ABCABC"), lat, ScalingSpec.grid(2.0, 0.01, 2), 3)
    _, cpath = rec.to_csv(str(tmp_path / "abc.csv"))
    assert next(csv.reader(open(cpath))) == ["t", "bond", "J_A", "J_B", "J_C"]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 63), st.sampled_from(["1100", "1010", "1000", "1110"]))
def test_sites_stay_binary_and_counts_fixed(seed, text):
    rec = simulate(wasep(1.0, 1.0), cfg(text), Lattice(4), ScalingSpec.grid(2.0, 0.1, 5), seed)
    assert rec.sites.max() <= 1
    assert set(rec.sites.sum(axis=1)) == {sum(map(int, text))}
