"""Exact continuous-time simulation by uniformization.

Every model is run as a Poisson stream of uniform proposals at a constant
rate ``n**theta * (number of slots) * r_max``; a proposal for slot ``b`` is
accepted with probability ``rate_b(eta) / r_max``.  The accepted moves form
exactly the Markov chain with the model's rates.  Holding times between
proposals are exponential, so time integrals along the path are exact.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dynamics import (ABC, LongJumpExclusion, NearestExclusion, Reservoir, SlowBond,
                       check_model_kind)
from .lattice import Configuration, sample_configuration
from .rng import next_below, next_double, next_open, split, xoshiro_state


@dataclass(frozen=True)
class ScalingSpec:
    """Time acceleration ``n**theta_exponent``, horizon and macroscopic sample times."""

    theta_exponent: float
    horizon: float
    sample_times: tuple = field(default=None)

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        times = (0.0, self.horizon) if self.sample_times is None else self.sample_times
        times = tuple(float(t) for t in times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("sample times must be strictly increasing")
        if times and (times[0] < 0 or times[-1] > self.horizon * (1 + 1e-12)):
            raise ValueError("sample times must lie in [0, horizon]")
        object.__setattr__(self, "sample_times", times)

    @classmethod
    def grid(cls, theta_exponent, horizon, points):
        """``points + 1`` equally spaced sample times on [0, horizon]."""
        return cls(theta_exponent, horizon, tuple(np.linspace(0.0, horizon, points + 1)))

    def accel(self, n):
        return float(n) ** self.theta_exponent


@dataclass
class TrajectoryRecord:
    """Configurations at the sample times plus cumulative bond crossings.

    ``forward[k, c, b]`` counts rightward crossings of bond ``b`` by species
    ``c`` up to sample ``k`` (``c`` = 0 for exclusion); ``backward`` the
    leftward ones.  Both are ``None`` when counters are not kept.

    ``occupation_integral[k, x]`` and ``pair_integral[k, b]`` (optional) are
    the exact integrals over [0, t_k] of eta_x and of the product across bond b.
    """

    times: np.ndarray
    sites: np.ndarray
    kind: str
    n: int
    topology: str
    events: int
    seed: int
    forward: np.ndarray | None = None
    backward: np.ndarray | None = None
    occupation_integral: np.ndarray | None = None
    pair_integral: np.ndarray | None = None

    def __len__(self):
        return self.times.size

    def config(self, k):
        return Configuration(self.sites[k].copy(), self.kind)

    def current(self, species=0):
        """Net crossings J[k, b] of every bond at every sample time."""
        if self.forward is None:
            raise ValueError("this trajectory was simulated without current counters")
        return self.forward[:, species, :] - self.backward[:, species, :]

    def __eq__(self, other):
        if not isinstance(other, TrajectoryRecord):
            return NotImplemented
        same = (self.kind == other.kind and self.n == other.n and self.events == other.events
                and self.seed == other.seed and np.array_equal(self.times, other.times)
                and np.array_equal(self.sites, other.sites))
        if self.forward is None or other.forward is None:
            return same and self.forward is None and other.forward is None
        same = (same and np.array_equal(self.forward, other.forward)
                and np.array_equal(self.backward, other.backward))
        if self.occupation_integral is None or other.occupation_integral is None:
            return same and self.occupation_integral is None and other.occupation_integral is None
        return (same and np.array_equal(self.occupation_integral, other.occupation_integral)
                and np.array_equal(self.pair_integral, other.pair_integral))

    def to_csv(self, path):
        """Write ``t,site_0,...`` to ``path`` and counters to ``<stem>_counters.csv``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"site_{i}" for i in range(self.sites.shape[1])])
            for t, row in zip(self.times, self.sites):
                w.writerow([repr(float(t))] + row.tolist())
        if self.forward is None:
            return path, None
        stem, _ = os.path.splitext(path)
        cpath = stem + "_counters.csv"
        species = self.forward.shape[1]
        with open(cpath, "w", newline="") as fh:
            w = csv.writer(fh)
            if species == 1:
                w.writerow(["t", "bond", "J"])
            else:
                w.writerow(["t", "bond", "J_A", "J_B", "J_C"])
            net = self.forward - self.backward
            for k, t in enumerate(self.times):
                for b in range(net.shape[2]):
                    w.writerow([repr(float(t)), b] + net[k, :, b].tolist())
        return path, cpath


# ---------------------------------------------------------------- kernels
#
# All kernels draw exponential holding times at the constant proposal rate
# ``lam`` (macroscopic time units).  ``ts`` are the sample times; row k of the
# outputs holds the state just after all events at times <= ts[k].

@njit(nogil=True, cache=True)
def _flush_all(t, sites, last, occ, plast, pair, segment):
    m = sites.size
    for x in range(m):
        occ[x] += sites[x] * (t - last[x])
        last[x] = t
    nb = pair.size
    for b in range(nb):
        if segment:
            # bond b joins labels b and b+1, i.e. indices b-1 and b; outer bonds have no pair
            if b == 0 or b == nb - 1:
                continue
            i, j = b - 1, b
        else:
            i, j = b, b + 1
            if j == m:
                j = 0
        pair[b] += sites[i] * sites[j] * (t - plast[b])
        plast[b] = t


@njit(nogil=True, cache=True)
def _touch(t, x, sites, last, occ, plast, pair, segment):
    # flush site x and the (up to two) bonds containing it before it changes
    m = sites.size
    nb = pair.size
    occ[x] += sites[x] * (t - last[x])
    last[x] = t
    if segment:
        b1, b2 = x, x + 1            # bonds with labels x and x+1 (index x -> label x+1)
        for b in (b1, b2):
            if b == 0 or b == nb - 1:
                continue
            pair[b] += sites[b - 1] * sites[b] * (t - plast[b])
            plast[b] = t
    else:
        b1 = x - 1 if x > 0 else m - 1
        for b in (b1, x):
            j = b + 1
            if j == m:
                j = 0
            pair[b] += sites[b] * sites[j] * (t - plast[b])
            plast[b] = t


@njit(nogil=True, cache=True)
def _nn_run(sites, pr, pl, bnd, segment, rmax, lam, ts, state, out, hist_f, hist_b,
            integrate, occ_hist, pair_hist):
    # bnd = (inject_left, remove_left, inject_right, remove_right)
    nb = pr.size
    m = sites.size
    fwd = np.zeros(nb, dtype=np.int64)
    bwd = np.zeros(nb, dtype=np.int64)
    last = np.zeros(m)
    occ = np.zeros(m)
    plast = np.zeros(nb)
    pair = np.zeros(nb)
    events = 0
    k = 0
    K = ts.size
    t = 0.0
    while k < K:
        if lam > 0.0:
            t += -np.log(next_open(state)) / lam
        else:
            t = np.inf
        while k < K and ts[k] < t:
            out[k, :] = sites
            hist_f[k, 0, :] = fwd
            hist_b[k, 0, :] = bwd
            if integrate:
                _flush_all(ts[k], sites, last, occ, plast, pair, segment)
                occ_hist[k, :] = occ
                pair_hist[k, :] = pair
            k += 1
        if k == K:
            break
        b = next_below(state, nb)
        u = next_double(state) * rmax
        if segment:
            if b == 0:
                if sites[0] == 0:
                    if u < bnd[0]:
                        if integrate:
                            _touch(t, 0, sites, last, occ, plast, pair, segment)
                        sites[0] = 1
                        fwd[b] += 1
                        events += 1
                elif u < bnd[1]:
                    if integrate:
                        _touch(t, 0, sites, last, occ, plast, pair, segment)
                    sites[0] = 0
                    bwd[b] += 1
                    events += 1
                continue
            if b == nb - 1:
                if sites[m - 1] == 0:
                    if u < bnd[2]:
                        if integrate:
                            _touch(t, m - 1, sites, last, occ, plast, pair, segment)
                        sites[m - 1] = 1
                        bwd[b] += 1
                        events += 1
                elif u < bnd[3]:
                    if integrate:
                        _touch(t, m - 1, sites, last, occ, plast, pair, segment)
                    sites[m - 1] = 0
                    fwd[b] += 1
                    events += 1
                continue
            i = b - 1
            j = b
        else:
            i = b
            j = b + 1
            if j == m:
                j = 0
        left = sites[i]
        if left == sites[j]:
            continue
        if left == 1:
            if u < pr[b]:
                if integrate:
                    _touch(t, i, sites, last, occ, plast, pair, segment)
                    _touch(t, j, sites, last, occ, plast, pair, segment)
                sites[i] = 0
                sites[j] = 1
                fwd[b] += 1
                events += 1
        elif u < pl[b]:
            if integrate:
                _touch(t, i, sites, last, occ, plast, pair, segment)
                _touch(t, j, sites, last, occ, plast, pair, segment)
            sites[i] = 1
            sites[j] = 0
            bwd[b] += 1
            events += 1
    return events


@njit(nogil=True, cache=True)
def _abc_run(sites, rm, rmax, lam, ts, state, out, hist_f, hist_b):
    n = sites.size
    fwd = np.zeros((3, n), dtype=np.int64)
    bwd = np.zeros((3, n), dtype=np.int64)
    events = 0
    k = 0
    K = ts.size
    t = 0.0
    while k < K:
        t += -np.log(next_open(state)) / lam
        while k < K and ts[k] < t:
            out[k, :] = sites
            hist_f[k] = fwd
            hist_b[k] = bwd
            k += 1
        if k == K:
            break
        b = next_below(state, n)
        u = next_double(state) * rmax
        j = b + 1
        if j == n:
            j = 0
        left = sites[b]
        right = sites[j]
        if left == right:
            continue
        if u < rm[left, right]:
            sites[b] = right
            sites[j] = left
            fwd[left, b] += 1
            bwd[right, b] += 1
            events += 1
    return events


@njit(nogil=True, cache=True)
def _long_run(sites, disp, cdf, lam, ts, state, out):
    n = sites.size
    events = 0
    k = 0
    K = ts.size
    t = 0.0
    while k < K:
        t += -np.log(next_open(state)) / lam
        while k < K and ts[k] < t:
            out[k, :] = sites
            k += 1
        if k == K:
            break
        x = next_below(state, n)
        u = next_double(state)
        if sites[x] == 0:
            continue
        d = disp[np.searchsorted(cdf, u, side="right")]
        y = x + d
        if y >= n:
            y -= n
        if sites[y] == 0:
            sites[x] = 0
            sites[y] = 1
            events += 1
    return events


# ---------------------------------------------------------------- drivers

def _check_geometry(model, lattice):
    if isinstance(model, Reservoir):
        if lattice.is_ring:
            raise ValueError("reservoir dynamics needs a segment lattice")
    elif not lattice.is_ring:
        raise ValueError(f"{type(model).__name__} is simulated on a ring")


def simulate(model, init, lattice, scaling, seed, counters=True, integrate=False):
    """Sample one trajectory; deterministic given ``seed``.

    With ``integrate`` (exclusion models with nearest-neighbour moves) the
    record also carries the exact cumulative time integrals of every site
    occupation and every adjacent pair product, in macroscopic time.  The
    flag does not change the sampled path.  A configuration with no
    admissible move simply stays frozen.
    """
    _check_geometry(model, lattice)
    check_model_kind(model, init)
    if len(init) != lattice.num_sites:
        raise ValueError("configuration length does not match the lattice")
    n = lattice.n
    model.check(n)
    seed = int(seed) & ((1 << 64) - 1)
    times = np.asarray(scaling.sample_times, dtype=float)
    state = xoshiro_state(seed)
    sites = init.sites.copy()
    k = times.size
    out = np.empty((k, sites.size), dtype=np.uint8)
    accel = scaling.accel(n)
    fwd = bwd = occ = pair = None

    if isinstance(model, ABC):
        if integrate:
            raise ValueError("occupation integrals are only kept for exclusion models")
        rm = model.rate_matrix(n)
        rmax = float(rm.max())
        fwd = np.zeros((k, 3, n), dtype=np.int64)
        bwd = np.zeros((k, 3, n), dtype=np.int64)
        events = _abc_run(sites, rm, rmax, accel * n * rmax, times, state, out, fwd, bwd)
    elif isinstance(model, LongJumpExclusion):
        if integrate:
            raise ValueError("occupation integrals are not kept for long jumps")
        disp, rates = model.jump_table(n)
        total = float(rates.sum())
        cdf = np.cumsum(rates) / total
        cdf[-1] = 1.0
        events = _long_run(sites, disp, cdf, accel * n * total, times, state, out)
        counters = False
    else:
        nb = lattice.num_bonds
        pr = np.empty(nb)
        pl = np.empty(nb)
        bnd = np.zeros(4)
        if isinstance(model, NearestExclusion):
            pr[:], pl[:] = model.rates(n)
        elif isinstance(model, SlowBond):
            pr[:], pl[:] = model.bulk_rates(n)
            pr[-1], pl[-1] = model.slow_rates(n)
        else:
            pr[:], pl[:] = 0.5, 0.5
            br = model.boundary_rates(n)
            bnd[:] = (br["inject_left"], br["remove_left"],
                      br["inject_right"], br["remove_right"])
        if not lattice.is_ring:
            # outer bonds only carry reservoir moves
            pr[0] = pl[0] = pr[-1] = pl[-1] = 0.0
        rmax = float(max(pr.max(), pl.max(), bnd.max()))
        fwd = np.zeros((k, 1, nb), dtype=np.int64)
        bwd = np.zeros((k, 1, nb), dtype=np.int64)
        occ = np.zeros((k if integrate else 0, sites.size))
        pair = np.zeros((k if integrate else 0, nb))
        events = _nn_run(sites, pr, pl, bnd, not lattice.is_ring, rmax, accel * nb * rmax,
                         times, state, out, fwd, bwd, integrate, occ, pair)
        if not integrate:
            occ = pair = None
    if not counters:
        fwd = bwd = None
    return TrajectoryRecord(times, out, init.kind, n, lattice.topology, int(events), seed,
                            fwd, bwd, occ, pair)


def trajectory_seeds(master_seed, i):
    """(initial-configuration seed, dynamics seed) of ensemble member ``i``."""
    return split(master_seed, 2 * i), split(master_seed, 2 * i + 1)


def ensemble_run(model, measure, lattice, scaling, trajectories, master_seed,
                 workers=1, counters=True, integrate=False):
    """Yield the ``trajectories`` records in index order.

    Member ``i`` starts from ``sample_configuration(measure, lattice,
    split(master_seed, 2 i))`` and runs with seed ``split(master_seed, 2 i + 1)``,
    so the output does not depend on ``workers``.
    """
    if trajectories < 1:
        raise ValueError("trajectories must be >= 1")

    def one(i):
        s_init, s_dyn = trajectory_seeds(master_seed, i)
        init = sample_configuration(measure, lattice, s_init)
        return simulate(model, init, lattice, scaling, s_dyn, counters=counters,
                        integrate=integrate)

    if workers <= 1:
        for i in range(trajectories):
            yield one(i)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # bounded look-ahead keeps memory flat for long ensembles
        window = 4 * workers
        pending = [pool.submit(one, i) for i in range(min(window, trajectories))]
        nxt = len(pending)
        while pending:
            rec = pending.pop(0).result()
            if nxt < trajectories:
                pending.append(pool.submit(one, nxt))
                nxt += 1
            yield rec
