"""Exact finite-state computations for small lattices.

The generator is assembled from :func:`ipskpz.dynamics.event_catalog`, so it
shares no code with the simulation kernels it is used to validate.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from .dynamics import ABC, apply_event, check_model_kind, event_catalog
from .lattice import (ABCProduct, Bernoulli, BernoulliProfile, ABCProfile,
                      Configuration)

MAX_STATES = 1_000_000


@dataclass
class StateSpace:
    states: np.ndarray        # (S, num_sites) uint8
    kind: str
    index: dict

    def __len__(self):
        return self.states.shape[0]

    def config(self, i):
        return Configuration(self.states[i].copy(), self.kind)

    def lookup(self, sites):
        return self.index[np.asarray(sites, dtype=np.uint8).tobytes()]

    def observable(self, func):
        """Evaluate ``func(sites) -> float`` on every state."""
        return np.array([func(s) for s in self.states], dtype=float)


def _count_states(kind, m, sector):
    if kind == "exclusion":
        return 2 ** m if sector is None else math.comb(m, sector)
    if sector is None:
        return 3 ** m
    na, nb = sector[0], sector[1]
    return math.comb(m, na) * math.comb(m - na, nb)


def enumerate_states(kind, m, sector=None):
    """All configurations on ``m`` sites, optionally in a fixed-count sector.

    ``sector`` is a particle number (exclusion) or (n_A, n_B[, n_C]) for ABC.
    """
    total = _count_states(kind, m, sector)
    if total > MAX_STATES:
        raise ValueError(f"state space of {total} states exceeds the guard {MAX_STATES}")
    letters = (0, 1) if kind == "exclusion" else (0, 1, 2)
    rows = []
    for tup in itertools.product(letters, repeat=m):
        if sector is not None:
            if kind == "exclusion" and sum(tup) != sector:
                continue
            if kind == "abc" and (tup.count(0) != sector[0] or tup.count(1) != sector[1]):
                continue
        rows.append(tup)
    states = np.array(rows, dtype=np.uint8).reshape(len(rows), m)
    index = {row.tobytes(): i for i, row in enumerate(states)}
    return StateSpace(states, kind, index)


def build_generator(model, lattice, scaling=None, sector=None):
    """Sparse generator Q (with acceleration n^theta) and its state space.

    ``scaling`` may be a ScalingSpec, a bare theta exponent, or None (theta = 0).
    """
    kind = "abc" if isinstance(model, ABC) else "exclusion"
    if sector is not None and kind == "abc" and len(sector) == 3 and sum(sector) != lattice.num_sites:
        raise ValueError("species counts must sum to the number of sites")
    space = enumerate_states(kind, lattice.num_sites, sector)
    theta = getattr(scaling, "theta_exponent", scaling) or 0.0
    accel = float(lattice.n) ** theta
    rows, cols, vals = [], [], []
    for i, sites in enumerate(space.states):
        cfg = Configuration(sites, kind)
        check_model_kind(model, cfg)
        out = 0.0
        for ev in event_catalog(model, cfg, lattice):
            j = space.lookup(apply_event(cfg, ev, lattice).sites)
            if j == i:
                continue
            rows.append(i)
            cols.append(j)
            vals.append(accel * ev.rate)
            out += accel * ev.rate
        rows.append(i)
        cols.append(i)
        vals.append(-out)
    q = sp.csr_matrix((vals, (rows, cols)), shape=(len(space), len(space)))
    q.sum_duplicates()
    return space, q


def measure_weights(space, measure, normalize=True):
    """Probability of each state under a product measure (restricted to the space)."""
    st = space.states.astype(int)
    if isinstance(measure, (Bernoulli, BernoulliProfile)):
        rho = np.broadcast_to(np.asarray(measure.rho, float), (st.shape[1],))
        w = np.prod(np.where(st == 1, rho, 1.0 - rho), axis=1)
    elif isinstance(measure, (ABCProduct, ABCProfile)):
        m = st.shape[1]
        dens = np.stack([np.broadcast_to(np.asarray(measure.mean(k), float), (m,)) for k in range(3)])
        w = np.prod(dens[st, np.arange(m)], axis=1)
    else:
        w = np.asarray(measure, dtype=float)
        if w.shape != (len(space),):
            raise ValueError("initial weights must have one entry per state")
        return w
    if normalize and w.sum() > 0:
        w = w / w.sum()
    return w


def check_stationarity(q, space, measure):
    """Relative residual max|nu^T Q| / max|nu| for a product measure."""
    nu = measure_weights(space, measure)
    return float(np.abs(q.T @ nu).max() / np.abs(nu).max())


def _uniformization_terms(q, t, tol):
    lam = float(-q.diagonal().min()) if q.shape[0] else 0.0
    if lam <= 0.0 or t == 0.0:
        return lam, None, np.array([1.0])
    pmat = sp.identity(q.shape[0], format="csr") + q / lam
    mu = lam * t
    kmax = int(poisson.isf(tol, mu)) + 10
    return lam, pmat, poisson.pmf(np.arange(kmax + 1), mu)


def evolve(q, vec, t, tol=1e-12):
    """Row vector ``vec^T exp(Q t)`` by uniformization."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    vec = np.asarray(vec, dtype=float)
    lam, pmat, w = _uniformization_terms(q, t, tol)
    if pmat is None:
        return vec.copy()
    pt = pmat.T.tocsr()
    acc = w[0] * vec
    v = vec
    for k in range(1, w.size):
        v = pt @ v
        acc = acc + w[k] * v
    return acc


def transient_expectation(q, space, observable, init, t, tol=1e-12):
    """E[g(eta_t)] started from ``init`` (a product measure or weight vector)."""
    g = observable if isinstance(observable, np.ndarray) else space.observable(observable)
    nu = measure_weights(space, init)
    return float(evolve(q, nu, t, tol) @ g)


def transient_integral(q, space, observable, init, t, tol=1e-12):
    """int_0^t E[g(eta_s)] ds via the Poisson-tail form of uniformization."""
    g = observable if isinstance(observable, np.ndarray) else space.observable(observable)
    nu = measure_weights(space, init)
    lam, pmat, w = _uniformization_terms(q, t, tol)
    if pmat is None:
        return float(t * (nu @ g))
    # int_0^t Pois(k; lam s) ds = P(N(lam t) > k) / lam
    tails = poisson.sf(np.arange(w.size), lam * t) / lam
    kmax = int(np.searchsorted(-tails, -tol * 1e-3)) + 1
    pt = pmat.T.tocsr()
    v = nu
    acc = tails[0] * (v @ g)
    extra = max(kmax, w.size)
    tails = poisson.sf(np.arange(extra + 1), lam * t) / lam
    for k in range(1, extra + 1):
        v = pt @ v
        acc += tails[k] * (v @ g)
        if tails[k] < tol * 1e-3:
            break
    return float(acc)


def semigroup(q, t, tol=1e-12):
    """Dense exp(Q t) by uniformization (small state spaces only)."""
    size = q.shape[0]
    lam, pmat, w = _uniformization_terms(q, t, tol)
    eye = np.eye(size)
    if pmat is None:
        return eye
    dense = pmat.toarray()
    acc = w[0] * eye
    power = eye
    for k in range(1, w.size):
        power = power @ dense
        acc += w[k] * power
    return acc


def apply_generator(q, g):
    """(L g)(sigma) for a state function g."""
    return q @ np.asarray(g, dtype=float)


def exact_qv_rate(q, space, g):
    """Carre du champ L(g^2) - 2 g L(g), state by state."""
    g = g if isinstance(g, np.ndarray) else space.observable(g)
    return q @ (g * g) - 2.0 * g * (q @ g)


def spectral_gap(q):
    ev = np.linalg.eigvals(-q.toarray())
    ev = np.sort(ev.real)
    return float(ev[1]) if ev.size > 1 else 0.0
