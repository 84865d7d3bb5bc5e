"""Fluctuation-field estimators on simulated trajectories.

Sites are labelled ``x = 0..n-1`` on a ring (and ``1..n-1`` on a segment) and
embedded at ``x / n`` in the unit torus.  A test function ``f`` enters a
field through its values on that grid, so every estimator below works with
plain arrays of length ``n``.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .dynamics import ABC, NearestExclusion, SlowBond
from .lattice import A, B, ABCProduct, Bernoulli, chi, gamma_cov, species_index, static_covariance

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------- test functions

@dataclass(frozen=True)
class FourierMode:
    """Real orthonormal Fourier basis on the unit torus.

    k > 0: sqrt(2) cos(2 pi k u); k < 0: sqrt(2) sin(2 pi |k| u); k = 0: 1.
    """

    k: int

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.k == 0:
            return np.ones_like(u)
        w = TWO_PI * abs(self.k)
        return math.sqrt(2.0) * (np.cos(w * u) if self.k > 0 else np.sin(w * u))

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        if self.k == 0:
            return np.zeros_like(u)
        w = TWO_PI * abs(self.k)
        return math.sqrt(2.0) * w * (-np.sin(w * u) if self.k > 0 else np.cos(w * u))

    def second_derivative(self, u):
        return -(TWO_PI * self.k) ** 2 * self(u)

    def norm2(self):
        return 1.0

    def grad_norm2(self):
        return (TWO_PI * self.k) ** 2


@dataclass(frozen=True)
class Tabulated:
    """Values on the grid ``x / m``, x = 0..m-1, extended periodically.

    Off-grid arguments snap to the nearest grid point; derivatives are
    centred differences.
    """

    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).copy())

    @property
    def m(self):
        return self.values.size

    def _index(self, u):
        return np.rint(np.asarray(u, dtype=float) * self.m).astype(np.int64) % self.m

    def __call__(self, u):
        return self.values[self._index(u)]

    def derivative(self, u):
        v = self.values
        d = (np.roll(v, -1) - np.roll(v, 1)) * (self.m / 2.0)
        return d[self._index(u)]

    def norm2(self):
        return float(np.mean(self.values ** 2))

    def grad_norm2(self):
        return float(np.mean(((np.roll(self.values, -1) - self.values) * self.m) ** 2))


@dataclass(frozen=True)
class IdentityApprox:
    """i_eps(x0)(u) = eps^-1 on the half-open arc (x0, x0 + eps] of the torus.

    Half-open so that, on the grid x / n with eps n = l, the field
    Y(i_eps(x / n)) equals sqrt(n) times the right box average of size l.
    """

    x0: float
    eps: float

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")

    def __call__(self, u):
        d = (np.asarray(u, dtype=float) - self.x0) % 1.0
        # tolerance keeps grid points exactly at x0 + eps inside
        inside = (d > 1e-12) & (d <= self.eps + 1e-12)
        return inside / self.eps

    def derivative(self, u):
        raise ValueError("an indicator has no pointwise derivative")

    def norm2(self):
        return 1.0 / self.eps


def grid_values(f, n, shift=0.0, labels=None):
    """``f((x + shift) / n)`` at the site labels (default 0..n-1)."""
    x = np.arange(n) if labels is None else np.asarray(labels)
    return f((x + shift) / n)


def discrete_operators(f, n):
    """Forward gradient n[f(x+1) - f(x)] and Laplacian n^2[f(x+1) - 2f(x) + f(x-1)].

    Both are returned as :class:`Tabulated` on the ring grid.
    """
    v = grid_values(f, n)
    up = np.roll(v, -1)
    down = np.roll(v, 1)
    return Tabulated(n * (up - v)), Tabulated(n * n * (up - 2.0 * v + down))


def discrete_norm2(values):
    """||g||_{2,n}^2 = (1/n) sum_x g(x)^2 for values on the n sites."""
    values = np.asarray(values, dtype=float)
    return float(np.sum(values ** 2) / values.size)


# ---------------------------------------------------------------- frames and series

@dataclass(frozen=True)
class MovingFrame:
    """Translation of test functions by ``velocity * t`` sites (macroscopic t)."""

    velocity: float = 0.0
    species: int | None = None

    def shift(self, t, n=None):
        s = self.velocity * t
        if n is not None and abs(s) > n / 2:
            warnings.warn("frame shift exceeds half the ring; wrap-around mixes the field",
                          RuntimeWarning, stacklevel=3)
        return s


REST = MovingFrame(0.0)


@dataclass
class FieldSeries:
    times: np.ndarray
    values: np.ndarray
    kind: str = "density"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("one value per sample time")

    def __len__(self):
        return self.times.size

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])
        return path


def site_labels(record):
    return np.arange(record.n) if record.topology == "ring" else np.arange(1, record.n)


def occupation(record, species=None):
    """(K, sites) float array of the species indicator (or occupation)."""
    if record.kind == "abc":
        if species is None:
            raise ValueError("ABC fields need a species")
        return (record.sites == species).astype(float)
    return record.sites.astype(float)


def site_mean(measure, species=None):
    m = measure.mean(species)
    return np.asarray(m, dtype=float)


def centered(record, measure, species=None):
    return occupation(record, species) - site_mean(measure, species)


def _frame_grid(f, record, frame, times):
    # (K, sites) array of f((x + v t_k) / n)
    n = record.n
    labels = site_labels(record)
    frame = frame or REST
    if frame.velocity == 0.0:
        return np.broadcast_to(grid_values(f, n, 0.0, labels), (len(times), labels.size))
    return np.stack([grid_values(f, n, frame.shift(t, n), labels) for t in times])


def density_field(record, f, measure, frame=None, t=None, species=None):
    """Y_t(f) = n^(-1/2) sum_x f((x + v t)/n) (xi_x(t) - mean).

    With ``t`` None the whole :class:`FieldSeries` is returned.
    """
    xb = centered(record, measure, species)
    fg = _frame_grid(f, record, frame, record.times)
    vals = np.einsum("kx,kx->k", fg, xb) / math.sqrt(record.n)
    if t is None:
        return FieldSeries(record.times, vals, "density",
                           {"n": record.n, "species": species,
                            "velocity": (frame or REST).velocity})
    k = _time_index(record, t)
    return float(vals[k])


def _time_index(record, t):
    k = int(np.searchsorted(record.times, t))
    if k >= record.times.size or not math.isclose(record.times[k], t, rel_tol=1e-12, abs_tol=1e-15):
        raise ValueError(f"t={t} is not a sample time")
    return k


def current_field(record, x, t=None, species=0):
    """Net signed crossings of bond [x, x+1] up to time t (all times if t is None)."""
    j = record.current(species)[:, x]
    if t is None:
        return j
    return int(j[_time_index(record, t)])


# ---------------------------------------------------------------- box averages

def box_averages(xbar, ell, direction="right"):
    """Box means of the last axis on a ring, for every x at once.

    right: mean of xbar[x+1..x+ell]; left: mean of xbar[x-ell..x-1].
    """
    xbar = np.asarray(xbar, dtype=float)
    n = xbar.shape[-1]
    if not 1 <= ell <= n // 2:
        raise ValueError("box size must satisfy 1 <= ell <= n/2")
    c = np.concatenate([np.zeros(xbar.shape[:-1] + (1,)), np.cumsum(xbar, axis=-1)], axis=-1)
    total = c[..., -1:]
    x = np.arange(n)
    if direction == "right":
        lo, hi = x + 1, x + ell + 1
    elif direction == "left":
        lo, hi = x - ell, x
    else:
        raise ValueError("direction must be 'left' or 'right'")
    # wrap the prefix sums periodically
    def prefix(i):
        q, r = np.divmod(i, n)
        return c[..., r] + q * total
    return (prefix(hi) - prefix(lo)) / ell


def box_average(config, x, ell, direction, measure, species=None):
    """Centred mean over the box to the right (x+1..x+ell) or left (x-ell..x-1) of x."""
    xi = config.occupation(species) - site_mean(measure, species)
    return float(box_averages(xi, ell, direction)[x % len(config)])


# ---------------------------------------------------------------- time integrals

def _check_grid(times, t, minimum=100):
    k = int(np.searchsorted(times, t * (1 + 1e-12), side="right"))
    if times[0] != 0.0:
        raise ValueError("time integrals need the sample grid to start at 0")
    if k < minimum:
        raise ValueError(f"only {k} sample points in [0, {t}]; at least {minimum} are needed "
                         "for the trapezoid rule")
    return k


def bg_integrand(xbar, v, ell, chi_value):
    """sum_x v(x) [xb_x xb_{x+1} - (right box of size ell)^2 + chi/ell], per row."""
    pair = xbar * np.roll(xbar, -1, axis=-1)
    box = box_averages(xbar, ell, "right")
    return (pair - box ** 2 + chi_value / ell) @ v


def bg_residual(ensemble, v, t, L, measure):
    """Second moment of the time-integrated Boltzmann-Gibbs residual.

    ``L`` may be a single box size or a sequence (one pass over the
    ensemble).  Returns (mean, standard error), arrays when ``L`` is a
    sequence.  Integrals use the trapezoid rule on the sample grid, which
    must hold at least 100 points in [0, t].
    """
    v = np.asarray(v, dtype=float)
    scalar = np.ndim(L) == 0
    Ls = np.atleast_1d(L).astype(int)
    if not np.any(v):
        z = np.zeros(Ls.size)
        return (0.0, 0.0) if scalar else (z, z)
    c = chi(measure)
    sq = []
    for rec in ensemble:
        k = _check_grid(rec.times, t)
        if rec.n // 2 < Ls.max():
            raise ValueError("box size exceeds n/2")
        xb = centered(rec, measure)[:k]
        row = [trapezoid(bg_integrand(xb, v, ell, c), rec.times[:k]) ** 2 for ell in Ls]
        sq.append(row)
    sq = np.asarray(sq)
    mean = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / math.sqrt(sq.shape[0]) if sq.shape[0] > 1 else np.full(Ls.size, np.nan)
    return (float(mean[0]), float(se[0])) if scalar else (mean, se)


def bg_envelope(t, L, n):
    """The bound shape t [L/n + t n / L^2] (without the constant and norm)."""
    L = np.asarray(L, dtype=float)
    return t * (L / n + t * n / L ** 2)


# ---------------------------------------------------------------- Dynkin decomposition

def _exclusion_coefficients(model, n, theta, rho, fgrid):
    """Linear, constant and pair coefficients of L Y(f) for nearest-neighbour exclusion.

    L Y(f) = sum_x lin[x] xb_x + const + sum_b quad[b] xb_b xb_{b+1}.
    """
    if isinstance(model, NearestExclusion):
        p, q = model.rates(n)
        p = np.full(n, p)
        q = np.full(n, q)
    elif isinstance(model, SlowBond):
        p = np.empty(n)
        q = np.empty(n)
        p[:], q[:] = model.bulk_rates(n)
        p[-1], q[-1] = model.slow_rates(n)
    else:
        raise TypeError(f"no Dynkin decomposition for {type(model).__name__}")
    s, d = (p + q) / 2.0, (p - q) / 2.0
    grad = n * (np.roll(fgrid, -1) - fgrid)      # forward gradient on bond b
    pref = n ** (theta - 1.5)
    sg, dg = s * grad, d * grad
    lin = pref * (sg - np.roll(sg, 1) + (1.0 - 2.0 * rho) * (dg + np.roll(dg, 1)))
    const = pref * 2.0 * rho * (1.0 - rho) * dg.sum()
    quad = -2.0 * pref * dg
    return lin, const, quad


def _abc_drift(model, n, theta, rates, occ3, species, fgrid):
    """Exact L Y^species(f) per sample and its linearisation around the product densities."""
    a = species
    grad = n * (np.roll(fgrid, -1, axis=-1) - fgrid)
    pref = n ** (theta - 1.5)
    left = occ3                                   # (3, K, n) indicators
    right = np.roll(occ3, -1, axis=-1)
    rm = model.rate_matrix(n)
    # exact current of species a across each bond
    cur = np.zeros(occ3.shape[1:])
    for b in range(3):
        if b != a:
            cur += rm[a, b] * left[a] * right[b] - rm[b, a] * left[b] * right[a]
    exact = pref * np.sum(cur * grad, axis=-1)
    # linearisation: symmetric part plus first order in the fields
    eps = 1.0 / (2.0 * n ** model.gamma)
    e = model.fields
    xb = occ3 - rates[:, None, None]
    lin_cur = xb[a] - np.roll(xb[a], -1, axis=-1)
    for b in range(3):
        if b != a:
            lin_cur = lin_cur + eps * (e[a] - e[b]) * (
                rates[b] * (xb[a] + np.roll(xb[a], -1, axis=-1))
                + rates[a] * (xb[b] + np.roll(xb[b], -1, axis=-1)))
    const = pref * eps * 2.0 * rates[a] * sum((e[a] - e[b]) * rates[b] for b in range(3) if b != a)
    linear = pref * np.sum(lin_cur * grad, axis=-1) + const * np.sum(grad, axis=-1)
    return exact, linear


@dataclass
class Decomposition:
    """Y_t - Y_0 = M + I + K, all as series on the record's sample times."""

    Y: FieldSeries
    M: FieldSeries
    I: FieldSeries
    K: FieldSeries
    exact_integrals: bool = False


def martingale_decomposition(record, f, model, measure, frame=None, theta=2.0, species=None):
    """Split the field into martingale, linear drift and nonlinear drift.

    For exclusion models without a moving frame and with occupation
    integrals on the record, I and K are exact; otherwise they are trapezoid
    integrals on the sample grid.  I collects every term linear in the
    centred occupations (for ABC: the linearisation in the fields), K the
    rest, and M = Y_t - Y_0 - I - K.
    """
    n = record.n
    times = record.times
    if record.topology != "ring":
        raise ValueError("decomposition is implemented on the ring")
    frame = frame or REST
    Y = density_field(record, f, measure, frame, species=species)
    sqn = math.sqrt(n)
    if isinstance(model, ABC):
        if species is None:
            raise ValueError("ABC decomposition needs a species")
        rates = np.array([measure.mean(k) for k in range(3)], dtype=float)
        occ3 = np.stack([(record.sites == k).astype(float) for k in range(3)])
        fg = _frame_grid(f, record, frame, times)
        exact, linear = _abc_drift(model, n, theta, rates, occ3, species, fg)
        if frame.velocity != 0.0:
            xb = occ3[species] - rates[species]
            dfg = np.stack([grid_values(f.derivative, n, frame.shift(t), np.arange(n)) for t in times])
            ft = np.einsum("kx,kx->k", dfg, xb) * frame.velocity / (n * sqn)
            exact = exact + ft
            linear = linear + ft
        I = cumulative_trapezoid(linear, times, initial=0.0)
        K = cumulative_trapezoid(exact - linear, times, initial=0.0)
        exact_int = False
    else:
        rho = float(measure.rho)
        if frame.velocity == 0.0 and record.occupation_integral is not None:
            fg = grid_values(f, n)
            lin, const, quad = _exclusion_coefficients(model, n, theta, rho, fg)
            occ = np.vstack([np.zeros(n), record.occupation_integral])
            pair = np.vstack([np.zeros(n), record.pair_integral])
            tt = np.concatenate(([0.0], times))
            # integrals of xb_x and xb_b xb_{b+1} over [0, t_k]
            xb_int = occ - rho * tt[:, None]
            pb_int = pair - rho * (occ + np.roll(occ, -1, axis=1)) + rho * rho * tt[:, None]
            I = (xb_int @ lin + const * tt)[1:]
            K = (pb_int @ quad)[1:]
            if times[0] > 0:
                # the decomposition starts at the first sample, not at 0
                I, K = I - I[0], K - K[0]
            exact_int = True
        else:
            xb = centered(record, measure)
            lin_t = np.empty(times.size)
            quad_t = np.empty(times.size)
            for k, t in enumerate(times):
                s = frame.shift(t, n)
                fg = grid_values(f, n, s)
                lin, const, quad = _exclusion_coefficients(model, n, theta, rho, fg)
                if frame.velocity != 0.0:
                    lin = lin + frame.velocity / (n * sqn) * grid_values(f.derivative, n, s)
                lin_t[k] = xb[k] @ lin + const
                quad_t[k] = (xb[k] * np.roll(xb[k], -1)) @ quad
            I = cumulative_trapezoid(lin_t, times, initial=0.0)
            K = cumulative_trapezoid(quad_t, times, initial=0.0)
            exact_int = False
    dY = Y.values - Y.values[0]
    M = dY - I - K
    meta = dict(Y.meta)
    return Decomposition(Y, FieldSeries(times, M, "martingale", meta),
                         FieldSeries(times, I, "linear", meta),
                         FieldSeries(times, K, "nonlinear", meta), exact_int)


def realized_qv(series, stride=1):
    """Cumulative sum of squared increments over every ``stride``-th sample."""
    v = np.asarray(series.values if isinstance(series, FieldSeries) else series)[::stride]
    return np.concatenate(([0.0], np.cumsum(np.diff(v) ** 2)))


def predictable_qv(record, f, model, theta=2.0):
    """int_0^t Gamma(Y(f)) ds for nearest-neighbour exclusion on the ring.

    Gamma = n^(theta-1) sum_b [p eta_b (1 - eta_{b+1}) + q eta_{b+1} (1 - eta_b)] (f_{b+1} - f_b)^2,
    integrated exactly when occupation integrals are recorded.
    """
    n = record.n
    if isinstance(model, NearestExclusion):
        p, q = model.rates(n)
        p, q = np.full(n, p), np.full(n, q)
    elif isinstance(model, SlowBond):
        p, q = np.empty(n), np.empty(n)
        p[:], q[:] = model.bulk_rates(n)
        p[-1], q[-1] = model.slow_rates(n)
    else:
        raise TypeError(f"no closed-form carre du champ for {type(model).__name__}")
    fg = grid_values(f, n)
    w = n ** (theta - 1.0) * (np.roll(fg, -1) - fg) ** 2
    if record.occupation_integral is not None:
        occ, pair = record.occupation_integral, record.pair_integral
        # eta_b (1 - eta_{b+1}) = eta_b - eta_b eta_{b+1}
        rate = p * (occ - pair) + q * (np.roll(occ, -1, axis=1) - pair)
        return rate @ w
    eta = record.sites.astype(float)
    nxt = np.roll(eta, -1, axis=1)
    gam = (p * eta * (1 - nxt) + q * nxt * (1 - eta)) @ w
    return cumulative_trapezoid(gam, record.times, initial=0.0)


# ---------------------------------------------------------------- energy estimates

def nonlinear_functional(record, f, eps, measure, species=None):
    """Per-sample integrand of A^eps: (1/n) sum_x grad f(x/n) Y(i_eps(x/n))^2.

    Equals sum_x grad_n f(x/n) (right box average of size eps n)^2.
    """
    n = record.n
    ell = int(round(eps * n))
    if ell < 1 or abs(ell - eps * n) > 1e-9 * n:
        raise ValueError("eps * n must be a positive integer")
    grad, _ = discrete_operators(f, n)
    xb = centered(record, measure, species)
    return box_averages(xb, ell, "right") ** 2 @ grad.values


def energy_estimate_stats(ensemble, f, eps, delta, s, t, measure, species=None):
    """Estimators of E[(int_s^t Y_r(Lap f) dr)^2] and E[(A^eps - A^delta)^2].

    Returns ((lhs1, se1), (lhs2, se2)) using trapezoid integrals on the sample grid.
    """
    if not eps > delta > 0:
        raise ValueError("need eps > delta > 0")
    if t < s:
        raise ValueError("need s <= t")
    v1, v2 = [], []
    for rec in ensemble:
        n = rec.n
        sel = (rec.times >= s - 1e-15) & (rec.times <= t + 1e-15)
        tt = rec.times[sel]
        if t == s:
            v1.append(0.0)
            v2.append(0.0)
            continue
        _, lap = discrete_operators(f, n)
        xb = centered(rec, measure, species)[sel]
        y_lap = xb @ lap.values / math.sqrt(n)
        a_eps = nonlinear_functional(rec, f, eps, measure, species)[sel]
        a_del = nonlinear_functional(rec, f, delta, measure, species)[sel]
        v1.append(trapezoid(y_lap, tt) ** 2)
        v2.append(trapezoid(a_eps - a_del, tt) ** 2)
    out = []
    for v in (np.asarray(v1), np.asarray(v2)):
        se = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else float("nan")
        out.append((float(v.mean()), float(se)))
    return tuple(out)


# ---------------------------------------------------------------- structure functions

@dataclass
class StructureFunction:
    """S(x, tau) on displacements x = -n/2 .. n/2 - 1 (rows: lags)."""

    times: np.ndarray
    x: np.ndarray
    S: np.ndarray
    se: np.ndarray
    count: int
    species: tuple = (None, None)

    def moments(self, center=None):
        """Mass, mean and variance of S(., tau) in x, per lag."""
        mass = self.S.sum(axis=1)
        mean = (self.S @ self.x) / mass
        c = mean if center is None else np.broadcast_to(center, mean.shape)
        var = np.sum(self.S * (self.x[None, :] - c[:, None]) ** 2, axis=1) / mass
        return mass, mean, var

    def window(self, half_width):
        keep = np.abs(self.x) <= half_width
        return StructureFunction(self.times, self.x[keep], self.S[:, keep], self.se[:, keep],
                                 self.count, self.species)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "S", "se"])
            for t, row, err in zip(self.times, self.S, self.se):
                for x, s, e in zip(self.x, row, err):
                    w.writerow([repr(float(t)), int(x), repr(float(s)), repr(float(e))])
        return path


def density_speed(model, theta=2.0):
    """Per-record speed of density fluctuations, (p(1) - p(-1)) (1 - 2 rho) n^theta.

    rho is the record's own density, which is conserved on the ring; a
    sampled stationary start differs from the nominal density by O(n^-1/2)
    and the resulting drift would otherwise smear S ballistically.
    """
    if not isinstance(model, NearestExclusion):
        raise TypeError("density_speed needs a nearest-neighbour exclusion model")

    def speed(rec):
        pr, pl = model.rates(rec.n)
        rho = rec.sites[0].mean()
        return (pr - pl) * (1.0 - 2.0 * rho) * float(rec.n) ** theta
    return speed


def _cross_correlation(a, b):
    """(1/n) sum_y a[y + x] b[y] for all x, via FFT; rows of ``a`` against ``b``."""
    n = a.shape[-1]
    return np.fft.irfft(np.fft.rfft(a, axis=-1) * np.conj(np.fft.rfft(b, axis=-1)), n=n, axis=-1) / n


def _weights(sel):
    # species label or (w_A, w_B) mode coefficients -> weight vector on (A, B)
    if sel is not None and np.ndim(sel) == 1:
        w = np.asarray(sel, dtype=float)
        if w.size != 2:
            raise ValueError("mode coefficients act on (Y^A, Y^B)")
        return w
    return np.eye(2)[species_index(sel)] if species_index(sel) < 2 else None


def _mode_field(rec, measure, sel):
    if sel is not None and np.ndim(sel) == 1:
        w = _weights(sel)
        return w[0] * centered(rec, measure, A) + w[1] * centered(rec, measure, B)
    return centered(rec, measure, sel)


def _static_offset(measure, sa, sb):
    if isinstance(measure, Bernoulli):
        return chi(measure)
    wa, wb = _weights(sa), _weights(sb)
    if wa is None or wb is None:
        return gamma_cov(measure, sa, sb)
    return float(wa @ static_covariance(measure) @ wb)


class StructureAccumulator:
    """Streaming estimator behind :func:`structure_function` (one record at a time).

    Each entry of ``species`` is a species label or a pair (w_A, w_B) of mode
    coefficients, in which case the field is w_A Y^A + w_B Y^B.
    """

    def __init__(self, measure, lags=None, origins=(0,), species=(None, None), velocity=0.0,
                 control=True):
        self.measure = measure
        self.offset = None
        if control and isinstance(measure, (Bernoulli, ABCProduct)):
            self.offset = _static_offset(measure, *species)
        self.lags = None if lags is None else np.asarray(lags, dtype=int)
        self.origins = tuple(int(o) for o in origins)
        self.species = tuple(species)
        self.velocity = velocity
        self.total = self.total2 = self.times = None
        self.count = 0
        self.n = None

    def add(self, rec):
        sa, sb = self.species
        if self.lags is None:
            self.lags = np.arange(len(rec) - max(self.origins))
        lags = self.lags
        if max(self.origins) + lags.max() >= len(rec):
            raise ValueError("lags run past the last sample")
        if self.n is not None and rec.n != self.n:
            raise ValueError("records of different sizes")
        self.n = rec.n
        same = sa is sb or (np.ndim(sa) == 0 and np.ndim(sb) == 0 and sa == sb)
        xa = _mode_field(rec, self.measure, sa)
        xbeta = xa if same else _mode_field(rec, self.measure, sb)
        if self.offset is not None:
            # the record's own mass offset d contributes d_a d_b to every x; swap it
            # for its mean cov/n, which leaves E[S] unchanged and removes the noise
            xa = xa - xa.mean(axis=1, keepdims=True)
            xbeta = xa if same else xbeta - xbeta.mean(axis=1, keepdims=True)
        est = np.zeros((lags.size, rec.n))
        for o in self.origins:
            est += _cross_correlation(xa[o + lags], xbeta[o])
        est /= len(self.origins)
        if self.offset is not None:
            est += self.offset / rec.n
        if self.times is None:
            o = self.origins[0]
            self.times = rec.times[o + lags] - rec.times[o]
        v = self.velocity(rec) if callable(self.velocity) else self.velocity
        if v:
            for i, tau in enumerate(self.times):
                est[i] = np.roll(est[i], -int(round(v * tau)))
        if self.total is None:
            self.total, self.total2 = est, est ** 2
        else:
            self.total += est
            self.total2 += est ** 2
        self.count += 1

    def result(self):
        if self.count == 0:
            raise ValueError("empty ensemble")
        c, n = self.count, self.n
        mean = self.total / c
        var = np.maximum(self.total2 / c - mean ** 2, 0.0) * c / max(c - 1, 1)
        se = np.sqrt(var / c)
        order = np.fft.fftshift(np.arange(n))
        x = np.where(order >= n - n // 2, order - n, order)
        return StructureFunction(self.times, x, mean[:, order], se[:, order], c, self.species)


def structure_function(ensemble, measure, lags=None, origins=(0,), species=(None, None),
                       velocity=0.0, control=True):
    """S(x, tau) = E[xb^alpha_x(t0 + tau) xb^beta_0(t0)], translation and origin averaged.

    ``lags`` are offsets in sample index (default: every sample after the
    last origin); ``origins`` are sample indices used as time origins, all
    lags must fit after the last origin.  ``velocity`` (sites per unit
    time, or a function of the record returning it) recentres S by the
    rounded frame shift.  Standard errors come from the spread of
    per-trajectory estimates.

    For homogeneous product measures (``control``) each record is centred by
    its own conserved density and the known mean cov/n of the squared mass
    offset is added back: an unbiased control variate that removes the
    dominant x-independent noise.
    """
    acc = StructureAccumulator(measure, lags, origins, species, velocity, control)
    for rec in ensemble:
        acc.add(rec)
    return acc.result()


__all__ = [
    "FourierMode", "Tabulated", "IdentityApprox", "MovingFrame", "FieldSeries", "grid_values",
    "discrete_operators", "discrete_norm2", "density_field", "current_field", "box_average",
    "box_averages", "bg_integrand", "bg_residual", "bg_envelope", "martingale_decomposition",
    "Decomposition", "realized_qv", "predictable_qv", "nonlinear_functional",
    "energy_estimate_stats", "structure_function", "density_speed", "StructureFunction", "StructureAccumulator", "centered", "occupation",
]
