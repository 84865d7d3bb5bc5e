"""Reference PDE solvers on the unit torus and helpers to compare them with
empirical density profiles.

Grids are nodal: ``u_i = i / m`` for ``i = 0..m-1``, which is the embedding
of site ``i`` of a ring of size ``m``.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .lattice import ABCProfile, BernoulliProfile

CFL = 0.4


@dataclass
class GridFunction:
    """Nodal values on the torus; ``values2`` holds rho^B for ABC pairs."""

    values: np.ndarray
    t: float = 0.0
    values2: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values2 is not None:
            self.values2 = np.asarray(self.values2, dtype=float)
            if self.values2.shape != self.values.shape:
                raise ValueError("paired grid functions need equal shapes")

    @property
    def m(self):
        return self.values.size

    @property
    def u(self):
        return np.arange(self.m) / self.m

    @classmethod
    def from_function(cls, func, m, func2=None):
        u = np.arange(m) / m
        return cls(func(u), 0.0, None if func2 is None else func2(u))

    def mass(self):
        return float(self.values.mean())

    def check_density(self, tol=1e-9):
        if np.any(self.values < -tol) or np.any(self.values > 1 + tol):
            raise ValueError("density outside [0, 1]")
        if self.values2 is not None:
            b = self.values2
            if np.any(b < -tol) or np.any(self.values + b > 1 + tol):
                raise ValueError("ABC densities left the simplex")

    def coarsen(self, m):
        """Block means over ``self.m // m`` consecutive nodes."""
        if self.m % m:
            raise ValueError(f"cannot coarsen {self.m} nodes into {m} blocks")
        b = self.m // m
        v2 = None if self.values2 is None else self.values2.reshape(m, b).mean(axis=1)
        return GridFunction(self.values.reshape(m, b).mean(axis=1), self.t, v2, dict(self.meta))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "value"] + ([] if self.values2 is None else ["value2"]))
            for i, u in enumerate(self.u):
                row = [repr(float(u)), repr(float(self.values[i]))]
                if self.values2 is not None:
                    row.append(repr(float(self.values2[i])))
                w.writerow(row)
        return path


# ---------------------------------------------------------------- spectral solvers

def _wavenumbers(m):
    return 2.0 * math.pi * np.fft.rfftfreq(m, d=1.0 / m)


def _spectral(init, multiplier, t):
    v = np.fft.irfft(np.fft.rfft(init.values) * multiplier, n=init.m)
    return GridFunction(v, init.t + t, None, dict(init.meta))


def solve_heat(init, t, diffusivity=0.5):
    """Exact Fourier solution of d_t rho = D rho''."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    w = _wavenumbers(init.m)
    return _spectral(init, np.exp(-diffusivity * w ** 2 * t), t)


def solve_fractional_heat(init, t, alpha, c):
    """d_t rho = -c (-Lap)^(alpha/2) rho with the multiplier |2 pi k|^alpha."""
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2]")
    if t < 0:
        raise ValueError("t must be nonnegative")
    w = _wavenumbers(init.m)
    return _spectral(init, np.exp(-c * np.abs(w) ** alpha * t), t)


def long_jump_constant(alpha, c_jump=1.0):
    """Fractional-heat constant of symmetric jumps c / |z|^(1 + alpha).

    sum_z p(z) (1 - cos(theta z)) ~ 2 c_jump int_0^inf (1 - cos u) u^(-1-alpha) du |theta|^alpha
    and the integral equals pi / (2 Gamma(1 + alpha) sin(pi alpha / 2)).
    """
    return c_jump * math.pi / (gamma_fn(1.0 + alpha) * math.sin(math.pi * alpha / 2.0))


# ---------------------------------------------------------------- finite differences

def _rk2(rhs, y0, t, dt):
    steps = max(1, int(math.ceil(t / dt))) if t > 0 else 0
    if steps == 0:
        return y0.copy()
    h = t / steps
    y = y0.copy()
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + h * k1)
        y = y + 0.5 * h * (k1 + k2)
    return y


def _burgers_rhs(c, nu, h):
    def rhs(r):
        mid = 0.5 * (r + np.roll(r, -1))
        flux = c * mid * (1.0 - mid) - nu * (np.roll(r, -1) - r) / h
        return -(flux - np.roll(flux, 1)) / h
    return rhs


def solve_viscous_burgers(init, t, b_plus, viscosity=0.5):
    """d_t rho = nu rho'' + (1 - 2 b_plus) (rho (1 - rho))' by flux-form RK2.

    The drift flux (2 b_plus - 1) rho (1 - rho) is evaluated at the interface
    midpoint value, diffusion by the central stencil; both second order.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    h = 1.0 / init.m
    c = 2.0 * b_plus - 1.0
    dt = CFL * min(h * h / (2.0 * viscosity) if viscosity > 0 else np.inf,
                   h / abs(c) if c else np.inf)
    if not np.isfinite(dt):
        return GridFunction(init.values.copy(), init.t + t, None, dict(init.meta))
    y = _rk2(_burgers_rhs(c, viscosity, h), init.values, t, dt)
    return GridFunction(y, init.t + t, None, dict(init.meta))


def _godunov_flux(rl, rr, c):
    # flux g(r) = c r (1 - r); its extremum sits at r = 1/2
    g = lambda r: c * r * (1.0 - r)
    lo, hi = np.minimum(rl, rr), np.maximum(rl, rr)
    gl, gr = g(lo), g(hi)
    inside = (lo < 0.5) & (hi > 0.5)
    ext = c * 0.25
    fmin = np.minimum(gl, gr)
    fmax = np.maximum(gl, gr)
    if c > 0:
        fmax = np.where(inside, ext, fmax)
    else:
        fmin = np.where(inside, ext, fmin)
    return np.where(rl <= rr, fmin, fmax)


def solve_inviscid_burgers(init, t, b_plus):
    """Godunov entropy solution for the flux (2 b_plus - 1) rho (1 - rho)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    h = 1.0 / init.m
    c = 2.0 * b_plus - 1.0
    r = init.values.copy()
    if c == 0.0 or t == 0.0:
        return GridFunction(r, init.t + t, None, dict(init.meta))
    dt = CFL * h / abs(c)
    steps = int(math.ceil(t / dt))
    dt = t / steps
    for _ in range(steps):
        f = _godunov_flux(r, np.roll(r, -1), c)
        r = r - dt / h * (f - np.roll(f, 1))
    return GridFunction(r, init.t + t, None, dict(init.meta))


def mobility(ra, rb):
    """X(rho) = [[ra(1-ra), -ra rb], [-ra rb, rb(1-rb)]] (broadcasts over arrays)."""
    ra, rb = np.asarray(ra, float), np.asarray(rb, float)
    return np.array([[ra * (1 - ra), -ra * rb], [-ra * rb, rb * (1 - rb)]])


def abc_drift(ra, rb, fields):
    """X(rho) g_E with g_E = (E_A - E_C, E_B - E_C)."""
    ea, eb, ec = fields
    ga, gb = ea - ec, eb - ec
    return (ra * (1 - ra) * ga - ra * rb * gb, rb * (1 - rb) * gb - ra * rb * ga)


def solve_abc_hydro(init, t, fields, diffusivity=1.0, tol=1e-8):
    """d_t rho = D rho'' - (X(rho) g_E)' for rho = (rho^A, rho^B), flux-form RK2."""
    if init.values2 is None:
        raise ValueError("ABC hydrodynamics needs (rho^A, rho^B)")
    init.check_density(tol)
    m = init.m
    h = 1.0 / m
    ea, eb, ec = (float(e) for e in fields)
    speed = 2.0 * (abs(ea - ec) + abs(eb - ec)) + 1e-300
    dt = CFL * min(h * h / (2.0 * diffusivity), h / speed)

    def rhs(y):
        ra, rb = y[:m], y[m:]
        ma, mb = 0.5 * (ra + np.roll(ra, -1)), 0.5 * (rb + np.roll(rb, -1))
        da, db = abc_drift(ma, mb, (ea, eb, ec))
        fa = da - diffusivity * (np.roll(ra, -1) - ra) / h
        fb = db - diffusivity * (np.roll(rb, -1) - rb) / h
        return np.concatenate([-(fa - np.roll(fa, 1)) / h, -(fb - np.roll(fb, 1)) / h])

    y = _rk2(rhs, np.concatenate([init.values, init.values2]), t, dt)
    out = GridFunction(y[:m], init.t + t, y[m:], dict(init.meta))
    try:
        out.check_density(tol)
    except ValueError as err:
        raise ValueError(f"{err}: min rho^A={y[:m].min():.3g}, min rho^B={y[m:].min():.3g}, "
                         f"max sum={(y[:m] + y[m:]).max():.6g}") from None
    return out


# ---------------------------------------------------------------- OU modes

def ou_mode_covariance(k, t, a_coef, c_coef):
    """E[Y_t(f_k) Y_0(f_k)] for dY = A Lap Y dt + sqrt(C) grad dW at stationarity.

    Equals (C / 2A) exp(-A (2 pi k)^2 t); the k = 0 mode is conserved.
    """
    if a_coef <= 0:
        raise ValueError("A must be positive")
    static = c_coef / (2.0 * a_coef)
    return static * math.exp(-a_coef * (2.0 * math.pi * k) ** 2 * abs(t))


# ---------------------------------------------------------------- comparison

def profile_measure(rho, n, rho_b=None):
    """Local-equilibrium product measure with site densities rho(x/n)."""
    u = np.arange(n) / n
    if rho_b is None:
        return BernoulliProfile(rho(u))
    return ABCProfile(rho(u), rho_b(u))


def empirical_profile(records, k, m, species=None):
    """Ensemble-mean occupation at sample ``k``, averaged over m blocks of n/m sites.

    Returns the profile and the per-block standard error.
    """
    total, total2, count, n = None, None, 0, None
    for rec in records:
        n = rec.n
        if n % m:
            raise ValueError("block count must divide n")
        row = rec.sites[k]
        occ = (row == species).astype(float) if rec.kind == "abc" else row.astype(float)
        blocks = occ.reshape(m, n // m).mean(axis=1)
        total = blocks if total is None else total + blocks
        total2 = blocks ** 2 if total2 is None else total2 + blocks ** 2
        count += 1
    mean = total / count
    var = np.maximum(total2 / count - mean ** 2, 0.0) * count / max(count - 1, 1)
    return GridFunction(mean, float(rec.times[k])), np.sqrt(var / count)


def hydro_compare(empirical, pde, norm="L1"):
    """Distance between block profiles; the finer grid is block-averaged first."""
    a, b = empirical, pde
    if a.m != b.m:
        if b.m % a.m == 0:
            b = b.coarsen(a.m)
        elif a.m % b.m == 0:
            a = a.coarsen(b.m)
        else:
            raise ValueError("incompatible grids")
    d = np.abs(a.values - b.values)
    if a.values2 is not None and b.values2 is not None:
        d = np.concatenate([d, np.abs(a.values2 - b.values2)])
    if norm == "L1":
        return float(d.mean())
    if norm in ("Linf", "L∞"):
        return float(d.max())
    raise ValueError("norm must be 'L1' or 'Linf'")


__all__ = [
    "GridFunction", "solve_heat", "solve_fractional_heat", "long_jump_constant",
    "solve_viscous_burgers", "solve_inviscid_burgers", "solve_abc_hydro", "mobility", "abc_drift",
    "ou_mode_covariance", "profile_measure", "empirical_profile", "hydro_compare",
]
