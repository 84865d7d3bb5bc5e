"""Rate families and the transition catalog of a configuration.

Rates are stored un-accelerated; the engine multiplies them by ``n**theta``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .lattice import A, B, C, Configuration, Lattice


@dataclass(frozen=True)
class NearestExclusion:
    """Nearest-neighbour exclusion with p(1) = b+ + a/n^g and p(-1) = b- - a/n^g."""

    b_plus: float = 0.5
    b_minus: float = 0.5
    a: float = 0.0
    gamma: float = 0.0

    def rates(self, n):
        d = self.a / n ** self.gamma
        return self.b_plus + d, self.b_minus - d

    def check(self, n):
        pr, pl = self.rates(n)
        if pr < 0 or pl < 0:
            raise ValueError(f"negative jump rate at n={n}: p(1)={pr}, p(-1)={pl}")


def ssep():
    return NearestExclusion(0.5, 0.5, 0.0, 0.0)


def asep(b_plus, b_minus):
    return NearestExclusion(b_plus, b_minus, 0.0, 0.0)


def wasep(a, gamma):
    """gamma-WASEP with p(+-1) = 1/2 +- a / (2 n^gamma)."""
    return NearestExclusion(0.5, 0.5, a / 2.0, gamma)


@dataclass(frozen=True)
class LongJumpExclusion:
    """Exclusion with long jumps p(z) = c_sign(z) / |z|^(1+alpha), |z| <= max_range."""

    alpha: float
    c_plus: float = 1.0
    c_minus: float = 1.0
    max_range: int | None = None

    def check(self, n):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("long-jump exponent must lie in (0, 2)")
        if self.c_plus <= 0 or self.c_minus <= 0:
            raise ValueError("long-jump constants must be positive")
        if self.range(n) < 1:
            raise ValueError("jump range must be >= 1")

    def range(self, n):
        r = n // 2 if self.max_range is None else int(self.max_range)
        return min(r, n // 2)

    def jump_table(self, n):
        """Folded displacements in (0, n) and their rates; displacements of +-n/2 merge."""
        rates = {}
        for z in range(1, self.range(n) + 1):
            for sign, c in ((1, self.c_plus), (-1, self.c_minus)):
                d = (sign * z) % n
                rates[d] = rates.get(d, 0.0) + c / z ** (1.0 + self.alpha)
        disp = np.array(sorted(rates), dtype=np.int64)
        return disp, np.array([rates[d] for d in disp])

    def signed_displacement(self, d, n):
        return d if d <= n // 2 else d - n


@dataclass(frozen=True)
class SlowBond:
    """WASEP with the bond (n-1, 0) slowed to alpha/(2 n^beta) +- a/(2 n^gamma)."""

    a: float = 0.0
    gamma: float = 1.0
    alpha_sb: float = 1.0
    beta_sb: float = 0.0

    def check(self, n):
        if self.alpha_sb <= 0 or self.beta_sb < 0:
            raise ValueError("slow bond needs alpha > 0 and beta >= 0")
        if self.a != 0 and self.gamma < self.beta_sb:
            raise ValueError("slow bond needs gamma >= beta")
        for pr, pl in (self.bulk_rates(n), self.slow_rates(n)):
            if pr < 0 or pl < 0:
                raise ValueError("negative jump rate for the slow bond model")

    def bulk_rates(self, n):
        d = self.a / (2.0 * n ** self.gamma)
        return 0.5 + d, 0.5 - d

    def slow_rates(self, n):
        s = self.alpha_sb / (2.0 * n ** self.beta_sb)
        d = self.a / (2.0 * n ** self.gamma)
        return s + d, s - d


@dataclass(frozen=True)
class Reservoir:
    """Symmetric exclusion on {1..n-1}; reservoirs inject/remove at sites 1 and n-1."""

    alpha: float
    beta: float
    theta: float = 0.0

    def check(self, n):
        for v in (self.alpha, self.beta):
            if not 0.0 < v < 1.0:
                raise ValueError("reservoir densities must lie in (0, 1)")

    def boundary_rates(self, n):
        s = n ** -self.theta
        return {"inject_left": self.alpha * s, "remove_left": (1 - self.alpha) * s,
                "inject_right": self.beta * s, "remove_right": (1 - self.beta) * s}


@dataclass(frozen=True)
class ABC:
    """Three species; (alpha, beta) on a bond exchanges at rate exp((E_alpha - E_beta) / (2 n^gamma))."""

    e_a: float = 0.0
    e_b: float = 0.0
    e_c: float = 0.0
    gamma: float = 1.0

    @property
    def fields(self):
        return np.array([self.e_a, self.e_b, self.e_c], dtype=float)

    def check(self, n):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    def rate_matrix(self, n):
        e = self.fields / (2.0 * n ** self.gamma)
        return np.exp(e[:, None] - e[None, :])


EXCLUSION_MODELS = (NearestExclusion, LongJumpExclusion, SlowBond, Reservoir)


def _nn_rates(model, x, n):
    if isinstance(model, NearestExclusion):
        return model.rates(n)
    if isinstance(model, SlowBond):
        return model.slow_rates(n) if x % n == n - 1 else model.bulk_rates(n)
    if isinstance(model, Reservoir):
        return 0.5, 0.5
    raise TypeError(f"{type(model).__name__} has no nearest-neighbour bond rate")


def _pair(config, x, lattice):
    n = len(config)
    if lattice is None or lattice.is_ring:
        return config.sites[x % n], config.sites[(x + 1) % n]
    i = lattice.site_index(x)
    if not 0 <= i < n - 1:
        raise ValueError(f"bond [{x},{x + 1}] is a reservoir bond")
    return config.sites[i], config.sites[i + 1]


def bond_rate(model, config, x, n=None, lattice=None):
    """Exchange rate of the contents of bond [x, x+1] (zero if both sites agree)."""
    if isinstance(model, ABC):
        raise TypeError("use abc_bond_rate for the ABC model")
    n = lattice.n if lattice is not None else (n or len(config))
    model.check(n)
    left, right = _pair(config, x, lattice)
    pr, pl = _nn_rates(model, x, n)
    if left == 1 and right == 0:
        return pr
    if left == 0 and right == 1:
        return pl
    return 0.0


def abc_bond_rate(model, config, x, n=None):
    """Rate to exchange labels (eta_x, eta_{x+1}); 1 for equal labels (a no-op)."""
    n = n or len(config)
    left, right = _pair(config, x, None)
    if left == right:
        return 1.0
    return math.exp((model.fields[left] - model.fields[right]) / (2.0 * n ** model.gamma))


@dataclass(frozen=True)
class Event:
    """One transition: kind in {"swap", "jump", "inject", "remove"}.

    ``x``/``y`` are lattice site labels (1..n-1 on a segment); for swaps
    ``x`` is the bond [x, x+1].
    """

    kind: str
    x: int
    rate: float
    y: int | None = None
    species: int | None = None


def event_catalog(model, config, lattice):
    """All transitions with positive rate from ``config``; rates un-accelerated."""
    n = lattice.n
    model.check(n)
    s = config.sites
    events = []
    if isinstance(model, ABC):
        rm = model.rate_matrix(n)
        for x in range(n):
            l, r = s[x], s[(x + 1) % n]
            if l != r:
                events.append(Event("swap", x, float(rm[l, r])))
        return events
    if isinstance(model, LongJumpExclusion):
        disp, rates = model.jump_table(n)
        for x in np.flatnonzero(s):
            for d, r in zip(disp, rates):
                y = (x + d) % n
                if s[y] == 0:
                    events.append(Event("jump", int(x), float(r), y=int(y)))
        return events
    if isinstance(model, Reservoir):
        if lattice.is_ring:
            raise ValueError("reservoir dynamics lives on a segment")
        m = len(config)
        for x in range(1, n - 1):
            rate = bond_rate(model, config, x, lattice=lattice)
            if rate > 0:
                events.append(Event("swap", x, rate))
        br = model.boundary_rates(n)
        for site, i, inj, rem in ((1, 0, "inject_left", "remove_left"),
                                  (n - 1, m - 1, "inject_right", "remove_right")):
            if s[i] == 0 and br[inj] > 0:
                events.append(Event("inject", site, br[inj], species=1))
            elif s[i] == 1 and br[rem] > 0:
                events.append(Event("remove", site, br[rem]))
        return events
    for x in range(n):
        rate = bond_rate(model, config, x, lattice=lattice)
        if rate > 0:
            events.append(Event("swap", x, rate))
    return events


def apply_event(config, event, lattice):
    """Configuration reached by ``event`` (a new object)."""
    n = lattice.n
    out = config.sites.copy()
    if event.kind == "swap":
        if lattice.is_ring:
            i, j = event.x % n, (event.x + 1) % n
        else:
            i, j = event.x - 1, event.x
        out[i], out[j] = out[j], out[i]
    elif event.kind == "jump":
        out[event.x], out[event.y] = 0, 1
    elif event.kind == "inject":
        out[lattice.site_index(event.x)] = 1
    elif event.kind == "remove":
        out[lattice.site_index(event.x)] = 0
    else:
        raise ValueError(event.kind)
    return Configuration(out, config.kind)


def instantaneous_current(model, config, x, n=None, species=None, lattice=None):
    """Rightward minus leftward jump rate across bond [x, x+1].

    For ABC the current of ``species`` is returned.
    """
    if isinstance(model, LongJumpExclusion):
        raise TypeError("long jumps have no single-bond current")
    if isinstance(model, ABC):
        if species is None:
            raise ValueError("ABC current needs a species")
        n = n or len(config)
        l, r = _pair(config, x, None)
        if l == r:
            return 0.0
        rm = model.rate_matrix(n)
        if l == species:
            return float(rm[l, r])
        if r == species:
            return -float(rm[l, r])
        return 0.0
    n = lattice.n if lattice is not None else (n or len(config))
    left, right = _pair(config, x, lattice)
    pr, pl = _nn_rates(model, x, n)
    return pr * left * (1 - right) - pl * right * (1 - left)


def abc_current_expansion(model, config, x, species, n=None):
    """First-order expansion in n^-gamma of the ABC species current.

    The exact current differs from it by O(n^(-2 gamma)).
    """
    n = n or len(config)
    s = config.sites
    xl = (s[x % n] == np.arange(3)).astype(float)
    xr = (s[(x + 1) % n] == np.arange(3)).astype(float)
    eps = 1.0 / (2.0 * n ** model.gamma)
    e = model.fields
    a = species
    # symmetric part plus the linearised drift sum_b (E_a - E_b) eps (xi^a_x xi^b_{x+1} + xi^b_x xi^a_{x+1})
    val = xl[a] - xr[a]
    for b in range(3):
        if b != a:
            val += eps * (e[a] - e[b]) * (xl[a] * xr[b] + xl[b] * xr[a])
    return val


def case_one_current(config, x, species, e, gamma, rho=1.0 / 3.0, n=None):
    """Centred form of the expansion when only ``species`` feels a field ``e``.

    xi_x - xi_{x+1} - (e/n^g) xb_x xb_{x+1} + (e (1-2 rho)/(2 n^g)) (xb_x + xb_{x+1})
    + e rho (1-rho) / n^g, with xb = xi - rho.  At rho = 1/3 the linear
    coefficient is e / (6 n^g).
    """
    n = n or len(config)
    s = config.sites
    xl = float(s[x % n] == species) - rho
    xr = float(s[(x + 1) % n] == species) - rho
    g = n ** gamma
    return (xl - xr - e / g * xl * xr + e * (1 - 2 * rho) / (2 * g) * (xl + xr)
            + e * rho * (1 - rho) / g)


def check_model_kind(model, config):
    want = "abc" if isinstance(model, ABC) else "exclusion"
    if config.kind != want:
        raise TypeError(f"{type(model).__name__} needs a {want} configuration")


__all__ = [
    "NearestExclusion", "LongJumpExclusion", "SlowBond", "Reservoir", "ABC", "Event",
    "ssep", "asep", "wasep", "bond_rate", "abc_bond_rate", "event_catalog", "apply_event",
    "instantaneous_current", "abc_current_expansion", "Lattice", "A", "B", "C",
]
