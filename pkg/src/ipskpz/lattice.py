"""Lattices, particle configurations and product invariant measures."""

from dataclasses import dataclass, field

import numpy as np

SPECIES = "ABC"
A, B, C = 0, 1, 2


@dataclass(frozen=True)
class Lattice:
    """A ring ``Z/nZ`` or the segment ``{1, ..., n-1}`` with reservoirs at 0 and n.

    Segment configurations are stored with array index ``site - 1``.
    """

    n: int
    topology: str = "ring"

    def __post_init__(self):
        if self.topology not in ("ring", "segment"):
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.topology == "ring" and self.n < 3:
            raise ValueError("a ring needs n >= 3")
        if self.topology == "segment" and self.n < 2:
            raise ValueError("a segment needs n >= 2")

    @property
    def is_ring(self):
        return self.topology == "ring"

    @property
    def num_sites(self):
        return self.n if self.is_ring else self.n - 1

    @property
    def num_bonds(self):
        # segment bonds [x, x+1] for x = 0..n-1, the outer two touch the reservoirs
        return self.n

    def site_index(self, x):
        return x % self.n if self.is_ring else x - 1


@dataclass
class Configuration:
    """Occupation state: ``kind`` is "exclusion" ({0,1}) or "abc" (0/1/2 for A/B/C)."""

    sites: np.ndarray
    kind: str = "exclusion"

    def __post_init__(self):
        self.sites = np.asarray(self.sites, dtype=np.uint8)
        top = 1 if self.kind == "exclusion" else 2
        if self.kind not in ("exclusion", "abc"):
            raise ValueError(f"unknown configuration kind {self.kind!r}")
        if self.sites.ndim != 1 or (self.sites.size and self.sites.max() > top):
            raise ValueError("site values out of range for " + self.kind)

    def __len__(self):
        return self.sites.size

    def __eq__(self, other):
        return (isinstance(other, Configuration) and self.kind == other.kind
                and np.array_equal(self.sites, other.sites))

    def copy(self):
        return Configuration(self.sites.copy(), self.kind)

    def counts(self):
        """Particle number (exclusion) or the tuple (n_A, n_B, n_C)."""
        if self.kind == "exclusion":
            return int(self.sites.sum())
        return tuple(int(c) for c in np.bincount(self.sites, minlength=3))

    def occupation(self, species=None):
        """Indicator vector of ``species`` (ignored for exclusion)."""
        if self.kind == "exclusion":
            return self.sites.astype(float)
        return (self.sites == species).astype(float)

    def to_string(self):
        if self.kind == "exclusion":
            return "".join("01"[v] for v in self.sites)
        return "".join(SPECIES[v] for v in self.sites)

    @classmethod
    def from_string(cls, text):
        text = text.strip()
        if set(text) <= set("01"):
            return cls(np.array([int(ch) for ch in text], dtype=np.uint8), "exclusion")
        if set(text) <= set(SPECIES):
            return cls(np.array([SPECIES.index(ch) for ch in text], dtype=np.uint8), "abc")
        raise ValueError(f"cannot parse configuration {text!r}")


def species_index(s):
    if isinstance(s, str):
        return SPECIES.index(s.upper())
    if s not in (A, B, C):
        raise ValueError(f"unknown species {s!r}")
    return int(s)


def _check_density(name, value):
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name}={value} must lie in (0, 1)")


@dataclass(frozen=True)
class Bernoulli:
    rho: float

    def __post_init__(self):
        _check_density("rho", self.rho)

    kind = "exclusion"

    def mean(self, species=None):
        return self.rho


@dataclass(frozen=True)
class ABCProduct:
    rho_a: float
    rho_b: float

    def __post_init__(self):
        _check_density("rho_a", self.rho_a)
        _check_density("rho_b", self.rho_b)
        if self.rho_a + self.rho_b >= 1.0:
            raise ValueError("rho_a + rho_b must be < 1")

    kind = "abc"

    @property
    def densities(self):
        return np.array([self.rho_a, self.rho_b, 1.0 - self.rho_a - self.rho_b])

    def mean(self, species):
        return float(self.densities[species_index(species)])


@dataclass(frozen=True)
class BernoulliProfile:
    """Inhomogeneous product measure with site densities ``rho[x]`` (local equilibrium)."""

    rho: np.ndarray = field(compare=False)

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=float)
        if np.any((r < 0) | (r > 1)):
            raise ValueError("profile densities must lie in [0, 1]")
        object.__setattr__(self, "rho", r)

    kind = "exclusion"

    def mean(self, species=None):
        return self.rho


@dataclass(frozen=True)
class ABCProfile:
    rho_a: np.ndarray = field(compare=False)
    rho_b: np.ndarray = field(compare=False)

    def __post_init__(self):
        ra, rb = np.asarray(self.rho_a, float), np.asarray(self.rho_b, float)
        if ra.shape != rb.shape or np.any(ra < 0) or np.any(rb < 0) or np.any(ra + rb > 1 + 1e-12):
            raise ValueError("ABC profile must lie in the simplex")
        object.__setattr__(self, "rho_a", ra)
        object.__setattr__(self, "rho_b", rb)

    kind = "abc"

    def mean(self, species):
        k = species_index(species)
        return (self.rho_a, self.rho_b, 1.0 - self.rho_a - self.rho_b)[k]


def chi(measure):
    """Single-site variance rho (1 - rho) of a Bernoulli measure."""
    if isinstance(measure, (ABCProduct, ABCProfile)):
        raise TypeError("chi is defined for Bernoulli measures; use gamma_cov for ABC")
    rho = measure.rho if isinstance(measure, (Bernoulli, BernoulliProfile)) else float(measure)
    return rho * (1.0 - rho)


def gamma_cov(measure, alpha, beta):
    """Single-site covariance of the species indicators under an ABC product measure."""
    if not isinstance(measure, ABCProduct):
        raise TypeError("gamma_cov needs an ABCProduct measure")
    r = measure.densities
    a, b = species_index(alpha), species_index(beta)
    return r[a] * (1.0 - r[a]) if a == b else -r[a] * r[b]


def static_covariance(measure):
    """2x2 covariance matrix of (xi^A, xi^B) at one site."""
    return np.array([[gamma_cov(measure, i, j) for j in (A, B)] for i in (A, B)])


def sample_sites(measure, num_sites, rng):
    """Raw uint8 site array drawn from ``measure`` with a numpy Generator."""
    u = rng.random(num_sites)
    if isinstance(measure, (Bernoulli, BernoulliProfile)):
        rho = measure.rho
        if np.ndim(rho) and np.size(rho) != num_sites:
            raise ValueError("profile length does not match the lattice")
        return (u < rho).astype(np.uint8)
    if isinstance(measure, ABCProfile):
        if measure.rho_a.size != num_sites:
            raise ValueError("profile length does not match the lattice")
        ra, rb = measure.rho_a, measure.rho_b
    else:
        ra, rb = measure.rho_a, measure.rho_b
    return np.where(u < ra, A, np.where(u < ra + rb, B, C)).astype(np.uint8)


def sample_configuration(measure, lattice, seed):
    """i.i.d. (or independent, for profiles) sites; reproducible for a fixed seed."""
    rng = np.random.default_rng(int(seed) & ((1 << 64) - 1))
    sites = sample_sites(measure, lattice.num_sites, rng)
    return Configuration(sites, measure.kind)


def swap(config, x, lattice=None):
    """Return the configuration with the contents of sites x and x+1 exchanged."""
    n = len(config)
    if lattice is not None and not lattice.is_ring:
        i = lattice.site_index(x)
        if not 0 <= i < n - 1:
            raise ValueError(f"bond [{x},{x + 1}] touches a reservoir; not a swap")
        j = i + 1
    else:
        i, j = x % n, (x + 1) % n
    out = config.sites.copy()
    out[i], out[j] = out[j], out[i]
    return Configuration(out, config.kind)
