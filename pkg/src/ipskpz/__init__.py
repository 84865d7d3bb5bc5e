"""Fluctuation fields of interacting particle systems.

Exact simulation of exclusion processes and the ABC model, exact
finite-state oracles, fluctuation-field estimators, hydrodynamic reference
solvers and normal-mode analysis.
"""

__version__ = "0.1.0"

from .lattice import (A, B, C, ABCProduct, ABCProfile, Bernoulli, BernoulliProfile,
                      Configuration, Lattice, chi, gamma_cov, sample_configuration,
                      static_covariance)
from .dynamics import (ABC, LongJumpExclusion, NearestExclusion, Reservoir, SlowBond, asep,
                       event_catalog, instantaneous_current, ssep, wasep)
from .engine import ScalingSpec, TrajectoryRecord, ensemble_run, simulate
from .rng import split

__all__ = [
    "A", "B", "C", "ABCProduct", "ABCProfile", "Bernoulli", "BernoulliProfile", "Configuration",
    "Lattice", "chi", "gamma_cov", "sample_configuration", "static_covariance", "ABC",
    "LongJumpExclusion", "NearestExclusion", "Reservoir", "SlowBond", "asep", "event_catalog",
    "instantaneous_current", "ssep", "wasep", "ScalingSpec", "TrajectoryRecord", "ensemble_run",
    "simulate", "split",
]
