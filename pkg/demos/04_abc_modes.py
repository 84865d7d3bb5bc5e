"""Normal modes of the two-field ABC fluctuations.

At equal densities and fields (E, 0, 0) the current Jacobian has two left
eigenvectors, Z = (1, 0) and Z~ = (1, 2).  They travel in opposite
directions; only Z couples to itself through the current Hessian, so Z is
KPZ and Z~ diffusive.  The equal-time Z/Z~ covariance vanishes under the
product measure.
"""
import numpy as np

from ipskpz.dynamics import ABC
from ipskpz.engine import ScalingSpec, ensemble_run
from ipskpz.fields import structure_function
from ipskpz.lattice import ABCProduct, Lattice, static_covariance
from ipskpz.modes import frame_velocity, normal_modes

rho, fields, n, gamma = (1 / 3, 1 / 3), (12.0, 0.0, 0.0), 256, 0.5
spec = normal_modes(rho, fields)
for w, lam, cls in zip(spec.coefficients, spec.eigenvalues, spec.classes):
    print(f"mode {np.round(w, 3)}  speed {lam:+.3f}  frame velocity "
          f"{frame_velocity(lam, n, gamma):+.1f} sites/unit  {cls}")

meas = ABCProduct(*rho)
z, zt = spec.coefficients
print(f"\nstatic covariance C =\n{static_covariance(meas)}")
print(f"Z C Z~^T = {z @ static_covariance(meas) @ zt:+.2e}")

ens = list(ensemble_run(ABC(*fields, gamma=gamma), meas, Lattice(n),
                        ScalingSpec.grid(2.0, 40.0 / n ** 2, 4), 200, 5, counters=False))
sf = structure_function(ens, meas, species=(z, zt), control=False)
x0 = sf.x == 0
print(f"simulated S_(Z,Z~)(0, t):", " ".join(f"{s:+.4f}+-{e:.4f}"
                                             for s, e in zip(sf.S[:, x0].ravel(), sf.se[:, x0].ravel())))
# the time-lagged moments move apart: Z to the right, Z~ to the left
for w in (z, zt):
    s = structure_function(ens, meas, species=(w, w)).window(40)
    print(f"mode {np.round(w, 2)} centre of mass at last lag: {(s.S[-1] @ s.x) / s.S[-1].sum():+.2f} sites")
