"""Dynamic exponent of WASEP as the asymmetry exponent gamma varies.

The structure function is measured in the frame moving with the
characteristic speed and its width sigma(t) ~ t^(1/z) is fitted.  Strong
asymmetry (gamma = 1/2) gives the KPZ value z = 3/2, weak asymmetry
(gamma = 1) the diffusive z = 2.  This is a reduced run (n = 1024, 300
trajectories, about a minute); the acceptance suite runs n = 2048.
"""
import numpy as np

from ipskpz.analysis import classify_crossover, fit_dynamic_exponent
from ipskpz.dynamics import wasep
from ipskpz.engine import ScalingSpec, ensemble_run
from ipskpz.fields import structure_function, density_speed
from ipskpz.lattice import Bernoulli, Lattice

n, a, steps, traj, lags, origins = 1024, 30.0, 150.0, 300, 24, 24
meas = Bernoulli(0.5)
fits = {}
for gamma in (0.5, 1.0):
    model = wasep(a, gamma)
    points = lags + origins - 1
    sc = ScalingSpec.grid(2.0, steps / n ** 2 * points / lags, points)
    ens = ensemble_run(model, meas, Lattice(n), sc, traj, 7, counters=False)
    sf = structure_function(ens, meas, lags=np.arange(lags + 1), origins=range(origins),
                            velocity=density_speed(model))
    fits[gamma] = fit_dynamic_exponent(sf, tmin=0.1 * sf.times[-1])
    f = fits[gamma]
    print(f"gamma={gamma}: width {f.sigma[0]:.1f} -> {f.sigma[-1]:.1f} sites, z = {f.z:.3f}")

for gamma, z, cls in classify_crossover(fits):
    print(f"  {gamma:4}  z={z:.2f}  {cls}")
