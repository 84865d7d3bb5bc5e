"""Normal modes of the two-species (ABC) fluctuation fields.

The mode directions are left eigenvectors of the current Jacobian
J = d(X(rho) g_E)/d rho.  Class predictions use the self-coupling of each
mode through the Hessian of the current: a mode whose own quadratic
coupling vanishes is predicted diffusive, otherwise KPZ.
"""

import math
from dataclasses import dataclass

import numpy as np

from .hydro import abc_drift, mobility

KPZ, DIFFUSIVE = "KPZ", "diffusive"


def _g(fields):
    ea, eb, ec = (float(e) for e in fields)
    return np.array([ea - ec, eb - ec])


def current_jacobian(rho, fields):
    """J = d(X(rho) g)/d rho for rho = (rho^A, rho^B), differentiated by hand."""
    ra, rb = (float(r) for r in rho)
    if ra <= 0 or rb <= 0 or ra + rb >= 1:
        raise ValueError("rho must lie in the open simplex")
    ga, gb = _g(fields)
    # j_A = ra(1-ra) ga - ra rb gb,  j_B = rb(1-rb) gb - ra rb ga
    return np.array([[(1 - 2 * ra) * ga - rb * gb, -ra * gb],
                     [-rb * ga, (1 - 2 * rb) * gb - ra * ga]])


def current_hessian(rho, fields):
    """H[c, i, j] = d^2 j_c / d rho_i d rho_j (constant in rho)."""
    ga, gb = _g(fields)
    return np.array([[[-2 * ga, -gb], [-gb, 0.0]],
                     [[0.0, -ga], [-ga, -2 * gb]]])


def exact_current(rho, fields, n, gamma):
    """Mean species currents under the product measure at finite n.

    j_a = sum_b rho_a rho_b 2 sinh((E_a - E_b) / (2 n^gamma)), rescaled by
    n^gamma so it tends to X(rho) g_E; the third species is implied.
    """
    ra, rb = rho
    r = np.array([ra, rb, 1 - ra - rb])
    e = np.asarray(fields, float)
    s = n ** gamma
    j = np.array([sum(r[a] * r[b] * 2 * math.sinh((e[a] - e[b]) / (2 * s)) for b in range(3))
                  for a in range(3)])
    return s * j[:2]


def exact_jacobian(rho, fields, n, gamma, h=1e-6):
    """Finite-n Jacobian of :func:`exact_current` in (rho^A, rho^B), C held as 1 - A - B."""
    rho = np.asarray(rho, float)
    cols = []
    for i in range(2):
        d = np.zeros(2)
        d[i] = h
        cols.append((exact_current(rho + d, fields, n, gamma)
                     - exact_current(rho - d, fields, n, gamma)) / (2 * h))
    return np.array(cols).T


@dataclass
class NormalModeSpec:
    """Two modes Z, Z~ as coefficient pairs on (Y^alpha, Y^(alpha+1)).

    ``eigenvalues`` are the characteristic speeds lambda (w^T J = lambda w^T);
    in macroscopic units a mode travels at lambda n^(2-gamma) sites per unit
    time, so its frame velocity is the negative of that.
    """

    coefficients: np.ndarray         # rows: Z, Z~
    eigenvalues: np.ndarray
    classes: tuple
    delta: float
    self_coupling: np.ndarray
    degenerate: bool = False

    @property
    def z(self):
        return self.coefficients[0]

    @property
    def z_tilde(self):
        return self.coefficients[1]


def delta_parameter(fields):
    """(2/3) sqrt(E1^2 + E2^2 - E1 E2) after shifting so that E3 = 0."""
    e1, e2, e3 = (float(e) for e in fields)
    e1, e2 = e1 - e3, e2 - e3
    return 2.0 / 3.0 * math.sqrt(e1 * e1 + e2 * e2 - e1 * e2)


def _normalise(w):
    # first nonzero coefficient scaled to 1, so (1, 2) rather than (0.447, 0.894)
    k = 0 if abs(w[0]) > 1e-12 * np.abs(w).max() else 1
    return w / w[k]


def normal_modes(rho, fields, tol=1e-9):
    """Left eigenvectors of J, their speeds and predicted classes.

    Z is the mode with the larger self-coupling; when exactly one mode has
    zero self-coupling it is Z~ and is predicted diffusive.
    """
    jac = current_jacobian(rho, fields)
    vals, vecs = np.linalg.eig(jac.T)
    if np.any(np.abs(vals.imag) > tol):
        raise ValueError("complex characteristic speeds; the system is not hyperbolic here")
    vals, vecs = vals.real, vecs.real
    d = delta_parameter(fields)
    scale = max(np.abs(_g(fields)).max(), 1.0)
    if abs(vals[0] - vals[1]) <= tol * scale:
        w = np.eye(2)
        return NormalModeSpec(w, vals, (None, None), d, np.zeros(2), degenerate=True)
    hess = current_hessian(rho, fields)
    inv = np.linalg.inv(vecs.T)           # columns: right eigenvectors
    coupling = np.empty(2)
    for i in range(2):
        w, r = vecs[:, i], inv[:, i]
        coupling[i] = float(np.einsum("c,cij,i,j->", w, hess, r, r))
    cls = [KPZ if abs(c) > tol * scale else DIFFUSIVE for c in coupling]
    order = np.argsort(-np.abs(coupling), kind="stable")
    coeffs = np.array([_normalise(vecs[:, i]) for i in order])
    return NormalModeSpec(coeffs, vals[order], tuple(cls[i] for i in order), d,
                          coupling[order])


def case_one_modes():
    """Closed-form modes for fields (E, 0, 0) at equal densities."""
    return np.array([[1.0, 0.0], [1.0, 2.0]])


def case_two_modes():
    """Closed-form modes for fields (E, E, 0) at equal densities."""
    return np.array([[1.0, 1.0], [1.0, -1.0]])


def frame_velocity(eigenvalue, n, gamma):
    """Velocity of the frame co-moving with a mode of speed ``eigenvalue``.

    Fluctuations of the mode travel at eigenvalue * n^(2-gamma) sites per
    unit macroscopic time; the frame velocity is its negative, so for
    fields (E, 0, 0) at rho = 1/3 the Z frame moves at -(E/3) n^(2-gamma).
    """
    return -float(eigenvalue) * float(n) ** (2.0 - gamma)


def mode_speed(model, coefficients, theta=2.0):
    """Per-record travel speed (sites per unit time) of the mode with these coefficients.

    Uses the finite-n Jacobian at the record's own conserved densities and
    the eigenvalue whose left eigenvector is closest in direction to the
    given coefficients; for use as the ``velocity`` of a structure function.
    """
    fields, gamma = model.fields, model.gamma
    w = np.asarray(coefficients, float)
    w = w / np.linalg.norm(w)

    def speed(rec):
        row = rec.sites[0]
        rho = ((row == 0).mean(), (row == 1).mean())
        jac = exact_jacobian(rho, fields, rec.n, gamma) / float(rec.n) ** gamma
        vals, vecs = np.linalg.eig(jac.T)
        vecs = vecs.real / np.linalg.norm(vecs.real, axis=0)
        i = int(np.argmax(np.abs(w @ vecs)))
        return float(vals[i].real) * float(rec.n) ** theta
    return speed


def diagonalization_error(spec, rho, fields):
    """max |R J R^-1 - diag| with R the coefficient rows."""
    jac = current_jacobian(rho, fields)
    r = spec.coefficients
    d = r @ jac @ np.linalg.inv(r)
    return float(np.abs(d - np.diag(np.diag(d))).max())


def mct_first_moment(structure, jacobian, c_stat, n, gamma):
    """Check sum_j j S(j, t) = J C t with J in microscopic units.

    ``structure`` maps species pairs (a, b) in {0, 1}^2 to StructureFunction
    objects sharing lags; ``jacobian`` is the 2x2 macroscopic Jacobian.  On
    a ring of n sites with time accelerated by n^2 and fields of order
    n^-gamma the predicted first moment is n^(2-gamma) J C t sites.

    Returns (residual, fitted constant): the max over lags of the relative
    deviation from the prediction, and the least-squares factor kappa in
    measured = kappa * prediction (1 when the identity holds).
    """
    any_sf = next(iter(structure.values()))
    times = any_sf.times
    x = any_sf.x
    meas = np.zeros((times.size, 2, 2))
    for (a, b), sf in structure.items():
        meas[:, a, b] = sf.S @ x
    pred = np.einsum("ij,jk->ik", jacobian, c_stat)[None] * (n ** (2.0 - gamma) * times)[:, None, None]
    scale = np.abs(pred).max()
    if scale == 0:
        return float(np.abs(meas).max()), float("nan")
    resid = float(np.abs(meas - pred).max() / scale)
    kappa = float(np.sum(meas * pred) / np.sum(pred * pred))
    return resid, kappa


__all__ = [
    "mobility", "abc_drift", "current_jacobian", "current_hessian", "exact_current",
    "exact_jacobian", "NormalModeSpec", "normal_modes", "delta_parameter", "case_one_modes",
    "case_two_modes", "frame_velocity", "mode_speed", "diagonalization_error", "mct_first_moment", "KPZ",
    "DIFFUSIVE",
]
