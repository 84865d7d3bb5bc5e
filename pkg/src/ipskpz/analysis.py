"""Dynamic-exponent fits, crossover classification and experiment runs."""

import csv
import hashlib
import json
import math
import os
import platform
import shutil
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import NearestExclusion, SlowBond
from .engine import ensemble_run, trajectory_seeds
from .fields import (FieldSeries, FourierMode, MovingFrame, StructureAccumulator,
                     StructureFunction, density_field, martingale_decomposition, realized_qv)

EW, KPZ_CLASS, INCONCLUSIVE = "EW", "KPZ", "inconclusive"
OUTPUT_ROOT_ENV = "IPSKPZ_OUTPUT_ROOT"


class FitRejected(ValueError):
    pass


@dataclass
class ExponentFit:
    z: float
    se: float
    window: tuple
    r2: float
    points: int
    times: np.ndarray = field(repr=False, default=None)
    sigma: np.ndarray = field(repr=False, default=None)

    def as_row(self):
        return [repr(self.z), repr(self.se), repr(self.window[0]), repr(self.window[1]),
                repr(self.r2), str(self.points)]


def _window(x, s, center, half_width, iterations, span):
    # grow the window from the peak until it holds ``span`` widths on each side
    if half_width > 0:
        keep = np.abs(x) <= half_width
    else:
        # a flat noisy tail can out-peak the bump, so locate it on a smoothed copy
        smooth = np.convolve(np.concatenate([s[-3:], s, s[:3]]), np.ones(7) / 7.0, "valid")
        keep = np.abs(x - x[np.argmax(smooth)]) <= 3.0
    c, sig = 0.0, 0.0
    for _ in range(iterations if half_width <= 0 else 1):
        xs, ss = x[keep], s[keep]
        mass = ss.sum()
        if mass <= 0:
            raise FitRejected("structure function has no positive mass in the window")
        c = float(ss @ xs / mass) if center == "centroid" else 0.0
        sig = math.sqrt(max(float(ss @ (xs - c) ** 2 / mass), 0.0))
        if half_width > 0:
            break
        new = keep | (np.abs(x - c) <= max(span * sig, 3.0))
        if np.array_equal(new, keep):
            break
        keep = new
    return sig, c, keep


def width(x, s, center="centroid", half_width=0.0, iterations=30, span=3.0, se=None):
    """Root-mean-square spread of a profile s(x) about its centroid (or 0).

    With ``half_width`` 0 the window grows from the peak to ``span``
    current widths, which keeps far-field noise out of the second moment.
    Returns (sigma, centre), plus the propagated error of sigma when the
    pointwise errors ``se`` of s are given (treated as independent).
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    sig, c, keep = _window(x, s, center, half_width, iterations, span)
    if se is None:
        return sig, c
    xs, ss, es = x[keep], s[keep], np.asarray(se, dtype=float)[keep]
    grad = ((xs - c) ** 2 - sig ** 2) / ss.sum()
    err = math.sqrt(float(np.sum((grad * es) ** 2))) / (2.0 * sig) if sig > 0 else float("inf")
    return sig, c, err


def fit_dynamic_exponent(sf, center="centroid", half_width=0.0, tmin=None, tmax=None,
                         monotone_tol=0.02):
    """Fit sigma(t) ~ t^(1/z) by least squares in log-log coordinates.

    ``sf`` is a StructureFunction or a (times, x, S[, se]) tuple.  Lags
    with t <= 0 are skipped.  The fit is rejected when the width shrinks
    between consecutive lags by more than three propagated standard errors
    (or, without errors, by more than ``monotone_tol`` relative).
    """
    se_S = None
    if isinstance(sf, StructureFunction):
        times, x, S, se_S = sf.times, sf.x, sf.S, sf.se
    elif len(sf) == 4:
        times, x, S, se_S = sf
    else:
        times, x, S = sf
    times = np.asarray(times, dtype=float)
    S = np.asarray(S, dtype=float)
    sel = times > 0
    if tmin is not None:
        sel &= times >= tmin
    if tmax is not None:
        sel &= times <= tmax
    idx = np.flatnonzero(sel)
    if idx.size < 5:
        raise FitRejected(f"need at least 5 positive times, got {idx.size}")
    t = times[idx]
    if se_S is None:
        sig = np.array([width(x, S[i], center, half_width)[0] for i in idx])
        allowed = sig[:-1] * monotone_tol
    else:
        w = [width(x, S[i], center, half_width, se=se_S[i]) for i in idx]
        sig = np.array([v[0] for v in w])
        err = np.array([v[2] for v in w])
        allowed = 3.0 * np.hypot(err[:-1], err[1:])
    drops = np.flatnonzero(sig[:-1] - sig[1:] > allowed)
    if drops.size:
        i = drops[0]
        raise FitRejected(f"width decreases from {sig[i]:.4g} to {sig[i + 1]:.4g} "
                          f"between t={t[i]:.4g} and t={t[i + 1]:.4g}")
    if np.any(sig <= 0):
        raise FitRejected("zero width")
    res = stats.linregress(np.log(t), np.log(sig))
    z = 1.0 / res.slope
    se = res.stderr / res.slope ** 2
    return ExponentFit(float(z), float(se), (float(t[0]), float(t[-1])), float(res.rvalue ** 2),
                       int(idx.size), t, sig)


def classify(z, ew_min=1.8, kpz_max=1.65):
    if z > ew_min:
        return EW
    if z < kpz_max:
        return KPZ_CLASS
    return INCONCLUSIVE


def classify_crossover(fits, ew_min=1.8, kpz_max=1.65):
    """Rows (gamma, z, class) sorted by gamma; ``fits`` maps gamma to ExponentFit or z."""
    items = list(fits.items()) if isinstance(fits, dict) else list(fits)
    if not items:
        raise ValueError("no fits to classify")
    rows = []
    for g, fit in sorted(items, key=lambda kv: kv[0]):
        z = fit.z if isinstance(fit, ExponentFit) else float(fit)
        rows.append((float(g), z, classify(z, ew_min, kpz_max)))
    return rows


# ---------------------------------------------------------------- experiment runs

@dataclass
class RunResult:
    status: int
    directory: str
    files: list
    message: str = ""


def output_root():
    return os.environ.get(OUTPUT_ROOT_ENV, os.path.join(os.getcwd(), "runs"))


def _write_series(path, times, values):
    FieldSeries(times, values).to_csv(path)
    return path


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions():
    import numba
    import scipy
    return {"ipskpz": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def _plot_scripts(out, cfg, files):
    scripts = []
    series = [f for f in files if os.path.basename(f).startswith("field_") and f.endswith("_autocov.csv")]
    if series:
        path = os.path.join(out, "plot_fields.gp")
        with open(path, "w") as fh:
            fh.write("set datafile separator ','\nset key autotitle columnhead\n")
            fh.write("set xlabel 't'\nset ylabel 'E[Y_t Y_0]'\n")
            fh.write("plot " + ", \\\n     ".join(
                f"'{os.path.basename(f)}' using 1:2 with linespoints" for f in series) + "\n")
        scripts.append(path)
    if any(os.path.basename(f) == "structure.csv" for f in files):
        path = os.path.join(out, "plot_structure.gp")
        with open(path, "w") as fh:
            fh.write("set datafile separator ','\nset xlabel 'x'\nset ylabel 'S(x,t)'\n")
            fh.write("plot 'structure.csv' using 2:3:1 every ::1 with points palette notitle\n")
        scripts.append(path)
    if any(os.path.basename(f) == "fit_sigma.csv" for f in files):
        path = os.path.join(out, "plot_fit.gp")
        with open(path, "w") as fh:
            fh.write("set datafile separator ','\nset logscale xy\nset xlabel 't'\n"
                     "set ylabel 'sigma(t)'\nplot 'fit_sigma.csv' using 1:2 with points notitle\n")
        scripts.append(path)
    return scripts


def run_experiment(config, root=None):
    """Run the ensemble described by ``config`` (path or ExperimentConfig).

    Status 0 on success, 1 for an invalid config (nothing simulated), 2 for
    a failure during the run (an ``INCOMPLETE`` file marks the directory).
    """
    try:
        cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
        cfg.validate()
    except (ConfigError, OSError) as err:
        return RunResult(1, "", [], str(err))
    root = root or output_root()
    out = os.path.join(root, cfg.output_dir or cfg.name)
    marker = os.path.join(out, "INCOMPLETE")
    try:
        if os.path.isdir(out) and os.listdir(out):
            previous = any(os.path.exists(os.path.join(out, f)) for f in ("manifest.json", "INCOMPLETE"))
            if not previous:
                return RunResult(1, out, [], f"{out} exists and is not an earlier run; refusing to overwrite")
            shutil.rmtree(out)
        os.makedirs(out, exist_ok=True)
        with open(marker, "w") as fh:
            fh.write("run in progress\n")
        files = _run(cfg, out)
        manifest = {
            "name": cfg.name, "config_sha256": cfg.digest(), "master_seed": cfg.master_seed,
            "trajectories": cfg.trajectories,
            "seeds": [list(trajectory_seeds(cfg.master_seed, i)) for i in range(cfg.trajectories)],
            "versions": _versions(),
            "files": {os.path.basename(f): _sha256(f) for f in files},
        }
        with open(os.path.join(out, "config.ini"), "w") as fh:
            fh.write(cfg.to_ini())
        with open(os.path.join(out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        scripts = _plot_scripts(out, cfg, files) if cfg.plots else []
        os.remove(marker)
        return RunResult(0, out, files + scripts)
    except Exception as err:  # partial outputs stay, flagged by the marker
        os.makedirs(out, exist_ok=True)
        with open(marker, "w") as fh:
            fh.write(f"run failed: {type(err).__name__}: {err}\n")
        return RunResult(2, out, [], f"{type(err).__name__}: {err}")


def _run(cfg, out):
    model = cfg.build_model()
    lattice = cfg.build_lattice()
    measure = cfg.build_measure()
    scaling = cfg.build_scaling()
    species = cfg.species_index()
    modes = [FourierMode(k) for k in cfg.modes]
    times = np.asarray(scaling.sample_times)
    integrate = cfg.decomposition and isinstance(model, (NearestExclusion, SlowBond))
    frame = MovingFrame(cfg.velocity) if cfg.velocity else None
    acc = None
    if cfg.structure:
        lags = None
        if cfg.lags:
            lags = np.arange(cfg.lags + 1)
        origins = tuple(range(cfg.origins))
        acc = StructureAccumulator(measure, lags, origins, (species, species), cfg.velocity)
    sums = {k: np.zeros((3, times.size)) for k in cfg.modes}
    dsum = {k: np.zeros((2, times.size)) for k in cfg.modes}
    files = []
    for i, rec in enumerate(ensemble_run(model, measure, lattice, scaling, cfg.trajectories,
                                         cfg.master_seed, workers=cfg.workers,
                                         integrate=integrate)):
        if cfg.dump_trajectories:
            p, c = rec.to_csv(os.path.join(out, f"trajectory_{i:04d}.csv"))
            files += [p] + ([c] if c else [])
        for k, f in zip(cfg.modes, modes):
            y = density_field(rec, f, measure, frame, species=species)
            sums[k] += np.stack([y.values, y.values ** 2, y.values * y.values[0]])
            if i < cfg.series_trajectories:
                files.append(y.to_csv(os.path.join(out, f"field_k{k}_traj{i:04d}.csv")))
            if cfg.decomposition:
                d = martingale_decomposition(rec, f, model, measure, frame, cfg.theta, species)
                dsum[k] += np.stack([realized_qv(d.M), d.K.values ** 2])
        if acc is not None:
            acc.add(rec)
    m = cfg.trajectories
    for k in cfg.modes:
        mean, sq, auto = sums[k] / m
        files.append(_write_series(os.path.join(out, f"field_k{k}_mean.csv"), times, mean))
        files.append(_write_series(os.path.join(out, f"field_k{k}_var.csv"), times, sq - mean ** 2))
        files.append(_write_series(os.path.join(out, f"field_k{k}_autocov.csv"), times, auto))
        if cfg.decomposition:
            qv, k2 = dsum[k] / m
            files.append(_write_series(os.path.join(out, f"qv_k{k}.csv"), times, qv))
            files.append(_write_series(os.path.join(out, f"k2_k{k}.csv"), times, k2))
    if acc is not None:
        sf = acc.result()
        files.append(sf.to_csv(os.path.join(out, "structure.csv")))
        if cfg.fit:
            files += _write_fit(cfg, sf, out)
    return files


def _write_fit(cfg, sf, out):
    path = os.path.join(out, "fit.csv")
    try:
        fit = fit_dynamic_exponent(sf, cfg.center, cfg.half_width)
    except FitRejected as err:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["status", "message"])
            w.writerow(["rejected", str(err)])
        return [path]
    gamma = cfg.model.get("gamma", float("nan"))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "z", "se", "tmin", "tmax", "r2", "points", "class"])
        w.writerow([repr(float(gamma))] + fit.as_row() + [classify(fit.z, cfg.ew_min, cfg.kpz_max)])
    spath = os.path.join(out, "fit_sigma.csv")
    with open(spath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "sigma"])
        for t, s in zip(fit.times, fit.sigma):
            w.writerow([repr(float(t)), repr(float(s))])
    return [path, spath]


def read_structure_csv(path):
    """Load a ``t,x,S[,se]`` file back into (times, x, S) or (times, x, S, se)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(data[:, 0])
    xs = np.unique(data[:, 1])
    S = np.zeros((times.size, xs.size))
    ti = np.searchsorted(times, data[:, 0])
    xi = np.searchsorted(xs, data[:, 1])
    S[ti, xi] = data[:, 2]
    if data.shape[1] < 4:
        return times, xs, S
    se = np.zeros_like(S)
    se[ti, xi] = data[:, 3]
    return times, xs, S, se
