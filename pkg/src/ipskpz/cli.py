"""Command line: ``ipskpz run|validate|fit|modes``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
Outputs go under ``$IPSKPZ_OUTPUT_ROOT`` (default ``./runs``).
"""

import argparse
import sys

import numpy as np

from .analysis import (OUTPUT_ROOT_ENV, FitRejected, classify, fit_dynamic_exponent,
                       read_structure_csv, run_experiment)
from .config import ConfigError, load_config
from .modes import frame_velocity, normal_modes

OK, CONFIG_ERROR, RUNTIME_ERROR = 0, 1, 2


def _run(args):
    res = run_experiment(args.config)
    if res.status:
        print(f"error: {res.message}", file=sys.stderr)
        if res.directory:
            print(f"partial output in {res.directory}", file=sys.stderr)
        return res.status
    print(res.directory)
    for f in res.files:
        print(f"  {f}")
    return OK


def _validate(args):
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as err:
        print(f"invalid: {err}", file=sys.stderr)
        return CONFIG_ERROR
    print(f"ok: {cfg.name} ({cfg.model['type']}, n={cfg.n}, {cfg.trajectories} trajectories)")
    print(f"sha256 {cfg.digest()}")
    return OK


def _fit(args):
    try:
        data = read_structure_csv(args.csv)
    except (OSError, ValueError) as err:
        print(f"cannot read {args.csv}: {err}", file=sys.stderr)
        return CONFIG_ERROR
    try:
        fit = fit_dynamic_exponent(data, args.center, args.half_width,
                                   args.tmin, args.tmax)
    except FitRejected as err:
        print(f"fit rejected: {err}", file=sys.stderr)
        return RUNTIME_ERROR
    print("z,se,tmin,tmax,r2,points,class")
    print(",".join(fit.as_row() + [classify(fit.z, args.ew_min, args.kpz_max)]))
    return OK


def _modes(args):
    try:
        fields = [float(s) for s in args.fields.split(",")]
        rho = [float(s) for s in args.rho.split(",")]
        if len(fields) != 3 or len(rho) != 2:
            raise ValueError("need three fields and two densities")
        spec = normal_modes(rho, fields)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return CONFIG_ERROR
    print(f"delta = {spec.delta:.12g}")
    if spec.degenerate:
        print("degenerate characteristic speeds; no class prediction")
        return OK
    print("mode,c_alpha,c_alpha+1,speed,frame_velocity,class")
    for name, w, lam, cls in zip(("Z", "Z~"), spec.coefficients, spec.eigenvalues, spec.classes):
        v = frame_velocity(lam, args.n, args.gamma)
        print(f"{name},{w[0]:.12g},{w[1]:.12g},{lam:.12g},{v:.12g},{cls}")
    return OK


def build_parser():
    p = argparse.ArgumentParser(prog="ipskpz", description=__doc__.splitlines()[0],
                                epilog=f"output root: ${OUTPUT_ROOT_ENV} (default ./runs)")
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.set_defaults(func=_run)
    v = sub.add_parser("validate", help="check a config without simulating")
    v.add_argument("config")
    v.set_defaults(func=_validate)
    f = sub.add_parser("fit", help="fit the dynamic exponent of a t,x,S[,se] structure-function CSV")
    f.add_argument("csv")
    f.add_argument("--center", choices=("centroid", "origin"), default="centroid")
    f.add_argument("--half-width", type=float, default=0.0)
    f.add_argument("--tmin", type=float)
    f.add_argument("--tmax", type=float)
    f.add_argument("--ew-min", type=float, default=1.8)
    f.add_argument("--kpz-max", type=float, default=1.65)
    f.set_defaults(func=_fit)
    m = sub.add_parser("modes", help="normal modes for ABC fields E_A,E_B,E_C")
    m.add_argument("fields", help="comma separated, e.g. 1,0,0")
    m.add_argument("--rho", default=f"{1/3!r},{1/3!r}")
    m.add_argument("--n", type=int, default=1)
    m.add_argument("--gamma", type=float, default=2.0)
    m.set_defaults(func=_modes)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    np.seterr(all="ignore")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
