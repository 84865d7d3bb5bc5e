"""Experiment configuration files.

Grammar: an INI file (``configparser`` dialect, ``#`` comments) with the
sections below; every key is optional unless marked.  Lists are comma
separated.

    [experiment]   name, master_seed*, trajectories*, workers
    [model]        type* = ssep | asep | wasep | long_jump | slow_bond | reservoir | abc
                   a, gamma, b_plus, b_minus, alpha, c_plus, c_minus, max_range,
                   alpha_sb, beta_sb, res_alpha, res_beta, res_theta, e_a, e_b, e_c
    [lattice]      n*, topology = ring | segment
    [measure]      type* = bernoulli | abc, rho, rho_a, rho_b
    [scaling]      theta*, horizon*, points (default 100) or times
    [fields]       modes, velocity, species, decomposition, structure, origins,
                   lags, series_trajectories
    [fit]          enabled, ew_min, kpz_max, center, half_width
    [output]       dir, trajectories, plots
"""

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields as dc_fields

from .dynamics import ABC, LongJumpExclusion, Reservoir, SlowBond, asep, ssep, wasep
from .engine import ScalingSpec
from .lattice import ABCProduct, Bernoulli, Lattice, species_index


class ConfigError(ValueError):
    """Invalid configuration; ``str`` carries the section/key and line."""


MODEL_KEYS = {
    "ssep": (),
    "asep": ("b_plus", "b_minus"),
    "wasep": ("a", "gamma"),
    "long_jump": ("alpha", "c_plus", "c_minus", "max_range"),
    "slow_bond": ("a", "gamma", "alpha_sb", "beta_sb"),
    "reservoir": ("res_alpha", "res_beta", "res_theta"),
    "abc": ("e_a", "e_b", "e_c", "gamma"),
}


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    master_seed: int = 0
    trajectories: int = 1
    workers: int = 1
    model: dict = field(default_factory=lambda: {"type": "ssep"})
    n: int = 64
    topology: str = "ring"
    measure: dict = field(default_factory=lambda: {"type": "bernoulli", "rho": 0.5})
    theta: float = 2.0
    horizon: float = 0.01
    points: int = 100
    times: tuple = ()
    modes: tuple = (1,)
    velocity: float = 0.0
    species: str = ""
    decomposition: bool = False
    structure: bool = False
    origins: int = 1
    lags: int = 0
    series_trajectories: int = 0
    fit: bool = False
    ew_min: float = 1.8
    kpz_max: float = 1.65
    center: str = "centroid"
    half_width: float = 0.0
    output_dir: str = ""
    dump_trajectories: bool = False
    plots: bool = True

    def __post_init__(self):
        self.model = _normalise_params(self.model)
        self.measure = _normalise_params(self.measure)
        self.times = tuple(float(t) for t in self.times)
        self.modes = tuple(int(k) for k in self.modes)

    # ------------------------------------------------------------ builders

    def build_model(self):
        p = self.model
        kind = p["type"]
        g = lambda k, d: float(p.get(k, d))
        if kind == "ssep":
            return ssep()
        if kind == "asep":
            return asep(g("b_plus", 1.0), g("b_minus", 0.0))
        if kind == "wasep":
            return wasep(g("a", 1.0), g("gamma", 1.0))
        if kind == "long_jump":
            return LongJumpExclusion(g("alpha", 1.5), g("c_plus", 1.0), g("c_minus", 1.0),
                                     p.get("max_range"))
        if kind == "slow_bond":
            return SlowBond(g("a", 0.0), g("gamma", 1.0), g("alpha_sb", 1.0), g("beta_sb", 0.0))
        if kind == "reservoir":
            return Reservoir(g("res_alpha", 0.5), g("res_beta", 0.5), g("res_theta", 0.0))
        if kind == "abc":
            return ABC(g("e_a", 0.0), g("e_b", 0.0), g("e_c", 0.0), g("gamma", 1.0))
        raise ConfigError(f"[model] type: unknown model {kind!r}")

    def build_lattice(self):
        return Lattice(self.n, self.topology)

    def build_measure(self):
        p = self.measure
        if p["type"] == "bernoulli":
            return Bernoulli(float(p.get("rho", 0.5)))
        if p["type"] == "abc":
            return ABCProduct(float(p.get("rho_a", 1 / 3)), float(p.get("rho_b", 1 / 3)))
        raise ConfigError(f"[measure] type: unknown measure {p['type']!r}")

    def build_scaling(self):
        if self.times:
            return ScalingSpec(self.theta, self.horizon, tuple(self.times))
        return ScalingSpec.grid(self.theta, self.horizon, self.points)

    def species_index(self):
        return species_index(self.species) if self.species else None

    # ------------------------------------------------------------ validation

    def validate(self, lines=None):
        """Raise ConfigError naming the offending field; return self otherwise."""
        lines = lines or {}

        def fail(section, key, msg):
            where = f" (line {lines[(section, key)]})" if (section, key) in lines else ""
            raise ConfigError(f"[{section}] {key}{where}: {msg}")

        if self.trajectories < 1:
            fail("experiment", "trajectories", "must be >= 1")
        if self.workers < 1:
            fail("experiment", "workers", "must be >= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            fail("experiment", "master_seed", "must be a 64-bit unsigned integer")
        kind = self.model.get("type")
        if kind not in MODEL_KEYS:
            fail("model", "type", f"unknown model {kind!r}")
        extra = set(self.model) - {"type"} - set(MODEL_KEYS[kind])
        if extra:
            fail("model", sorted(extra)[0], f"not a parameter of {kind}")
        try:
            model = self.build_model()
        except (TypeError, ValueError) as err:
            fail("model", "type", str(err))
        try:
            lattice = self.build_lattice()
        except ValueError as err:
            fail("lattice", "n", str(err))
        try:
            model.check(lattice.n)
        except ValueError as err:
            fail("model", "type", str(err))
        mtype = self.measure.get("type")
        if mtype not in ("bernoulli", "abc"):
            fail("measure", "type", f"unknown measure {mtype!r}")
        for key in ("rho", "rho_a", "rho_b"):
            if key in self.measure:
                v = float(self.measure[key])
                if not 0 < v < 1:
                    fail("measure", key, f"density {v} must lie in (0, 1)")
        try:
            self.build_measure()
        except ValueError as err:
            fail("measure", "type", str(err))
        if (kind == "abc") != (mtype == "abc"):
            fail("measure", "type", f"measure {mtype} does not match model {kind}")
        if isinstance(model, Reservoir) != (self.topology == "segment"):
            fail("lattice", "topology", "reservoirs need a segment and other models a ring")
        if self.horizon <= 0 or not math.isfinite(self.horizon):
            fail("scaling", "horizon", "must be a positive number")
        if not self.times and self.points < 1:
            fail("scaling", "points", "must be >= 1")
        try:
            self.build_scaling()
        except ValueError as err:
            fail("scaling", "times", str(err))
        if kind == "abc" and self.species and (len(self.species) != 1
                                               or self.species.upper() not in "ABC"):
            fail("fields", "species", "must be A, B or C")
        if kind == "abc" and not self.species:
            fail("fields", "species", "ABC experiments need a species")
        if self.origins < 1:
            fail("fields", "origins", "must be >= 1")
        if self.decomposition and (kind not in ("ssep", "asep", "wasep", "slow_bond", "abc")):
            fail("fields", "decomposition", f"not available for {kind}")
        if self.fit and not self.structure:
            fail("fit", "enabled", "fitting needs [fields] structure = yes")
        if self.center not in ("centroid", "origin"):
            fail("fit", "center", "must be centroid or origin")
        if not self.ew_min > self.kpz_max:
            fail("fit", "ew_min", "must exceed kpz_max")
        return self

    # ------------------------------------------------------------ serialization

    def to_ini(self):
        cp = configparser.ConfigParser()
        cp["experiment"] = {"name": self.name, "master_seed": str(self.master_seed),
                            "trajectories": str(self.trajectories), "workers": str(self.workers)}
        cp["model"] = {k: _fmt(v) for k, v in sorted(self.model.items())}
        cp["lattice"] = {"n": str(self.n), "topology": self.topology}
        cp["measure"] = {k: _fmt(v) for k, v in sorted(self.measure.items())}
        sc = {"theta": repr(self.theta), "horizon": repr(self.horizon), "points": str(self.points)}
        if self.times:
            sc["times"] = ", ".join(repr(float(t)) for t in self.times)
        cp["scaling"] = sc
        cp["fields"] = {"modes": ", ".join(str(k) for k in self.modes),
                        "velocity": repr(self.velocity), "species": self.species,
                        "decomposition": _yn(self.decomposition), "structure": _yn(self.structure),
                        "origins": str(self.origins), "lags": str(self.lags),
                        "series_trajectories": str(self.series_trajectories)}
        cp["fit"] = {"enabled": _yn(self.fit), "ew_min": repr(self.ew_min),
                     "kpz_max": repr(self.kpz_max), "center": self.center,
                     "half_width": repr(self.half_width)}
        cp["output"] = {"dir": self.output_dir, "trajectories": _yn(self.dump_trajectories),
                        "plots": _yn(self.plots)}
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp[sec].items())
            lines.append("")
        return "\n".join(lines)

    def digest(self):
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        return all(getattr(self, f.name) == getattr(other, f.name) for f in dc_fields(self))


def _normalise_params(p):
    out = {}
    for k, v in p.items():
        if k == "type":
            out[k] = str(v).strip().lower()
        elif k == "max_range":
            out[k] = None if v in (None, "", "none", "None") else int(v)
        else:
            try:
                out[k] = float(v)
            except (TypeError, ValueError):
                out[k] = v           # left for validate() to report
    return out


def _fmt(v):
    if v is None:
        return "none"
    return repr(v) if isinstance(v, float) else str(v)


def _yn(b):
    return "yes" if b else "no"


def _key_lines(text):
    out, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
        elif "=" in line and section:
            out[(section, line.split("=", 1)[0].strip().lower())] = i
    return out


KNOWN = {
    "experiment": {"name", "master_seed", "trajectories", "workers"},
    "model": {"type"} | {k for keys in MODEL_KEYS.values() for k in keys},
    "lattice": {"n", "topology"},
    "measure": {"type", "rho", "rho_a", "rho_b"},
    "scaling": {"theta", "horizon", "points", "times"},
    "fields": {"modes", "velocity", "species", "decomposition", "structure", "origins", "lags",
               "series_trajectories"},
    "fit": {"enabled", "ew_min", "kpz_max", "center", "half_width"},
    "output": {"dir", "trajectories", "plots"},
}


def parse_config(text):
    """Parse and validate INI text into an :class:`ExperimentConfig`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"syntax: {err}") from None
    lines = _key_lines(text)
    for sec in cp.sections():
        if sec not in KNOWN:
            raise ConfigError(f"[{sec}]: unknown section")
        for key in cp[sec]:
            if key not in KNOWN[sec]:
                where = f" (line {lines[(sec, key)]})" if (sec, key) in lines else ""
                raise ConfigError(f"[{sec}] {key}{where}: unknown key")

    def get(sec, key, conv, default=None, required=False):
        if cp.has_option(sec, key):
            raw = cp.get(sec, key)
            try:
                return conv(raw)
            except ValueError:
                where = f" (line {lines[(sec, key)]})" if (sec, key) in lines else ""
                raise ConfigError(f"[{sec}] {key}{where}: cannot read {raw!r}") from None
        if required:
            raise ConfigError(f"[{sec}] {key}: missing required key")
        return default

    def boolean(raw):
        v = raw.strip().lower()
        if v in ("yes", "true", "on", "1"):
            return True
        if v in ("no", "false", "off", "0", ""):
            return False
        raise ValueError(raw)

    def ints(raw):
        return tuple(int(s) for s in raw.split(",") if s.strip())

    def floats(raw):
        return tuple(float(s) for s in raw.split(",") if s.strip())

    def section(name):
        return {k: v.strip() for k, v in cp[name].items()} if cp.has_section(name) else {}

    model = section("model")
    if "type" not in model:
        raise ConfigError("[model] type: missing required key")
    measure = section("measure")
    if "type" not in measure:
        raise ConfigError("[measure] type: missing required key")
    for key in list(model):
        if key != "type" and key != "max_range":
            get("model", key, float)
    for key in list(measure):
        if key != "type":
            get("measure", key, float)
    cfg = ExperimentConfig(
        name=get("experiment", "name", str, "experiment"),
        master_seed=get("experiment", "master_seed", int, required=True),
        trajectories=get("experiment", "trajectories", int, required=True),
        workers=get("experiment", "workers", int, 1),
        model=model,
        n=get("lattice", "n", int, required=True),
        topology=get("lattice", "topology", str, "ring"),
        measure=measure,
        theta=get("scaling", "theta", float, required=True),
        horizon=get("scaling", "horizon", float, required=True),
        points=get("scaling", "points", int, 100),
        times=get("scaling", "times", floats, ()),
        modes=get("fields", "modes", ints, (1,)),
        velocity=get("fields", "velocity", float, 0.0),
        species=get("fields", "species", str, ""),
        decomposition=get("fields", "decomposition", boolean, False),
        structure=get("fields", "structure", boolean, False),
        origins=get("fields", "origins", int, 1),
        lags=get("fields", "lags", int, 0),
        series_trajectories=get("fields", "series_trajectories", int, 0),
        fit=get("fit", "enabled", boolean, False),
        ew_min=get("fit", "ew_min", float, 1.8),
        kpz_max=get("fit", "kpz_max", float, 1.65),
        center=get("fit", "center", str, "centroid"),
        half_width=get("fit", "half_width", float, 0.0),
        output_dir=get("output", "dir", str, ""),
        dump_trajectories=get("output", "trajectories", boolean, False),
        plots=get("output", "plots", boolean, True),
    )
    return cfg.validate(lines)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
