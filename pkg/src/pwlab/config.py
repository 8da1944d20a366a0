"""Scenario config files: INI-style key-value sections parsed into the
scenario dataclasses.

Sections: [run] holds scenario id and master seed; the remaining sections are
scenario-specific. Regions are written per dimension as "lo:hi" tokens
separated by whitespace; lists are comma separated; squared torus lengths may
be exact surd expressions like "sqrt(2)" or "1 + 1/2*sqrt(5)".
"""

from __future__ import annotations

import configparser
import math
from pathlib import Path

import numpy as np

from .ergodic import SurdLength
from .scenarios.kicked import KickedConfig
from .scenarios.measurement import MeasurementConfig
from .scenarios.stern_gerlach import SternGerlachConfig
from .scenarios.torus import TorusConfig
from .scenarios.two_slit import TwoSlitConfig

SCENARIOS = ("torus", "measurement", "stern_gerlach", "two_slit", "kicked_relaxation")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _complexes(text: str) -> tuple[complex, ...]:
    return tuple(complex(tok) for tok in text.replace(" ", "").split(","))


def _box(text: str) -> tuple:
    """Per-dimension lo:hi intervals, e.g. "0.0:0.25 0.3:0.8"."""
    out = []
    for tok in text.split():
        lo, _, hi = tok.partition(":")
        out.append((float(lo), float(hi)))
    return tuple(out)


def _surd_or_float(tok: str):
    tok = tok.strip()
    try:
        return float(tok)
    except ValueError:
        return SurdLength.parse(tok)


def load_config(path) -> tuple[str, int, object]:
    """Parse a config file; returns (scenario, seed, scenario config object)."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    try:
        scenario = parser.get("run", "scenario")
        seed = parser.getint("run", "seed", fallback=0)
    except (configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise ConfigError(f"missing [run] section or scenario key: {exc}") from exc
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    try:
        cfg = _BUILDERS[scenario](parser, seed)
    except (configparser.Error, ValueError, KeyError) as exc:
        raise ConfigError(f"bad {scenario} config: {exc}") from exc
    return scenario, seed, cfg


def _build_torus(p: configparser.ConfigParser, seed: int) -> TorusConfig:
    flow = p["flow"]
    if "lengths_sq" in flow:
        lengths_sq = tuple(_surd_or_float(tok) for tok in flow["lengths_sq"].split(","))
    else:
        lengths_sq = tuple(l ** 2 for l in _floats(flow["lengths"]))
    boxes = tuple(_box(v) for k, v in sorted(p["report"].items()) if k.startswith("box"))
    cfg = TorusConfig(
        lengths_sq=lengths_sq,
        quantum_numbers=_ints(flow["quantum_numbers"]),
        x0=_floats(flow["x0"]),
        n_periods=flow.getfloat("n_periods"),
        samples_per_period=flow.getint("samples_per_period", fallback=64),
        boxes=boxes,
        n_checkpoints=p.getint("report", "checkpoints", fallback=20),
        points_per_dim=p.getint("grid", "points", fallback=256),
        contrast_samples=p.getint("contrast", "n_samples", fallback=10000),
        contrast_cells=p.getint("contrast", "cells", fallback=16),
        bump_center_frac=p.getfloat("contrast", "bump_center_frac", fallback=0.5),
        bump_width_frac=p.getfloat("contrast", "bump_width_frac", fallback=0.12),
        seed=seed,
    )
    cfg.validate()
    return cfg


def _build_measurement(p: configparser.ConfigParser, seed: int) -> MeasurementConfig:
    m = p["measurement"]
    if "coefficients" in m:
        coeffs = _complexes(m["coefficients"])
    else:
        coeffs = tuple(math.sqrt(w) for w in _floats(m["weights"]))
    cfg = MeasurementConfig(
        coefficients=coeffs,
        eigenvalues=_floats(m["eigenvalues"]),
        coupling=m.getfloat("coupling", fallback=3.0),
        box_length=p.getfloat("grid", "length", fallback=48.0),
        points=p.getint("grid", "points", fallback=512),
        pointer_mass=m.getfloat("pointer_mass", fallback=50.0),
        packet_center=m.getfloat("packet_center", fallback=12.0),
        packet_sigma=m.getfloat("packet_sigma", fallback=0.5),
        duration=m.getfloat("duration", fallback=2.0),
        dt=m.getfloat("dt", fallback=2e-3),
        n_traj=m.getint("n_traj", fallback=10000),
        seed=seed,
    )
    cfg.validate()
    return cfg


def _build_stern_gerlach(p: configparser.ConfigParser, seed: int) -> SternGerlachConfig:
    s = p["stern_gerlach"]
    if "c_up" in s:
        c_up, c_down = complex(s["c_up"]), complex(s["c_down"])
    else:
        w = s.getfloat("weight_up")
        c_up, c_down = math.sqrt(w), math.sqrt(1.0 - w)
    priors = tuple(tok.strip() for tok in
                   s.get("x_priors", "uniform, gaussian, bimodal").split(","))
    cfg = SternGerlachConfig(
        c_up=c_up, c_down=c_down,
        gradient=s.getfloat("gradient", fallback=6.0),
        window=s.getfloat("window", fallback=6.0),
        taper=s.getfloat("taper", fallback=6.0),
        box_length=p.getfloat("grid", "length", fallback=64.0),
        points=p.getint("grid", "points", fallback=1024),
        mass=s.getfloat("mass", fallback=10.0),
        packet_sigma=s.getfloat("packet_sigma", fallback=0.8),
        magnet_time=s.getfloat("magnet_time", fallback=1.0),
        flight_time=s.getfloat("flight_time", fallback=12.0),
        dt=s.getfloat("dt", fallback=8e-3),
        n_traj=s.getint("n_traj", fallback=10000),
        x_priors=priors,
        seed=seed,
    )
    cfg.validate()
    return cfg


def _build_two_slit(p: configparser.ConfigParser, seed: int) -> TwoSlitConfig:
    t = p["two_slit"]
    cfg = TwoSlitConfig(
        box=_floats(p.get("grid", "box", fallback="48.0, 24.0")),
        points=_ints(p.get("grid", "points", fallback="256, 128")),
        packet_center=_floats(t.get("packet_center", "11.0, 12.0")),
        packet_sigma=_floats(t.get("packet_sigma", "2.0, 1.8")),
        momentum=t.getfloat("momentum", fallback=6.0),
        barrier_lo=t.getfloat("barrier_lo", fallback=18.0),
        barrier_hi=t.getfloat("barrier_hi", fallback=18.75),
        barrier_height=t.getfloat("barrier_height", fallback=80.0),
        slit_centers=_floats(t.get("slit_centers", "9.8, 14.2")),
        slit_width=t.getfloat("slit_width", fallback=2.2),
        open_slits=t.get("open_slits", "both"),
        screen_x=t.getfloat("screen_x", fallback=38.0),
        duration=t.getfloat("duration", fallback=4.8),
        dt=t.getfloat("dt", fallback=2e-3),
        n_traj=t.getint("n_traj", fallback=45000),
        bins=t.getint("bins", fallback=64),
        prior=t.get("prior", "equilibrium"),
        seed=seed,
    )
    cfg.validate()
    return cfg


def _build_kicked(p: configparser.ConfigParser, seed: int) -> KickedConfig:
    k = p["kicked_relaxation"]
    cfg = KickedConfig(
        lengths=_floats(k.get("lengths", "1.0")),
        points_per_dim=p.getint("grid", "points", fallback=512),
        family=k.get("family", "rotation"),
        n_kicks=k.getint("n_kicks", fallback=1000),
        n_samples=k.getint("n_samples", fallback=1),
        p0=k.get("p0", "delta"),
        delta_frac=k.getfloat("delta_frac", fallback=0.31),
        cells=k.getint("cells", fallback=8),
        checkpoint_every=k.getint("checkpoint_every", fallback=25),
        seed=seed,
    )
    cfg.validate()
    return cfg


_BUILDERS = {
    "torus": _build_torus,
    "measurement": _build_measurement,
    "stern_gerlach": _build_stern_gerlach,
    "two_slit": _build_two_slit,
    "kicked_relaxation": _build_kicked,
}


def preset_path(name: str) -> Path:
    """Resolve a shipped preset name (with or without .cfg) to its file."""
    from importlib import resources
    fname = name if name.endswith(".cfg") else name + ".cfg"
    ref = resources.files("pwlab").joinpath("presets").joinpath(fname)
    with resources.as_file(ref) as concrete:
        if not concrete.exists():
            raise ConfigError(f"no shipped preset named {name!r}")
        return Path(concrete)
