"""Sectioned key-value run configuration: parse, validate, emit.

The format is INI-style with sections [grid], [energy], [physics],
[sources], [time], [output].  Unknown keys are errors (a typo must not
silently change the physics), every optional key has the default shown
in DEFAULT_CONFIG, and validation runs before any time stepping starts.

Initial data are chosen per field in [physics] as generator specs
(``gaussian:amplitude=0.8,width=0.1``, ``barenblatt:m=2,t0=0.1``,
``uniform:1.0``, ``two_bumps:...``, ``disk:...``, ``zero``) or as
snapshot files (``file:rho1.xflw``).
"""

from __future__ import annotations

import configparser
import io
from pathlib import Path

import numpy as np

from .energy import entropy_energy, load_tabulated_energy, power_energy
from .generators import barenblatt_field, gaussian_bump, two_bumps, uniform_disk
from .grids import Grid
from .snapshots import load_snapshot
from .solver import (
    SimConfig,
    VectorField,
    constant_field,
    rotating_field,
    tabulated_field,
    zero_field,
)
from .sources import homeostatic_sources, zero_sources

__all__ = ["ConfigError", "parse_config", "parse_config_file", "emit_config",
           "DEFAULT_CONFIG", "PRESETS"]


class ConfigError(ValueError):
    """Invalid, missing, or unknown configuration content."""


_SCHEMA = {
    "grid": {"d", "N", "L"},
    "energy": {"family", "m", "table"},
    "physics": {"gamma", "alpha", "c1", "c2", "V", "p_min", "rho1", "rho2", "n"},
    "sources": {"model", "g1", "p_H", "d1", "d2"},
    "time": {"t_end", "cfl_safety", "snapshot_every"},
    "output": set(),
}

DEFAULT_CONFIG = """\
# xflow run configuration (all keys shown with their defaults)

[grid]
d = 1              # spatial dimension, 1 or 2
N = 256            # cells per axis, power of two >= 8
L = 1.0            # domain extent per axis

[energy]
family = power     # power | entropy | tabulated
m = 2.0            # exponent for family = power (m > 0, m != 1)
# table = z.txt    # two-column (a, z) file for family = tabulated

[physics]
gamma = 0.0        # viscosity
alpha = 0.0        # nutrient diffusivity
c1 = 0.0           # nutrient consumption by species 1
c2 = 0.0           # nutrient consumption by species 2
V = zero           # zero | constant:vx[,vy] | rotating:omega | tabulated:fx.xflw[,fy.xflw]
p_min = -20.0      # pressure clamp for source evaluation near vacuum
rho1 = gaussian:amplitude=0.8,width=0.1
rho2 = zero
n = zero           # zero | uniform:value | gaussian:... | file:...

[sources]
model = none       # none | homeostatic
g1 = 1.0           # homeostatic growth rate
p_H = 1.0          # homeostatic pressure threshold
d1 = 0.0           # species-1 -> species-2 conversion rate
d2 = 0.0           # species-2 removal rate

[time]
t_end = 0.5
cfl_safety = 0.8
snapshot_every = 0.05

[output]
"""


def _get(section, key, cast, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing required key '{key}'")
        return default
    raw = section[key]
    try:
        return cast(raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad value for '{key}': {raw!r} ({err})") from err


def _parse_kv_args(spec: str):
    out = {}
    if not spec:
        return out
    for piece in spec.split(","):
        if "=" not in piece:
            raise ConfigError(f"expected key=value in generator args, got {piece!r}")
        k, v = piece.split("=", 1)
        out[k.strip()] = float(v)
    return out


def _resolve_initial(spec: str, grid: Grid, base_dir: Path, name: str):
    spec = spec.strip()
    kind, _, args = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "zero":
        return np.zeros(grid.shape)
    if kind == "uniform":
        return np.full(grid.shape, float(args))
    if kind == "gaussian":
        kw = _parse_kv_args(args)
        allowed = {"amplitude", "width", "floor"}
        if set(kw) - allowed:
            raise ConfigError(f"{name}: unknown gaussian args {set(kw) - allowed}")
        return gaussian_bump(grid, **kw)
    if kind == "two_bumps":
        kw = _parse_kv_args(args)
        allowed = {"amplitude", "width", "separation", "floor"}
        if set(kw) - allowed:
            raise ConfigError(f"{name}: unknown two_bumps args {set(kw) - allowed}")
        return two_bumps(grid, **kw)
    if kind == "disk":
        kw = _parse_kv_args(args)
        allowed = {"amplitude", "radius"}
        if set(kw) - allowed:
            raise ConfigError(f"{name}: unknown disk args {set(kw) - allowed}")
        return uniform_disk(grid, **kw)
    if kind == "barenblatt":
        kw = _parse_kv_args(args)
        allowed = {"m", "t0", "mass"}
        if set(kw) - allowed:
            raise ConfigError(f"{name}: unknown barenblatt args {set(kw) - allowed}")
        if "m" not in kw or "t0" not in kw:
            raise ConfigError(f"{name}: barenblatt needs m= and t0=")
        return barenblatt_field(grid, kw["m"], kw["t0"], kw.get("mass", 1.0))
    if kind == "file":
        fgrid, _, values = load_snapshot(base_dir / args.strip())
        if fgrid != grid:
            raise ConfigError(f"{name}: snapshot grid {fgrid} does not match "
                              f"configured grid {grid}")
        return values
    raise ConfigError(f"{name}: unknown initial-data spec {spec!r}")


def _resolve_vector_field(spec: str, base_dir: Path) -> VectorField:
    spec = spec.strip()
    kind, _, args = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "zero":
        return zero_field()
    if kind == "constant":
        comps = [float(x) for x in args.split(",") if x.strip()]
        if not comps:
            raise ConfigError("constant field needs components, e.g. constant:0.3")
        return constant_field(*comps)
    if kind == "rotating":
        return rotating_field(float(args))
    if kind == "tabulated":
        paths = [p.strip() for p in args.split(",") if p.strip()]
        arrays = [load_snapshot(base_dir / p)[2] for p in paths]
        return tabulated_field(*arrays)
    raise ConfigError(f"unknown vector field spec {spec!r}")


def parse_config(text: str, base_dir=".") -> SimConfig:
    """Parse and fully validate a configuration; fail-closed."""
    base_dir = Path(base_dir)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"unparseable config: {err}") from err

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - {k.lower() for k in _SCHEMA[section]}
        # configparser lowercases keys; compare case-insensitively
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    for required in ("grid", "energy", "time"):
        if required not in cp:
            raise ConfigError(f"missing required section [{required}]")

    gsec = cp["grid"]
    grid = Grid(d=_get(gsec, "d", int, required=True),
                N=_get(gsec, "n", int, required=True),
                L=_get(gsec, "l", float, required=True))

    esec = cp["energy"]
    family = _get(esec, "family", str, required=True).strip().lower()
    if family == "power":
        m = _get(esec, "m", float, required=True)
        if m == 1.0:
            raise ConfigError("m = 1 is not a power energy; "
                              "use family = entropy for the m -> 1 model")
        try:
            energy = power_energy(m)
        except ValueError as err:
            raise ConfigError(str(err)) from err
    elif family == "entropy":
        energy = entropy_energy()
    elif family == "tabulated":
        table = _get(esec, "table", str, required=True)
        try:
            energy = load_tabulated_energy(base_dir / table.strip())
        except (OSError, ValueError) as err:
            raise ConfigError(f"cannot load tabulated energy: {err}") from err
    else:
        raise ConfigError(f"unknown energy family {family!r}")

    psec = cp["physics"] if "physics" in cp else {}
    gamma = _get(psec, "gamma", float, default=0.0)
    alpha = _get(psec, "alpha", float, default=0.0)
    c1 = _get(psec, "c1", float, default=0.0)
    c2 = _get(psec, "c2", float, default=0.0)
    p_min = _get(psec, "p_min", float, default=-20.0)
    V = _resolve_vector_field(_get(psec, "v", str, default="zero"), base_dir)
    try:
        rho1 = _resolve_initial(_get(psec, "rho1", str,
                                     default="gaussian:amplitude=0.8,width=0.1"),
                                grid, base_dir, "rho1")
        rho2 = _resolve_initial(_get(psec, "rho2", str, default="zero"),
                                grid, base_dir, "rho2")
        n = _resolve_initial(_get(psec, "n", str, default="zero"),
                             grid, base_dir, "n")
    except (OSError, ValueError) as err:
        raise ConfigError(str(err)) from err

    ssec = cp["sources"] if "sources" in cp else {}
    model = _get(ssec, "model", str, default="none").strip().lower()
    if model == "none":
        sources = zero_sources()
    elif model == "homeostatic":
        sources = homeostatic_sources(
            g1=_get(ssec, "g1", float, default=1.0),
            p_H=_get(ssec, "p_h", float, default=1.0),
            d1=_get(ssec, "d1", float, default=0.0),
            d2=_get(ssec, "d2", float, default=0.0))
    else:
        raise ConfigError(f"unknown source model {model!r}")

    tsec = cp["time"]
    try:
        cfg = SimConfig(
            grid=grid, energy=energy, rho1_init=rho1, rho2_init=rho2, n_init=n,
            t_end=_get(tsec, "t_end", float, required=True),
            gamma=gamma, alpha=alpha, c1=c1, c2=c2, V=V, sources=sources,
            cfl_safety=_get(tsec, "cfl_safety", float, default=0.8),
            snapshot_every=_get(tsec, "snapshot_every", float, default=0.0),
            p_min=p_min)
    except ValueError as err:
        raise ConfigError(str(err)) from err

    # stash the original text specs so emit_config round-trips
    object.__setattr__(cfg, "_specs", {
        "family": family,
        "m": _get(esec, "m", float) if family == "power" else None,
        "table": _get(esec, "table", str) if family == "tabulated" else None,
        "V": _get(psec, "v", str, default="zero"),
        "rho1": _get(psec, "rho1", str,
                     default="gaussian:amplitude=0.8,width=0.1"),
        "rho2": _get(psec, "rho2", str, default="zero"),
        "n": _get(psec, "n", str, default="zero"),
        "sources": model,
        "source_params": {k: _get(ssec, k, float, default=dflt)
                          for k, dflt in (("g1", 1.0), ("p_h", 1.0),
                                          ("d1", 0.0), ("d2", 0.0))},
    })
    return cfg


def parse_config_file(path) -> SimConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def emit_config(cfg: SimConfig) -> str:
    """Emit configuration text that reparses to an equivalent SimConfig.

    Requires the config to have been built by parse_config (generator
    specs are kept); programmatic configs with raw arrays should persist
    their fields as snapshots instead.
    """
    specs = getattr(cfg, "_specs", None)
    if specs is None:
        raise ConfigError("emit_config needs a parse_config-built SimConfig")
    buf = io.StringIO()
    w = buf.write
    w("[grid]\n")
    w(f"d = {cfg.grid.d}\nN = {cfg.grid.N}\nL = {cfg.grid.L!r}\n\n")
    w("[energy]\n")
    w(f"family = {specs['family']}\n")
    if specs["family"] == "power":
        w(f"m = {specs['m']!r}\n")
    if specs["family"] == "tabulated":
        w(f"table = {specs['table']}\n")
    w("\n[physics]\n")
    w(f"gamma = {cfg.gamma!r}\nalpha = {cfg.alpha!r}\n")
    w(f"c1 = {cfg.c1!r}\nc2 = {cfg.c2!r}\n")
    w(f"V = {specs['V']}\np_min = {cfg.p_min!r}\n")
    w(f"rho1 = {specs['rho1']}\nrho2 = {specs['rho2']}\nn = {specs['n']}\n")
    w("\n[sources]\n")
    w(f"model = {specs['sources']}\n")
    if specs["sources"] == "homeostatic":
        sp = specs["source_params"]
        w(f"g1 = {sp['g1']!r}\np_H = {sp['p_h']!r}\n")
        w(f"d1 = {sp['d1']!r}\nd2 = {sp['d2']!r}\n")
    w("\n[time]\n")
    w(f"t_end = {cfg.t_end!r}\ncfl_safety = {cfg.cfl_safety!r}\n")
    w(f"snapshot_every = {cfg.snapshot_every!r}\n")
    return buf.getvalue()


PRESETS = {
    "default": DEFAULT_CONFIG,
    "pme-reference": """\
# pure porous-medium reference run (m = 2, no drift, no sources)
[grid]
d = 1
N = 256
L = 1.0

[energy]
family = power
m = 2.0

[physics]
rho1 = gaussian:amplitude=0.8,width=0.1
rho2 = zero
n = zero

[sources]
model = none

[time]
t_end = 0.5
cfl_safety = 0.8
snapshot_every = 0.05
""",
    "tissue-growth": """\
# two-species growth with nutrient coupling and a drift field
[grid]
d = 1
N = 256
L = 1.0

[energy]
family = power
m = 2.0

[physics]
alpha = 0.05
c1 = 0.3
c2 = 0.3
V = rotating:0.5
rho1 = gaussian:amplitude=0.5,width=0.1
rho2 = gaussian:amplitude=0.15,width=0.1
n = uniform:1.0

[sources]
model = homeostatic
g1 = 1.0
p_H = 1.0
d1 = 0.1
d2 = 0.2

[time]
t_end = 0.5
cfl_safety = 0.8
snapshot_every = 0.05
""",
    "incompressible-sweep": """\
# base configuration for the m -> infinity sweep (rho^0 <= 1, F3 sources)
[grid]
d = 1
N = 128
L = 1.0

[energy]
family = power
m = 2.0

[physics]
alpha = 0.05
c1 = 0.2
c2 = 0.2
rho1 = gaussian:amplitude=0.95,width=0.12
rho2 = zero
n = uniform:1.0

[sources]
model = homeostatic
g1 = 4.0
p_H = 2.0
d1 = 0.1
d2 = 0.2

[time]
t_end = 0.5
cfl_safety = 0.8
snapshot_every = 0.0125
""",
}
