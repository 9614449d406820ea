"""Run configuration: INI files, validation, and the named presets.

The eight shipped presets pair the two built-in surfaces and two bumps
with the two source/wavenumber combinations used by the convergence
tables: odd presets use the source (0.5, 0.4) at k = 1, even ones
(-2, 0.2) at k = 10.
"""

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .geometry import Geometry, builtin_geometry, fourier_surface, bump_g1, bump_g2, bump_none

__all__ = ["ConfigError", "RunConfig", "parse_config", "serialize_config", "preset", "PRESETS"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    label: str = "run"
    # geometry: either a builtin name, or a fourier series + named bump
    geometry: str = "f1+g1"
    fourier_mean: float = 0.0
    fourier_cos: tuple = ()
    fourier_sin: tuple = ()
    bump: str = "none"
    bump_amplitude: float = 1.0
    lam: float = 2.0 * np.pi
    height: float = 4.0
    # physics
    k: float = 1.0
    source: tuple = (0.5, 0.4)
    # discretization
    N: int = 20
    h: float = 0.16
    n1: int = 0
    n2: int = 0
    quad_order: int = 4
    alpha_gauss: int = 8
    # scheme flags
    rhs_sign: int = -1
    transplant_data: bool = True
    # solver
    tol: float = 1e-6
    restart: int = 80
    maxiter: int = 2000
    ilu: str = "auto"
    shared_groups: int = 0
    direct_threshold: int = 20000
    force_direct: bool = False
    # run control
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.k <= 0 or self.height <= 0 or self.h <= 0 or self.lam <= 0:
            raise ConfigError("physical parameters must be positive")
        if self.N < 1:
            raise ConfigError("N must be at least 1")
        if self.rhs_sign not in (-1, 1):
            raise ConfigError("rhs_sign must be +1 or -1")
        if self.source[1] <= 0:
            raise ConfigError("source must lie above the x1-axis")

    def make_geometry(self) -> Geometry:
        if self.geometry == "fourier":
            surf = fourier_surface(self.lam, self.fourier_mean, self.fourier_cos, self.fourier_sin)
            bumps = {"g1": bump_g1, "g2": bump_g2, "none": lambda amplitude=1.0: bump_none()}
            if self.bump not in bumps:
                raise ConfigError(f"unknown bump family {self.bump!r}")
            bump = bumps[self.bump](amplitude=self.bump_amplitude) if self.bump != "none" else bump_none()
            geo = Geometry(surf, bump, self.height)
        else:
            geo = builtin_geometry(self.geometry, height=self.height)
        if self.source[1] >= min(geo.surface.min_height, geo.min_perturbed_height):
            raise ConfigError("source point must lie strictly below both surfaces")
        return geo


_SCHEMA = {f.name: f.type for f in fields(RunConfig)}
_TUPLES = {"source", "fourier_cos", "fourier_sin"}
_BOOLS = {"transplant_data", "force_direct"}
_INTS = {"N", "n1", "n2", "quad_order", "alpha_gauss", "rhs_sign", "restart",
         "maxiter", "shared_groups", "direct_threshold", "seed", "jobs"}
_STRS = {"label", "geometry", "bump", "ilu", "out_dir"}


def parse_config(path) -> RunConfig:
    """Read a flat INI file with a single [run] section."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if "run" not in cp:
        raise ConfigError("config must contain a [run] section")
    kwargs = {}
    for key, raw in cp["run"].items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        if key in _TUPLES:
            kwargs[key] = tuple(float(v) for v in raw.replace(",", " ").split())
        elif key in _BOOLS:
            kwargs[key] = cp["run"].getboolean(key)
        elif key in _INTS:
            kwargs[key] = int(raw)
        elif key in _STRS:
            kwargs[key] = raw
        else:
            kwargs[key] = float(raw)
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def serialize_config(cfg: RunConfig, path):
    """Write the configuration back out; parse(serialize(c)) == c."""
    cp = configparser.ConfigParser()
    sec = {}
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if f.name in _TUPLES:
            sec[f.name] = " ".join(repr(x) for x in v)
        else:
            sec[f.name] = repr(v) if not isinstance(v, str) else v
    cp["run"] = sec
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        cp.write(fh)


def _preset(i, geom, src, k):
    return RunConfig(
        label=f"example{i}", geometry=geom, source=src, k=k,
        N=20, h=0.16 if k == 1 else 0.08,
    )


PRESETS = {
    "example1": _preset(1, "f1+g1", (0.5, 0.4), 1.0),
    "example2": _preset(2, "f1+g1", (-2.0, 0.2), 10.0),
    "example3": _preset(3, "f1+g2", (0.5, 0.4), 1.0),
    "example4": _preset(4, "f1+g2", (-2.0, 0.2), 10.0),
    "example5": _preset(5, "f2+g1", (0.5, 0.4), 1.0),
    "example6": _preset(6, "f2+g1", (-2.0, 0.2), 10.0),
    "example7": _preset(7, "f2+g2", (0.5, 0.4), 1.0),
    "example8": _preset(8, "f2+g2", (-2.0, 0.2), 10.0),
}


def preset(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    cfg = PRESETS[name]
    return replace(cfg, **overrides) if overrides else cfg
