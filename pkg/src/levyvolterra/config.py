"""Scenario configuration: a single TOML file (plus dotted --set overrides)
resolving to the model, kernel, batteries and run policy.

The parse -> serialize -> parse round trip is the identity on the resolved
dictionary, and the run-directory name is derived from a content hash of the
canonical JSON form, so identical configurations land in identical places.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python 3.10
    import tomli as _toml

__all__ = ["Scenario", "default_config", "parse_config", "dump_toml",
           "apply_override", "config_hash", "ConfigError"]


class ConfigError(ValueError):
    """Unusable configuration (unknown names, bad values, bad overrides)."""


def default_config() -> dict:
    return {
        "model": {
            "sigma": 1.0,
            "jumps": {"type": "compound_poisson", "rate": 2.0,
                      "atoms": [[2.0, 1.0]]},
            "gauss_compensation": True,
        },
        "kernel": {"name": "frac", "d": 0.25},
        "grid": {"horizon": 1.0, "window": 2.0, "n_cells": 1000},
        "mc": {"n_paths": 2000, "n_groups": 20, "seed": 20260809},
        "battery": {"g_scale": 1.0, "g_count": 8,
                    "G": ["bump", "square"]},
        "quad": {"abs_tol": 1e-10, "rel_tol": 1e-9,
                 "max_subdivisions": 4000, "tail_cutoff": 50.0},
        "charfn": {"t": [1.0], "u_min": -5.0, "u_max": 5.0, "u_step": 0.5},
        "run": {"modes": ["expectation"], "deterministic": False,
                "workers": 1},
    }


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_config(text: str | None) -> dict:
    """Parse TOML text over the defaults; None gives the defaults."""
    cfg = default_config()
    if text:
        try:
            user = _toml.loads(text)
        except Exception as exc:
            raise ConfigError(f"config does not parse as TOML: {exc}") from exc
        cfg = _merge(cfg, user)
    return cfg


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply one --set key.path=value override in place."""
    if "=" not in assignment:
        raise ConfigError(f"override needs key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = _toml.loads(f"v = {raw}")["v"]
    except Exception:
        value = raw  # bare string
    node = cfg
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    raise ConfigError(f"cannot serialise {type(v).__name__} to TOML")


def dump_toml(cfg: dict, prefix: str = "") -> str:
    """Serialise a nested dict of scalars/lists back to TOML text."""
    lines = []
    tables = []
    for k, v in cfg.items():
        if isinstance(v, dict):
            tables.append((k, v))
        else:
            lines.append(f"{k} = {_toml_scalar(v)}")
    out = "\n".join(lines)
    for k, v in tables:
        name = f"{prefix}{k}"
        body = dump_toml(v, prefix=f"{name}.")
        out += f"\n\n[{name}]\n{body}" if body else f"\n\n[{name}]"
    return out.strip() + "\n"


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, default=repr)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


@dataclass
class Scenario:
    """Resolved configuration with constructors for the domain objects."""

    cfg: dict = field(default_factory=default_config)

    # -- model / kernel -------------------------------------------------------

    def model(self):
        from .levy import (AtomicLaw, CompoundPoisson, LevyModel, NoJumps,
                           TemperedStable, UniformLaw)
        m = self.cfg["model"]
        j = m.get("jumps", {"type": "none"})
        jtype = j.get("type", "none")
        if jtype == "none":
            jumps = NoJumps()
        elif jtype == "compound_poisson":
            if "atoms" in j:
                law = AtomicLaw(tuple((float(x), float(p)) for x, p in j["atoms"]))
            elif "uniform" in j:
                a, b = j["uniform"]
                law = UniformLaw(float(a), float(b))
            else:
                raise ConfigError("compound_poisson needs atoms or uniform")
            jumps = CompoundPoisson(float(j["rate"]), law)
        elif jtype == "tempered_stable":
            jumps = TemperedStable(float(j["alpha"]), float(j["tempering"]),
                                   float(j["scale"]))
        else:
            raise ConfigError(f"unknown jump type {jtype!r}")
        cutoff = j.get("cutoff")
        return LevyModel(sigma=float(m["sigma"]), jumps=jumps,
                         small_jump_cutoff=float(cutoff) if cutoff else None,
                         gauss_compensation=bool(m.get("gauss_compensation", True)))

    def kernel(self):
        from .kernels import frac_kernel, indicator_kernel
        k = self.cfg["kernel"]
        name = k["name"]
        if name == "indicator":
            return indicator_kernel()
        if name == "frac":
            return frac_kernel(float(k["d"]))
        raise ConfigError(f"unknown kernel {name!r}")

    def quad(self):
        from .quadrature import QuadratureSpec
        q = self.cfg["quad"]
        return QuadratureSpec(abs_tol=float(q["abs_tol"]),
                              rel_tol=float(q["rel_tol"]),
                              max_subdivisions=int(q["max_subdivisions"]),
                              tail_cutoff=float(q["tail_cutoff"]))

    def g_battery(self):
        from .stransform import default_battery
        b = self.cfg["battery"]
        return default_battery(scale=float(b.get("g_scale", 1.0)),
                               n=int(b.get("g_count", 8)))

    def G_battery(self):
        from .charfn import damped_poly, gaussian_bump, quadratic
        out = []
        for name in self.cfg["battery"].get("G", ["bump"]):
            if name == "bump":
                out.append(gaussian_bump(center=0.2, width=1.0))
            elif name == "square":
                out.append(quadratic())
            elif name == "damped_poly":
                out.append(damped_poly((1.0, 0.5, -0.3)))
            else:
                raise ConfigError(f"unknown test function {name!r}")
        return out

    # -- run policy -------------------------------------------------------------

    @property
    def window(self) -> tuple[float, float]:
        g = self.cfg["grid"]
        return (float(g["window"]), float(g["horizon"]))

    @property
    def n_cells(self) -> int:
        return int(self.cfg["grid"]["n_cells"])

    @property
    def n_paths(self) -> int:
        return int(self.cfg["mc"]["n_paths"])

    @property
    def n_groups(self) -> int:
        return int(self.cfg["mc"]["n_groups"])

    @property
    def seed(self) -> int:
        return int(self.cfg["mc"]["seed"])

    @property
    def modes(self) -> list:
        modes = list(self.cfg["run"]["modes"])
        bad = set(modes) - {"pathwise", "expectation", "stransform"}
        if bad:
            raise ConfigError(f"unknown modes {sorted(bad)}")
        if "pathwise" in modes and not self.kernel().dt_zero:
            raise ConfigError("pathwise mode requires the indicator kernel "
                              "(df/dt == 0)")
        return modes

    def validate(self) -> None:
        self.model()
        self.kernel()
        self.quad()
        self.modes
        if self.window[1] <= 0 or self.window[0] < 0:
            raise ConfigError("need horizon > 0 and window >= 0")
        if self.n_cells < 1 or self.n_paths < 1:
            raise ConfigError("need n_cells >= 1 and n_paths >= 1")
