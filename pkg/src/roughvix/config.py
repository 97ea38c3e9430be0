"""Experiment configuration: TOML file sections plus command-line overrides.

Layout (every key optional; defaults give the independent CIR study)::

    [model]
    mode = "independent"      # independent | dependent | rough
    H = 0.1
    v0 = 0.013
    rho = -0.95
    rho_S = 0.0               # defaults to -0.9 in dependent mode
    rho_V = 0.0               # defaults to 0.9 in dependent mode

    [cir]                     # dGamma = theta (m - Gamma) dt + delta sqrt(Gamma) dZ
    theta = 0.4
    m = 0.8125
    delta = 0.8
    gamma0 = 0.05

    [rough]
    nu = 0.02
    H_vov = 0.1
    zeta0 = 0.05

    [grid]
    T_days = 7
    Delta_days = 30
    n_d = 7

    [budget]
    K = 50000
    N = 2000
    M = 100
    seed = 1

    [method]
    name = "oracle"           # nmc | lsmc:linear | lsmc:hermite | lsmc:rf | oracle
                              # (default: oracle in independent mode, nmc otherwise)
    degree = 3
    n_trees = 100
    max_depth = 5
    split_rank = 0            # >0: forest split search on that many target components
    n_bins = 20
    per_bin_goal = 0          # 0 selects ceil(0.1 N / n_bins)
    target = "log"            # log | log3
    h0 = "paths"              # paths | direct | oracle
    moneyness = [0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5]
    u_ref = 0                 # 1-based grid index for ht_scatter.csv; 0 = two thirds

    [bench]
    nmc_M = [10, 100, 1000]
    lsmc_methods = ["hermite"]
    lsmc_NM = [[1000, 100], [2000, 100], [2000, 1000]]

    [output]
    out_dir = "out"
    threads = 1
"""
from __future__ import annotations

import copy
import hashlib
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, RoughVixError
from .model import GridSpec, ModelConfig
from .paths import CorrelationSpec, build_correlation
from .vol_of_vol import CirParams, RoughVovParams

MODES = ("independent", "dependent", "rough")
METHODS = ("nmc", "lsmc:linear", "lsmc:hermite", "lsmc:rf", "oracle")

DEFAULTS = {
    "model": {"mode": "independent", "H": 0.1, "v0": 0.013, "rho": -0.95,
              "rho_S": None, "rho_V": None},
    "cir": {"theta": 0.4, "m": 0.8125, "delta": 0.8, "gamma0": 0.05},
    "rough": {"nu": 0.02, "H_vov": 0.1, "zeta0": 0.05},
    "grid": {"T_days": 7, "Delta_days": 30, "n_d": 7},
    "budget": {"K": 50000, "N": 2000, "M": 100, "seed": 1},
    "method": {
        "name": None, "degree": 3, "n_trees": 100, "max_depth": 5, "split_rank": 0, "n_bins": 20,
        "per_bin_goal": 0, "target": "log", "h0": "paths",
        "moneyness": [0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5], "u_ref": 0,
    },
    "bench": {
        "nmc_M": [10, 100, 1000], "lsmc_methods": ["hermite"],
        "lsmc_NM": [[1000, 100], [2000, 100], [2000, 1000]],
    },
    "output": {"out_dir": "out", "threads": 1},
}
_DEPENDENT_CORR = {"rho_S": -0.9, "rho_V": 0.9}


@dataclass
class ExperimentConfig:
    """Validated experiment: model, budget, method and output settings."""

    model: ModelConfig
    mode: str
    K: int
    N: int
    M: int
    seed: int
    method: str
    degree: int
    n_trees: int
    max_depth: int
    split_rank: Optional[int]
    n_bins: int
    per_bin_goal: Optional[int]
    target: str
    h0: str
    moneyness: tuple
    u_ref: int
    nmc_M: tuple
    lsmc_methods: tuple
    lsmc_NM: tuple
    out_dir: Path
    threads: int
    raw: dict = field(default_factory=dict, repr=False)

    def digest(self) -> str:
        """Short hash of the resolved settings, written into CSV headers.

        The output block (directory, thread count) does not change results
        and is left out.
        """
        settings = {k: v for k, v in self.raw.items() if k != "output"}
        blob = json.dumps(settings, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_method(self, method: str) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw["method"]["name"] = method
        return resolve(raw)


def _merge(base: dict, extra: dict, where="") -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if key not in out:
            raise ConfigError("unknown setting", field=f"{where}{key}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError("expected a table", field=f"{where}{key}")
            out[key] = _merge(out[key], value, f"{key}.")
        else:
            out[key] = value
    return out


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_overrides(items) -> dict:
    """``["budget.K=1000", "model.mode=rough"]`` into a nested dict."""
    out: dict = {}
    for item in items or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, value = item.split("=", 1)
        section, name = key.strip().split(".", 1)
        out.setdefault(section, {})[name] = _parse_value(value.strip())
    return out


def _number(raw, section, key, kind=float, minimum=None):
    value = raw[section][key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("must be a number", field=f"{section}.{key}")
    if kind is int and float(value) != int(value):
        raise ConfigError("must be an integer", field=f"{section}.{key}")
    value = kind(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}", field=f"{section}.{key}")
    return value


def resolve(raw: dict) -> ExperimentConfig:
    """Validate a merged settings dict into an ``ExperimentConfig``."""
    m = raw["model"]
    mode = m["mode"]
    if mode not in MODES:
        raise ConfigError(f"must be one of {MODES}", field="model.mode")
    if mode == "independent" and m["rho_V"] is not None:
        warnings.warn(
            "model.rho_V is set in independent mode; it is used in the correlation "
            "matrix and the Riccati oracle no longer applies", stacklevel=2,
        )
    for key in ("rho_S", "rho_V"):
        if m[key] is None:
            m[key] = _DEPENDENT_CORR[key] if mode == "dependent" else 0.0

    def build(field_name, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (RoughVixError, ValueError, TypeError) as exc:
            raise ConfigError(str(exc), field=field_name) from exc

    corr = build("model.rho", lambda: CorrelationSpec(
        rho=_number(raw, "model", "rho"), rho_S=_number(raw, "model", "rho_S"),
        rho_V=_number(raw, "model", "rho_V")))
    build("model.rho", lambda: build_correlation(corr))
    H = _number(raw, "model", "H")
    if not 0.0 < H <= 0.5:
        raise ConfigError("must lie in (0, 1/2]", field="model.H")
    cir = build("cir", lambda: CirParams(**{k: _number(raw, "cir", k) for k in raw["cir"]}))
    rough = build("rough", lambda: RoughVovParams(**{k: _number(raw, "rough", k) for k in raw["rough"]}))
    g = raw["grid"]
    n_d = _number(raw, "grid", "n_d", int, 1)
    grid = build("grid", lambda: GridSpec(
        T=_number(raw, "grid", "T_days", minimum=0) / 365.0,
        Delta=_number(raw, "grid", "Delta_days") / 365.0, n_d=n_d))
    model = build("model", lambda: ModelConfig(
        H=H, v0=_number(raw, "model", "v0"), grid=grid, corr=corr,
        vov="rough" if mode == "rough" else "cir", cir=cir, rough=rough))
    if grid.T <= 0:
        raise ConfigError("options need a positive maturity", field="grid.T_days")

    K = _number(raw, "budget", "K", int, 1)
    N = _number(raw, "budget", "N", int, 1)
    M = _number(raw, "budget", "M", int, 1)
    seed = _number(raw, "budget", "seed", int, 0)
    meth = raw["method"]
    name = meth["name"]
    if name is None:
        name = meth["name"] = "oracle" if model.independent else "nmc"
    if name not in METHODS:
        raise ConfigError(f"must be one of {METHODS}", field="method.name")
    if name.startswith("lsmc") and N > K:
        raise ConfigError(f"N={N} exceeds K={K}", field="budget.N")
    if name == "oracle" and not model.independent:
        raise ConfigError("the oracle needs the independent mode", field="method.name")
    if mode == "rough" and name in ("lsmc:linear", "lsmc:hermite"):
        raise ConfigError("rough mode needs the random forest", field="method.name")
    if meth["target"] not in ("log", "log3"):
        raise ConfigError("must be 'log' or 'log3'", field="method.target")
    if meth["h0"] not in ("paths", "direct", "oracle"):
        raise ConfigError("must be 'paths', 'direct' or 'oracle'", field="method.h0")
    if meth["h0"] == "oracle" and not model.independent:
        raise ConfigError("oracle h0 needs the independent mode", field="method.h0")
    moneyness = tuple(float(x) for x in meth["moneyness"])
    if not moneyness or min(moneyness) <= 0:
        raise ConfigError("needs positive entries", field="method.moneyness")
    u_ref = _number(raw, "method", "u_ref", int, 0)
    if u_ref > grid.n:
        raise ConfigError(f"must be <= {grid.n}", field="method.u_ref")
    goal = _number(raw, "method", "per_bin_goal", int, 0)
    b = raw["bench"]
    for meth_name in b["lsmc_methods"]:
        if meth_name not in ("linear", "hermite", "rf"):
            raise ConfigError(f"unknown regressor {meth_name!r}", field="bench.lsmc_methods")
    return ExperimentConfig(
        model=model, mode=mode, K=K, N=N, M=M, seed=seed, method=name,
        degree=_number(raw, "method", "degree", int, 0),
        n_trees=_number(raw, "method", "n_trees", int, 1),
        max_depth=_number(raw, "method", "max_depth", int, 0),
        split_rank=_number(raw, "method", "split_rank", int, 0) or None,
        n_bins=_number(raw, "method", "n_bins", int, 1),
        per_bin_goal=goal or None, target=meth["target"], h0=meth["h0"],
        moneyness=moneyness, u_ref=u_ref,
        nmc_M=tuple(int(x) for x in b["nmc_M"]),
        lsmc_methods=tuple(b["lsmc_methods"]),
        lsmc_NM=tuple((int(n), int(mm)) for n, mm in b["lsmc_NM"]),
        out_dir=Path(raw["output"]["out_dir"]),
        threads=_number(raw, "output", "threads", int, 1),
        raw=raw,
    )


def parse_config(path=None, overrides=None, **flags) -> ExperimentConfig:
    """Load defaults, then the TOML file at ``path``, then overrides.

    ``overrides`` is a nested dict or a list of ``section.key=value``
    strings; ``flags`` are the shortcut options (``seed``, ``K``, ``N``,
    ``M``, ``method``, ``out_dir``, ``threads``), ignored when ``None``.
    """
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found", field="config")
        try:
            data = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(exc), field="config") from exc
        raw = _merge(raw, data)
    if overrides:
        if not isinstance(overrides, dict):
            overrides = parse_overrides(overrides)
        raw = _merge(raw, overrides)
    shortcut = {
        "seed": ("budget", "seed"), "K": ("budget", "K"), "N": ("budget", "N"),
        "M": ("budget", "M"), "method": ("method", "name"),
        "out_dir": ("output", "out_dir"), "threads": ("output", "threads"),
    }
    for key, value in flags.items():
        if key not in shortcut:
            raise ConfigError("unknown flag", field=key)
        if value is not None:
            section, name = shortcut[key]
            raw[section][name] = str(value) if key == "out_dir" else value
    return resolve(raw)
