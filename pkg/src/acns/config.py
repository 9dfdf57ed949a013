"""
JSON run configuration.  Every precondition that can be checked without
running is checked at load time, and all violations are reported together
with their key paths.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "grid": {"nx": 32, "ny": 32, "Lx": 2 * math.pi, "Ly": 2 * math.pi},
    "physics": {"nu": 0.1, "beta": 1.0, "theta": 1.0, "theta0": 2.0, "s0": 2, "s_F": 1},
    "noise": {"sigma0": 0.5, "decay_a": 1.0, "M": 16, "K_active": 16,
              "gamma_k": [0.1, 0.1, 0.1, 0.1], "q": 3},
    "stepper": {"dt": 1e-3, "horizon": 1.0, "snapshot_stride": 0, "output_stride": 1},
    "nudge": {"N": 16, "eta": "auto"},
    "initial": {"u_amplitude": 0.5, "u_modes": 12, "phi_mean": 0.3, "phi_amplitude": 0.1,
                "phi_wavevector": [1, 0], "seed": 1},
    "initial_nudged": None,
    "stopping": {"R": 1.0, "eps": None},
    "seeds": [0],
    "constants": None,
    "constants_overrides": {},
    "ensemble": {"members": 8, "workers": 1},
}

_OVERRIDABLE = {"c1", "c2", "c3", "C4", "K_L", "K_GN", "K_Delta"}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(key_path, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "\n".join(f"  {p}: {m}" for p, m in self.errors)
        super().__init__(f"{len(self.errors)} configuration error(s):\n{lines}")


def _merge(base: dict, over: dict, path: str, errors: list) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        p = f"{path}.{k}" if path else k
        if k not in base:
            errors.append((p, "unknown key"))
        elif isinstance(base[k], dict) and k not in ("constants_overrides",):
            if not isinstance(v, dict):
                errors.append((p, "expected an object"))
            else:
                out[k] = _merge(base[k], v, p, errors)
        elif base[k] is None and isinstance(v, dict) and k == "initial_nudged":
            out[k] = _merge(DEFAULTS["initial"], v, p, errors)
        else:
            out[k] = v
    return out


def _num(errors, path, v, *, positive=False, nonneg=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append((path, f"expected a number, got {v!r}"))
        return False
    if integer and int(v) != v:
        errors.append((path, f"expected an integer, got {v!r}"))
        return False
    if not math.isfinite(v):
        errors.append((path, "must be finite"))
        return False
    if positive and not v > 0:
        errors.append((path, f"must be > 0, got {v!r}"))
        return False
    if nonneg and not v >= 0:
        errors.append((path, f"must be >= 0, got {v!r}"))
        return False
    return True


def _n_modes(nx: int, ny: int) -> int:
    k1 = np.fft.fftfreq(nx, 1.0 / nx)
    k2 = np.fft.fftfreq(ny, 1.0 / ny)
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    inside = (3 * np.abs(K1) < nx) & (3 * np.abs(K2) < ny)
    rep = (K1 > 0) | ((K1 == 0) & (K2 > 0))
    return int(2 * np.sum(inside & rep))


def _validate_initial(errors, path, ini, n_modes):
    ok = _num(errors, f"{path}.u_amplitude", ini["u_amplitude"], nonneg=True)
    if _num(errors, f"{path}.u_modes", ini["u_modes"], nonneg=True, integer=True) and n_modes is not None:
        if ini["u_modes"] > n_modes:
            errors.append((f"{path}.u_modes", f"exceeds the {n_modes} resolved Stokes modes"))
    a = _num(errors, f"{path}.phi_mean", ini["phi_mean"])
    b = _num(errors, f"{path}.phi_amplitude", ini["phi_amplitude"], nonneg=True)
    if a and b and not abs(ini["phi_mean"]) + ini["phi_amplitude"] < 1:
        errors.append((path, "|phi_mean| + phi_amplitude must be < 1 so that |phi| < 1"))
    wv = ini["phi_wavevector"]
    if not (isinstance(wv, list) and len(wv) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in wv)):
        errors.append((f"{path}.phi_wavevector", "expected two integers"))
    _num(errors, f"{path}.seed", ini["seed"], nonneg=True, integer=True)
    return ok


def validate(d: dict) -> list:
    """All violated preconditions of a merged config dict, as (path, message)."""
    e = []
    if d["schema_version"] != SCHEMA_VERSION:
        e.append(("schema_version", f"unsupported version {d['schema_version']!r}, expected {SCHEMA_VERSION}"))
    g = d["grid"]
    grid_ok = True
    for k in ("nx", "ny"):
        if _num(e, f"grid.{k}", g[k], positive=True, integer=True):
            if g[k] < 8 or g[k] % 2:
                e.append((f"grid.{k}", f"must be even and >= 8, got {g[k]}"))
                grid_ok = False
        else:
            grid_ok = False
    for k in ("Lx", "Ly"):
        _num(e, f"grid.{k}", g[k], positive=True)
    n_modes = _n_modes(int(g["nx"]), int(g["ny"])) if grid_ok else None

    p = d["physics"]
    for k in ("nu", "beta", "theta", "theta0"):
        _num(e, f"physics.{k}", p[k], positive=True)
    if all(isinstance(p[k], (int, float)) for k in ("theta", "theta0")) and not p["theta0"] > p["theta"]:
        e.append(("physics.theta0", f"double-well potential requires theta0 > theta, got theta0={p['theta0']}, theta={p['theta']}"))
    s0_ok = _num(e, "physics.s0", p["s0"], integer=True)
    if s0_ok and p["s0"] < 2:
        e.append(("physics.s0", f"must be an integer >= 2, got {p['s0']}"))
        s0_ok = False
    sf_ok = _num(e, "physics.s_F", p["s_F"], positive=True, integer=True)
    if s0_ok and sf_ok and not p["s0"] > 2 * p["s_F"] - 1:
        e.append(("physics.s0", f"barrier integrability requires s0 > 2*s_F - 1, got s0={p['s0']}, s_F={p['s_F']}"))

    n = d["noise"]
    _num(e, "noise.sigma0", n["sigma0"], nonneg=True)
    if _num(e, "noise.decay_a", n["decay_a"]) and n["decay_a"] < 1:
        e.append(("noise.decay_a", f"must be >= 1, got {n['decay_a']}"))
    m_ok = _num(e, "noise.M", n["M"], nonneg=True, integer=True)
    k_ok = _num(e, "noise.K_active", n["K_active"], nonneg=True, integer=True)
    if m_ok and k_ok and n["M"] > n["K_active"]:
        e.append(("noise.M", f"must be <= K_active={n['K_active']}, got {n['M']}"))
    if k_ok and n_modes is not None and n["K_active"] > n_modes:
        e.append(("noise.K_active", f"exceeds the {n_modes} resolved Stokes modes"))
    if not isinstance(n["gamma_k"], list):
        e.append(("noise.gamma_k", "expected a list of numbers"))
    else:
        for i, gk in enumerate(n["gamma_k"]):
            _num(e, f"noise.gamma_k[{i}]", gk)
    if _num(e, "noise.q", n["q"], positive=True, integer=True) and s0_ok and n["q"] < p["s0"] + 1:
        e.append(("noise.q", f"noise degeneracy at the pure phases requires q >= s0 + 1 = {p['s0'] + 1}, got {n['q']}"))

    s = d["stepper"]
    dt_ok = _num(e, "stepper.dt", s["dt"], positive=True)
    h_ok = _num(e, "stepper.horizon", s["horizon"], positive=True)
    if dt_ok and h_ok:
        ns = round(s["horizon"] / s["dt"])
        if ns < 1 or abs(ns * s["dt"] - s["horizon"]) > 1e-9 * max(s["horizon"], 1.0):
            e.append(("stepper.horizon", f"must be a whole number of steps of dt={s['dt']}"))
    _num(e, "stepper.snapshot_stride", s["snapshot_stride"], nonneg=True, integer=True)
    if _num(e, "stepper.output_stride", s["output_stride"], positive=True, integer=True) and dt_ok and h_ok:
        ns = round(s["horizon"] / s["dt"])
        if ns % s["output_stride"]:
            e.append(("stepper.output_stride", f"must divide the step count {ns}"))

    nu = d["nudge"]
    if _num(e, "nudge.N", nu["N"], nonneg=True, integer=True) and m_ok and nu["N"] > n["M"]:
        e.append(("nudge.N", f"must be <= M={n['M']} (non-degenerate noise on the nudged modes)"))
    if nu["eta"] != "auto":
        _num(e, "nudge.eta", nu["eta"], nonneg=True)

    _validate_initial(e, "initial", d["initial"], n_modes)
    if d["initial_nudged"] is not None:
        _validate_initial(e, "initial_nudged", d["initial_nudged"], n_modes)

    st = d["stopping"]
    _num(e, "stopping.R", st["R"])
    if st["eps"] is not None:
        _num(e, "stopping.eps", st["eps"], nonneg=True)

    if not isinstance(d["seeds"], list) or not d["seeds"]:
        e.append(("seeds", "expected a non-empty list of integers"))
    else:
        for i, sd in enumerate(d["seeds"]):
            _num(e, f"seeds[{i}]", sd, nonneg=True, integer=True)
    if d["constants"] is not None and not isinstance(d["constants"], (str, dict)):
        e.append(("constants", "expected a file path, an inline table or null"))
    if isinstance(d["constants"], str) and not Path(d["constants"]).is_file():
        e.append(("constants", f"file not found: {d['constants']}"))
    for k, v in d["constants_overrides"].items():
        if k not in _OVERRIDABLE:
            e.append((f"constants_overrides.{k}", f"not overridable; allowed: {sorted(_OVERRIDABLE)}"))
        else:
            _num(e, f"constants_overrides.{k}", v, positive=True)
    _num(e, "ensemble.members", d["ensemble"]["members"], positive=True, integer=True)
    _num(e, "ensemble.workers", d["ensemble"]["workers"], positive=True, integer=True)
    return e


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration.  ``data`` is the fully merged JSON object."""

    data: dict = field(repr=False)

    def __getitem__(self, key):
        return self.data[key]

    def canonical(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    def with_changes(self, **sections) -> "RunConfig":
        """Copy with section-level overrides, e.g. ``with_changes(nudge={"N": 4})``."""
        raw = copy.deepcopy(self.data)
        for sec, vals in sections.items():
            if isinstance(raw.get(sec), dict) and isinstance(vals, dict):
                raw[sec].update(vals)
            else:
                raw[sec] = vals
        return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError([("", "top level must be a JSON object")])
    errors: list = []
    merged = _merge(DEFAULTS, raw, "", errors)
    # rejected entries keep their defaults, so the rest can still be checked
    errors += validate(merged)
    if errors:
        raise ConfigError(errors)
    return RunConfig(merged)


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"JSON parse error in {path}: {exc}")]) from None
    return config_from_dict(raw)
