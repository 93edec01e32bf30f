"""Run files: TOML with dotted keys, validated before anything runs.

A run file names the experiment ``kind`` and a target resonance
``preset`` (``"kappa:upsilon"``).  Controller, filter and sampling values
default to the bundled preset for that target; any key given explicitly
wins.  Unknown keys are rejected.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import tomli
import tomli_w

from . import presets
from .errors import ConfigError

KINDS = ("nfrc", "backbone", "transfer", "basin", "hbm")


def _finite(v):
    return math.isfinite(v)


def _pos(v):
    return math.isfinite(v) and v > 0


def _nonneg(v):
    return math.isfinite(v) and v >= 0


def _pos_int(v):
    return v >= 1


@dataclass(frozen=True)
class Key:
    type: type
    check: Callable[[Any], bool] | None = None
    hint: str = ""


# dotted key -> expected type, validator, message
SCHEMA: dict[str, Key] = {
    "kind": Key(str, lambda v: v in KINDS, f"must be one of {', '.join(KINDS)}"),
    "preset": Key(str),
    "out": Key(str),

    "oscillator.m": Key(float, _pos, "must be > 0"),
    "oscillator.c": Key(float, _nonneg, "must be >= 0"),
    "oscillator.k": Key(float, _pos, "must be > 0"),
    "oscillator.k_nl": Key(float, _finite, "must be finite"),

    "controller.kp": Key(float, _nonneg, "gain must be >= 0"),
    "controller.ki": Key(float, _nonneg, "gain must be >= 0"),
    "controller.omega0": Key(float, _pos, "must be > 0"),
    "controller.phase_ref": Key(float, _finite, "must be finite"),
    "controller.kappa": Key(int, _pos_int, "must be >= 1"),
    "controller.upsilon": Key(int, _pos_int, "must be >= 1"),
    "controller.force_amp": Key(float, _nonneg, "must be >= 0"),
    "controller.warmup_periods": Key(float, _nonneg, "must be >= 0"),

    "filter.n": Key(int, _pos_int, "must be >= 1"),
    "filter.mu": Key(float, lambda v: 0 < v < 4, "must lie in (0, 4)"),

    "sim.f_s": Key(float, _pos, "must be > 0"),

    "lock.tol_deg": Key(float, _pos, "must be > 0"),
    "lock.hold_periods": Key(float, _pos, "must be > 0"),

    "sweep.start": Key(float, _finite, "must be finite"),
    "sweep.stop": Key(float, _finite, "must be finite"),
    "sweep.n_points": Key(int, _pos_int, "must be >= 1"),
    "sweep.settle_periods": Key(float, _nonneg, "must be >= 0"),
    "sweep.window_periods": Key(float, _pos, "must be > 0"),
    "sweep.stationarity": Key(float, _pos, "must be > 0"),
    "sweep.timeout_periods": Key(float, _pos, "must be > 0"),
    "sweep.ramp_periods": Key(float, _nonneg, "must be >= 0"),
    "sweep.on_failure": Key(str, lambda v: v in ("continue", "abort"), "must be continue or abort"),

    "transfer.timeout": Key(float, _pos, "must be > 0"),
    "transfer.ki": Key(float, _nonneg, "gain must be >= 0"),
    "transfer.subharmonic_ratio": Key(float, _pos, "must be > 0"),

    "basin.force_amp": Key(float, _nonneg, "must be >= 0"),
    "basin.omega": Key(float, _pos, "must be > 0"),
    "basin.x_min": Key(float, _finite, "must be finite"),
    "basin.x_max": Key(float, _finite, "must be finite"),
    "basin.v_min": Key(float, _finite, "must be finite"),
    "basin.v_max": Key(float, _finite, "must be finite"),
    "basin.resolution": Key(int, lambda v: v >= 2, "must be >= 2"),
    "basin.horizon_periods": Key(int, _pos_int, "must be >= 1"),
    "basin.steps_per_period": Key(int, lambda v: v >= 8, "must be >= 8"),
    "basin.upsilon": Key(int, lambda v: v >= 2, "must be >= 2"),

    "hbm.forces": Key(list, lambda v: len(v) > 0 and all(_nonneg(x) for x in v),
                      "must be a non-empty list of forces >= 0"),
    "hbm.omega_min": Key(float, _pos, "must be > 0"),
    "hbm.omega_max": Key(float, _pos, "must be > 0"),
    "hbm.n_harmonics": Key(int, _pos_int, "must be >= 1"),
    "hbm.stability": Key(bool),
    "hbm.switch_branches": Key(bool),
    "hbm.seed": Key(str),
}

_DEFAULTS = {
    "oscillator.m": 1.0, "oscillator.c": 0.001, "oscillator.k": 1.0, "oscillator.k_nl": 1.0,
    "lock.tol_deg": 0.5, "lock.hold_periods": 50.0,
    "sweep.settle_periods": 30.0, "sweep.window_periods": 50.0, "sweep.stationarity": 2e-5,
    "sweep.timeout_periods": 6000.0, "sweep.ramp_periods": 10.0, "sweep.on_failure": "continue",
    "transfer.timeout": 40000.0, "transfer.subharmonic_ratio": 1.0,
    "basin.force_amp": 0.5, "basin.omega": 3.0, "basin.x_min": -2.0, "basin.x_max": 2.0,
    "basin.v_min": -2.0, "basin.v_max": 2.0, "basin.resolution": 201,
    "basin.horizon_periods": 600, "basin.steps_per_period": 64, "basin.upsilon": 3,
    "hbm.n_harmonics": 14, "hbm.stability": True, "hbm.switch_branches": False,
}


def _kind_defaults(kind: str, label: str, kappa: int, upsilon: int) -> dict:
    """Defaults that depend on the experiment and the target."""
    from .experiment import ResonanceSpec, resonant_phase_lag

    spec = ResonanceSpec(kappa, upsilon)
    out: dict[str, Any] = {"controller.phase_ref": resonant_phase_lag(spec)}
    primary = spec.is_primary
    out["controller.force_amp"] = 1e-4 if primary else 0.5
    if kind == "nfrc":
        out.update({"sweep.start": -0.1, "sweep.stop": -math.pi + 0.1, "sweep.n_points": 40})
    elif kind == "backbone":
        if primary:
            out.update({"sweep.start": 5e-5, "sweep.stop": 1.5e-4, "sweep.n_points": 11})
        elif spec.is_subharmonic:
            out.update({"sweep.start": 0.8, "sweep.stop": 0.1, "sweep.n_points": 15})
        else:
            out.update({"sweep.start": 0.1, "sweep.stop": 0.8, "sweep.n_points": 15})
    if kind == "hbm":
        w0 = upsilon / kappa
        out.update({"hbm.forces": [out["controller.force_amp"]],
                    "hbm.omega_min": 0.9 * w0 if primary else 0.5 * w0,
                    "hbm.omega_max": 1.1 * w0 if primary else 2.0 * w0})
    return out


def _relevant(key: str, kind: str) -> bool:
    section = key.split(".")[0] if "." in key else ""
    if section in ("", "oscillator"):
        return True
    if kind == "basin":
        return section == "basin"
    if kind == "hbm":
        return section == "hbm" or key in ("controller.kappa", "controller.upsilon")
    if section in ("controller", "filter", "sim", "lock"):
        return True
    if section == "sweep":
        return kind in ("nfrc", "backbone")
    if section == "transfer":
        return True  # nfrc/backbone on subharmonics capture first
    return False


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration; ``values`` maps dotted keys to values."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def kind(self) -> str:
        return self.values["kind"]

    # -- domain objects ------------------------------------------------------
    def oscillator(self):
        from .oscillator import OscillatorParams
        v = self.values
        return OscillatorParams(v["oscillator.m"], v["oscillator.c"], v["oscillator.k"],
                                v["oscillator.k_nl"])

    def resonance(self):
        from .experiment import ResonanceSpec
        return ResonanceSpec(self.values["controller.kappa"], self.values["controller.upsilon"])

    def rig_setup(self):
        from .controller import LockPolicy, PIGains
        from .experiment import RigSetup
        v = self.values
        return RigSetup(plant=self.oscillator(), gains=PIGains(v["controller.kp"], v["controller.ki"]),
                        f_s=v["sim.f_s"], mu=v["filter.mu"], n_harmonics=v["filter.n"],
                        omega0=v["controller.omega0"],
                        lock=LockPolicy(tol=math.radians(v["lock.tol_deg"]),
                                        hold_periods=v["lock.hold_periods"],
                                        warmup_periods=v["controller.warmup_periods"]))

    def schedule(self):
        from .experiment import FORCE, PHASE, SweepSchedule
        v = self.values
        kind = PHASE if self.kind == "nfrc" else FORCE
        return SweepSchedule.linspace(
            kind, v["sweep.start"], v["sweep.stop"], v["sweep.n_points"],
            settle_periods=v["sweep.settle_periods"], window_periods=v["sweep.window_periods"],
            stationarity=v["sweep.stationarity"], timeout_periods=v["sweep.timeout_periods"],
            ramp_periods=v["sweep.ramp_periods"], on_failure=v["sweep.on_failure"])

    def grid(self):
        from .experiment import GridSpec
        v = self.values
        return GridSpec((v["basin.x_min"], v["basin.x_max"]), (v["basin.v_min"], v["basin.v_max"]),
                        v["basin.resolution"])


def _flatten(doc: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def _coerce(key: str, value):
    spec = SCHEMA.get(key)
    if spec is None:
        raise ConfigError("unknown key", key=key)
    t = spec.type
    if t is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {type(value).__name__}", key=key)
        value = float(value)
    elif t is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {type(value).__name__}", key=key)
    elif t is bool:
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", key=key)
    elif t is str:
        if not isinstance(value, str):
            raise ConfigError("expected a string", key=key)
    elif t is list:
        if not isinstance(value, list) or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
            raise ConfigError("expected a list of numbers", key=key)
        value = [float(x) for x in value]
    if spec.check is not None and not spec.check(value):
        raise ConfigError(spec.hint or "invalid value", key=key)
    return value


def resolve(raw: dict, preset: str | None = None, kind: str | None = None) -> RunConfig:
    """Validate a flat key/value mapping and fill in defaults.

    ``preset`` and ``kind`` (e.g. from the command line) override the
    values in ``raw``.
    """
    given = {k: _coerce(k, v) for k, v in raw.items()}
    if kind is not None:
        given["kind"] = _coerce("kind", kind)
    if preset is not None:
        given["preset"] = _coerce("preset", preset)
    if "kind" not in given:
        raise ConfigError("missing experiment kind", key="kind")
    kind = given["kind"]
    label = given.get("preset", "1:1")
    kappa, upsilon = presets.parse_label(label)
    kappa = given.get("controller.kappa", kappa)
    upsilon = given.get("controller.upsilon", upsilon)

    pre = presets.get(label)
    values: dict[str, Any] = {"kind": kind, "preset": label}
    values.update(_DEFAULTS)
    values.update({
        "controller.kp": float(pre["kp"]), "controller.ki": float(pre["ki"]),
        "controller.omega0": float(pre["omega0"]), "controller.kappa": kappa,
        "controller.upsilon": upsilon, "controller.warmup_periods": float(pre["warmup_periods"]),
        "filter.n": int(pre["n_harmonics"]), "filter.mu": float(pre["mu"]),
        "sim.f_s": float(pre["f_s"]), "transfer.ki": float(pre["ki"]),
    })
    if kind == "nfrc" and "ki_nfrc" in pre:
        values["controller.ki"] = float(pre["ki_nfrc"])
    values.update(_kind_defaults(kind, label, kappa, upsilon))
    values.update(given)
    values = {k: v for k, v in values.items() if _relevant(k, kind) or k in given}

    if kind in ("nfrc", "backbone", "transfer"):
        if values["filter.n"] < max(kappa, upsilon):
            raise ConfigError("filter order must cover kappa and upsilon", key="filter.n")
    if kind == "basin":
        if values["basin.x_min"] >= values["basin.x_max"]:
            raise ConfigError("x_min must be < x_max", key="basin.x_min")
        if values["basin.v_min"] >= values["basin.v_max"]:
            raise ConfigError("v_min must be < v_max", key="basin.v_min")
    if kind == "hbm" and values["hbm.omega_min"] >= values["hbm.omega_max"]:
        raise ConfigError("omega_min must be < omega_max", key="hbm.omega_min")
    if kind == "hbm" and upsilon > 1 and "hbm.seed" not in values:
        raise ConfigError("subharmonic branches need a captured state (capture.csv of a transfer run)",
                          key="hbm.seed")
    if kind == "backbone" and min(values["sweep.start"], values["sweep.stop"]) < 0:
        raise ConfigError("force set-points must be >= 0", key="sweep.start")
    return RunConfig(values)


def loads(text: str, preset: str | None = None, kind: str | None = None) -> RunConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        if line is None:
            m = re.search(r"line (\d+), column (\d+)", str(exc))
            if m:
                line, col = int(m.group(1)), int(m.group(2))
        msg = getattr(exc, "msg", str(exc))
        raise ConfigError(msg, line=line, column=col) from None
    return resolve(_flatten(doc), preset=preset, kind=kind)


def load_config(path, preset: str | None = None, kind: str | None = None) -> RunConfig:
    """Read and validate a run file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such file: {path}", key="config")
    return loads(path.read_text(), preset=preset, kind=kind)


def serialize(cfg: RunConfig) -> str:
    """TOML text that loads back to an equal configuration."""
    doc: dict[str, Any] = {}
    for key, value in sorted(cfg.values.items(), key=lambda kv: ("." in kv[0], kv[0])):
        *sections, leaf = key.split(".")
        node = doc
        for s in sections:
            node = node.setdefault(s, {})
        node[leaf] = value
    return tomli_w.dumps(doc)
