"""Bundled controller presets, one table per target resonance."""
from __future__ import annotations

from functools import lru_cache
from importlib import resources

import tomli

from .errors import ConfigError

PRESET_KEYS = ("kp", "ki", "f_s", "mu", "omega0", "n_harmonics", "warmup_periods")
OPTIONAL_KEYS = ("ki_nfrc",)


@lru_cache(maxsize=None)
def _table() -> dict:
    text = resources.files("pllt").joinpath("data/presets.toml").read_text()
    return tomli.loads(text)


def available() -> list[str]:
    return list(_table())


def parse_label(label: str) -> tuple[int, int]:
    """``"3:1"`` -> (3, 1)."""
    try:
        a, b = label.split(":")
        kappa, upsilon = int(a), int(b)
    except ValueError:
        raise ConfigError(f"resonance label {label!r} is not of the form kappa:upsilon",
                          key="preset") from None
    if kappa < 1 or upsilon < 1:
        raise ConfigError("resonance indices must be positive", key="preset")
    return kappa, upsilon


def get(label: str) -> dict:
    """Preset values for ``label``; unknown targets fall back to the closest class.

    Superharmonics share the ``3:1`` row and subharmonics the ``1:3`` row,
    matching how the published table groups them.
    """
    table = _table()
    if label in table:
        return dict(table[label])
    kappa, upsilon = parse_label(label)
    if kappa == upsilon:
        return dict(table["1:1"])
    base = dict(table["3:1" if kappa > upsilon else "1:3"])
    # the kappa-th harmonic of upsilon * omega_l / kappa sits on the linear resonance
    base["omega0"] = float(upsilon) / kappa
    base["n_harmonics"] = max(base["n_harmonics"], kappa, upsilon)
    return base
