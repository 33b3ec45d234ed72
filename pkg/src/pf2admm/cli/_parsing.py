"""Flag grammars shared by the subcommands."""

from __future__ import annotations

from ..prox import ProxSpec
from ..solvers.options import MODES


class ConfigError(ValueError):
    """Bad flags or configuration; reported with exit code 2."""


def _normalize_mode(mode):
    m = mode.strip().upper()
    if m == "D":
        m = "C"
    if m not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; use A, B, C (or D)")
    return m


def _pairs(text, what):
    if text is None or not text.strip():
        return []
    out = []
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"bad {what} entry {item!r}; expected MODE=VALUE")
        mode, value = item.split("=", 1)
        out.append((_normalize_mode(mode), value.strip()))
    modes = [m for m, _ in out]
    if len(set(modes)) != len(modes):
        raise ConfigError(f"mode given twice in {what}: {text!r}")
    return out


def parse_constraints(text) -> dict:
    """``"A=nn,B=tv:0.1"`` to ``{"A": ProxSpec, "B": ProxSpec}``."""
    out = {}
    for mode, value in _pairs(text, "constraint"):
        try:
            out[mode] = ProxSpec.parse(value)
        except ValueError as err:
            raise ConfigError(f"constraint {mode}={value}: {err}") from None
    return out


def parse_ridge(text) -> dict:
    """``"A=0.1,C=0.1"`` to ``{"A": 0.1, "C": 0.1}``."""
    out = {}
    for mode, value in _pairs(text, "ridge"):
        try:
            gamma = float(value)
        except ValueError:
            raise ConfigError(f"ridge strength for {mode} is not a number: {value!r}") from None
        if not gamma >= 0:
            raise ConfigError(f"ridge strength for {mode} must be non-negative")
        out[mode] = gamma
    return out


def parse_dims(text):
    """``"30x40x50"`` to ``(30, 40, 50)``; a ragged middle size ``"50x50-100x15"`` gives ``(50, (50, 100), 15)``."""
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ConfigError(f"dims must look like IxJxK, got {text!r}")
    try:
        I, K = int(parts[0]), int(parts[2])
        if "-" in parts[1]:
            lo, hi = (int(p) for p in parts[1].split("-", 1))
            J = (lo, hi)
        else:
            J = int(parts[1])
    except ValueError:
        raise ConfigError(f"dims must be integers, got {text!r}") from None
    return I, J, K


def format_constraints(constraints: dict) -> str:
    return ",".join(f"{m}={s}" for m, s in sorted(constraints.items()) if not s.is_none)


def format_ridge(ridge: dict) -> str:
    return ",".join(f"{m}={g:g}" for m, g in sorted(ridge.items()) if g)
