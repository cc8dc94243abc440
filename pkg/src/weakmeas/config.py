"""Run configuration shared by the command line tools.

Values are resolved in precedence order: command line flag, then config file
entry, then (for the master seed only) the ``SEED`` environment variable, then
the built-in default.  The physical system itself (spectrum, amplitudes or
probabilities, pointer spread) has no default and must be supplied.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from .core import ApparatusConfig, PureState, make_state

__all__ = ["ConfigError", "RunConfig", "load_config_file", "resolve_master_seed"]


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Declarative description of a run; see :meth:`build_system`.

    ``amplitudes`` entries may be real numbers or ``[re, im]`` pairs;
    ``probabilities`` is the convenience alternative giving Born weights with
    zero phases.  Exactly one of the two must be set.
    """

    spectrum: tuple[float, ...] | None = None
    amplitudes: tuple[complex, ...] | None = None
    probabilities: tuple[float, ...] | None = None
    delta_p: float | None = None
    max_steps: int = 1000
    trajectories: int = 1000
    master_seed: int | None = None
    convergence_tol: float = 1e-6
    bins: int = 101
    early_stop: bool = True
    workers: int = 1
    format: str = "csv"

    def validate(self) -> "RunConfig":
        if self.max_steps < 1:
            raise ConfigError("max_steps must be at least 1")
        if self.trajectories < 1:
            raise ConfigError("trajectories must be at least 1")
        if not 0.0 < self.convergence_tol < 1.0:
            raise ConfigError("convergence_tol must lie strictly between 0 and 1")
        if self.bins < 1:
            raise ConfigError("bins must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        if self.amplitudes is not None and self.probabilities is not None:
            raise ConfigError("give either amplitudes or probabilities, not both")
        return self

    def build_system(self) -> tuple[PureState, ApparatusConfig]:
        """Construct the state and apparatus, or explain what is missing."""
        self.validate()
        if self.spectrum is None:
            raise ConfigError("spectrum is required (e.g. --spectrum 1,-1)")
        if self.delta_p is None:
            raise ConfigError("delta_p is required (e.g. --delta-p 10)")
        if self.amplitudes is not None:
            amps = np.asarray(self.amplitudes, dtype=complex)
        elif self.probabilities is not None:
            probs = np.asarray(self.probabilities, dtype=float)
            if np.any(probs < 0.0):
                raise ConfigError("probabilities must be non-negative")
            total = probs.sum()
            if not math.isfinite(total) or total <= 0.0:
                raise ConfigError("probabilities must have a positive sum")
            amps = np.sqrt(probs / total).astype(complex)
        else:
            raise ConfigError("amplitudes or probabilities are required")
        try:
            state = make_state(self.spectrum, amps)
            app = ApparatusConfig(float(self.delta_p))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return state, app

    def seed(self) -> int:
        return resolve_master_seed(self.master_seed)

    def resolved(self, state: PureState, app: ApparatusConfig) -> dict:
        """JSON-ready snapshot of what a run actually used."""
        return {
            "spectrum": [float(v) for v in state.spectrum.eigenvalues],
            "amplitudes": [[float(a.real), float(a.imag)]
                           for a in state.amplitudes],
            "born_weights": [float(w) for w in state.probabilities],
            "delta_p": app.delta_p,
            "max_steps": self.max_steps,
            "trajectories": self.trajectories,
            "master_seed": self.seed(),
            "convergence_tol": self.convergence_tol,
            "bins": self.bins,
            "early_stop": self.early_stop,
            "workers": self.workers,
            "format": self.format,
        }


_FIELD_NAMES = {f.name for f in fields(RunConfig)}

_LIST_KEYS = ("spectrum", "amplitudes", "probabilities")
_INT_KEYS = ("max_steps", "trajectories", "master_seed", "bins", "workers")
_FLOAT_KEYS = ("delta_p", "convergence_tol")


def load_config_file(path: str) -> RunConfig:
    """Parse a JSON config file; unknown keys are rejected, not ignored."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(raw) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return _coerce(raw).validate()


def _coerce(raw: dict) -> RunConfig:
    cfg = RunConfig()
    updates = {}
    for key, value in raw.items():
        try:
            if key == "amplitudes":
                updates[key] = tuple(_as_complex(v) for v in value)
            elif key in _LIST_KEYS:
                updates[key] = tuple(float(v) for v in value)
            elif key in _INT_KEYS:
                if isinstance(value, bool) or value != int(value):
                    raise ConfigError(f"{key} must be an integer")
                updates[key] = int(value)
            elif key in _FLOAT_KEYS:
                updates[key] = float(value)
            elif key == "early_stop":
                if not isinstance(value, bool):
                    raise ConfigError("early_stop must be true or false")
                updates[key] = value
            elif key == "format":
                updates[key] = str(value)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid value for {key}: {value!r}") from exc
    return replace(cfg, **updates)


def _as_complex(entry) -> complex:
    if isinstance(entry, (int, float)):
        return complex(entry)
    if (isinstance(entry, (list, tuple)) and len(entry) == 2
            and all(isinstance(x, (int, float)) for x in entry)):
        return complex(entry[0], entry[1])
    raise ConfigError(
        f"amplitude entries must be numbers or [re, im] pairs, got {entry!r}")


def resolve_master_seed(explicit: int | None) -> int:
    """Explicit value if given, else the ``SEED`` environment variable, else 0."""
    if explicit is not None:
        return int(explicit)
    env = os.environ.get("SEED")
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"SEED environment variable is not an integer: {env!r}") from exc
