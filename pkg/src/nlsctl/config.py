"""Experiment configuration for the command line.

A config file is JSON with optional top-level ``seed``, ``out``, ``workers``
and one block per subcommand.  Each block may carry a ``solver`` sub-block
overriding the subcommand's default solver settings.  Resolution order for
``seed``/``out``/``workers`` is: command-line flag, then environment
(``NLSCTL_SEED``, ``NLSCTL_OUT``, ``NLSCTL_WORKERS``), then file, then default.
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .saturation import FrequencySet
from .solver import SimParams
from .spectral import SpectralField, plane_wave
from .trig import TrigPolynomial

COMMANDS = ("saturate", "synthesize", "limit", "growth", "evolve")

ENV = {"seed": "NLSCTL_SEED", "out": "NLSCTL_OUT", "workers": "NLSCTL_WORKERS"}


class ConfigError(ValueError):
    pass


def standard_set(d: int) -> list[list[int]]:
    """``e_1, ..., e_{d-1}`` and the all-ones vector."""
    out = [[int(i == j) for i in range(d)] for j in range(d - 1)]
    return out + [[1] * d]


def _cos(k, a):
    return {"d": len(k), "constant": 0.0, "terms": [{"k": list(k), "cos": a, "sin": 0.0}]}


DEFAULTS: dict[str, dict] = {
    "saturate": {"freqset": {"d": 2, "members": standard_set(2)}, "cutoff": 5.0, "max_level": 8},
    "synthesize": {
        "freqset": {"d": 1, "members": [[1]]},
        "theta": _cos((2,), 0.3),
        "eps": 1e-2,
        "psi0": {"plane_wave": [0]},
        "plan": None,
        "s": 1.0,
        "max_level": 8,
        "solver": {"kappa": 1.0, "p": 1, "N": 256, "dt": 1e-3, "s_ref": 1.0},
    },
    "limit": {
        "freqset": {"d": 1, "members": [[1]]},
        "psi0": {"modes": [[0, 1.0, 0.0], [1, 0.3, 0.0]], "normalize": True},
        "phi": _cos((1,), 1.0),
        "u": [0.5, 0.0, 0.0],
        "deltas": [1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
        "steps_per_delta": 64,
        "solver": {"kappa": 1.0, "p": 1, "N": 128, "dt": 1e-3, "s_ref": 1.0},
    },
    "growth": {
        "freqset": {"d": 1, "members": [[1]]},
        "psi0": {"plane_wave": [0]},
        "noise": {"J_max": 16, "decay": 1.5, "law": "normal", "cells": 200},
        "n_units": 50,
        "m_traj": 200,
        "M_levels": [2.0],
        "solver": {"kappa": 1.0, "p": 1, "N": 32, "dt": 5e-3, "s_ref": 2.0, "R": 50.0},
    },
    "evolve": {
        "freqset": {"d": 1, "members": [[1]]},
        "psi0": {"plane_wave": [0]},
        "schedule": [{"dt": 1.0, "u": [0.0, 0.0, 0.0]}],
        "store": "final",
        "solver": {"kappa": 1.0, "p": 1, "N": 64, "dt": 1e-3, "s_ref": 1.0},
    },
}


def _merge(base: dict, over: Mapping) -> dict:
    """Block-level keys replace the defaults; the ``solver`` sub-block merges key by key."""
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k == "solver" and isinstance(v, Mapping):
            out[k] = {**out.get(k, {}), **copy.deepcopy(dict(v))}
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    block: dict
    seed: int = 0
    out: str = "results"
    workers: int = 1
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "seed": self.seed, "out": self.out,
                "workers": self.workers, self.command: self.block, **self.extra}

    @classmethod
    def from_dict(cls, data: Mapping, command: str | None = None) -> ExperimentConfig:
        command = command or data.get("command")
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        block = _merge(DEFAULTS[command], data.get(command, {}))
        known = {"command", "seed", "out", "workers", *COMMANDS}
        extra = {k: copy.deepcopy(v) for k, v in data.items() if k not in known}
        return cls(command, block, int(data.get("seed", 0)), str(data.get("out", "results")),
                   int(data.get("workers", 1)), extra)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def load_config(command: str, path: str | None = None, *, seed: int | None = None,
                out: str | None = None, workers: int | None = None,
                env: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Read the file (if any) and apply environment and flag overrides."""
    env = os.environ if env is None else env
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    data = dict(data)
    for key, cast in (("seed", int), ("out", str), ("workers", int)):
        if ENV[key] in env:
            try:
                data[key] = cast(env[ENV[key]])
            except ValueError as exc:
                raise ConfigError(f"bad value for {ENV[key]}") from exc
    for key, val in (("seed", seed), ("out", out), ("workers", workers)):
        if val is not None:
            data[key] = val
    cfg = ExperimentConfig.from_dict(data, command)
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


# -- builders -------------------------------------------------------------

def build_freqset(spec) -> FrequencySet:
    try:
        I = FrequencySet.from_dict(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed frequency set: {exc}") from exc
    if not len(I):
        raise ConfigError("frequency set is empty")
    return I


def build_trig(spec, d: int) -> TrigPolynomial:
    if spec is None:
        return TrigPolynomial.zero(d)
    if isinstance(spec, (int, float)):
        return TrigPolynomial(d, float(spec))
    try:
        f = TrigPolynomial.from_dict(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed trigonometric polynomial: {exc}") from exc
    if f.d != d:
        raise ConfigError("polynomial dimension does not match the frequency set")
    return f


def control_fields(I: FrequencySet) -> tuple[TrigPolynomial, ...]:
    """``1`` followed by ``sin<x,k>, cos<x,k>`` for each member."""
    Q = [TrigPolynomial.one(I.d)]
    for k in I:
        Q += [TrigPolynomial.sin(k), TrigPolynomial.cos(k)]
    return tuple(Q)


def build_params(block: Mapping, I: FrequencySet) -> SimParams:
    s = dict(block.get("solver", {}))
    d = I.d
    V = build_trig(s.pop("V", None), d)
    Q = s.pop("Q", None)
    Q = control_fields(I) if Q is None else tuple(build_trig(q, d) for q in Q)
    R = s.pop("R", None)
    try:
        return SimParams(V=V, Q=Q, kappa=float(s.pop("kappa", 1.0)), p=int(s.pop("p", 1)),
                         N=int(s.pop("N", 64)), dt=float(s.pop("dt", 1e-3)),
                         B_max=float(s.pop("B_max", 1e4)), R=None if R is None else float(R),
                         s_ref=float(s.pop("s_ref", 1.0)),
                         max_phase_step=float(s.pop("max_phase_step", 0.5)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver settings: {exc}") from exc


def build_state(spec: Mapping, d: int, N: int) -> SpectralField:
    try:
        if "plane_wave" in spec:
            return plane_wave(spec["plane_wave"], N)
        modes = {tuple(row[:d]): complex(row[d], row[d + 1]) for row in spec["modes"]}
        f = SpectralField.from_modes(d, N, modes)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"malformed initial state: {exc}") from exc
    return f.normalized() if spec.get("normalize", False) else f


def json_safe(obj: Any) -> Any:
    """Replace non-finite floats so the output is strict JSON."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def dump_json(obj: Any) -> str:
    return json.dumps(json_safe(obj), sort_keys=True, indent=2) + "\n"
