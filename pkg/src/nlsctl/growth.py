"""Random forcing on unit intervals and norm-growth statistics.

On each unit interval the control is an independent draw

    eta(t) = sum_j b_j xi_j e_j(t),    t in [0, 1],

with ``e_j`` the orthonormal trigonometric basis of ``L2(0, 1)`` (per
control channel) and ``xi_j`` i.i.d. with unit variance.  The draw is
discretized by exact cell averages, so the piecewise-constant control is
the L2 projection of ``eta`` onto the cell functions.

Seeds: every trajectory owns one ``SeedSequence`` child spawned from the
ensemble seed, and draws its units sequentially from one generator, so
results do not depend on how trajectories are distributed over workers.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import binomtest, linregress

from .solver import ControlSchedule, NonFiniteState, SimParams, evolve
from .spectral import SpectralField

LAWS = ("normal", "uniform", "laplace")


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Truncated random series for the unit-interval control.

    ``amplitudes`` has shape ``(q, J_max)``; ``b[i, j-1]`` multiplies basis
    function ``e_j`` in channel ``i``.  ``cells`` is the number of
    piecewise-constant cells per unit interval.
    """

    amplitudes: np.ndarray
    law: str = "normal"
    cells: int = 200

    def __post_init__(self):
        b = np.array(self.amplitudes, dtype=float)
        if b.ndim != 2 or b.size == 0:
            raise ValueError("amplitudes must be a nonempty (q, J_max) array")
        if not np.all(np.isfinite(b)):
            raise ValueError("amplitudes must be finite")
        if self.law not in LAWS:
            raise ValueError(f"law must be one of {LAWS}")
        if self.cells < 1:
            raise ValueError("cells must be >= 1")
        b.setflags(write=False)
        object.__setattr__(self, "amplitudes", b)

    def __eq__(self, other):
        if not isinstance(other, NoiseModel):
            return NotImplemented
        return (self.law, self.cells) == (other.law, other.cells) and \
            np.array_equal(self.amplitudes, other.amplitudes)

    def __hash__(self):
        return hash((self.law, self.cells, self.amplitudes.tobytes()))

    @classmethod
    def default(cls, q: int, J_max: int = 16, decay: float = 1.5, scale: float = 1.0,
                channels: Sequence[int] | None = None, **kw) -> NoiseModel:
        """``b_j = scale * j**-decay`` on the selected channels (all by default)."""
        if decay <= 0.5:
            raise ValueError("decay must exceed 1/2 for square-summable amplitudes")
        b = np.zeros((q, J_max))
        row = scale * np.arange(1, J_max + 1, dtype=float) ** -decay
        for i in (range(q) if channels is None else channels):
            b[i] = row
        return cls(b, **kw)

    @classmethod
    def zero(cls, q: int, J_max: int = 1, **kw) -> NoiseModel:
        return cls(np.zeros((q, J_max)), **kw)

    @property
    def q(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def J_max(self) -> int:
        return self.amplitudes.shape[1]

    def full_support(self) -> bool:
        """Every active channel has nonzero amplitude for every retained mode."""
        active = np.any(self.amplitudes != 0, axis=1)
        return bool(np.all(self.amplitudes[active] != 0))

    def second_moment(self) -> float:
        """``E |eta|^2_{L2(0,1)} = sum b_j^2``."""
        return float(np.sum(self.amplitudes ** 2))

    def to_dict(self) -> dict:
        return {"amplitudes": self.amplitudes.tolist(), "law": self.law, "cells": self.cells}

    @classmethod
    def from_dict(cls, data: dict) -> NoiseModel:
        return cls(np.array(data["amplitudes"], dtype=float), data.get("law", "normal"),
                   int(data.get("cells", 200)))


def basis_cell_averages(J_max: int, cells: int) -> np.ndarray:
    """``A[j-1, c]`` = mean of ``e_j`` over cell ``c`` of ``[0, 1]``.

    ``e_1 = 1``, ``e_{2k} = sqrt2 cos(2 pi k t)``, ``e_{2k+1} = sqrt2 sin(2 pi k t)``.
    """
    edges = np.linspace(0.0, 1.0, cells + 1)
    a, b = edges[:-1], edges[1:]
    out = np.empty((J_max, cells))
    for j in range(1, J_max + 1):
        if j == 1:
            out[0] = 1.0
            continue
        k = j // 2
        w = 2 * math.pi * k
        if j % 2 == 0:
            out[j - 1] = math.sqrt(2) * (np.sin(w * b) - np.sin(w * a)) / (w * (b - a))
        else:
            out[j - 1] = math.sqrt(2) * (np.cos(w * a) - np.cos(w * b)) / (w * (b - a))
    return out


def _draw(model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    shape = model.amplitudes.shape
    if model.law == "normal":
        return rng.standard_normal(shape)
    if model.law == "uniform":
        return rng.uniform(-math.sqrt(3), math.sqrt(3), shape)
    return rng.laplace(0.0, 1 / math.sqrt(2), shape)


def _unit_schedule(model: NoiseModel, rng: np.random.Generator) -> ControlSchedule:
    xi = _draw(model, rng)
    avg = basis_cell_averages(model.J_max, model.cells)
    u = (model.amplitudes * xi) @ avg  # (q, cells)
    h = 1.0 / model.cells
    return ControlSchedule(tuple((h, u[:, c]) for c in range(model.cells)))


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_eta_unit(model: NoiseModel, seed) -> ControlSchedule:
    """One unit-interval control drawn from ``model``; deterministic in ``seed``."""
    return _unit_schedule(model, _generator(seed))


def eta_norm_squared(model: NoiseModel, seed) -> float:
    """``|eta|^2_{L2(0,1)}`` of the continuous draw (before discretization)."""
    xi = _draw(model, _generator(seed))
    return float(np.sum((model.amplitudes * xi) ** 2))


# -- trajectories ---------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-unit sup norms of one trajectory.

    ``sups[k-1]`` is the largest ``|psi|_s`` sampled on unit ``k``;
    ``blew_up`` marks a run stopped by the blow-up threshold, whose last
    unit gets sup ``inf``.
    """

    sups: tuple[float, ...]
    blew_up: bool = False
    t_star: float | None = None
    failed: bool = False

    def tau(self, M: float) -> int | None:
        """First unit whose sup exceeds ``M``; ``None`` if none within the horizon."""
        for k, v in enumerate(self.sups, start=1):
            if v > M:
                return k
        return None


def run_trajectory(psi0: SpectralField, model: NoiseModel, n_units: int, params: SimParams,
                   seed) -> TrajectoryRecord:
    """Concatenate ``n_units`` independent unit draws starting from ``psi0`` (normalized).

    Norms use ``params.s_ref``.  With a truncation radius the equation is
    globally well posed, so the blow-up threshold is disabled.
    """
    if model.q != params.q:
        raise ValueError("noise model and control fields disagree on q")
    if n_units < 0:
        raise ValueError("n_units must be >= 0")
    psi = psi0.normalized()
    if params.R is not None:
        params = params.replace(B_max=math.inf)
    rng = _generator(seed)
    sups = []
    t = 0.0
    for _ in range(n_units):
        sched = _unit_schedule(model, rng)
        traj = evolve(psi, sched, params)
        if traj.status == "non-finite":
            raise NonFiniteState(t + traj.t_star)
        if traj.status == "blew-up":
            sups.append(math.inf)
            return TrajectoryRecord(tuple(sups), True, t + traj.t_star)
        sups.append(float(np.max(traj.hs)))
        psi = traj.final
        t += 1.0
    return TrajectoryRecord(tuple(sups))


def _safe_trajectory(psi0, model, n_units, params, seed) -> TrajectoryRecord:
    try:
        return run_trajectory(psi0, model, n_units, params, seed)
    except NonFiniteState as exc:
        return TrajectoryRecord((), False, exc.t_star, failed=True)


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    ci = binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r_squared: float
    points: int

    @property
    def rate(self) -> float:
        """Fitted per-unit survival factor ``c`` in ``P{tau > n} ~ c**n``."""
        return math.exp(self.slope) if math.isfinite(self.slope) else math.nan


def fit_log_survival(survival: Sequence[float], start: int = 1) -> DecayFit:
    """Least-squares line through ``(n, log S(n))`` for ``n >= start`` with ``S(n) > 0``."""
    pts = [(n, math.log(s)) for n, s in enumerate(survival) if n >= start and s > 0]
    if len(pts) < 3:
        return DecayFit(math.nan, math.nan, math.nan, len(pts))
    x, y = np.array(pts).T
    if np.ptp(y) == 0:
        return DecayFit(0.0, float(y[0]), 1.0, len(pts))
    fit = linregress(x, y)
    return DecayFit(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2), len(pts))


@dataclass(frozen=True)
class GrowthStats:
    """Ensemble results: trajectories in seed order plus survival curves per level."""

    records: tuple[TrajectoryRecord, ...]
    n_units: int
    M_levels: tuple[float, ...]
    seed: int
    survival: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)

    @property
    def completed(self) -> int:
        return sum(not r.failed for r in self.records)

    def taus(self, M: float) -> list[int | None]:
        return [r.tau(M) for r in self.records if not r.failed]

    def trajectories_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["traj_id", "unit", "sup_norm", "tau_flags", "blew_up", "failed"])
        for i, r in enumerate(self.records):
            if r.failed:
                w.writerow([i, "", "", "", int(r.blew_up), 1])
                continue
            for k, v in enumerate(r.sups, start=1):
                flags = ";".join(f"{M:g}" for M in self.M_levels if r.tau(M) == k)
                w.writerow([i, k, repr(v), flags, int(r.blew_up), 0])
        return buf.getvalue()

    def ensemble_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "M", "survival", "ci_lo", "ci_hi"])
        for M in self.M_levels:
            for n, (s, (lo, hi)) in enumerate(zip(self.survival[M], self.intervals[M])):
                w.writerow([n, repr(M), repr(s), repr(lo), repr(hi)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "trajectories": len(self.records),
            "completed": self.completed,
            "n_units": self.n_units,
            "seed": self.seed,
            "levels": [
                {"M": M, "survival_at_horizon": self.survival[M][-1],
                 "slope": self.fits[M].slope, "rate": self.fits[M].rate,
                 "r_squared": self.fits[M].r_squared}
                for M in self.M_levels
            ],
        }


def survival_curve(taus: Sequence[int | None], n_units: int) -> tuple[list[float], list[tuple[float, float]]]:
    """``P{tau > n}`` for ``n = 0..n_units`` with Wilson intervals."""
    total = len(taus)
    surv, ci = [], []
    for n in range(n_units + 1):
        k = sum(1 for t in taus if t is None or t > n)
        surv.append(k / total if total else math.nan)
        ci.append(wilson_interval(k, total))
    return surv, ci


def trajectory_seeds(seed: int, m_traj: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(m_traj)


def monte_carlo(psi0: SpectralField, model: NoiseModel, n_units: int, m_traj: int,
                M_levels: Sequence[float], params: SimParams, *, seed: int = 0,
                workers: int = 1) -> GrowthStats:
    """Independent trajectories and their survival curves ``P{tau_M > n}``.

    A trajectory that hits a non-finite state is kept as a flagged record
    and left out of the survival estimates.
    """
    if m_traj < 1:
        raise ValueError("m_traj must be >= 1")
    seeds = trajectory_seeds(seed, m_traj)
    if workers == 1:
        records = [_safe_trajectory(psi0, model, n_units, params, s) for s in seeds]
    else:
        records = Parallel(n_jobs=workers)(
            delayed(_safe_trajectory)(psi0, model, n_units, params, s) for s in seeds)
    levels = tuple(float(M) for M in M_levels)
    survival, intervals, fits = {}, {}, {}
    for M in levels:
        taus = [r.tau(M) for r in records if not r.failed]
        survival[M], intervals[M] = survival_curve(taus, n_units)
        fits[M] = fit_log_survival(survival[M])
    return GrowthStats(tuple(records), n_units, levels, seed, survival, intervals, fits)
