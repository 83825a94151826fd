"""Strang split-step integration of the bilinear NLS equation on the torus.

    i d_t psi = -Lap psi + V psi + kappa chi_R(|psi|_s) |psi|^(2p) psi + <u(t), Q> psi

with ``u`` piecewise constant.  The linear flow is applied exactly in
coefficient space; the pointwise flow is exact too, because ``|psi|`` does not
change under ``i d_t psi = g(x, |psi|) psi`` with real ``g``.  After every
pointwise substep the state is projected back onto ``|k_i| <= N`` and the
discarded mass is accumulated.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .spectral import (Grid, SpectralField, ShapeMismatch, _scale, embed, embed_index,
                       sobolev_norm)
from .trig import TrigPolynomial


class BlowUp(RuntimeError):
    """The reference Sobolev norm crossed the blow-up threshold."""

    def __init__(self, t_star: float, norm: float):
        super().__init__(f"blow-up detected at t={t_star:.6g} (norm {norm:.4g})")
        self.t_star = t_star
        self.norm = norm


class NonFiniteState(RuntimeError):
    def __init__(self, t_star: float):
        super().__init__(f"non-finite state at t={t_star:.6g}")
        self.t_star = t_star


def smooth_cutoff(r: float, R: float | None) -> float:
    """``chi_R``: 1 on ``[0, R]``, 0 beyond ``2R``, quintic smoothstep between."""
    if R is None or r <= R:
        return 1.0
    if r >= 2 * R:
        return 0.0
    t = (r - R) / R
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass(frozen=True)
class SimParams:
    V: TrigPolynomial
    Q: tuple[TrigPolynomial, ...]
    kappa: float
    p: int
    N: int
    dt: float = 1e-3
    grid: Grid | None = None
    B_max: float = 1e4
    R: float | None = None
    s_ref: float = 1.0
    max_phase_step: float = 0.5

    def __post_init__(self):
        Q = tuple(self.Q)
        object.__setattr__(self, "Q", Q)
        if not Q:
            raise ValueError("need at least one control field")
        d = self.V.d
        if any(q.d != d for q in Q):
            raise ValueError("V and Q must share the dimension")
        if self.p < 1:
            raise ValueError("p must be a positive integer")
        if self.dt <= 0 or self.B_max <= 0 or self.max_phase_step <= 0:
            raise ValueError("dt, B_max and max_phase_step must be positive")
        if self.R is not None and self.R <= 0:
            raise ValueError("truncation radius must be positive")
        if self.grid is None:
            object.__setattr__(self, "grid", Grid.for_cutoff(d, self.N, self.p))
        if self.grid.d != d or not self.grid.supports(self.N):
            raise ShapeMismatch("grid does not match dimension/cutoff")

    @property
    def d(self) -> int:
        return self.V.d

    @property
    def q(self) -> int:
        return len(self.Q)

    def replace(self, **changes) -> SimParams:
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        if "N" in changes and "grid" not in changes:
            data["grid"] = None
        data.update(changes)
        return SimParams(**data)

    @functools.cached_property
    def _V_grid(self) -> np.ndarray:
        return self.grid.sample(self.V)

    @functools.cached_property
    def _Q_grid(self) -> np.ndarray:
        return np.stack([self.grid.sample(q) for q in self.Q])

    @functools.cached_property
    def _spectral(self):
        d, N, M = self.d, self.N, self.grid.M
        kf = np.fft.fftfreq(M, 1.0 / M)
        mesh = np.meshgrid(*([kf] * d), indexing="ij")
        k2 = sum(m ** 2 for m in mesh)
        mask = np.zeros((M,) * d, dtype=bool)
        mask[embed_index(d, N, M)] = True
        w = np.where(mask, (1.0 + k2) ** self.s_ref, 0.0)
        return k2, mask, w

    def potential(self, u: np.ndarray) -> np.ndarray:
        """``<u, Q(x)>`` on the grid."""
        return np.tensordot(np.asarray(u, dtype=float), self._Q_grid, axes=1)

    def to_dict(self) -> dict:
        return {
            "V": self.V.to_dict(), "Q": [q.to_dict() for q in self.Q],
            "kappa": self.kappa, "p": self.p, "N": self.N, "dt": self.dt,
            "M": self.grid.M, "B_max": self.B_max, "R": self.R,
            "s_ref": self.s_ref, "max_phase_step": self.max_phase_step,
        }

    @classmethod
    def from_dict(cls, data: dict) -> SimParams:
        V = TrigPolynomial.from_dict(data["V"])
        grid = Grid(V.d, int(data["M"])) if data.get("M") else None
        return cls(V=V, Q=tuple(TrigPolynomial.from_dict(q) for q in data["Q"]),
                   kappa=float(data["kappa"]), p=int(data["p"]), N=int(data["N"]),
                   dt=float(data.get("dt", 1e-3)), grid=grid,
                   B_max=float(data.get("B_max", 1e4)),
                   R=None if data.get("R") is None else float(data["R"]),
                   s_ref=float(data.get("s_ref", 1.0)),
                   max_phase_step=float(data.get("max_phase_step", 0.5)))


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant control: ordered ``(duration, u)`` segments."""

    segments: tuple[tuple[float, np.ndarray], ...] = ()

    def __post_init__(self):
        segs = []
        q = None
        for dt, u in self.segments:
            u = np.array(u, dtype=float).reshape(-1)
            u.setflags(write=False)
            if not dt > 0:
                raise ValueError("segment durations must be positive")
            if q is not None and u.size != q:
                raise ValueError("all control vectors must have the same length")
            q = u.size
            segs.append((float(dt), u))
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def constant(cls, duration: float, u: Sequence[float]) -> ControlSchedule:
        return cls(((duration, u),)) if duration > 0 else cls()

    @property
    def q(self) -> int | None:
        return self.segments[0][1].size if self.segments else None

    @property
    def duration(self) -> float:
        return math.fsum(dt for dt, _ in self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __add__(self, other: ControlSchedule) -> ControlSchedule:
        return ControlSchedule(self.segments + other.segments)

    def __eq__(self, other):
        if not isinstance(other, ControlSchedule) or len(self) != len(other):
            return False
        return all(a == c and np.array_equal(b, d)
                   for (a, b), (c, d) in zip(self.segments, other.segments))

    def shifted(self, du: np.ndarray) -> ControlSchedule:
        """Add a constant vector to every segment."""
        return ControlSchedule(tuple((dt, u + du) for dt, u in self.segments))

    def split(self, t: float) -> tuple[ControlSchedule, ControlSchedule]:
        """Cut at time ``t`` (inside a segment if needed)."""
        first, second, acc = [], [], 0.0
        for dt, u in self.segments:
            if acc + dt <= t:
                first.append((dt, u))
            elif acc >= t:
                second.append((dt, u))
            else:
                first.append((t - acc, u))
                second.append((acc + dt - t, u))
            acc += dt
        return ControlSchedule(tuple(first)), ControlSchedule(tuple(second))

    def l2_distance(self, other: ControlSchedule) -> float:
        """``|u - u'|`` in L2(0, T) for schedules sharing segment boundaries."""
        if [dt for dt, _ in self.segments] != [dt for dt, _ in other.segments]:
            raise ValueError("schedules must share segment durations")
        return math.sqrt(sum(dt * float(np.sum((u - v) ** 2))
                             for (dt, u), (_, v) in zip(self.segments, other.segments)))

    def to_list(self) -> list[dict]:
        return [{"dt": dt, "u": [float(x) for x in u]} for dt, u in self.segments]

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_list(), **kw)

    @classmethod
    def from_list(cls, rows: Iterable[dict]) -> ControlSchedule:
        return cls(tuple((float(r["dt"]), r["u"]) for r in rows))

    @classmethod
    def from_json(cls, text: str) -> ControlSchedule:
        return cls.from_list(json.loads(text))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Result of :func:`evolve`.

    ``times``/``l2``/``hs`` are recorded after every solver step (plus t=0);
    ``states`` holds the snapshots requested through ``store``.
    """

    times: np.ndarray
    l2: np.ndarray
    hs: np.ndarray
    state_times: tuple[float, ...]
    states: tuple[SpectralField, ...]
    final: SpectralField
    status: str = "completed"
    t_star: float | None = None
    truncation_loss: float = 0.0
    steps: int = 0
    s_ref: float = 1.0
    extra: dict = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def raise_for_status(self) -> Trajectory:
        if self.status == "blew-up":
            raise BlowUp(self.t_star, float(self.hs[-1]))
        if self.status == "non-finite":
            raise NonFiniteState(self.t_star)
        return self

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "l2_norm", "hs_norm"])
        for t, a, b in zip(self.times, self.l2, self.hs):
            w.writerow([repr(float(t)), repr(float(a)), repr(float(b))])
        return buf.getvalue()


def steps_for_segment(duration: float, u: np.ndarray, params: SimParams,
                      dt_max: float | None = None) -> int:
    """Number of equal substeps for one segment.

    The base step shrinks like ``1 / (1 + c |<u,Q>|_inf)`` so that the phase
    rotated per step by the control stays below ``params.max_phase_step``.
    """
    dt = params.dt if dt_max is None else min(params.dt, dt_max)
    omega = float(np.max(np.abs(params.potential(u)))) if np.any(u) else 0.0
    dt_seg = dt / (1.0 + omega * dt / params.max_phase_step)
    return max(1, int(math.ceil(duration / dt_seg - 1e-9)))


def evolve(psi0: SpectralField, sched: ControlSchedule, params: SimParams, *,
           store: str = "final", dt_max: float | None = None,
           substeps: Sequence[int] | None = None) -> Trajectory:
    """Integrate from ``psi0`` under ``sched``.

    ``store`` selects state snapshots: ``"final"`` (start and end),
    ``"segments"`` (every segment boundary) or ``"steps"`` (every step).
    ``substeps`` overrides the per-segment step counts.  Blow-up
    (``|psi|_{s_ref} > B_max``) and non-finite states stop the run and are
    reported through ``status``/``t_star``; see :meth:`Trajectory.raise_for_status`.
    """
    if (psi0.d, psi0.N) != (params.d, params.N):
        raise ShapeMismatch("initial state does not match the simulation cutoff")
    if sched.segments and sched.q != params.q:
        raise ValueError(f"control has {sched.q} channels, fields have {params.q}")
    if store not in ("final", "segments", "steps"):
        raise ValueError("store must be 'final', 'segments' or 'steps'")

    d, N, M, p = params.d, params.N, params.grid.M, params.p
    k2, mask, weights = params._spectral
    outside = ~mask
    scale = _scale(d, M)
    ifft, fft = (np.fft.ifft, np.fft.fft) if d == 1 else (np.fft.ifftn, np.fft.fftn)
    kappa, R = params.kappa, params.R
    V = params._V_grid

    c = embed(psi0.coeffs, d, N, M)
    t = 0.0
    times, l2s, hss = [0.0], [psi0.l2_norm()], [_hs(c, weights)]
    st_times, states = [0.0], [psi0]
    loss = 0.0
    nsteps = 0
    status, t_star = "completed", None

    def half(c, g_static, h):
        nonlocal loss
        psi = ifft(c) * scale
        if kappa:
            chi = 1.0 if R is None else smooth_cutoff(_hs(c, weights), R)
            dens = psi.real ** 2 + psi.imag ** 2
            g = g_static + (kappa * chi) * (dens if p == 1 else dens ** p)
        else:
            g = g_static
        psi = psi * np.exp(-1j * h * g)
        c = fft(psi) / scale
        spill = c[outside]
        loss += float(np.vdot(spill, spill).real)
        c[outside] = 0.0
        return c

    for si, (duration, u) in enumerate(sched.segments):
        n = substeps[si] if substeps is not None else steps_for_segment(duration, u, params, dt_max)
        h = duration / n
        g_static = V + params.potential(u) if np.any(u) else V
        lin = np.exp(-1j * h * k2)
        t0 = t
        for j in range(n):
            c_prev = c
            c = half(c, g_static, h / 2)
            c = c * lin
            c = half(c, g_static, h / 2)
            nsteps += 1
            t = t0 + (j + 1) * h
            hs = _hs(c, weights)
            l2 = math.sqrt(float(np.vdot(c, c).real))
            times.append(t)
            l2s.append(l2)
            hss.append(hs)
            if not (math.isfinite(hs) and math.isfinite(l2)):
                status, t_star = "non-finite", t
                break
            if hs > params.B_max:
                status, t_star = "blew-up", t
                break
            if store == "steps":
                st_times.append(t)
                states.append(_field(c, d, N, M))
        if status != "completed":
            break
        t = t0 + duration
        if store == "segments":
            st_times.append(t)
            states.append(_field(c, d, N, M))

    if status == "non-finite":
        final = _field(c_prev, d, N, M, loss)
    else:
        final = _field(c, d, N, M, loss)
    if store == "final":
        st_times, states = [0.0], [psi0]
        if times[-1] > 0:
            st_times.append(times[-1])
            states.append(final)
    return Trajectory(times=np.array(times), l2=np.array(l2s), hs=np.array(hss),
                      state_times=tuple(st_times), states=tuple(states), final=final,
                      status=status, t_star=t_star, truncation_loss=loss, steps=nsteps,
                      s_ref=params.s_ref)


def _hs(c: np.ndarray, weights: np.ndarray) -> float:
    return math.sqrt(float(np.sum(weights * (c.real ** 2 + c.imag ** 2))))


def _field(c: np.ndarray, d: int, N: int, M: int, loss: float = 0.0) -> SpectralField:
    return SpectralField(d, N, c[embed_index(d, N, M)], loss)


def free_nonlinear_evolve(psi0: SpectralField, delta: float, params: SimParams) -> SpectralField:
    """``R_delta(psi0, 0)`` with at least 16 steps over ``[0, delta]``."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if delta == 0:
        return psi0
    traj = evolve(psi0, ControlSchedule.constant(delta, np.zeros(params.q)), params,
                  dt_max=delta / 16)
    return traj.raise_for_status().final


def check_stability(psi0: SpectralField, psi0_b: SpectralField, u: ControlSchedule,
                    u_b: ControlSchedule, T: float, params: SimParams,
                    s: float | None = None) -> float:
    """Sup-in-time H^s distance between two runs over ``[0, T]``.

    Both schedules are cut at ``T`` and must share segment boundaries; the
    runs use a common step grid so states are compared at identical times.
    Blow-up in either run is raised.
    """
    s = params.s_ref if s is None else s
    u, _ = u.split(T)
    u_b, _ = u_b.split(T)
    if [dt for dt, _ in u.segments] != [dt for dt, _ in u_b.segments]:
        raise ValueError("schedules must share segment boundaries")
    steps = [max(steps_for_segment(dt, a, params), steps_for_segment(dt, b, params))
             for (dt, a), (_, b) in zip(u.segments, u_b.segments)]
    ta = evolve(psi0, u, params, store="steps", substeps=steps).raise_for_status()
    tb = evolve(psi0_b, u_b, params, store="steps", substeps=steps).raise_for_status()
    return max(sobolev_norm(a - b, s) for a, b in zip(ta.states, tb.states))
