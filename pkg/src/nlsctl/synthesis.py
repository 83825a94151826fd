"""Phase synthesis: decompose a target phase into B-trees and compile kicks.

A tree's value is ``theta0 - sum_j B(child_j)``.  Leaves are directly in the
span of the control fields and are realized by one short strong kick.  The
term ``-B(child)`` is realized by conjugating a free evolution of length
``delta`` with kicks of amplitude ``delta**-0.5``:

    exp(-i a child) R_delta exp(i a child)  ~  exp(-i delta a^2 B(child))

Because ``-a * child`` is generally not a leaf, every child carries a mirror
tree whose value is ``-child``.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .saturation import FrequencySet, Move, is_saturating, pair_frequencies, reachability, span_residual
from .solver import ControlSchedule, SimParams, evolve
from .spectral import SpectralField, imprint_phase, sobolev_norm
from .trig import Frequency, TrigPolynomial, apply_B, dot, sqnorm


class NotSaturating(ValueError):
    pass


class SpanDeficient(ValueError):
    pass


class BandwidthUnreachable(ValueError):
    pass


class AmplificationFailed(RuntimeError):
    pass


def combine(Q: Sequence[TrigPolynomial], c: Sequence[float]) -> TrigPolynomial:
    """``<c, Q>`` as a polynomial."""
    out = TrigPolynomial.zero(Q[0].d)
    for ci, q in zip(c, Q):
        if ci:
            out = out + q * float(ci)
    return out


# -- trees -------------------------------------------------------------

@dataclass(frozen=True)
class Leaf:
    """``theta = <c, Q>``."""

    c: tuple[float, ...]
    value: TrigPolynomial

    level = 0

    @property
    def q(self) -> int:
        return len(self.c)

    def is_null(self) -> bool:
        return not any(self.c)

    def to_dict(self) -> dict:
        return {"kind": "leaf", "c": list(self.c)}

    def size(self) -> int:
        return 1


@dataclass(frozen=True)
class Node:
    """``value = theta0 - sum_j B(children[j])``; ``mirrors[j]`` has value ``-children[j]``."""

    theta0: Tree
    children: tuple[Tree, ...]
    mirrors: tuple[Tree, ...]
    level: int

    def __post_init__(self):
        if len(self.children) != len(self.mirrors):
            raise ValueError("every child needs a mirror")
        if self.theta0.level >= self.level or any(c.level >= self.level for c in self.children):
            raise ValueError("subtrees must sit strictly below the node level")

    @property
    def q(self) -> int:
        return self.theta0.q

    @property
    def value(self) -> TrigPolynomial:
        out = self.theta0.value
        for ch in self.children:
            out = out - apply_B(ch.value)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "node", "level": self.level, "theta0": self.theta0.to_dict(),
            "children": [c.to_dict() for c in self.children],
            "mirrors": [m.to_dict() for m in self.mirrors],
        }

    def size(self) -> int:
        return 1 + self.theta0.size() + sum(c.size() + m.size() for c, m in zip(self.children, self.mirrors))


Tree = Union[Leaf, Node]


def merge(a: Tree, b: Tree) -> Tree:
    """A tree whose value is ``value(a) + value(b)``."""
    if isinstance(a, Leaf) and isinstance(b, Leaf):
        return Leaf(tuple(x + y for x, y in zip(a.c, b.c)), a.value + b.value)
    if isinstance(a, Leaf):
        a, b = b, a
    if isinstance(b, Leaf):
        return Node(merge(a.theta0, b), a.children, a.mirrors, a.level)
    level = max(a.level, b.level)
    return Node(merge(a.theta0, b.theta0), a.children + b.children, a.mirrors + b.mirrors, level)


def describe(tree: Tree, Q_names: Sequence[str] | None = None, indent: int = 0) -> str:
    """Readable dump of a tree."""
    pad = "  " * indent
    if isinstance(tree, Leaf):
        return f"{pad}leaf {tree.value!r}\n"
    out = f"{pad}node level {tree.level}\n{pad} theta0:\n" + describe(tree.theta0, Q_names, indent + 1)
    for j, ch in enumerate(tree.children):
        out += f"{pad} B-child {j}:\n" + describe(ch, Q_names, indent + 1)
    return out


# -- decomposition --------------------------------------------------------

class _Decomposer:
    def __init__(self, Q: Sequence[TrigPolynomial], plan: dict[Frequency, Move], leaf_freqs: set):
        self.Q = list(Q)
        self.plan = plan
        self.leaf_freqs = leaf_freqs
        self.d = Q[0].d

    def leaf(self, theta: TrigPolynomial) -> Leaf:
        c, res = span_residual(self.Q, theta)
        if res > 1e-10:
            raise SpanDeficient(f"{theta!r} is not in the span of the control fields")
        c = tuple(float(x) for x in c)
        return Leaf(c, combine(self.Q, c))

    def tree(self, theta: TrigPolynomial) -> Tree:
        _, res = span_residual(self.Q, theta)
        if res <= 1e-10:
            return self.leaf(theta)
        direct = TrigPolynomial(self.d, theta.constant)
        out = None
        for k, (a, b) in theta.terms.items():
            if k in self.leaf_freqs:
                direct = direct + TrigPolynomial(self.d, 0.0, {k: (a, b)})
            else:
                t = self.monomial(k, a, b)
                out = t if out is None else merge(out, t)
        base = self.leaf(direct)
        return base if out is None else merge(out, base)

    def pair(self, child: TrigPolynomial) -> tuple[Tree, Tree]:
        return self.tree(child), self.tree(-child)

    def monomial(self, n: Frequency, a: float, b: float) -> Tree:
        move = self.plan.get(n)
        if move is None:
            raise BandwidthUnreachable(f"frequency {list(n)} is not reachable")
        if move.kind == "base":
            return self.leaf(TrigPolynomial(self.d, 0.0, {n: (a, b)}))
        r = math.hypot(a, b)
        if move.kind == "double":
            m = move.m
            # a cos 2m + b sin 2m = r - B(sqrt(2r)/|m| cos(<m,x> - alpha/2))
            alpha = math.atan2(b, a)
            amp = math.sqrt(2 * r / sqnorm(m))
            child = TrigPolynomial(self.d, 0.0, {m: (amp * math.cos(alpha / 2), amp * math.sin(alpha / 2))})
            theta0 = self.leaf(TrigPolynomial(self.d, r))
            ch, mi = self.pair(child)
            return Node(theta0, (ch,), (mi,), move.level)
        # n = flip * (m + sign * l); write the target as r cos(y + z) with
        # y = <m,x> - alpha and z = sign <l,x>
        m, l, sign = move.m, move.l, move.sign
        alpha = math.atan2(move.flip * b, a)
        ml = sign * dot(m, l)
        s = -1.0 if ml > 0 else 1.0
        A = math.sqrt(r / (2 * abs(ml)))
        ca, sa = math.cos(alpha), math.sin(alpha)
        # r cos(y+z) = A^2(|m|^2+|l|^2) - B(A sin y + s A sin z) - B(A cos y - s A cos z)
        c1 = TrigPolynomial(self.d, 0.0, {m: (-A * sa, A * ca)}) + TrigPolynomial.sin(l, s * A * sign)
        c2 = TrigPolynomial(self.d, 0.0, {m: (A * ca, A * sa)}) + TrigPolynomial.cos(l, -s * A)
        theta0 = self.leaf(TrigPolynomial(self.d, A * A * (sqnorm(m) + sqnorm(l))))
        t1, m1 = self.pair(c1)
        t2, m2 = self.pair(c2)
        return Node(theta0, (t1, t2), (m1, m2), move.level)


def leaf_frequencies(Q: Sequence[TrigPolynomial]) -> FrequencySet:
    """Frequencies whose cos and sin both lie in the span of ``Q``."""
    return FrequencySet(Q[0].d, tuple(pair_frequencies(Q)))


def decompose(theta: TrigPolynomial, I: FrequencySet, Q: Sequence[TrigPolynomial],
              max_level: int = 8) -> Tree:
    """Tree whose value equals ``theta`` up to float rounding."""
    Q = list(Q)
    d = theta.d
    if I.d != d or any(q.d != d for q in Q):
        raise ValueError("dimension mismatch")
    if not len(I) or not is_saturating(I).is_saturating:
        raise NotSaturating("frequency set is not saturating")
    needed = [TrigPolynomial.one(d)] + [f(k) for k in I for f in (TrigPolynomial.cos, TrigPolynomial.sin)]
    for f in needed:
        if span_residual(Q, f)[1] > 1e-10:
            raise SpanDeficient(f"{f!r} is not in the span of the control fields")
    leaf_set = set(I.members) | set(pair_frequencies(Q))
    base = FrequencySet(d, tuple(sorted(leaf_set)))
    targets = [k for k in theta.frequencies() if k not in leaf_set]
    plan: dict[Frequency, Move] = {k: Move(k, 0, "base") for k in base}
    if targets:
        radius = 2 * max(math.sqrt(sqnorm(k)) for k in targets)
        plan = reachability(base, max_level, radius, targets)
        missing = [k for k in targets if k not in plan]
        if missing:
            raise BandwidthUnreachable(f"frequencies {[list(k) for k in missing]} not reached "
                                       f"within {max_level} levels")
    return _Decomposer(Q, plan, leaf_set).tree(theta)


# -- compilation --------------------------------------------------------

@dataclass(frozen=True)
class KickPlan:
    """Free durations per tree level (``deltas[j-1]`` for level ``j``) and the kick length."""

    deltas: tuple[float, ...]
    tau: float
    eps: float = 1e-2
    max_halvings: int = 8
    compensate: bool = True

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(x) for x in self.deltas))
        if self.tau <= 0 or any(x <= 0 for x in self.deltas):
            raise ValueError("durations must be positive")
        if any(a >= b for a, b in zip(self.deltas, self.deltas[1:])):
            raise ValueError("deeper levels need strictly shorter free durations")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be >= 0")

    @classmethod
    def default(cls, levels: int, delta_base: float = 1e-2, **kw) -> KickPlan:
        deltas = tuple(delta_base ** (levels - j + 1) for j in range(1, levels + 1))
        tau = min(deltas, default=delta_base) / 10
        return cls(deltas, tau, **kw)

    def delta(self, level: int) -> float:
        if not 1 <= level <= len(self.deltas):
            raise ValueError(f"plan has no free duration for level {level}")
        return self.deltas[level - 1]

    def halved(self) -> KickPlan:
        return replace(self, deltas=tuple(x / 2 for x in self.deltas), tau=self.tau / 2)

    def to_dict(self) -> dict:
        return {"deltas": list(self.deltas), "tau": self.tau, "eps": self.eps,
                "max_halvings": self.max_halvings, "compensate": self.compensate}

    @classmethod
    def from_dict(cls, data: dict) -> KickPlan:
        return cls(tuple(data["deltas"]), float(data["tau"]), float(data.get("eps", 1e-2)),
                   int(data.get("max_halvings", 8)), bool(data.get("compensate", True)))


@dataclass(frozen=True)
class Event:
    """One schedule segment plus the phase it contributes in the small-time limit."""

    kind: str
    duration: float
    u: np.ndarray
    phase: TrigPolynomial


def compile_events(tree: Tree, plan: KickPlan, gamma: float = 1.0) -> list[Event]:
    """Segments realizing ``exp(i gamma value(tree))``; ``gamma`` must be positive."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    q = tree.q
    events: list[Event] = []

    def emit(t: Tree, g: float) -> None:
        if isinstance(t, Leaf):
            if not t.is_null():
                u = -g * np.asarray(t.c) / plan.tau + 0.0
                events.append(Event("kick", plan.tau, u, t.value * g))
            return
        emit(t.theta0, g)
        delta = plan.delta(t.level)
        for ch, mi in zip(t.children, t.mirrors):
            a = math.sqrt(g / delta)
            emit(ch, a)
            free = delta
            # a linear ramp of the imprint during each kick adds a^2 tau / 3 of B
            if plan.compensate and isinstance(ch, Leaf) and delta > 2 * plan.tau:
                free = delta - 2 * plan.tau / 3
            events.append(Event("free", free, np.zeros(q), apply_B(ch.value) * (-g)))
            emit(mi, a)

    emit(tree, gamma)
    return events


def compile(tree: Tree, plan: KickPlan, gamma: float = 1.0) -> ControlSchedule:  # noqa: A001
    return ControlSchedule(tuple((e.duration, e.u) for e in compile_events(tree, plan, gamma)))


def ideal_phase(events: Sequence[Event], d: int) -> TrigPolynomial:
    """Sum of the limiting phases: kicks as exact imprints, free steps as ``-B`` terms."""
    out = TrigPolynomial.zero(d)
    for e in events:
        out = out + e.phase
    return out


# -- closed loop --------------------------------------------------------

@dataclass(frozen=True)
class Attempt:
    iteration: int
    delta_min: float
    tau: float
    T: float
    segments: int
    steps: int
    error: float
    status: str


@dataclass(frozen=True)
class SynthesisResult:
    schedule: ControlSchedule
    error: float
    T: float
    converged: bool
    tree: Tree
    plan: KickPlan
    history: tuple[Attempt, ...] = ()
    final: SpectralField | None = None

    def __iter__(self):
        return iter((self.schedule, self.error, self.T))

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "delta_min", "tau", "T", "segments", "steps", "error", "status"])
        for a in self.history:
            w.writerow([a.iteration, repr(a.delta_min), repr(a.tau), repr(a.T), a.segments,
                        a.steps, repr(a.error), a.status])
        return buf.getvalue()


def synthesize(psi0: SpectralField, theta: TrigPolynomial, eps: float, params: SimParams,
               plan: KickPlan | None = None, *, I: FrequencySet | None = None,
               s: float | None = None, max_level: int = 8) -> SynthesisResult:
    """Schedule steering ``psi0`` to ``exp(i theta) psi0`` within ``eps`` in H^s.

    All free durations and the kick length are halved until the simulated
    error drops below ``eps`` or the halving budget runs out; the best
    attempt is returned with ``converged`` telling which happened.  A run
    that blows up counts as a failed attempt.
    """
    if not np.all(np.isfinite(psi0.coeffs)):
        raise ValueError("initial state is not finite")
    s = params.s_ref if s is None else s
    Q = list(params.Q)
    I = leaf_frequencies(Q) if I is None else I
    tree = decompose(theta, I, Q, max_level)
    plan = KickPlan.default(tree.level, eps=eps) if plan is None else plan
    target = imprint_phase(psi0, 1.0, theta)
    history, best = [], None
    cur = plan
    for it in range(plan.max_halvings + 1):
        sched = compile(tree, cur)
        if len(sched):
            traj = evolve(psi0, sched, params)
            status, steps, final = traj.status, traj.steps, traj.final
        else:
            status, steps, final = "completed", 0, psi0
        err = sobolev_norm(final - target, s) if status == "completed" else math.inf
        history.append(Attempt(it, min(cur.deltas, default=cur.tau * 10), cur.tau, sched.duration,
                               len(sched), steps, err, status))
        if best is None or err < best[1]:
            best = (sched, err, final, cur)
        if err < eps:
            break
        cur = cur.halved()
    sched, err, final, used = best
    return SynthesisResult(sched, err, sched.duration, err < eps, tree, used,
                           tuple(history), final)


def amplify_norm(psi0: SpectralField, M: float, params: SimParams,
                 plan: KickPlan | None = None, *, s: float | None = None,
                 k0: Frequency | None = None, max_doublings: int = 30) -> tuple[ControlSchedule, float]:
    """Schedule after which ``|psi|_s > M``.

    The target phase is ``lam cos<x,k0>`` with ``lam`` doubled until the
    imprinted state has norm above ``2M``; it is then synthesized to
    accuracy ``M/2``.
    """
    s = params.s_ref if s is None else s
    if psi0.l2_norm() == 0:
        raise ValueError("initial state must be nonzero")
    start = sobolev_norm(psi0, s)
    if start > M:
        return ControlSchedule(), start
    if k0 is None:
        freqs = leaf_frequencies(params.Q).members
        if not freqs:
            raise NotSaturating("control fields contain no frequency pair")
        k0 = freqs[0]
    base = TrigPolynomial.cos(k0)
    lam = 1.0
    for _ in range(max_doublings):
        if sobolev_norm(imprint_phase(psi0, lam, base), s) > 2 * M:
            break
        lam *= 2
    else:
        raise AmplificationFailed("imprinted norm did not exceed 2M")
    res = synthesize(psi0, base * lam, 0.5 * M, params, plan, s=s)
    norm = sobolev_norm(res.final, s)
    if not norm > M:
        raise AmplificationFailed(f"final norm {norm:.4g} does not exceed {M}")
    return res.schedule, norm


# -- small-time limit ----------------------------------------------------

@dataclass(frozen=True)
class LimitRow:
    delta: float
    error: float
    status: str = "completed"


@dataclass(frozen=True)
class LimitResult:
    rows: tuple[LimitRow, ...]
    rate: float
    intercept: float

    def errors(self) -> list[float]:
        return [r.error for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "error", "status"])
        for r in self.rows:
            w.writerow([repr(r.delta), repr(r.error), r.status])
        return buf.getvalue()


def fit_rate(deltas: Sequence[float], errors: Sequence[float]) -> tuple[float, float]:
    """Slope and intercept of ``log e`` against ``log delta`` over finite positive entries."""
    pts = [(math.log(x), math.log(e)) for x, e in zip(deltas, errors) if e > 0 and math.isfinite(e)]
    if len(pts) < 2:
        return math.nan, math.nan
    x, y = np.array(pts).T
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def verify_limit(psi0: SpectralField, phi: TrigPolynomial, u: Sequence[float],
                 deltas: Sequence[float], params: SimParams, *, s: float | None = None,
                 steps_per_delta: int = 64) -> LimitResult:
    """Distance between the conjugated short-time flow and its limit for each ``delta``.

    For each ``delta`` the state ``exp(-i a phi) R_delta(exp(i a phi) psi0, u/delta)``
    with ``a = delta**-0.5`` is compared with ``exp(-i (B(phi) + <u,Q>)) psi0``.
    """
    deltas = [float(x) for x in deltas]
    if any(x <= 0 for x in deltas) or any(a <= b for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be positive and decreasing")
    s = params.s_ref if s is None else s
    u = np.asarray(u, dtype=float)
    limit_phase = apply_B(phi) + combine(params.Q, u)
    ref = imprint_phase(psi0, -1.0, limit_phase)
    rows = []
    for delta in deltas:
        a = delta ** -0.5
        start = imprint_phase(psi0, a, phi)
        traj = evolve(start, ControlSchedule.constant(delta, u / delta), params,
                      dt_max=delta / steps_per_delta)
        if traj.status != "completed":
            rows.append(LimitRow(delta, math.nan, traj.status))
            continue
        end = imprint_phase(traj.final, -a, phi)
        rows.append(LimitRow(delta, sobolev_norm(end - ref, s)))
    rate, intercept = fit_rate([r.delta for r in rows], [r.error for r in rows])
    return LimitResult(tuple(rows), rate, intercept)
