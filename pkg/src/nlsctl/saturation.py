"""Saturation of frequency sets and the constructive subspace hierarchy.

A frequency set ``I`` spans the control directions ``1, cos<x,k>, sin<x,k>``
for ``k`` in ``I``.  Two moves enlarge such a space: doubling (``cos<x,2m>``
and ``sin<x,2m>`` from the pair at ``m``, using the constant) and addition
(the pairs at ``m +- l`` from the pairs at ``m`` and ``l`` when
``<m,l> != 0``).  ``I`` is saturating exactly when its integer span is the
whole lattice and its non-orthogonality graph is connected.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from sympy import Matrix
from sympy.matrices.normalforms import hermite_normal_form, smith_normal_form

from .trig import Frequency, TrigPolynomial, as_frequency, canonical, dot, sqnorm


class MissingConstant(ValueError):
    """The constant function is not in the span, so doubling is unavailable."""


@dataclass(frozen=True)
class FrequencySet:
    """Nonzero integer vectors, deduplicated up to sign.

    Members are stored as their lexicographically positive representatives,
    sorted.
    """

    d: int
    members: tuple[Frequency, ...]

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        seen = set()
        for k in self.members:
            k = as_frequency(k)
            if len(k) != self.d:
                raise ValueError(f"frequency {k} does not have length {self.d}")
            if not any(k):
                raise ValueError("frequency sets may not contain the zero vector")
            seen.add(canonical(k)[0])
        object.__setattr__(self, "members", tuple(sorted(seen)))

    @classmethod
    def of(cls, vectors: Iterable[Iterable[int]], d: int | None = None) -> FrequencySet:
        vecs = [as_frequency(v) for v in vectors]
        if d is None:
            if not vecs:
                raise ValueError("cannot infer the dimension of an empty set")
            d = len(vecs[0])
        return cls(d, tuple(vecs))

    def __iter__(self):
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, k) -> bool:
        k = as_frequency(k)
        return any(k) and canonical(k)[0] in self.members

    def max_norm(self) -> float:
        return max((math.sqrt(sqnorm(k)) for k in self.members), default=0.0)

    def to_dict(self) -> dict:
        return {"d": self.d, "members": [list(k) for k in self.members]}

    @classmethod
    def from_dict(cls, data) -> FrequencySet:
        """Accept ``{"d": .., "members": [..]}`` or a bare list of vectors."""
        if isinstance(data, dict):
            return cls.of(data.get("members", []), data.get("d"))
        return cls.of(data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> FrequencySet:
        return cls.from_dict(json.loads(text))


def _require_nonempty(I: FrequencySet) -> None:
    if not len(I):
        raise ValueError("frequency set is empty")


def is_generator(I: FrequencySet) -> tuple[bool, Frequency | None]:
    """Whether the integer span of ``I`` is all of ``Z^d``.

    On failure the witness is a standard basis vector outside the lattice.
    """
    _require_nonempty(I)
    d = I.d
    A = Matrix([list(k) for k in I.members]).T
    rank = A.rank()
    basis = [tuple(int(i == j) for i in range(d)) for j in range(d)]
    if rank < d:
        for e in basis:
            if A.row_join(Matrix(e)).rank() > rank:
                return False, e
    snf = smith_normal_form(A)
    invariants = [abs(snf[i, i]) for i in range(d)]
    if all(v == 1 for v in invariants):
        return True, None
    H = hermite_normal_form(A)
    for e in basis:
        x = H.LUsolve(Matrix(e))
        if any(not v.is_integer for v in x):
            return False, e
    raise AssertionError("normal forms disagree")  # pragma: no cover


def in_lattice(I: FrequencySet, n: Sequence[int]) -> bool:
    """Whether ``n`` is an integer combination of the members of ``I``."""
    _require_nonempty(I)
    A = Matrix([list(k) for k in I.members]).T
    return hermite_normal_form(A.row_join(Matrix(list(n)))) == hermite_normal_form(A)


def chain_connected(I: FrequencySet) -> tuple[bool, list[list[Frequency]] | None]:
    """Whether the graph with edges ``<l,m> != 0`` on ``I`` is connected.

    On failure the witness is a two-block partition with all cross-block
    inner products zero.
    """
    _require_nonempty(I)
    g = nx.Graph()
    g.add_nodes_from(I.members)
    members = list(I.members)
    for a in range(len(members)):
        for b in range(a + 1, len(members)):
            if dot(members[a], members[b]) != 0:
                g.add_edge(members[a], members[b])
    if nx.is_connected(g):
        return True, None
    comps = sorted(sorted(c) for c in nx.connected_components(g))
    first = comps[0]
    rest = sorted(k for c in comps[1:] for k in c)
    return False, [first, rest]


@dataclass(frozen=True)
class SaturationReport:
    is_generator: bool
    chain_connected: bool
    witness: dict | None = None

    @property
    def is_saturating(self) -> bool:
        return self.is_generator and self.chain_connected

    def to_dict(self) -> dict:
        return {
            "is_generator": self.is_generator,
            "chain_connected": self.chain_connected,
            "is_saturating": self.is_saturating,
            "witness": self.witness,
        }


def is_saturating(I: FrequencySet) -> SaturationReport:
    gen, lattice_witness = is_generator(I)
    conn, blocks = chain_connected(I)
    witness = None
    if not gen:
        witness = {"kind": "lattice", "vector": list(lattice_witness)}
    elif not conn:
        witness = {"kind": "partition", "blocks": [[list(k) for k in b] for b in blocks]}
    return SaturationReport(gen, conn, witness)


# -- subspace hierarchy ------------------------------------------------

def coefficient_matrix(polys: Sequence[TrigPolynomial],
                       index: Sequence[tuple] | None = None) -> tuple[np.ndarray, list[tuple]]:
    """Rows are polynomials, columns ``("1",)``, ``(k, "cos")``, ``(k, "sin")``."""
    if index is None:
        freqs = sorted({k for p in polys for k in p.frequencies()})
        index = [("1",)] + [(k, part) for k in freqs for part in ("cos", "sin")]
    pos = {key: i for i, key in enumerate(index)}
    A = np.zeros((len(polys), len(index)))
    for r, p in enumerate(polys):
        if p.constant:
            A[r, pos[("1",)]] = p.constant
        for k, (a, b) in p.terms.items():
            if a:
                A[r, pos[(k, "cos")]] = a
            if b:
                A[r, pos[(k, "sin")]] = b
    return A, list(index)


def span_residual(polys: Sequence[TrigPolynomial], target: TrigPolynomial) -> tuple[np.ndarray, float]:
    """Least-squares coefficients of ``target`` on ``polys`` and the max residual."""
    A, index = coefficient_matrix(list(polys) + [target])
    M, b = A[:-1].T, A[-1]
    if not len(polys):
        return np.zeros(0), float(np.max(np.abs(b), initial=0.0))
    c, *_ = np.linalg.lstsq(M, b, rcond=None)
    return c, float(np.max(np.abs(M @ c - b), initial=0.0))


def in_span(polys: Sequence[TrigPolynomial], target: TrigPolynomial, atol: float = 1e-10) -> bool:
    return span_residual(polys, target)[1] <= atol


def pair_frequencies(polys: Sequence[TrigPolynomial], atol: float = 1e-10) -> list[Frequency]:
    """Frequencies ``k`` with both ``cos<x,k>`` and ``sin<x,k>`` in the span."""
    freqs = sorted({k for p in polys for k in p.frequencies()})
    return [k for k in freqs
            if in_span(polys, TrigPolynomial.cos(k), atol) and in_span(polys, TrigPolynomial.sin(k), atol)]


@dataclass(frozen=True)
class SubspaceBasis:
    """A linearly independent basis of one level of the hierarchy."""

    level: int
    basis: tuple[TrigPolynomial, ...]

    def __post_init__(self):
        basis = tuple(self.basis)
        object.__setattr__(self, "basis", basis)
        if basis:
            A, _ = coefficient_matrix(basis)
            if np.linalg.matrix_rank(A) != len(basis):
                raise ValueError("basis is linearly dependent")

    @classmethod
    def from_spanning(cls, level: int, polys: Iterable[TrigPolynomial],
                      atol: float = 1e-10) -> SubspaceBasis:
        """Keep the polynomials that enlarge the span, in order."""
        kept: list[TrigPolynomial] = []
        for p in polys:
            if p.is_zero() or (kept and in_span(kept, p, atol)):
                continue
            kept.append(p)
        return cls(level, tuple(kept))

    @classmethod
    def from_frequencies(cls, I: FrequencySet) -> SubspaceBasis:
        polys = [TrigPolynomial.one(I.d)]
        for k in I.members:
            polys += [TrigPolynomial.cos(k), TrigPolynomial.sin(k)]
        return cls(0, tuple(polys))

    @property
    def d(self) -> int:
        return self.basis[0].d

    def __len__(self) -> int:
        return len(self.basis)

    def contains(self, f: TrigPolynomial, atol: float = 1e-10) -> bool:
        return in_span(self.basis, f, atol)

    def pair_frequencies(self) -> list[Frequency]:
        return pair_frequencies(self.basis)


def _norm(k: Frequency) -> float:
    return math.sqrt(sqnorm(k))


def closure_step(basis: SubspaceBasis, cutoff: float) -> SubspaceBasis:
    """One level of the doubling/addition closure, truncated to ``|n| <= cutoff``."""
    if not len(basis):
        raise ValueError("basis is empty")
    if not basis.contains(TrigPolynomial.one(basis.d)):
        raise MissingConstant("the constant function must be in the span")
    pairs = basis.pair_frequencies()
    new: set[Frequency] = set()
    for i, m in enumerate(pairs):
        new.add(canonical(tuple(2 * c for c in m))[0])
        for l in pairs[i + 1:]:
            if dot(m, l) != 0:
                for sign in (1, -1):
                    n = tuple(a + sign * b for a, b in zip(m, l))
                    if any(n):
                        new.add(canonical(n)[0])
    extra = []
    for n in sorted(new):
        if _norm(n) <= cutoff + 1e-12:
            extra += [TrigPolynomial.cos(n), TrigPolynomial.sin(n)]
    return SubspaceBasis.from_spanning(basis.level + 1, list(basis.basis) + extra)


# -- reachability --------------------------------------------------------

@dataclass(frozen=True)
class Move:
    """How a frequency enters the hierarchy.

    ``kind`` is ``"base"`` (member of ``I``), ``"double"`` (``n = 2m``) or
    ``"add"`` (``n = m + sign * l`` with ``<m,l> != 0``).  ``m`` and ``l``
    are canonical representatives; ``n`` is canonical as well, and
    ``flip`` records whether ``n = -(2m)`` or ``n = -(m + sign * l)``.
    """

    n: Frequency
    level: int
    kind: str
    m: Frequency | None = None
    l: Frequency | None = None
    sign: int = 1
    flip: int = 1


def _cost(m: Frequency, l: Frequency) -> float:
    return _norm(m) + _norm(l)


def reachability(I: FrequencySet, max_level: int, radius: float,
                 targets: Iterable[Frequency] | None = None) -> dict[Frequency, Move]:
    """Breadth-first search over canonical frequencies with ``|n| <= radius``.

    Among the moves that first reach a frequency, the one with minimal
    ``|m| + |l|`` wins, ties broken lexicographically on ``(m, l, sign)``.
    The search stops early once every frequency in ``targets`` is reached.
    """
    _require_nonempty(I)
    plan: dict[Frequency, Move] = {k: Move(k, 0, "base") for k in I.members}
    wanted = None if targets is None else {canonical(as_frequency(t))[0] for t in targets}
    frontier = sorted(plan)
    level = 0
    while frontier and level < max_level:
        if wanted is not None and wanted <= plan.keys():
            break
        level += 1
        known = sorted(plan)
        best: dict[Frequency, tuple] = {}

        def offer(n, key, move):
            if not any(n) or _norm(n) > radius + 1e-12:
                return
            nc, flip = canonical(n)
            if nc in plan:
                return
            if nc not in best or key < best[nc][0]:
                best[nc] = (key, Move(nc, level, move[0], move[1], move[2], move[3], flip))

        for m in frontier:
            n = tuple(2 * c for c in m)
            offer(n, (_cost(m, m), m, m, 1), ("double", m, None, 1))
        fset = set(frontier)
        for m in known:
            for l in known:
                if m >= l or (m not in fset and l not in fset) or dot(m, l) == 0:
                    continue
                for sign in (1, -1):
                    n = tuple(a + sign * b for a, b in zip(m, l))
                    offer(n, (_cost(m, l), m, l, -sign), ("add", m, l, sign))
        for nc, (_, move) in best.items():
            plan[nc] = move
        frontier = sorted(best)
    return plan


@dataclass(frozen=True)
class DensityReport:
    cutoff: float
    max_level: int
    levels: dict[Frequency, int]
    unreachable: list[Frequency] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cutoff": self.cutoff,
            "max_level": self.max_level,
            "levels": {json.dumps(list(k)): j for k, j in sorted(self.levels.items())},
            "unreachable": [list(k) for k in self.unreachable],
        }


def lattice_points(d: int, cutoff: float) -> list[Frequency]:
    """Nonzero integer vectors of Euclidean norm at most ``cutoff``, sorted."""
    r = int(math.floor(cutoff))
    grid = np.array(np.meshgrid(*([np.arange(-r, r + 1)] * d), indexing="ij")).reshape(d, -1).T
    keep = (np.sum(grid ** 2, axis=1) <= cutoff ** 2 + 1e-9) & np.any(grid != 0, axis=1)
    return sorted(tuple(int(c) for c in row) for row in grid[keep])


def density_check(I: FrequencySet, cutoff: float, max_level: int,
                  radius: float | None = None) -> DensityReport:
    """Entry level of every nonzero frequency with ``|n| <= cutoff`` (both signs).

    Intermediate frequencies are allowed up to ``radius`` (default twice the
    cutoff).
    """
    radius = 2 * cutoff if radius is None else radius
    targets = lattice_points(I.d, cutoff)
    plan = reachability(I, max_level, radius, targets)
    levels, missing = {}, []
    for n in targets:
        move = plan.get(canonical(n)[0])
        if move is None:
            missing.append(n)
        else:
            levels[n] = move.level
    return DensityReport(cutoff, max_level, levels, missing)
