"""Exact real trigonometric polynomials on the d-torus.

A polynomial is stored as ``constant + sum_k (a_k cos<x,k> + b_k sin<x,k>)``
with one representative per ``+-k`` pair: the lexicographically positive one
(first nonzero component > 0).  Products are expanded with the
product-to-sum identities, so every operation here is exact up to float
rounding.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from typing import Union

import numpy as np

Frequency = tuple[int, ...]

Number = Union[int, float]


def as_frequency(k: Iterable[int]) -> Frequency:
    return tuple(int(c) for c in k)


def is_lex_positive(k: Frequency) -> bool:
    for c in k:
        if c != 0:
            return c > 0
    return False


def canonical(k: Frequency) -> tuple[Frequency, int]:
    """Return the positive representative of ``+-k`` and the sign flip applied."""
    if is_lex_positive(k):
        return k, 1
    return tuple(-c for c in k), -1


def sqnorm(k: Frequency) -> int:
    return sum(c * c for c in k)


def dot(k: Frequency, l: Frequency) -> int:
    return sum(a * b for a, b in zip(k, l))


def _add(k: Frequency, l: Frequency, sign: int = 1) -> Frequency:
    return tuple(a + sign * b for a, b in zip(k, l))


class TrigPolynomial:
    """Immutable real trigonometric polynomial in ``d`` variables.

    ``terms`` maps canonical frequencies to ``(cos, sin)`` coefficient pairs.
    Non-canonical keys passed to the constructor are folded in (``cos<x,-k>``
    equals ``cos<x,k>``, ``sin<x,-k>`` equals ``-sin<x,k>``), the zero
    frequency is folded into the constant, and exact zeros are dropped.
    """

    __slots__ = ("d", "constant", "_terms", "_hash")

    def __init__(self, d: int, constant: Number = 0.0,
                 terms: Mapping[Iterable[int], tuple[Number, Number]] | None = None):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.d = int(d)
        const = float(constant)
        acc: dict[Frequency, list[float]] = {}
        for key, (a, b) in (terms or {}).items():
            k = as_frequency(key)
            if len(k) != self.d:
                raise ValueError(f"frequency {k} does not have length {self.d}")
            if not any(k):
                const += float(a)
                continue
            kc, sgn = canonical(k)
            slot = acc.setdefault(kc, [0.0, 0.0])
            slot[0] += float(a)
            slot[1] += sgn * float(b)
        self.constant = const
        self._terms = {k: (v[0], v[1]) for k, v in sorted(acc.items()) if v[0] != 0.0 or v[1] != 0.0}
        self._hash = None

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, d: int) -> TrigPolynomial:
        return cls(d)

    @classmethod
    def one(cls, d: int) -> TrigPolynomial:
        return cls(d, 1.0)

    @classmethod
    def cos(cls, k: Iterable[int], amplitude: Number = 1.0) -> TrigPolynomial:
        k = as_frequency(k)
        return cls(len(k), 0.0, {k: (amplitude, 0.0)})

    @classmethod
    def sin(cls, k: Iterable[int], amplitude: Number = 1.0) -> TrigPolynomial:
        k = as_frequency(k)
        return cls(len(k), 0.0, {k: (0.0, amplitude)})

    # -- accessors ----------------------------------------------------
    @property
    def terms(self) -> dict[Frequency, tuple[float, float]]:
        return dict(self._terms)

    def frequencies(self) -> list[Frequency]:
        return list(self._terms)

    def coefficient(self, k: Iterable[int]) -> tuple[float, float]:
        k = as_frequency(k)
        if not any(k):
            return (self.constant, 0.0)
        kc, sgn = canonical(k)
        a, b = self._terms.get(kc, (0.0, 0.0))
        return (a, sgn * b)

    def bandwidth(self) -> int:
        """Largest per-axis frequency magnitude present."""
        return max((max(abs(c) for c in k) for k in self._terms), default=0)

    def max_abs_coefficient(self) -> float:
        vals = [abs(self.constant)] + [max(abs(a), abs(b)) for a, b in self._terms.values()]
        return max(vals)

    def is_zero(self) -> bool:
        return self.constant == 0.0 and not self._terms

    # -- algebra ------------------------------------------------------
    def _check(self, other: TrigPolynomial) -> None:
        if other.d != self.d:
            raise ValueError("dimension mismatch")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return TrigPolynomial(self.d, self.constant + other, self._terms)
        self._check(other)
        terms = dict(self._terms)
        for k, (a, b) in other._terms.items():
            a0, b0 = terms.get(k, (0.0, 0.0))
            terms[k] = (a0 + a, b0 + b)
        return TrigPolynomial(self.d, self.constant + other.constant, terms)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            c = float(other)
            return TrigPolynomial(self.d, self.constant * c,
                                  {k: (a * c, b * c) for k, (a, b) in self._terms.items()})
        if isinstance(other, TrigPolynomial):
            return self._product(other)
        return NotImplemented

    __rmul__ = __mul__

    def _product(self, other: TrigPolynomial) -> TrigPolynomial:
        self._check(other)
        d = self.d
        zero = (0,) * d
        out: dict[Frequency, list[float]] = {}

        def put(k, a, b):
            slot = out.setdefault(k, [0.0, 0.0])
            slot[0] += a
            slot[1] += b

        c1, c2 = self.constant, other.constant
        const = c1 * c2
        for k, (a, b) in other._terms.items():
            put(k, c1 * a, c1 * b)
        for k, (a, b) in self._terms.items():
            put(k, c2 * a, c2 * b)
        for k, (a1, b1) in self._terms.items():
            for l, (a2, b2) in other._terms.items():
                s, m = _add(k, l), _add(k, l, -1)
                # cos A cos B, sin A sin B, sin A cos B, cos A sin B
                put(s, 0.5 * (a1 * a2 - b1 * b2), 0.5 * (b1 * a2 + a1 * b2))
                put(m, 0.5 * (a1 * a2 + b1 * b2), 0.5 * (b1 * a2 - a1 * b2))
        if zero in out:
            const += out.pop(zero)[0]
        return TrigPolynomial(d, const, {k: tuple(v) for k, v in out.items()})

    def derivative(self, axis: int) -> TrigPolynomial:
        terms = {}
        for k, (a, b) in self._terms.items():
            kj = k[axis]
            if kj:
                terms[k] = (b * kj, -a * kj)
        return TrigPolynomial(self.d, 0.0, terms)

    def gradient(self) -> list[TrigPolynomial]:
        return [self.derivative(j) for j in range(self.d)]

    # -- evaluation ---------------------------------------------------
    def __call__(self, *x) -> np.ndarray:
        """Evaluate at points; pass one array per axis (broadcastable)."""
        if len(x) != self.d:
            raise ValueError(f"expected {self.d} coordinate arrays")
        xs = [np.asarray(xi, dtype=float) for xi in x]
        shape = np.broadcast_shapes(*(xi.shape for xi in xs))
        out = np.full(shape, self.constant)
        for k, (a, b) in self._terms.items():
            ph = sum(kj * xj for kj, xj in zip(k, xs) if kj)
            if a:
                out = out + a * np.cos(ph)
            if b:
                out = out + b * np.sin(ph)
        return out

    # -- comparison ---------------------------------------------------
    def _key(self):
        return (self.d, self.constant, tuple(self._terms.items()))

    def __eq__(self, other):
        if not isinstance(other, TrigPolynomial):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self._key())
        return self._hash

    def max_difference(self, other: TrigPolynomial) -> float:
        diff = self - other
        return diff.max_abs_coefficient() if not diff.is_zero() else 0.0

    def isclose(self, other: TrigPolynomial, atol: float = 1e-10) -> bool:
        return self.max_difference(other) <= atol

    def pruned(self, atol: float) -> TrigPolynomial:
        """Drop coefficients not exceeding ``atol`` in magnitude."""
        terms = {}
        for k, (a, b) in self._terms.items():
            a = a if abs(a) > atol else 0.0
            b = b if abs(b) > atol else 0.0
            terms[k] = (a, b)
        const = self.constant if abs(self.constant) > atol else 0.0
        return TrigPolynomial(self.d, const, terms)

    def __repr__(self):
        parts = [f"{self.constant:g}"] if self.constant or not self._terms else []
        for k, (a, b) in self._terms.items():
            if a:
                parts.append(f"{a:g}cos{list(k)}")
            if b:
                parts.append(f"{b:g}sin{list(k)}")
        return f"TrigPolynomial(d={self.d}: " + " + ".join(parts) + ")"

    # -- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "constant": self.constant,
            "terms": [{"k": list(k), "cos": a, "sin": b} for k, (a, b) in self._terms.items()],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> TrigPolynomial:
        terms: dict[Frequency, tuple[float, float]] = {}
        for t in data.get("terms", []):
            k = as_frequency(t["k"])
            a0, b0 = terms.get(k, (0.0, 0.0))
            terms[k] = (a0 + float(t.get("cos", 0.0)), b0 + float(t.get("sin", 0.0)))
        return cls(int(data["d"]), float(data.get("constant", 0.0)), terms)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> TrigPolynomial:
        return cls.from_dict(json.loads(text))


def apply_B(phi: TrigPolynomial) -> TrigPolynomial:
    """Return ``sum_j (d phi / d x_j)**2`` expanded exactly."""
    out = TrigPolynomial.zero(phi.d)
    for g in phi.gradient():
        if not g.is_zero():
            out = out + g * g
    return out


def polarization(a: TrigPolynomial, b: TrigPolynomial) -> TrigPolynomial:
    """``sum_j d_j a * d_j b``; ``apply_B(a + b) - apply_B(a) - apply_B(b)`` is twice this."""
    out = TrigPolynomial.zero(a.d)
    for ga, gb in zip(a.gradient(), b.gradient()):
        if not ga.is_zero() and not gb.is_zero():
            out = out + ga * gb
    return out
