"""Spectral fields on the d-torus, physical grids and Sobolev norms.

Coefficient convention: ``f_hat(k) = (2 pi)^(-d/2) * int f(x) exp(-i<x,k>) dx``,
so ``f(x) = (2 pi)^(-d/2) sum_k f_hat(k) exp(i<x,k>)`` and the L2 norm is the
Euclidean norm of the coefficient array.  The H^s norm uses the weight
``(1 + |k|^2)^s`` on ``|f_hat(k)|^2``.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .trig import Frequency, TrigPolynomial, as_frequency


class CutoffExceeded(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``M`` points per axis on ``[0, 2 pi)^d``."""

    d: int
    M: int

    def __post_init__(self):
        if self.d < 1 or self.M < 2:
            raise ValueError("grid needs d >= 1 and M >= 2")

    @classmethod
    def for_cutoff(cls, d: int, N: int, p: int = 1) -> Grid:
        """Power-of-two grid with at least ``(2p+2) N`` points (and >= 2N+1)."""
        return cls(d, _next_pow2(max((2 * p + 2) * N, 2 * N + 1, 4)))

    def supports(self, N: int) -> bool:
        return self.M >= 2 * N + 1

    @property
    def spacing(self) -> float:
        return 2 * math.pi / self.M

    def axes(self) -> list[np.ndarray]:
        x = np.arange(self.M) * self.spacing
        return [x] * self.d

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def sample(self, f: TrigPolynomial) -> np.ndarray:
        if f.d != self.d:
            raise ShapeMismatch("dimension mismatch between grid and polynomial")
        return f(*self.mesh())


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex field stored by its Fourier coefficients for ``|k_i| <= N``.

    ``coeffs`` has shape ``(2N+1,)*d``; index ``i`` along an axis is the
    frequency ``i - N``.  ``truncation_loss`` is metadata: the L2 mass
    discarded when the field was produced by projecting onto the cutoff.
    """

    d: int
    N: int
    coeffs: np.ndarray
    truncation_loss: float = field(default=0.0, compare=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (2 * self.N + 1,) * self.d:
            raise ShapeMismatch(f"expected shape {(2 * self.N + 1,) * self.d}, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("field coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # -- constructors -------------------------------------------------
    @classmethod
    def zeros(cls, d: int, N: int) -> SpectralField:
        return cls(d, N, np.zeros((2 * N + 1,) * d, dtype=complex))

    @classmethod
    def from_modes(cls, d: int, N: int, modes: dict) -> SpectralField:
        c = np.zeros((2 * N + 1,) * d, dtype=complex)
        for k, v in modes.items():
            k = as_frequency(k)
            if any(abs(ki) > N for ki in k):
                raise CutoffExceeded(f"mode {k} outside cutoff {N}")
            c[tuple(ki + N for ki in k)] += v
        return cls(d, N, c)

    # -- accessors ----------------------------------------------------
    def __getitem__(self, k) -> complex:
        k = as_frequency(k if np.iterable(k) else (k,))
        if any(abs(ki) > self.N for ki in k):
            return 0j
        return complex(self.coeffs[tuple(ki + self.N for ki in k)])

    def frequencies(self) -> np.ndarray:
        """Integer frequency grid, shape ``(d, 2N+1, ..., 2N+1)``."""
        return _freq_mesh(self.d, self.N)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def normalized(self) -> SpectralField:
        n = self.l2_norm()
        if n == 0:
            raise ValueError("cannot normalize the zero field")
        return SpectralField(self.d, self.N, self.coeffs / n)

    def with_cutoff(self, N: int) -> SpectralField:
        """Zero-pad or truncate to a new cutoff."""
        if N >= self.N:
            c = np.zeros((2 * N + 1,) * self.d, dtype=complex)
            sl = tuple(slice(N - self.N, N + self.N + 1) for _ in range(self.d))
            c[sl] = self.coeffs
            return SpectralField(self.d, N, c)
        sl = tuple(slice(self.N - N, self.N + N + 1) for _ in range(self.d))
        kept = self.coeffs[sl]
        lost = float(np.sum(np.abs(self.coeffs) ** 2) - np.sum(np.abs(kept) ** 2))
        return SpectralField(self.d, N, kept, max(lost, 0.0))

    def __add__(self, other: SpectralField) -> SpectralField:
        self._check(other)
        return SpectralField(self.d, self.N, self.coeffs + other.coeffs)

    def __sub__(self, other: SpectralField) -> SpectralField:
        self._check(other)
        return SpectralField(self.d, self.N, self.coeffs - other.coeffs)

    def __mul__(self, c) -> SpectralField:
        return SpectralField(self.d, self.N, self.coeffs * complex(c))

    __rmul__ = __mul__

    def _check(self, other: SpectralField) -> None:
        if (self.d, self.N) != (other.d, other.N):
            raise ShapeMismatch("fields have different dimension or cutoff")

    def allclose(self, other: SpectralField, atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.max(np.abs(self.coeffs - other.coeffs), initial=0.0) <= atol)

    # -- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        freqs = self.frequencies().reshape(self.d, -1).T
        flat = self.coeffs.reshape(-1)
        nz = np.nonzero(flat)[0]
        return {
            "d": self.d,
            "N": self.N,
            "modes": [[*map(int, freqs[i]), float(flat[i].real), float(flat[i].imag)] for i in nz],
        }

    @classmethod
    def from_dict(cls, data: dict) -> SpectralField:
        d, N = int(data["d"]), int(data["N"])
        modes = {}
        for row in data["modes"]:
            modes[tuple(row[:d])] = complex(row[d], row[d + 1])
        return cls.from_modes(d, N, modes)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> SpectralField:
        return cls.from_dict(json.loads(text))

    def save_npz(self, path) -> None:
        np.savez(path, d=self.d, N=self.N, coeffs=self.coeffs)

    @classmethod
    def load_npz(cls, path) -> SpectralField:
        with np.load(path) as z:
            return cls(int(z["d"]), int(z["N"]), z["coeffs"])


@functools.lru_cache(maxsize=64)
def _freq_mesh(d: int, N: int) -> np.ndarray:
    k = np.arange(-N, N + 1)
    mesh = np.array(np.meshgrid(*([k] * d), indexing="ij"))
    mesh.setflags(write=False)
    return mesh


@functools.lru_cache(maxsize=64)
def sobolev_weights(d: int, N: int, s: float) -> np.ndarray:
    """``(1 + |k|^2)^s`` on the coefficient grid."""
    k2 = np.sum(_freq_mesh(d, N).astype(float) ** 2, axis=0)
    w = (1.0 + k2) ** s
    w.setflags(write=False)
    return w


def sobolev_norm(f: SpectralField, s: float) -> float:
    if s < 0:
        raise ValueError("s must be >= 0")
    if s == 0:
        return f.l2_norm()
    w = sobolev_weights(f.d, f.N, float(s))
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def plane_wave(l, N: int) -> SpectralField:
    """Normalized eigenstate ``(2 pi)^(-d/2) exp(i<x,l>)``."""
    l = as_frequency(l)
    if any(abs(c) > N for c in l):
        raise CutoffExceeded(f"frequency {l} exceeds cutoff {N}")
    return SpectralField.from_modes(len(l), N, {l: 1.0})


# -- transforms ---------------------------------------------------------

@functools.lru_cache(maxsize=64)
def embed_index(d: int, N: int, M: int) -> tuple[np.ndarray, ...]:
    """Per-axis positions of frequencies ``-N..N`` inside an FFT array of size M."""
    if M < 2 * N + 1:
        raise ShapeMismatch(f"grid of {M} points cannot hold cutoff {N}")
    idx = np.arange(-N, N + 1) % M
    return np.ix_(*([idx] * d))


def embed(coeffs: np.ndarray, d: int, N: int, M: int) -> np.ndarray:
    full = np.zeros((M,) * d, dtype=complex)
    full[embed_index(d, N, M)] = coeffs
    return full


def _scale(d: int, M: int) -> float:
    return M ** d / (2 * math.pi) ** (d / 2)


def to_grid(f: Union[SpectralField, TrigPolynomial], grid: Grid) -> np.ndarray:
    """Physical samples at ``x_j = 2 pi j / M`` along every axis."""
    if isinstance(f, TrigPolynomial):
        return grid.sample(f)
    if f.d != grid.d:
        raise ShapeMismatch("dimension mismatch between grid and field")
    return np.fft.ifftn(embed(f.coeffs, f.d, f.N, grid.M)) * _scale(f.d, grid.M)


def spectrum_from_grid(samples: np.ndarray) -> np.ndarray:
    """Full FFT-ordered coefficient array of grid samples."""
    samples = np.asarray(samples)
    d, M = samples.ndim, samples.shape[0]
    if any(n != M for n in samples.shape):
        raise ShapeMismatch("grid samples must be a cube")
    return np.fft.fftn(samples) / _scale(d, M)


def from_grid(samples: np.ndarray, N: int) -> SpectralField:
    """Project grid samples onto ``|k_i| <= N``; discarded mass goes to ``truncation_loss``."""
    full = spectrum_from_grid(samples)
    d, M = full.ndim, full.shape[0]
    kept = full[embed_index(d, N, M)]
    total = float(np.sum(np.abs(full) ** 2))
    lost = max(total - float(np.sum(np.abs(kept) ** 2)), 0.0)
    return SpectralField(d, N, kept, lost)


def trig_to_field(f: TrigPolynomial, N: int) -> SpectralField:
    """Exact coefficients of a trig polynomial (which must fit inside the cutoff)."""
    d = f.d
    c = math.sqrt((2 * math.pi) ** d)
    modes: dict[Frequency, complex] = {(0,) * d: c * f.constant}
    for k, (a, b) in f.terms.items():
        neg = tuple(-x for x in k)
        # a cos + b sin = (a - i b)/2 e^{ikx} + (a + i b)/2 e^{-ikx}
        modes[k] = modes.get(k, 0) + c * (a - 1j * b) / 2
        modes[neg] = modes.get(neg, 0) + c * (a + 1j * b) / 2
    return SpectralField.from_modes(d, N, modes)


def imprint_grid(field: SpectralField, bandwidth: float) -> Grid:
    """Grid large enough that multiplying ``field`` by a phase of the given
    derivative bound aliases nothing measurable into the cutoff."""
    need = 2 * field.N + 2 * int(math.ceil(bandwidth + 12 * max(bandwidth, 1.0) ** (1 / 3) + 16))
    return Grid(field.d, _next_pow2(max(need, 2 * (2 * field.N + 1))))


def phase_lipschitz(phi: TrigPolynomial) -> float:
    """Crude bound on the largest frequency content of ``exp(i phi)`` relative to |phi|."""
    return sum(math.hypot(a, b) * max(abs(c) for c in k) for k, (a, b) in phi.terms.items())


def imprint_phase(psi: SpectralField, gamma: float, phi: TrigPolynomial,
                  grid: Grid | None = None) -> SpectralField:
    """Projection of ``exp(i gamma phi(x)) psi(x)`` back onto the cutoff of ``psi``.

    Multiplication is pointwise on ``grid``; when no grid is given one is
    chosen from the phase's bandwidth so aliasing stays below roundoff.
    """
    if gamma == 0 or phi.is_zero():
        return psi
    if not phi.terms:
        return SpectralField(psi.d, psi.N, psi.coeffs * np.exp(1j * gamma * phi.constant))
    if grid is None:
        grid = imprint_grid(psi, abs(gamma) * phase_lipschitz(phi))
    samples = to_grid(psi, grid) * np.exp(1j * gamma * grid.sample(phi))
    return from_grid(samples, psi.N)
