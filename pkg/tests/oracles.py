"""Independent reference computations used only by the tests.

Nothing here imports the package's saturation or trigonometric algebra; the
closure oracle works on coefficient vectors, evaluates ``B`` by spectral
differentiation on a grid, and finds the subspace inside the cone
``H - cone{B(h)}`` with a linear program.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import orth
from scipy.optimize import linprog


class CoefficientSpace:
    """Real functions on T^2 with frequencies in a box, as coefficient vectors.

    Coordinates: the constant, then ``cos<x,n>``, ``sin<x,n>`` for each
    lexicographically positive ``n`` with ``|n|_inf <= box``.
    """

    def __init__(self, box: int, grid: int = 32):
        self.box = box
        self.freqs = [n for n in itertools.product(range(-box, box + 1), repeat=2)
                      if n > (0, 0)]
        self.dim = 1 + 2 * len(self.freqs)
        self.grid = grid
        x = 2 * np.pi * np.arange(grid) / grid
        X, Y = np.meshgrid(x, x, indexing="ij")
        # columns: sampled basis functions
        cols = [np.ones_like(X)]
        for n in self.freqs:
            ph = n[0] * X + n[1] * Y
            cols += [np.cos(ph), np.sin(ph)]
        self.samples = np.stack([c.ravel() for c in cols], axis=1)
        k = np.fft.fftfreq(grid, 1.0 / grid)
        self.KX, self.KY = np.meshgrid(k, k, indexing="ij")
        self.index = {n: i for i, n in enumerate(self.freqs)}

    def to_grid(self, v: np.ndarray) -> np.ndarray:
        return (self.samples @ v).reshape(self.grid, self.grid)

    def from_grid(self, f: np.ndarray) -> np.ndarray:
        """Least-squares coefficients (exact for band-limited input)."""
        F = np.fft.fft2(f) / f.size
        v = np.zeros(self.dim)
        v[0] = F[0, 0].real
        for n, i in self.index.items():
            c = F[n[0] % self.grid, n[1] % self.grid]
            v[1 + 2 * i] = 2 * c.real
            v[2 + 2 * i] = -2 * c.imag
        return v

    def gradients(self, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Grid gradients of the columns of ``V`` by spectral differentiation."""
        f = (self.samples @ V).T.reshape(-1, self.grid, self.grid)
        F = np.fft.fft2(f)
        return np.fft.ifft2(1j * self.KX * F).real, np.fft.ifft2(1j * self.KY * F).real

    def from_grids(self, f: np.ndarray) -> np.ndarray:
        """Coefficient columns of a stack of band-limited grid functions."""
        F = np.fft.fft2(f) / (self.grid * self.grid)
        ix = np.array([n[0] % self.grid for n in self.freqs])
        iy = np.array([n[1] % self.grid for n in self.freqs])
        c = F[:, ix, iy]
        out = np.empty((self.dim, f.shape[0]))
        out[0] = F[:, 0, 0].real
        out[1::2] = 2 * c.real.T
        out[2::2] = -2 * c.imag.T
        return out

    def B(self, v: np.ndarray) -> np.ndarray:
        """``|grad f|^2`` by spectral differentiation."""
        fx, fy = self.gradients(v[:, None])
        return self.from_grids(fx ** 2 + fy ** 2)[:, 0]

    def B_generators(self, V: np.ndarray) -> np.ndarray:
        """``B(v_a)`` and ``B(v_a +- v_b)`` for the columns of ``V``, as columns.

        Uses ``B(a +- b) = B(a) + B(b) +- 2 grad a . grad b`` on the grid.
        """
        fx, fy = self.gradients(V)
        grids = [fx ** 2 + fy ** 2]
        a, b = np.triu_indices(V.shape[1], k=1)
        if a.size:
            cross = 2 * (fx[a] * fx[b] + fy[a] * fy[b])
            base = grids[0][a] + grids[0][b]
            grids += [base + cross, base - cross]
        return self.from_grids(np.concatenate(grids))

    def mode(self, n, part: str) -> np.ndarray:
        """Unit vector of ``cos<x,n>`` or ``sin<x,n>`` for nonzero ``n``."""
        if n < (0, 0):
            n = (-n[0], -n[1])
            sign = -1.0 if part == "sin" else 1.0
        else:
            sign = 1.0
        v = np.zeros(self.dim)
        v[1 + 2 * self.index[n] + (part == "sin")] = sign
        return v


def _null_space(A: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Null space with an absolute singular-value threshold."""
    _, sv, vt = np.linalg.svd(A)
    rank = int(np.sum(sv > tol))
    return vt[rank:].T


def _lineality_support(G: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    """Columns of ``G`` lying in the lineality space of ``cone(G)``."""
    m = G.shape[1]
    if m == 0:
        return np.zeros(0, dtype=bool)
    A = np.hstack([G, G])
    c = np.concatenate([-np.ones(m), np.zeros(m)])
    bounds = [(0, 1)] * m + [(0, None)] * m
    res = linprog(c, A_eq=A, b_eq=np.zeros(G.shape[0]), bounds=bounds, method="highs")
    if res.status != 0:
        return np.zeros(m, dtype=bool)
    return res.x[:m] > tol


def closure_reaches(members, *, box: int = 3, levels: int = 6, radius: float = 2.0) -> bool:
    """Brute-force closure from ``span{1, cos<x,k>, sin<x,k> : k in members}``.

    At each level the generators ``B(h_a)`` and ``B(h_a +- h_b)`` over an
    orthonormal basis of the current space are projected off it; those in the
    lineality space of their cone (found by an LP) are exactly the new
    directions representable with both signs.  The space is truncated to the
    frequency box after each level.  Returns whether every mode with
    ``|n|_2 <= radius`` lies in the space within ``levels`` levels.
    """
    small = CoefficientSpace(box)
    big = CoefficientSpace(2 * box)
    embed = np.zeros((big.dim, small.dim))
    embed[0, 0] = 1.0
    for n, i in small.index.items():
        j = big.index[n]
        embed[1 + 2 * j, 1 + 2 * i] = 1.0
        embed[2 + 2 * j, 2 + 2 * i] = 1.0
    outside = np.ones(big.dim, dtype=bool)
    outside[np.any(embed != 0, axis=1)] = False

    vecs = [np.eye(small.dim)[0]]
    for k in members:
        vecs += [small.mode(tuple(k), "cos"), small.mode(tuple(k), "sin")]
    H = orth(np.stack(vecs, axis=1))
    targets = [n for n in itertools.product(range(-2, 3), repeat=2)
               if n != (0, 0) and math.hypot(*n) <= radius + 1e-12]
    target_vecs = np.stack([small.mode(n, p) for n in targets for p in ("cos", "sin")], axis=1)

    def reached(H):
        resid = target_vecs - H @ (H.T @ target_vecs)
        return np.max(np.abs(resid)) < 1e-8

    for _ in range(levels):
        if reached(H):
            return True
        Hb = embed @ H
        G = big.B_generators(Hb)
        G = G - Hb @ (Hb.T @ G)
        keep = np.max(np.abs(G), axis=0) > 1e-9
        G = G[:, keep]
        if G.shape[1] == 0:
            return reached(H)
        scale = np.max(np.abs(G), axis=0)
        lineal = _lineality_support(G / scale)
        if not np.any(lineal):
            return reached(H)
        W = orth(np.hstack([Hb, G[:, lineal]]))
        # part of the enlarged space supported inside the box
        Z = _null_space(W[outside])
        if Z.size == 0:
            return reached(H)
        new = orth((W @ Z)[~outside])
        # map back to small coordinates (rows of the box in big ordering)
        sel = np.where(~outside)[0]
        back = embed[sel]
        newH = orth(back.T @ new)
        if newH.shape[1] <= H.shape[1]:
            return reached(H)
        H = newH
    return reached(H)


def lattice_index(members) -> int:
    """Index of the integer span of ``members`` in Z^2 (0 if rank-deficient),
    from the gcd of all 2x2 minors."""
    g = 0
    for a, b in itertools.combinations(members, 2):
        g = math.gcd(g, abs(a[0] * b[1] - a[1] * b[0]))
    return g


def sign_deduplicated_subsets(max_size: int = 3) -> list[tuple[tuple[int, int], ...]]:
    """Subsets of {-2..2}^2 minus 0 with at most one of each +-k pair."""
    reps = sorted({max(n, (-n[0], -n[1])) for n in itertools.product(range(-2, 3), repeat=2)
                   if n != (0, 0)})
    out = []
    for size in range(1, max_size + 1):
        out += list(itertools.combinations(reps, size))
    return out


# -- closed forms ------------------------------------------------------------

def bessel_imprint_h1(lam: float) -> float:
    """``|exp(i lam cos x) phi_0|_{H^1}`` in closed form: sqrt(1 + lam^2 / 2)."""
    return math.sqrt(1.0 + lam * lam / 2.0)


def free_plane_wave_phase(l, t: float) -> complex:
    """Phase picked up by ``phi_l`` under the free flow ``i psi_t = -Lap psi``."""
    return complex(np.exp(-1j * sum(c * c for c in l) * t))
