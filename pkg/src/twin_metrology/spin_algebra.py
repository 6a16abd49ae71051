"""Exact angular-momentum algebra per fixed-total-atom-number block.

Two bosonic modes holding N atoms in total map onto a spin j = N/2. Each
block carries the collective operators Jx, Jy, Jz in the occupation basis
|N/2+n, N/2-n>, indexed by k = n + N/2 with k = 0..N, and the rotation
transition kernel K[n, n'] = |<n| exp(-i theta J) |n'>|^2 together with its
exact theta-derivative.

Jx is tridiagonal with known integer (or half-integer) spectrum, so kernels
are built from its spectral decomposition; the derivative follows from
d/dtheta U = -i J U. A rotation generated by Jy differs from the Jx one by
diagonal phases exp(-i pi n / 2) on both sides, which cancel inside |.|^2,
so both generators share the same kernel matrices.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "AngularMomentumMatrices",
    "RotationKernel",
    "angular_momentum_matrices",
    "rotation_kernel",
    "kernel_columns",
    "imbalance_values",
    "normalize_generator",
]

# eigensolver convergence / snapping guard
_EIG_TOL = 1e-6

# byte budgets for the two caches; eigenbases dominate at large N
_BASIS_CACHE_BYTES = 1 << 30
_KERNEL_CACHE_BYTES = 128 << 20
# full K/K' matrices are only cached for blocks up to this size
_KERNEL_CACHE_MAX_N = 256


def normalize_generator(gen):
    """Map 'x'/'jx'/'y'/'jy' to the canonical single-letter tag."""
    g = str(gen).lower()
    if g in ("x", "jx"):
        return "x"
    if g in ("y", "jy"):
        return "y"
    raise ValueError(f"unknown generator {gen!r}; expected one of x, y, jx, jy")


def imbalance_values(total_atoms):
    """Occupation-difference values n = k - N/2 for k = 0..N (half-integer for odd N)."""
    return np.arange(total_atoms + 1) - total_atoms / 2.0


def _offdiagonal(total_atoms):
    # <k+1| Jx |k> = sqrt((k+1)(N-k)) / 2
    k = np.arange(total_atoms)
    return 0.5 * np.sqrt((k + 1.0) * (total_atoms - k))


@dataclass
class AngularMomentumMatrices:
    """Dense Jx, Jy, Jz for one block of N total atoms ((N+1) x (N+1))."""

    total_atoms: int
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray

    @property
    def dimension(self):
        return self.total_atoms + 1


def angular_momentum_matrices(total_atoms):
    """Build the collective spin matrices for a block of `total_atoms`.

    Jz is diagonal with entries n = k - N/2; Jx and Jy are tridiagonal with
    zero diagonal. N = 0 yields 1x1 zero matrices.
    """
    if total_atoms < 0:
        raise ValueError("total_atoms must be non-negative")
    n = int(total_atoms)
    c = _offdiagonal(n)
    k = np.arange(n)
    jx = np.zeros((n + 1, n + 1))
    jx[k, k + 1] = c
    jx[k + 1, k] = c
    jy = np.zeros((n + 1, n + 1), dtype=complex)
    jy[k + 1, k] = -1j * c
    jy[k, k + 1] = 1j * c
    jz = np.diag(imbalance_values(n))
    return AngularMomentumMatrices(n, jx, jy, jz)


class _ByteBudgetCache:
    """Tiny thread-safe LRU keyed cache with an approximate byte budget."""

    def __init__(self, budget):
        self._data = OrderedDict()
        self._bytes = 0
        self._budget = budget
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            try:
                self._data.move_to_end(key)
                return self._data[key][0]
            except KeyError:
                return None

    def put(self, key, value, nbytes):
        with self._lock:
            if key in self._data:
                return
            self._data[key] = (value, nbytes)
            self._bytes += nbytes
            while self._bytes > self._budget and len(self._data) > 1:
                _, (_, freed) = self._data.popitem(last=False)
                self._bytes -= freed

    def clear(self):
        with self._lock:
            self._data.clear()
            self._bytes = 0


_basis_cache = _ByteBudgetCache(_BASIS_CACHE_BYTES)
_kernel_cache = _ByteBudgetCache(_KERNEL_CACHE_BYTES)


def jx_spectral(total_atoms):
    """Spectral decomposition (m, V) of the tridiagonal Jx block.

    The eigenvalues of Jx are exactly m = -N/2, ..., N/2 in unit steps; the
    numerically computed values are snapped onto that grid so that rotation
    phases exp(-i theta m) are exact. V is real orthogonal.
    """
    n = int(total_atoms)
    cached = _basis_cache.get(n)
    if cached is not None:
        return cached
    if n == 0:
        m, v = np.zeros(1), np.eye(1)
    else:
        e = _offdiagonal(n)
        try:
            w, v = eigh_tridiagonal(np.zeros(n + 1), e)
        except np.linalg.LinAlgError:
            w, v = np.linalg.eigh(angular_momentum_matrices(n).jx)
        m = np.round(2.0 * w) / 2.0
        dev = np.abs(w - m).max()
        if dev > _EIG_TOL:
            raise RuntimeError(f"eigenvalue snapping failed for N={n} (dev={dev:.3e})")
        # Jx is persymmetric and anticommutes with the occupation parity, so
        # eigenvector k has exact reflection parity (-1)^(N-k) and the m and
        # -m eigenvectors are exact parity flips of each other. Enforcing
        # both removes solver noise that would otherwise leak (squared) into
        # kernel entries near their exact zeros.
        parity = np.where((n - np.arange(n + 1)) % 2 == 0, 1.0, -1.0)
        v = 0.5 * (v + parity[None, :] * v[::-1, :])
        v /= np.sqrt((v * v).sum(axis=0))[None, :]
        flip = np.where(np.arange(n + 1) % 2 == 0, 1.0, -1.0)
        half = (n + 1) // 2
        if half:
            mirrored = flip[:, None] * v[:, :half]
            right = n - np.arange(half)
            signs = np.sign(np.einsum("nk,nk->k", v[:, right], mirrored))
            v[:, right] = signs[None, :] * mirrored
        if n % 2 == 0 and n:
            mid = v[:, n // 2].copy()
            if np.linalg.norm(mid[::2]) >= np.linalg.norm(mid[1::2]):
                mid[1::2] = 0.0
            else:
                mid[::2] = 0.0
            v[:, n // 2] = mid / np.linalg.norm(mid)
    pair = (m, np.ascontiguousarray(v))
    _basis_cache.put(n, pair, (n + 1) * (n + 2) * 8)
    return pair


def _apply_jx(mat, total_atoms):
    # tridiagonal product Jx @ mat, O(N * cols)
    e = _offdiagonal(total_atoms)
    out = np.zeros_like(mat)
    if total_atoms:
        out[:-1] = e[:, None] * mat[1:]
        out[1:] += e[:, None] * mat[:-1]
    return out


def _kernel_matrices(total_atoms, theta):
    """Full K and K' = dK/dtheta for one block; cached for small blocks."""
    n = int(total_atoms)
    key = (n, np.float64(theta).tobytes())
    cached = _kernel_cache.get(key)
    if cached is not None:
        return cached
    m, v = jx_spectral(n)
    vt = v.T
    re = v @ (np.cos(theta * m)[:, None] * vt)
    im = -(v @ (np.sin(theta * m)[:, None] * vt))
    k = re * re + im * im
    dre = _apply_jx(im, n)
    dim = -_apply_jx(re, n)
    kprime = 2.0 * (re * dre + im * dim)
    pair = (k, kprime)
    if n <= _KERNEL_CACHE_MAX_N:
        _kernel_cache.put(key, pair, 2 * (n + 1) * (n + 1) * 8)
    return pair


@dataclass
class RotationKernel:
    """Transition probabilities of exp(-i theta J) for one block.

    matrix[k, k'] = |<n| exp(-i theta J) |n'>|^2 with n = k - N/2, and
    derivative = d(matrix)/dtheta. Rows and columns each sum to 1 (doubly
    stochastic); derivative rows and columns sum to 0.
    """

    total_atoms: int
    theta: float
    generator: str
    matrix: np.ndarray
    derivative: np.ndarray

    @property
    def dimension(self):
        return self.total_atoms + 1


def rotation_kernel(total_atoms, theta, gen="x"):
    """Rotation kernel and its theta-derivative for one block.

    The generator may be 'x' or 'y' (aliases 'jx'/'jy'); both produce the
    same probability kernel because they are related by a diagonal phase
    similarity that cancels in the squared modulus.
    """
    if total_atoms < 0:
        raise ValueError("total_atoms must be non-negative")
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    g = normalize_generator(gen)
    k, kp = _kernel_matrices(int(total_atoms), float(theta))
    return RotationKernel(int(total_atoms), float(theta), g, k, kp)


def kernel_columns(total_atoms, theta, cols):
    """Selected columns of (K, K') without materializing the full kernel.

    Returns (q, dq) of shape (N+1, len(cols)): q[:, j] is the outcome
    distribution of a rotated basis state |n'_j>, dq its theta-derivative.
    Cost is one (N+1)^2 x w matmul pair, which is what makes wide spectra
    tractable inside the Fisher-information optimizer.
    """
    n = int(total_atoms)
    m, v = jx_spectral(n)
    vt = np.ascontiguousarray(v[cols, :].T)  # (N+1) x w
    re = v @ (np.cos(theta * m)[:, None] * vt)
    im = -(v @ (np.sin(theta * m)[:, None] * vt))
    q = re * re + im * im
    dre = _apply_jx(im, n)
    dim = -_apply_jx(re, n)
    dq = 2.0 * (re * dre + im * dim)
    return q, dq


def clear_caches():
    """Drop cached eigenbases and kernels (mainly for tests and memory control)."""
    _basis_cache.clear()
    _kernel_cache.clear()
