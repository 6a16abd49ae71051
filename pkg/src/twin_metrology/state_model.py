"""Atom-number distributions of the two sources and the block spectrum.

Each source is described by a probability table over its atom number: a
smooth envelope (Gaussian, or an explicit table) optionally modulated by a
seeded stochastic disorder P(N_i) -> P(N_i) (1 + eps * xi(N_i)). The two
tables combine into the block-diagonal spectrum of the input state: for
every total atom number N = N_a + N_b the eigenvalues are

    lambda^(N)_k = P_a(k) * P_b(N - k) / trace,   k = n + N/2 = N_a.

Disorder draws use counter-based Philox streams keyed (seed, realization,
source), so ensembles are reproducible and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "NumberDistribution",
    "DisorderRealization",
    "BlockSpectrum",
    "build_distribution",
    "draw_disorder",
    "disorder_pair",
    "apply_disorder",
    "block_spectra",
]

# Gaussian windows are [max(0, ceil(mu - 8 sigma)), ceil(mu + 8 sigma)];
# the mass outside is below ~1e-15 of the envelope.
_WINDOW_SIGMAS = 8.0


@dataclass
class NumberDistribution:
    """Probability table p[N_i] over a contiguous atom-number window."""

    kind: str                      # 'gaussian' or 'table'
    start: int                     # first atom number of the window
    probabilities: np.ndarray
    mu: float | None = None        # envelope parameters (gaussian kind)
    sigma: float | None = None
    normalized: bool = True
    clamped: int = 0               # entries clipped to zero by apply_disorder

    @property
    def window(self):
        return (self.start, self.start + len(self.probabilities) - 1)

    def atom_numbers(self):
        return np.arange(self.start, self.start + len(self.probabilities))

    def mean(self):
        return float(np.dot(self.atom_numbers(), self.probabilities))

    def total(self):
        return float(self.probabilities.sum())


def build_distribution(kind, mu=None, sigma=None, values=None, start=0):
    """Construct a normalized source distribution.

    kind='gaussian' needs mu > 0-ish and sigma > 0; the window is clipped at
    zero atoms. kind='table' takes explicit non-negative `values` beginning
    at atom number `start`.
    """
    if kind == "gaussian":
        if sigma is None or sigma <= 0:
            raise ValueError("invalid width")
        if mu is None:
            raise ValueError("gaussian envelope needs a mean")
        lo = max(0, int(np.ceil(mu - _WINDOW_SIGMAS * sigma)))
        hi = int(np.ceil(mu + _WINDOW_SIGMAS * sigma))
        x = np.arange(lo, hi + 1, dtype=float)
        p = np.exp(-0.5 * ((x - mu) / sigma) ** 2)
        tot = p.sum()
        if tot <= 0:
            raise ValueError("degenerate distribution")
        return NumberDistribution("gaussian", lo, p / tot, mu=float(mu), sigma=float(sigma))
    if kind == "table":
        p = np.asarray(values, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("table values must be a non-empty 1-d sequence")
        if np.any(p < 0):
            raise ValueError("table values must be non-negative")
        tot = p.sum()
        if tot <= 0:
            raise ValueError("degenerate distribution")
        if start < 0:
            raise ValueError("window start must be non-negative")
        return NumberDistribution("table", int(start), p / tot)
    raise ValueError(f"unknown envelope kind {kind!r}")


@dataclass
class DisorderRealization:
    """One draw of the modulation xi(N_i) over a window, with its amplitude.

    kind 'iid-uniform' draws xi independently and uniformly from [-1, 1]
    per atom number, so the declared correlations are kappa0 = 1/3 and
    kappa1 = 0. An explicit table (kind 'table') covers externally supplied
    processes; its kappa values are whatever the caller declares.
    """

    epsilon: float
    kind: str
    start: int
    xi: np.ndarray
    seed: int = 0
    realization: int = 0
    source: int = 0
    shared: bool = True
    kappa0: float = 1.0 / 3.0
    kappa1: float = 0.0

    @property
    def window(self):
        return (self.start, self.start + len(self.xi) - 1)


def _stream(seed, realization, source):
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, (realization << 1) | source], dtype=np.uint64))
    )


def draw_disorder(window, epsilon, seed, realization=0, source=0, shared=True):
    """Draw one iid-uniform disorder table on `window` = (lo, hi)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    lo, hi = int(window[0]), int(window[1])
    rng = _stream(int(seed), int(realization), int(source))
    xi = rng.uniform(-1.0, 1.0, size=hi - lo + 1)
    return DisorderRealization(
        float(epsilon), "iid-uniform", lo, xi,
        seed=int(seed), realization=int(realization), source=int(source), shared=shared,
    )


def disorder_pair(window, epsilon, seed, realization=0, shared=True):
    """Disorder for both sources: one common table, or two independent ones."""
    a = draw_disorder(window, epsilon, seed, realization, source=0, shared=shared)
    if shared:
        return a, a
    b = draw_disorder(window, epsilon, seed, realization, source=1, shared=False)
    return a, b


def apply_disorder(dist, real):
    """Entrywise P(N_i) * (1 + eps * xi(N_i)), re-normalized to sum 1.

    Negative products (possible only for out-of-contract noise with
    |eps * xi| > 1) are clamped to zero and counted on the result.
    """
    if real.window != dist.window:
        raise ValueError(
            f"window mismatch: distribution {dist.window} vs disorder {real.window}"
        )
    if real.epsilon == 0.0:
        return dist
    q = dist.probabilities * (1.0 + real.epsilon * real.xi)
    clamped = int(np.count_nonzero(q < 0))
    if clamped:
        q = np.where(q < 0, 0.0, q)
    tot = q.sum()
    if tot <= 0:
        raise ValueError("degenerate distribution")
    return replace(dist, probabilities=q / tot, normalized=True, clamped=clamped)


@dataclass
class BlockSpectrum:
    """Block-diagonal spectrum of the two-source input state.

    Holds the two source tables; block eigenvalue vectors are reconstructed
    on demand as outer products, which keeps wide spectra cheap. `trace` is
    the pre-normalization total; eigenvalues are returned normalized.
    """

    a_start: int
    a_probs: np.ndarray
    b_start: int
    b_probs: np.ndarray
    trace: float
    n_bar: float
    _mass: np.ndarray = field(repr=False, default=None)

    @property
    def total_range(self):
        """(N_min, N_max) of reachable total atom numbers."""
        return (
            self.a_start + self.b_start,
            self.a_start + len(self.a_probs) - 1 + self.b_start + len(self.b_probs) - 1,
        )

    def block_totals(self):
        lo, hi = self.total_range
        return np.arange(lo, hi + 1)

    def block_masses(self):
        """Mass of every reachable block, in block_totals() order."""
        if self._mass is None:
            self._mass = np.convolve(self.a_probs, self.b_probs) / self.trace
        return self._mass

    def block_mass(self, total):
        lo, hi = self.total_range
        if not lo <= total <= hi:
            return 0.0
        return float(self.block_masses()[total - lo])

    def eigenvalues(self, total):
        """Full eigenvalue vector of block `total`, indexed by k = 0..N."""
        lo, hi = self.total_range
        if not lo <= total <= hi:
            raise ValueError(f"block {total} outside reachable range {self.total_range}")
        lam = np.zeros(total + 1)
        ka = max(self.a_start, total - (self.b_start + len(self.b_probs) - 1))
        kb = min(self.a_start + len(self.a_probs) - 1, total - self.b_start)
        if ka <= kb:
            ks = np.arange(ka, kb + 1)
            lam[ks] = self.a_probs[ks - self.a_start] * self.b_probs[total - ks - self.b_start]
        return lam / self.trace

    def block_support(self, total):
        """(k0, lam) for block `total`: the contiguous nonzero segment only."""
        ka = max(self.a_start, total - (self.b_start + len(self.b_probs) - 1))
        kb = min(self.a_start + len(self.a_probs) - 1, total - self.b_start)
        if ka > kb:
            return ka, np.zeros(0)
        ks = np.arange(ka, kb + 1)
        lam = self.a_probs[ks - self.a_start] * self.b_probs[total - ks - self.b_start]
        return ka, lam / self.trace

    def iter_blocks(self, min_mass=0.0):
        """Yield (total, k0, lam_segment) for blocks with mass >= min_mass."""
        masses = self.block_masses()
        lo, _ = self.total_range
        for i, mass in enumerate(masses):
            if mass < min_mass:
                continue
            total = lo + i
            k0, lam = self.block_support(total)
            if len(lam):
                yield total, k0, lam

    def outer_table(self):
        """lambda as a 2-d table over (N_a, N_b), normalized by the trace."""
        return np.outer(self.a_probs, self.b_probs) / self.trace


def block_spectra(dist_a, dist_b):
    """Assemble the block spectrum from two normalized source tables."""
    ta, tb = dist_a.total(), dist_b.total()
    trace = ta * tb
    if trace <= 0:
        raise ValueError("empty spectrum")
    n_bar = dist_a.mean() / ta + dist_b.mean() / tb
    return BlockSpectrum(
        dist_a.start, dist_a.probabilities,
        dist_b.start, dist_b.probabilities,
        trace, n_bar,
    )
