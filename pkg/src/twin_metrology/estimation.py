"""Phase estimation from the population-imbalance measurement.

After the interferometer rotation the probability of finding an imbalance
n within the N-atom block is p_N(n | theta) = sum_n' K[n, n'] lambda^(N)_n'
with K the rotation kernel of the block. The classical Fisher information

    F(theta) = sum_N sum_n (d p_N / d theta)^2 / p_N

uses the analytic kernel derivative; probabilities are joint over (N, n)
(they sum to one across all blocks), which is the same as conditioning on
N and weighting by block mass. theta enters through kernel columns only,
so per block the cost is one matmul pair over the spectrum's support.

F(theta) is 2pi-periodic, even in theta, and mirror-symmetric about
theta = pi/2 (a pi rotation merely relabels n -> -n), so the optimizer
searches (0, pi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrology import qfi_exact
from .spin_algebra import kernel_columns, normalize_generator

__all__ = [
    "OutcomeDistribution",
    "FisherReport",
    "outcome_probabilities",
    "fisher_information",
    "optimize_fisher",
    "hellinger_fisher",
]

# blocks lighter than this fraction of the state are skipped; the Fisher
# sum only ever loses the skipped terms, so bounds against the QFI hold
_BLOCK_MASS_CUT = 1e-13
# within a block, eigenvalues below this fraction of the block maximum are
# not propagated (their kernel columns are dropped)
_SUPPORT_CUT = 1e-15
# probability floor: outcomes with p below this are excluded from the sum
_P_FLOOR = 1e-300


@dataclass
class OutcomeDistribution:
    """Joint outcome probabilities p_N(n | theta), keyed by block total N."""

    theta: float
    generator: str
    probabilities: dict

    def block(self, total):
        return self.probabilities[total]

    def total_mass(self):
        return float(sum(p.sum() for p in self.probabilities.values()))


@dataclass
class FisherReport:
    """Classical Fisher information of the imbalance measurement at one angle."""

    theta: float
    value: float
    n_bar: float
    qfi: float
    block_totals: np.ndarray | None = None
    block_values: np.ndarray | None = None
    flagged: int = 0     # outcomes with p below floor but non-vanishing slope

    @property
    def over_snl(self):
        if self.n_bar == 0:
            return float("nan")
        return self.value / self.n_bar

    @property
    def vs_qfi(self):
        if self.qfi == 0:
            return float("nan")
        return self.value / self.qfi


def _spectrum_qfi(spec):
    # the closed form is cheap; cache it on the spectrum instance
    cached = getattr(spec, "_qfi_value", None)
    if cached is None:
        cached = qfi_exact(spec).value
        spec._qfi_value = cached
    return cached


def _block_outcomes(total, k0, lam, theta, want_derivative):
    """(p, dp) for one block from the kernel columns on the lam support."""
    keep = lam > _SUPPORT_CUT * lam.max()
    cols = k0 + np.nonzero(keep)[0]
    weights = lam[keep]
    q, dq = kernel_columns(total, theta, cols)
    p = q @ weights
    dp = dq @ weights if want_derivative else None
    return p, dp


def outcome_probabilities(spec, theta, gen="x", min_block_mass=_BLOCK_MASS_CUT):
    """Outcome distribution over (N, n) for a rotation by theta."""
    g = normalize_generator(gen)
    out = {}
    for total, k0, lam in spec.iter_blocks(min_mass=min_block_mass):
        p, _ = _block_outcomes(total, k0, lam, float(theta), False)
        out[int(total)] = p
    return OutcomeDistribution(float(theta), g, out)


def _fisher_value(spec, theta, min_block_mass=_BLOCK_MASS_CUT):
    """(F, totals, values, flagged) at one angle."""
    totals, values = [], []
    flagged = 0
    for total, k0, lam in spec.iter_blocks(min_mass=min_block_mass):
        p, dp = _block_outcomes(total, k0, lam, theta, True)
        live = p > _P_FLOOR
        flagged += int(np.count_nonzero(~live & (np.abs(dp) > _P_FLOOR)))
        contrib = float(np.sum(dp[live] ** 2 / p[live]))
        totals.append(total)
        values.append(contrib)
    return (
        float(np.sum(values)),
        np.asarray(totals),
        np.asarray(values, dtype=float),
        flagged,
    )


def fisher_information(spec, theta, gen="x", min_block_mass=_BLOCK_MASS_CUT):
    """Classical Fisher information of the imbalance measurement at theta."""
    normalize_generator(gen)
    value, totals, values, flagged = _fisher_value(spec, float(theta), min_block_mass)
    return FisherReport(
        float(theta), value, spec.n_bar, _spectrum_qfi(spec), totals, values, flagged
    )


def optimize_fisher(spec, gen="x", grid_points=32, refine_tol=1e-4,
                    min_block_mass=_BLOCK_MASS_CUT):
    """Maximize the Fisher information over theta in (0, pi).

    A uniform coarse grid locates the best basin; golden-section refinement
    around it narrows the angle to `refine_tol`. The best angle seen
    anywhere (grid or refinement) is returned, so the result never falls
    below the coarse-grid maximum.
    """
    normalize_generator(gen)
    if grid_points < 8:
        raise ValueError("grid_points must be >= 8")
    if refine_tol <= 0:
        raise ValueError("refine_tol must be positive")

    grid = np.pi * (np.arange(grid_points) + 0.5) / grid_points
    best_theta, best_value = None, -np.inf
    for theta in grid:
        value, *_ = _fisher_value(spec, float(theta), min_block_mass)
        if value > best_value:
            best_theta, best_value = float(theta), value

    half = np.pi / grid_points
    lo = max(best_theta - half, 1e-12)
    hi = min(best_theta + half, np.pi - 1e-12)
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, *_ = _fisher_value(spec, c, min_block_mass)
    fd, *_ = _fisher_value(spec, d, min_block_mass)
    for theta, value in ((c, fc), (d, fd)):
        if value > best_value:
            best_theta, best_value = theta, value
    while (hi - lo) > refine_tol:
        if fc < fd:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd, *_ = _fisher_value(spec, d, min_block_mass)
            if fd > best_value:
                best_theta, best_value = d, fd
        else:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc, *_ = _fisher_value(spec, c, min_block_mass)
            if fc > best_value:
                best_theta, best_value = c, fc
    return fisher_information(spec, best_theta, gen, min_block_mass)


def hellinger_fisher(spec, theta, delta_theta, gen="x"):
    """Fisher information estimated from the distance of nearby outcomes.

    Returns 8 (1 - sum_N sum_n sqrt(p(theta) p(theta + dtheta))) / dtheta^2,
    the measurable estimator whose small-step limit is the Fisher
    information at the midpoint of the two angles.
    """
    normalize_generator(gen)
    if delta_theta == 0:
        raise ValueError("degenerate step")
    if not 0 < abs(delta_theta) <= 0.1:
        raise ValueError("delta_theta must satisfy 0 < |delta_theta| <= 0.1")
    # 1 - sum sqrt(p q) written as (1/2) sum (sqrt p - sqrt q)^2, which is
    # free of cancellation at small steps and insensitive to block pruning
    hellinger_sq = 0.0
    for total, k0, lam in spec.iter_blocks(min_mass=_BLOCK_MASS_CUT):
        p, _ = _block_outcomes(total, k0, lam, float(theta), False)
        q, _ = _block_outcomes(total, k0, lam, float(theta) + float(delta_theta), False)
        hellinger_sq += 0.5 * float(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))
    return 8.0 * hellinger_sq / float(delta_theta) ** 2
