"""Seeded Monte Carlo over disorder realizations and figure datasets.

A sweep cell fixes (sigma, epsilon) and runs R independent realizations of
the disorder process, each on its own counter-based stream (base_seed, r),
so results are reproducible bit for bit and independent of execution
order or worker count. Each realization rebuilds the source tables,
applies the disorder, and evaluates the QFI (always) and the
angle-optimized classical Fisher information (optional: it is orders of
magnitude more expensive at large widths).

Probability maps sample one block's conditional outcome distribution
p(n | theta) on a theta grid; their total variation along theta is the
fine-structure statistic used to compare disordered and clean inputs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimation import optimize_fisher
from .metrology import plateau_prediction, qfi_exact
from .state_model import apply_disorder, block_spectra, build_distribution, disorder_pair

__all__ = [
    "SweepConfig",
    "SweepCell",
    "SweepResult",
    "ProbabilityMap",
    "run_disorder_ensemble",
    "sweep_sigma",
    "probability_map",
    "total_variation",
]


@dataclass
class SweepConfig:
    """Axes and knobs of a disorder sweep."""

    n_bar: float
    sigmas: tuple = (50.0,)
    epsilons: tuple = (0.0,)
    realizations: int = 100
    base_seed: int = 0
    generator: str = "x"
    grid_points: int = 32
    refine_tol: float = 1e-4
    shared_disorder: bool = True
    compute_cfi: bool = True
    threads: int = 1
    mass_tol: float = 1e-13
    kappa0: float = 1.0 / 3.0
    kappa1: float = 0.0

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if any(s <= 0 for s in self.sigmas):
            raise ValueError("sigma must be positive")
        if any(not 0.0 <= e <= 1.0 for e in self.epsilons):
            raise ValueError("epsilon must lie in [0, 1]")


@dataclass
class SweepCell:
    """Ensemble statistics of one (sigma, epsilon) cell."""

    sigma: float
    epsilon: float
    n_bar: float
    qfi_mean: float
    qfi_std: float
    cfi_mean: float          # nan when the classical branch is disabled
    cfi_std: float
    plateau: float
    qfi_values: np.ndarray
    cfi_values: np.ndarray


@dataclass
class SweepResult:
    config: SweepConfig
    cells: list = field(default_factory=list)

    def cell(self, sigma, epsilon):
        for c in self.cells:
            if c.sigma == sigma and c.epsilon == epsilon:
                return c
        raise KeyError((sigma, epsilon))


def _realization_spectrum(cfg, sigma, epsilon, r):
    dist = build_distribution("gaussian", mu=cfg.n_bar / 2.0, sigma=sigma)
    if epsilon == 0.0:
        return block_spectra(dist, dist)
    real_a, real_b = disorder_pair(
        dist.window, epsilon, cfg.base_seed, realization=r, shared=cfg.shared_disorder
    )
    return block_spectra(apply_disorder(dist, real_a), apply_disorder(dist, real_b))


def _one_realization(cfg, sigma, epsilon, r):
    spec = _realization_spectrum(cfg, sigma, epsilon, r)
    qfi = qfi_exact(spec, cfg.generator).value
    cfi = float("nan")
    if cfg.compute_cfi:
        cfi = optimize_fisher(
            spec, cfg.generator, grid_points=cfg.grid_points,
            refine_tol=cfg.refine_tol, min_block_mass=cfg.mass_tol,
        ).value
    return qfi, cfi


def _std(values):
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def run_disorder_ensemble(cfg, sigma, epsilon):
    """Run one (sigma, epsilon) cell of `cfg.realizations` seeded realizations.

    epsilon = 0 is deterministic, so it is evaluated once and replicated.
    Results are aggregated in realization order regardless of thread count.
    """
    R = cfg.realizations
    if epsilon == 0.0:
        qfi, cfi = _one_realization(cfg, sigma, 0.0, 0)
        qs = np.full(R, qfi)
        cs = np.full(R, cfi)
    elif cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            pairs = list(pool.map(lambda r: _one_realization(cfg, sigma, epsilon, r), range(R)))
        qs = np.array([p[0] for p in pairs])
        cs = np.array([p[1] for p in pairs])
    else:
        pairs = [_one_realization(cfg, sigma, epsilon, r) for r in range(R)]
        qs = np.array([p[0] for p in pairs])
        cs = np.array([p[1] for p in pairs])
    plateau = plateau_prediction(cfg.n_bar, sigma, epsilon, cfg.kappa0, cfg.kappa1).value
    return SweepCell(
        float(sigma), float(epsilon), float(cfg.n_bar),
        float(qs.mean()), _std(qs),
        float(cs.mean()) if cfg.compute_cfi else float("nan"),
        _std(cs) if cfg.compute_cfi else float("nan"),
        plateau, qs, cs,
    )


def sweep_sigma(cfg):
    """Evaluate the full (sigma, epsilon) grid of the sweep configuration."""
    result = SweepResult(cfg)
    for sigma in cfg.sigmas:
        for epsilon in cfg.epsilons:
            result.cells.append(run_disorder_ensemble(cfg, sigma, epsilon))
    return result


@dataclass
class ProbabilityMap:
    """Conditional outcome probabilities of one block on a theta grid."""

    block: int
    thetas: np.ndarray
    imbalances: np.ndarray       # n = k - N/2 for k = 0..N
    values: np.ndarray           # shape (len(thetas), N + 1), each row sums to 1
    block_mass: float


def probability_map(cfg, block, thetas=None, epsilon=None, realization=0):
    """Sample p(n | theta) for one block of total atom number `block`.

    Probabilities are conditioned on the block (each theta row sums to
    one), which makes maps with different disorder realizations directly
    comparable. Raises for blocks carrying less than 1e-12 of the state.
    """
    from .spin_algebra import imbalance_values, rotation_kernel

    if thetas is None:
        thetas = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    thetas = np.asarray(thetas, dtype=float)
    eps = cfg.epsilons[0] if epsilon is None else float(epsilon)
    spec = _realization_spectrum(cfg, cfg.sigmas[0], eps, realization)
    lo, hi = spec.total_range
    if not lo <= block <= hi:
        raise ValueError("empty block")
    mass = spec.block_mass(block)
    if mass < 1e-12:
        raise ValueError("empty block")
    lam = spec.eigenvalues(block)
    rows = np.empty((len(thetas), block + 1))
    for i, theta in enumerate(thetas):
        kern = rotation_kernel(block, float(theta), cfg.generator)
        rows[i] = (kern.matrix @ lam) / mass
    return ProbabilityMap(int(block), thetas, imbalance_values(block), rows, float(mass))


def total_variation(pmap):
    """Fine-structure statistic: sum |p(n|theta_{k+1}) - p(n|theta_k)|."""
    return float(np.abs(np.diff(pmap.values, axis=0)).sum())
