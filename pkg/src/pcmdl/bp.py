"""Full-batch gradient-descent baseline and equal-budget alignment."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidConfig, NonFiniteValue
from .model import Dataset, GaussianPrior, NetworkParams, codelength_gradient
from .trajectory import Trajectory, record_step


class BpObjective(str, enum.Enum):
    RISK_ONLY = "risk_only"
    RISK_PLUS_PRIOR = "risk_plus_prior"


@dataclass(frozen=True)
class BpConfig:
    learning_rate: float = 0.01
    steps: int = 200
    objective: BpObjective = BpObjective.RISK_ONLY

    def __post_init__(self):
        object.__setattr__(self, "objective", BpObjective(self.objective))
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be positive")
        if self.steps < 1:
            raise InvalidConfig("steps must be >= 1")


def bp_step(
    params: NetworkParams, data: Dataset, prior: GaussianPrior, config: BpConfig
) -> NetworkParams:
    with_prior = config.objective is BpObjective.RISK_PLUS_PRIOR
    grads = codelength_gradient(params, data, prior, include_prior=with_prior)
    new = [t - config.learning_rate * g for t, g in zip(params.layers, grads)]
    if not all(np.isfinite(t).all() for t in new):
        raise NonFiniteValue("gradient step diverged")
    return params.with_layers(new)


def _pass_flops(params: NetworkParams, N: int) -> int:
    # forward plus backward, roughly three matrix products per layer
    return 3 * N * sum(a * b for a, b in zip(params.dims, params.dims[1:]))


def bp_train(
    params: NetworkParams, data: Dataset, prior: GaussianPrior, config: BpConfig
) -> Trajectory:
    """``config.steps`` gradient steps; every record reports the full codelength."""
    traj = Trajectory("bp", data.N)
    per_pass = _pass_flops(params, data.N)
    traj.records.append(record_step(0, params, data, prior, 0.0, 0))
    for t in range(1, config.steps + 1):
        params = bp_step(params, data, prior, config)
        traj.records.append(record_step(t, params, data, prior, float(t), t * per_pass))
    traj.final_params = params
    return traj


@dataclass(frozen=True)
class BudgetPairing:
    """Index pairs of two trajectories on a shared grid of budget fractions."""

    fractions: np.ndarray
    pc_index: np.ndarray
    bp_index: np.ndarray

    def pc_values(self, traj: Trajectory, name: str) -> np.ndarray:
        return traj.column(name)[self.pc_index]

    def bp_values(self, traj: Trajectory, name: str) -> np.ndarray:
        return traj.column(name)[self.bp_index]


def own_fractions(n: int) -> list[Fraction]:
    if n == 1:
        return [Fraction(1)]
    return [Fraction(k, n - 1) for k in range(n)]


def carry_forward(own: list[Fraction], grid: list[Fraction]) -> np.ndarray:
    idx, k = [], 0
    for f in grid:
        while k + 1 < len(own) and own[k + 1] <= f:
            k += 1
        idx.append(k)
    return np.array(idx, dtype=int)


def budget_fractions(n: int) -> np.ndarray:
    return np.array([float(f) for f in own_fractions(n)])


def align_budgets(pc_traj: Trajectory, bp_traj: Trajectory) -> BudgetPairing:
    """Pair two runs by the fraction of their own budget spent.

    Entry ``k`` of an ``n``-entry trajectory sits at fraction ``k/(n-1)``.
    The grid is the union of both runs' fractions and each run is read as a
    step function, so a value holds until that run's next entry. Fractions
    are exact rationals, so endpoints and shared points line up exactly.
    """
    if len(pc_traj) == 0 or len(bp_traj) == 0:
        raise ValueError("cannot align an empty trajectory")
    pc_f = own_fractions(len(pc_traj))
    bp_f = own_fractions(len(bp_traj))
    grid = sorted(set(pc_f) | set(bp_f))
    return BudgetPairing(
        np.array([float(f) for f in grid]),
        carry_forward(pc_f, grid),
        carry_forward(bp_f, grid),
    )
