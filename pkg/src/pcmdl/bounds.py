"""Occam-style generalization bounds and the budget-gap diagnostic.

Codelengths and confidence terms are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .bp import align_budgets
from .errors import InvalidDelta
from .model import Dataset, GaussianPrior, NetworkParams, model_codelength, per_sample_losses
from .trajectory import Trajectory


def _confidence_term(delta: float, two_sided: bool) -> float:
    if not (0.0 < delta < 1.0):
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    return math.log(2.0 / delta) if two_sided else math.log(1.0 / delta)


def occam_bound(
    risk: float, model_code: float, N: int, delta: float, two_sided: bool = True
) -> float:
    """``risk + (L + ln(2/delta)) / N``; ``two_sided=False`` uses ``ln(1/delta)``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if model_code < 0:
        raise ValueError("model_code must be non-negative")
    return risk + (model_code + _confidence_term(delta, two_sided)) / N


def concentration_margin(M: float, model_code: float, N: int, delta: float) -> float:
    """Deviation margin ``(2M / 3N) (L + ln(2/delta))`` for losses bounded by ``M``."""
    if not M > 0:
        raise ValueError("M must be positive")
    return 2.0 * M / (3.0 * N) * (model_code + _confidence_term(delta, True))


def surrogate_losses(losses: np.ndarray) -> tuple[np.ndarray, bool]:
    """Clamp losses into ``[0, 1]``; the flag tells whether any clamp fired."""
    clamped = np.minimum(losses, 1.0)
    return clamped, bool(np.any(losses > 1.0))


@dataclass(frozen=True)
class BoundCertificate:
    empirical_risk_bounded: float
    model_code: float
    N: int
    delta: float
    bound_value: float
    surrogate_applied: bool
    two_sided: bool = True

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def certify(
    params: NetworkParams,
    data: Dataset,
    prior: GaussianPrior,
    delta: float,
    two_sided: bool = True,
) -> BoundCertificate:
    _confidence_term(delta, two_sided)
    clamped, applied = surrogate_losses(per_sample_losses(params, data, prior))
    risk = float(np.mean(clamped))
    L = model_codelength(params, prior)
    return BoundCertificate(
        risk, L, data.N, delta, occam_bound(risk, L, data.N, delta, two_sided), applied, two_sided
    )


def surrogate_risk(params: NetworkParams, data: Dataset, prior: GaussianPrior) -> float:
    return float(np.mean(surrogate_losses(per_sample_losses(params, data, prior))[0]))


@dataclass
class BudgetGapReport:
    fractions: list[float]
    risk_pc: list[float]
    risk_bp: list[float]
    model_code_pc: list[float]
    model_code_bp: list[float]
    bound_pc: list[float]
    bound_bp: list[float]
    norm_pc: list[float]
    norm_bp: list[float]
    delta: float
    bound_one_sided_pc_end: float
    bound_one_sided_bp_end: float
    pc_bound_lower_at_end: bool = field(init=False)
    pc_norm_smaller_at_end: bool = field(init=False)

    def __post_init__(self):
        self.pc_bound_lower_at_end = self.bound_pc[-1] < self.bound_bp[-1]
        self.pc_norm_smaller_at_end = self.norm_pc[-1] < self.norm_bp[-1]

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def budget_gap_report(
    pc_traj: Trajectory, bp_traj: Trajectory, prior: GaussianPrior, delta: float
) -> BudgetGapReport:
    """Risk, model code, certified bound and weight norm of both runs on a shared budget grid.

    Bounds use the clamped training risk stored in each record. The
    ``ln(1/delta)`` variant of the final bound is included alongside.
    """
    _confidence_term(delta, True)
    pair = align_budgets(pc_traj, bp_traj)

    def series(traj, idx):
        rec = [traj.records[i] for i in idx]
        L = [r.model_code_scaled * traj.N for r in rec]
        bounds = [occam_bound(r.surrogate_risk, l, traj.N, delta) for r, l in zip(rec, L)]
        last = rec[-1]
        one = occam_bound(last.surrogate_risk, L[-1], traj.N, delta, two_sided=False)
        return [r.risk for r in rec], L, bounds, [r.param_norm for r in rec], one

    r_pc, l_pc, b_pc, n_pc, one_pc = series(pc_traj, pair.pc_index)
    r_bp, l_bp, b_bp, n_bp, one_bp = series(bp_traj, pair.bp_index)
    return BudgetGapReport(
        pair.fractions.tolist(), r_pc, r_bp, l_pc, l_bp, b_pc, b_bp, n_pc, n_bp,
        delta, one_pc, one_bp,
    )
