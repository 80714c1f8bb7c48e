"""Per-step training records shared by the PC and BP drivers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .model import (
    Dataset,
    GaussianPrior,
    NetworkParams,
    codelength_gradient,
    gradient_norms,
    model_codelength,
    per_sample_losses,
    report_from_losses,
)


@dataclass(frozen=True)
class StepRecord:
    step: int
    risk: float
    model_code_scaled: float
    total: float
    surrogate_risk: float
    grad_norm: float
    param_norm: float
    cost: float
    flops: int

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def record_step(
    step: int,
    params: NetworkParams,
    data: Dataset,
    prior: GaussianPrior,
    cost: float,
    flops: int,
) -> StepRecord:
    losses = per_sample_losses(params, data, prior)
    report = report_from_losses(losses, model_codelength(params, prior), data.N)
    grad, _ = gradient_norms(codelength_gradient(params, data, prior))
    return StepRecord(
        step=step,
        risk=report.empirical_risk,
        model_code_scaled=report.model_code_scaled,
        total=report.total,
        surrogate_risk=float(np.mean(np.minimum(losses, 1.0))),
        grad_norm=grad,
        param_norm=float(np.sqrt(params.squared_norm())),
        cost=float(cost),
        flops=int(flops),
    )


@dataclass
class Trajectory:
    """Records for steps ``0..n-1`` (step 0 is the initial point) and the final params."""

    algo: str
    N: int
    records: list[StepRecord] = field(default_factory=list)
    final_params: NetworkParams | None = None
    extras: list[Any] = field(default_factory=list)
    iterates: list[NetworkParams] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def totals(self) -> np.ndarray:
        return self.column("total")

    def to_dict(self) -> dict[str, Any]:
        return {
            "algo": self.algo,
            "N": self.N,
            "records": [r.to_dict() for r in self.records],
            "final_params": None if self.final_params is None else self.final_params.to_dict(),
        }
