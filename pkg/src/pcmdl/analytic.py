"""Closed-form single-sample Bayesian regression solved by predictive coding.

One observation ``y`` is explained through a latent ``v`` predicted by
``W x``. The energy

    E(v, W) = ||y - v||^2 / (2 sigma^2) + ||v - W x||^2 / (2 sigma^2) + alpha/2 ||W||^2

is minimized by alternating ``v <- (y + W x)/2`` and
``W <- v x^T (x x^T + alpha sigma^2 I)^{-1}``. Both coordinate minimizers and
the joint fixed point are available in closed form, which makes these
instances exact references for the general engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularSystem
from .model import Dataset, GaussianPrior
from .numerics import solve_spd


@dataclass(frozen=True)
class ScalarInstance:
    x: float
    y: float
    sigma2: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.sigma2 > 0 and self.alpha > 0):
            raise ValueError("sigma2 and alpha must be positive")


@dataclass(frozen=True)
class VectorInstance:
    x: np.ndarray
    y: np.ndarray
    sigma2: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if x.ndim != 1 or y.ndim != 1 or x.size < 1 or y.size < 1:
            raise ValueError("x and y must be non-empty vectors")
        if not (self.sigma2 > 0 and self.alpha > 0):
            raise ValueError("sigma2 and alpha must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def ridge(self) -> float:
        return self.alpha * self.sigma2


@dataclass(frozen=True)
class Iterate:
    """State after one v-update followed by one W-update.

    ``energy_half`` is the energy between the two half-steps.
    """

    v: np.ndarray | float
    w: np.ndarray | float
    energy: float
    energy_half: float


# ---------------------------------------------------------------------------
# scalar case
# ---------------------------------------------------------------------------


def scalar_energy(inst: ScalarInstance, v: float, w: float) -> float:
    s2 = inst.sigma2
    return (inst.y - v) ** 2 / (2 * s2) + (v - w * inst.x) ** 2 / (2 * s2) + 0.5 * inst.alpha * w * w


def scalar_energy_gradient(inst: ScalarInstance, v: float, w: float) -> np.ndarray:
    s2, x = inst.sigma2, inst.x
    r = v - w * x
    return np.array([(-(inst.y - v) + r) / s2, -r * x / s2 + inst.alpha * w])


def scalar_update_v(inst: ScalarInstance, w: float) -> float:
    return 0.5 * (inst.y + w * inst.x)


def scalar_update_w(inst: ScalarInstance, v: float) -> float:
    return inst.x * v / (inst.x**2 + inst.alpha * inst.sigma2)


def scalar_fixed_point(inst: ScalarInstance) -> tuple[float, float]:
    """Solve ``v = (y + w x)/2`` and ``w = x v / (x^2 + alpha sigma^2)`` jointly."""
    k = inst.x / (inst.x**2 + inst.alpha * inst.sigma2)
    system = np.array([[1.0, -0.5 * inst.x], [-k, 1.0]])
    # det = 1 - x^2 / (2 (x^2 + alpha sigma^2)) >= 1/2
    if abs(np.linalg.det(system)) < 1e-14:
        raise SingularSystem("scalar fixed-point system is singular")
    v, w = np.linalg.solve(system, np.array([0.5 * inst.y, 0.0]))
    return float(v), float(w)


def scalar_pc_iterate(inst: ScalarInstance, v0: float, w0: float, T: int) -> list[Iterate]:
    """Initial state followed by ``T`` rounds of v-then-w coordinate minimization."""
    if T < 1:
        raise ValueError("T must be >= 1")
    e0 = scalar_energy(inst, v0, w0)
    out = [Iterate(float(v0), float(w0), e0, e0)]
    v, w = float(v0), float(w0)
    for _ in range(T):
        v = scalar_update_v(inst, w)
        half = scalar_energy(inst, v, w)
        w = scalar_update_w(inst, v)
        out.append(Iterate(v, w, scalar_energy(inst, v, w), half))
    return out


# ---------------------------------------------------------------------------
# vector case
# ---------------------------------------------------------------------------


def vector_energy(inst: VectorInstance, v: np.ndarray, W: np.ndarray) -> float:
    s2 = inst.sigma2
    r_out = inst.y - v
    r_lat = v - W @ inst.x
    return float(r_out @ r_out / (2 * s2) + r_lat @ r_lat / (2 * s2) + 0.5 * inst.alpha * np.sum(W * W))


def vector_energy_gradient(
    inst: VectorInstance, v: np.ndarray, W: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    s2 = inst.sigma2
    r = v - W @ inst.x
    gv = (-(inst.y - v) + r) / s2
    gW = -np.outer(r, inst.x) / s2 + inst.alpha * W
    return gv, gW


def _regularized_input(inst: VectorInstance) -> np.ndarray:
    """``(x x^T + alpha sigma^2 I)^{-1} x``."""
    d = inst.x.size
    return solve_spd(np.outer(inst.x, inst.x) + inst.ridge * np.eye(d), inst.x)


def vector_update_v(inst: VectorInstance, W: np.ndarray) -> np.ndarray:
    return 0.5 * (inst.y + W @ inst.x)


def vector_update_w(inst: VectorInstance, v: np.ndarray) -> np.ndarray:
    return np.outer(v, _regularized_input(inst))


def vector_fixed_point(inst: VectorInstance) -> tuple[np.ndarray, np.ndarray]:
    """Fixed point through the scalar ``s = x^T (x x^T + alpha sigma^2 I)^{-1} x``.

    At the fixed point ``W x = s v``, so ``v = y / (2 - s)``; ``s`` lies in
    ``[0, 1)`` whenever ``alpha sigma^2 > 0``.
    """
    z = _regularized_input(inst)
    s = float(inst.x @ z)
    if 1.0 - 0.5 * s <= 1e-14:
        raise SingularSystem(f"degenerate fixed point, s = {s}")
    v = inst.y / (2.0 - s)
    return v, np.outer(v, z)


def vector_pc_iterate(
    inst: VectorInstance, v0: np.ndarray, W0: np.ndarray, T: int
) -> list[Iterate]:
    if T < 1:
        raise ValueError("T must be >= 1")
    v = np.array(v0, dtype=float)
    W = np.array(W0, dtype=float)
    if v.shape != inst.y.shape or W.shape != (inst.y.size, inst.x.size):
        raise ValueError("initial state does not match the instance dimensions")
    e0 = vector_energy(inst, v, W)
    out = [Iterate(v.copy(), W.copy(), e0, e0)]
    for _ in range(T):
        v = vector_update_v(inst, W)
        half = vector_energy(inst, v, W)
        W = vector_update_w(inst, v)
        out.append(Iterate(v.copy(), W.copy(), vector_energy(inst, v, W), half))
    return out


# ---------------------------------------------------------------------------
# bridge to the layerwise engine
# ---------------------------------------------------------------------------


def equivalent_regression(inst: ScalarInstance | VectorInstance) -> tuple[Dataset, GaussianPrior]:
    """One-layer, one-sample regression with the same weight fixed point.

    Minimizing the energy over ``v`` leaves ``||y - W x||^2 / (4 sigma^2) +
    alpha/2 ||W||^2``: a single linear layer with noise variance ``2 sigma^2``.
    With ``N = 1`` the once-per-dataset prior of the codelength matches the
    once-per-instance prior of the energy.
    """
    x = np.atleast_2d(np.asarray(inst.x, dtype=float))
    y = np.atleast_2d(np.asarray(inst.y, dtype=float))
    data = Dataset(x, y, provenance={"source": "closed-form instance"})
    return data, GaussianPrior((inst.alpha,), noise_var=2.0 * inst.sigma2)
