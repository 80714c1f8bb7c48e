"""Predictive coding: latent inference, local learning and layerwise block solves.

A sweep visits layers in input-to-output order and replaces each layer by the
minimizer (``ExactLinear``) or an approximate minimizer (``InexactGradient``)
of the empirical codelength with every other layer held fixed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, UnsupportedArchitecture
from .model import (
    Dataset,
    GaussianPrior,
    LatentState,
    NetworkParams,
    activate,
    activate_prime,
    codelength,
    codelength_gradient,
    forward,
    prediction_errors,
)
from .numerics import RngStream, max_eigenvalue, solve_spd
from .trajectory import Trajectory, record_step


class PcMode(str, enum.Enum):
    EXACT_LINEAR = "exact_linear"
    INEXACT_GRADIENT = "inexact_gradient"


@dataclass(frozen=True)
class PcConfig:
    mode: PcMode = PcMode.EXACT_LINEAR
    inference_steps: int = 50
    inference_rate: float = 0.1
    inference_tolerance: float = 1e-8
    learning_rate: float = 0.01
    sweeps: int = 100
    inner_tolerance: float = 1e-6
    max_inner: int = 500
    stop_tolerance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", PcMode(self.mode))
        if not (self.inference_rate > 0 and self.learning_rate > 0):
            raise InvalidConfig("rates must be positive")
        if not self.inner_tolerance > 0:
            raise InvalidConfig("inner_tolerance must be positive")
        if self.sweeps < 1 or self.max_inner < 1 or self.inference_steps < 0:
            raise InvalidConfig("sweeps and max_inner must be >= 1")
        if self.stop_tolerance < 0:
            raise InvalidConfig("stop_tolerance must be >= 0")


@dataclass
class SweepStats:
    codelength_before: float
    codelength_after: float
    per_block_gradient_norms: list[float] = field(default_factory=list)
    block_lipschitz: list[float] = field(default_factory=list)
    block_descent: list[float] = field(default_factory=list)
    inner_iterations: list[int] = field(default_factory=list)
    inner_converged: list[bool] = field(default_factory=list)
    flop_estimate: int = 0

    @property
    def descent(self) -> float:
        return self.codelength_before - self.codelength_after

    @property
    def descent_bound(self) -> float:
        """Guaranteed drop sum_l ||grad_l||^2 / (2 L_l), gradients taken when block l is visited."""
        return float(
            sum(g * g / (2.0 * L) for g, L in zip(self.per_block_gradient_norms, self.block_lipschitz))
        )

    def is_monotone(self, tol: float) -> bool:
        return self.codelength_after <= self.codelength_before + tol


@dataclass(frozen=True)
class InnerResult:
    theta: np.ndarray
    iterations: int
    converged: bool
    grad_norm: float
    objective: float


# ---------------------------------------------------------------------------
# inference and local learning
# ---------------------------------------------------------------------------


def latent_drive(latent: LatentState, params: NetworkParams) -> list[np.ndarray]:
    """The update direction ``-eps_l + theta_{l+1}^T (eps_{l+1} * f'(theta_{l+1} x_l))``
    for each free value layer ``x_1..x_{L-1}``."""
    vals = latent.values
    errs = prediction_errors(params, vals)
    out = []
    for l in range(1, params.n_layers):
        theta = params.layers[l]
        fp = activate_prime(params.layer_activation(l), vals[l] @ theta.T)
        out.append(-errs[l - 1] + (errs[l] * fp) @ theta)
    return out


def infer_step(latent: LatentState, params: NetworkParams, rate: float) -> LatentState:
    if len(latent.values) != params.n_layers + 1:
        raise DimensionMismatch("latent state does not match the network depth")
    drive = latent_drive(latent, params)
    values = [v.copy() for v in latent.values]
    for l, dx in enumerate(drive, start=1):
        values[l] = values[l] + rate * dx
    return LatentState.from_values(params, values)


def infer_latents(
    latent: LatentState, params: NetworkParams, rate: float, steps: int, tol: float = 1e-8
) -> tuple[LatentState, int]:
    """Repeat ``infer_step`` until the drive norm is ``<= tol`` or ``steps`` is exhausted."""
    for it in range(steps):
        drive = latent_drive(latent, params)
        if not drive or max(np.linalg.norm(d) for d in drive) <= tol:
            return latent, it
        latent = infer_step(latent, params, rate)
    return latent, steps


def infer_exact_single_hidden(
    params: NetworkParams, inputs: np.ndarray, targets: np.ndarray
) -> LatentState:
    """Closed-form latent minimizer for two-layer nets.

    With the output layer linear, the energy is quadratic in the hidden value
    ``v``: ``v* = (I + W2^T W2)^{-1} (f(W1 x) + W2^T y)``.
    """
    if params.n_layers != 2:
        raise UnsupportedArchitecture(
            f"closed-form inference needs exactly one hidden layer, got {params.n_layers} layers"
        )
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    w1, w2 = params.layers
    pred = activate(params.layer_activation(0), x @ w1.T)
    gram = np.eye(w2.shape[1]) + w2.T @ w2
    v = solve_spd(gram, (pred + y @ w2).T).T
    return LatentState.from_values(params, [x, v, y])


def weight_step(params: NetworkParams, latent: LatentState, eta: float) -> NetworkParams:
    """Local learning rule ``theta_l += eta (eps_l * f'(theta_l x_{l-1})) x_{l-1}^T``.

    Each layer only reads its own error and its own presynaptic values, and
    the step descends the summed squared prediction error.
    """
    vals = latent.values
    if len(vals) != params.n_layers + 1:
        raise DimensionMismatch("latent state does not match the network depth")
    new = []
    for l, theta in enumerate(params.layers):
        fp = activate_prime(params.layer_activation(l), vals[l] @ theta.T)
        new.append(theta + eta * (latent.errors[l] * fp).T @ vals[l])
    return params.with_layers(new)


# ---------------------------------------------------------------------------
# block solves
# ---------------------------------------------------------------------------


def exact_layer_solve(
    H: np.ndarray,
    V: np.ndarray,
    alpha: float,
    noise_var: float,
    readout: np.ndarray | None = None,
) -> np.ndarray:
    """Minimize ``sum_i ||v_i - A theta h_i||^2 / (2 sigma^2) + alpha/2 ||theta||_F^2``.

    ``H`` holds the presynaptic activity (``N x d_in``), ``V`` the targets
    (``N x d_out``) and ``A`` an optional fixed linear readout applied after
    the layer (identity when omitted). Dividing the objective by ``N`` gives the
    empirical-codelength block, so the minimizer is the exact block argmin.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    H = np.atleast_2d(np.asarray(H, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if H.shape[0] != V.shape[0]:
        raise DimensionMismatch(f"H has {H.shape[0]} rows, V has {V.shape[0]}")
    gram = H.T @ H
    ridge = noise_var * alpha
    d_in = H.shape[1]
    if readout is None:
        # (H^T H + s I) theta^T = H^T V
        return solve_spd(gram + ridge * np.eye(d_in), H.T @ V).T
    A = np.atleast_2d(np.asarray(readout, dtype=float))
    if A.shape[0] != V.shape[1]:
        raise DimensionMismatch(f"readout has {A.shape[0]} rows, targets have {V.shape[1]} columns")
    d_out = A.shape[1]
    # A^T A theta G + s theta = A^T V^T H, vectorized row-major
    system = np.kron(A.T @ A, gram) + ridge * np.eye(d_out * d_in)
    rhs = (A.T @ V.T @ H).ravel()
    return solve_spd(system, rhs).reshape(d_out, d_in)


def _linear_block_operands(
    params: NetworkParams, l: int, data: Dataset
) -> tuple[np.ndarray, np.ndarray | None]:
    acts = forward(params, data.inputs)
    H = acts[l]
    if l == params.n_layers - 1:
        return H, None
    A = params.layers[-1]
    for theta in reversed(params.layers[l + 1 : -1]):
        A = A @ theta
    return H, A


def _exact_block(params: NetworkParams, l: int, data: Dataset, prior: GaussianPrior) -> np.ndarray:
    H, A = _linear_block_operands(params, l, data)
    return exact_layer_solve(H, data.targets, prior.alpha[l], prior.noise_var, A)


def _block_gradient(params: NetworkParams, l: int, data: Dataset, prior: GaussianPrior) -> np.ndarray:
    return codelength_gradient(params, data, prior)[l]


def inexact_layer_solve(
    l: int,
    params: NetworkParams,
    data: Dataset,
    prior: GaussianPrior,
    eps_inner: float,
    max_iter: int,
    step: float = 1.0,
    max_halvings: int = 30,
) -> InnerResult:
    """Gradient descent on block ``l`` of the codelength with Armijo backtracking.

    Every iteration starts from ``step`` and halves until
    ``C(theta - t g) <= C(theta) - t/2 ||g||^2``. If no step passes after
    ``max_halvings`` the current iterate is returned unconverged.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    current = params
    value = codelength(current, data, prior)
    g = _block_gradient(current, l, data, prior)
    gn = float(np.linalg.norm(g))
    it = 0
    while gn > eps_inner and it < max_iter:
        t = step
        accepted = False
        for _ in range(max_halvings + 1):
            trial = current.with_layer(l, current.layers[l] - t * g)
            trial_value = codelength(trial, data, prior)
            if trial_value <= value - 0.5 * t * gn * gn:
                accepted = True
                break
            t *= 0.5
        it += 1
        if not accepted:
            break
        current, value = trial, trial_value
        g = _block_gradient(current, l, data, prior)
        gn = float(np.linalg.norm(g))
    return InnerResult(np.array(current.layers[l]), it, gn <= eps_inner, gn, value)


def estimate_block_lipschitz(
    params: NetworkParams,
    data: Dataset,
    prior: GaussianPrior,
    rng: RngStream | None = None,
    pairs: int = 16,
    radius: float = 0.1,
    safety: float = 2.0,
) -> list[float]:
    """Per-layer Lipschitz constants of the block gradients of the codelength.

    A block whose gradient is affine in its own weights (every layer of a
    linear net and the output layer of any net) gets the exact value
    ``lambda_max(A^T A) lambda_max(H^T H) / (N sigma^2) + alpha_l / N``. Other
    blocks get ``safety`` times the largest gradient difference quotient over
    random pairs drawn within ``radius`` of the current weights.
    """
    prior.check(params)
    N = data.N
    rng = rng or RngStream(0)
    acts = forward(params, data.inputs)
    out = []
    for l in range(params.n_layers):
        affine = params.is_linear or l == params.n_layers - 1
        if affine:
            H = acts[l]
            top = max_eigenvalue(H.T @ H)
            if l < params.n_layers - 1:
                _, A = _linear_block_operands(params, l, data)
                top *= max_eigenvalue(A.T @ A)
            out.append(top / (N * prior.noise_var) + prior.alpha[l] / N)
            continue
        theta = params.layers[l]
        scale = radius * max(1.0, float(np.linalg.norm(theta)) / np.sqrt(theta.size))
        gen = rng.substream(l).generator
        best = prior.alpha[l] / N
        for _ in range(pairs):
            a = theta + scale * gen.standard_normal(theta.shape)
            b = theta + scale * gen.standard_normal(theta.shape)
            ga = _block_gradient(params.with_layer(l, a), l, data, prior)
            gb = _block_gradient(params.with_layer(l, b), l, data, prior)
            best = max(best, float(np.linalg.norm(ga - gb) / np.linalg.norm(a - b)))
        out.append(safety * best)
    return out


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def _solve_flops(params: NetworkParams, l: int, N: int, exact: bool) -> int:
    dims = params.dims
    fwd = N * sum(dims[k] * dims[k + 1] for k in range(params.n_layers))
    d_in, d_out = dims[l], dims[l + 1]
    if not exact:
        return 2 * fwd
    p = d_in * d_out if l < params.n_layers - 1 else d_in
    return fwd + N * d_in * d_in + p**3 // 3 + N * d_in * dims[-1]


def pc_sweep(
    params: NetworkParams,
    data: Dataset,
    prior: GaussianPrior,
    config: PcConfig,
    lipschitz: bool = True,
) -> tuple[NetworkParams, SweepStats]:
    """One cyclic pass over the layers, each replaced by its block solution.

    With ``lipschitz`` the block Lipschitz constant at each visit is recorded
    so the guaranteed drop (``SweepStats.descent_bound``) can be checked.
    """
    prior.check(params)
    exact = config.mode is PcMode.EXACT_LINEAR
    if exact and not params.is_linear:
        raise UnsupportedArchitecture("exact block solves need an identity activation")
    before = codelength(params, data, prior)
    stats = SweepStats(before, before)
    current, value = params, before
    for l in range(params.n_layers):
        g = _block_gradient(current, l, data, prior)
        stats.per_block_gradient_norms.append(float(np.linalg.norm(g)))
        if lipschitz:
            stats.block_lipschitz.append(estimate_block_lipschitz(current, data, prior)[l])
        if exact:
            theta = _exact_block(current, l, data, prior)
            iters, ok = 1, True
            stats.flop_estimate += _solve_flops(current, l, data.N, True)
        else:
            res = inexact_layer_solve(
                l, current, data, prior, config.inner_tolerance, config.max_inner,
                step=config.learning_rate,
            )
            theta, iters, ok = res.theta, res.iterations, res.converged
            stats.flop_estimate += max(iters, 1) * _solve_flops(current, l, data.N, False)
        current = current.with_layer(l, theta)
        new_value = codelength(current, data, prior)
        stats.block_descent.append(value - new_value)
        stats.inner_iterations.append(iters)
        stats.inner_converged.append(ok)
        value = new_value
    stats.codelength_after = value
    return current, stats


def pc_train(
    params: NetworkParams,
    data: Dataset,
    prior: GaussianPrior,
    config: PcConfig,
    lipschitz: bool = False,
    keep_iterates: bool = False,
) -> Trajectory:
    """Repeated sweeps until ``config.sweeps`` or ``|dC| < stop_tolerance``.

    ``traj.extras`` holds the ``SweepStats`` of every sweep; with
    ``keep_iterates`` the parameters after every sweep go to ``traj.iterates``.
    """
    traj = Trajectory("pc", data.N)
    if keep_iterates:
        traj.iterates.append(params)
    flops = 0
    traj.records.append(record_step(0, params, data, prior, 0.0, 0))
    for t in range(1, config.sweeps + 1):
        params, stats = pc_sweep(params, data, prior, config, lipschitz=lipschitz)
        flops += stats.flop_estimate
        traj.records.append(record_step(t, params, data, prior, float(t), flops))
        traj.extras.append(stats)
        if keep_iterates:
            traj.iterates.append(params)
        if abs(stats.codelength_before - stats.codelength_after) < config.stop_tolerance:
            break
    traj.final_params = params
    return traj
