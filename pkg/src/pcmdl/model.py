"""Network representation, synthetic data and the two-part codelength.

Conventions used throughout the package:

* Layers are indexed from 0 in code; layer ``l`` maps activity ``x_l`` to
  ``x_{l+1} = f_l(theta_l @ x_l)``. Hidden layers use the architecture's
  activation, the output layer is always the identity.
* Batches are stored as ``samples x units`` matrices.
* Per-sample loss is the Gaussian negative log-likelihood with the additive
  constant dropped: ``||y - yhat||^2 / (2 sigma^2)``.
* Model codelength is ``L(theta) = sum_l alpha_l/2 ||theta_l||_F^2`` (nats,
  constant dropped) and the empirical codelength is
  ``C(theta) = R(theta) + L(theta) / N``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, NonFiniteValue
from .numerics import RngStream, gaussian_sample


class Activation(str, enum.Enum):
    IDENTITY = "identity"
    SOFTPLUS = "softplus"


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def activate(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.IDENTITY:
        return z
    return softplus(z)


def activate_prime(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.IDENTITY:
        return np.ones_like(z)
    # d/dz log(1 + e^z) = sigmoid(z), evaluated without overflow
    return expit(z)


@dataclass(frozen=True)
class Architecture:
    layer_dims: tuple[int, ...]
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2:
            raise ValueError("an architecture needs at least one layer (two dims)")
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer dims must be >= 1, got {dims}")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    def layer_activation(self, l: int) -> Activation:
        return self.activation if l < self.n_layers - 1 else Activation.IDENTITY

    def layer_shape(self, l: int) -> tuple[int, int]:
        return (self.layer_dims[l + 1], self.layer_dims[l])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkParams:
    """Ordered per-layer weight matrices; ``layers[l]`` has shape ``(d_{l+1}, d_l)``."""

    layers: tuple[np.ndarray, ...]
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        layers = tuple(_frozen(np.atleast_2d(t)) for t in self.layers)
        if not layers:
            raise ValueError("NetworkParams needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if b.shape[1] != a.shape[0]:
                raise DimensionMismatch(
                    f"layer shapes {a.shape} -> {b.shape} do not chain"
                )
        for t in layers:
            if not np.isfinite(t).all():
                raise NonFiniteValue("network parameters contain non-finite entries")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.layers[0].shape[1],) + tuple(t.shape[0] for t in self.layers)

    @property
    def arch(self) -> Architecture:
        return Architecture(self.dims, self.activation)

    def layer_activation(self, l: int) -> Activation:
        return self.activation if l < self.n_layers - 1 else Activation.IDENTITY

    @property
    def is_linear(self) -> bool:
        return self.activation is Activation.IDENTITY or self.n_layers == 1

    def with_layer(self, l: int, theta: np.ndarray) -> "NetworkParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != self.layers[l].shape:
            raise DimensionMismatch(f"layer {l} expects {self.layers[l].shape}, got {theta.shape}")
        layers = list(self.layers)
        layers[l] = theta
        return NetworkParams(tuple(layers), self.activation)

    def with_layers(self, layers: Sequence[np.ndarray]) -> "NetworkParams":
        return NetworkParams(tuple(layers), self.activation)

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.layers])

    def unflatten(self, v: np.ndarray) -> "NetworkParams":
        out, i = [], 0
        for t in self.layers:
            out.append(np.asarray(v[i : i + t.size], dtype=float).reshape(t.shape))
            i += t.size
        if i != len(v):
            raise DimensionMismatch(f"expected {i} parameters, got {len(v)}")
        return NetworkParams(tuple(out), self.activation)

    def squared_norm(self) -> float:
        return float(sum(np.sum(t * t) for t in self.layers))

    def to_dict(self) -> dict[str, Any]:
        return {
            "activation": self.activation.value,
            "dims": list(self.dims),
            "layers": [
                {"rows": t.shape[0], "cols": t.shape[1], "entries": t.ravel().tolist()}
                for t in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NetworkParams":
        layers = [
            np.asarray(m["entries"], dtype=float).reshape(m["rows"], m["cols"])
            for m in d["layers"]
        ]
        params = cls(tuple(layers), Activation(d.get("activation", "identity")))
        if "dims" in d and tuple(d["dims"]) != params.dims:
            raise DimensionMismatch(f"dims {d['dims']} disagree with layer shapes {params.dims}")
        return params


@dataclass(frozen=True)
class GaussianPrior:
    """Per-layer prior precisions ``alpha_l`` and observation variance ``sigma^2``."""

    alpha: tuple[float, ...]
    noise_var: float = 1.0

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        if not alpha or any(not a > 0 for a in alpha):
            raise ValueError(f"prior precisions must be positive, got {alpha}")
        if not self.noise_var > 0:
            raise ValueError(f"noise variance must be positive, got {self.noise_var}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "noise_var", float(self.noise_var))

    @classmethod
    def uniform(cls, alpha: float, n_layers: int, noise_var: float = 1.0) -> "GaussianPrior":
        return cls((alpha,) * n_layers, noise_var)

    def check(self, params: NetworkParams) -> None:
        if len(self.alpha) != params.n_layers:
            raise DimensionMismatch(
                f"prior has {len(self.alpha)} precisions for {params.n_layers} layers"
            )


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    teacher: NetworkParams | None = None
    noise_std: float = 0.0
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        x = _frozen(np.atleast_2d(self.inputs))
        y = _frozen(np.atleast_2d(self.targets))
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{x.shape[0]} inputs but {y.shape[0]} targets")
        if x.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    @property
    def N(self) -> int:
        return self.inputs.shape[0]

    def permuted(self, order: np.ndarray) -> "Dataset":
        return Dataset(self.inputs[order], self.targets[order], self.teacher, self.noise_std,
                       dict(self.provenance))

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.N,
            "input_dim": self.inputs.shape[1],
            "target_dim": self.targets.shape[1],
            "inputs": self.inputs.ravel().tolist(),
            "targets": self.targets.ravel().tolist(),
            "noise_std": float(self.noise_std),
            "teacher": None if self.teacher is None else self.teacher.to_dict(),
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Dataset":
        n = d["n"]
        x = np.asarray(d["inputs"], dtype=float).reshape(n, d["input_dim"])
        y = np.asarray(d["targets"], dtype=float).reshape(n, d["target_dim"])
        teacher = None if d.get("teacher") is None else NetworkParams.from_dict(d["teacher"])
        return cls(x, y, teacher, d.get("noise_std", 0.0), dict(d.get("provenance", {})))


@dataclass
class LatentState:
    """Value nodes ``x_0..x_L`` and prediction errors ``eps_1..eps_L`` for a batch.

    ``errors[l]`` is the error of layer ``l`` (code indexing), i.e. the
    mismatch at ``values[l + 1]``.
    """

    values: list[np.ndarray]
    errors: list[np.ndarray]

    @classmethod
    def from_values(cls, params: NetworkParams, values: Sequence[np.ndarray]) -> "LatentState":
        vals = [np.atleast_2d(np.asarray(v, dtype=float)).copy() for v in values]
        if len(vals) != params.n_layers + 1:
            raise DimensionMismatch(
                f"expected {params.n_layers + 1} value layers, got {len(vals)}"
            )
        for l, v in enumerate(vals):
            if v.shape[1] != params.dims[l] or v.shape[0] != vals[0].shape[0]:
                raise DimensionMismatch(f"value layer {l} has shape {v.shape}")
        return cls(vals, prediction_errors(params, vals))

    @classmethod
    def from_forward(
        cls, params: NetworkParams, inputs: np.ndarray, targets: np.ndarray | None = None
    ) -> "LatentState":
        """Values from a forward pass, with the top layer clamped to ``targets`` if given."""
        acts = forward(params, np.atleast_2d(inputs))
        if targets is not None:
            acts[-1] = np.atleast_2d(np.asarray(targets, dtype=float)).copy()
        return cls.from_values(params, acts)

    def refresh(self, params: NetworkParams) -> None:
        self.errors = prediction_errors(params, self.values)


@dataclass(frozen=True)
class CodelengthReport:
    empirical_risk: float
    model_code_scaled: float
    total: float
    loss_bounded: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "empirical_risk": self.empirical_risk,
            "model_code_scaled": self.model_code_scaled,
            "total": self.total,
            "loss_bounded": self.loss_bounded,
        }


# ---------------------------------------------------------------------------
# data and initialization
# ---------------------------------------------------------------------------


def init_params(rng: RngStream, arch: Architecture, std: float) -> NetworkParams:
    layers = [gaussian_sample(rng, *arch.layer_shape(l), std) for l in range(arch.n_layers)]
    return NetworkParams(tuple(layers), arch.activation)


def generate_dataset(
    rng: RngStream,
    arch: Architecture,
    N: int,
    noise_std: float,
    teacher_std: float = 1.0,
    teacher: NetworkParams | None = None,
) -> Dataset:
    """Draw a teacher network (unless given), N(0, I) inputs and noisy targets.

    Draw order is fixed: teacher layers, inputs, target noise.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if teacher is None:
        teacher = init_params(rng, arch, teacher_std)
    elif teacher.dims != arch.layer_dims:
        raise DimensionMismatch(f"teacher dims {teacher.dims} != {arch.layer_dims}")
    x = gaussian_sample(rng, N, arch.layer_dims[0], 1.0)
    noise = gaussian_sample(rng, N, arch.layer_dims[-1], noise_std)
    y = forward(teacher, x)[-1] + noise
    prov = {"seed": rng.seed, "stream": list(rng.key)}
    return Dataset(x, y, teacher, float(noise_std), prov)


# ---------------------------------------------------------------------------
# forward pass and codelength
# ---------------------------------------------------------------------------


def _forward_cache(params: NetworkParams, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    if x.shape[1] != params.dims[0]:
        raise DimensionMismatch(f"input has {x.shape[1]} features, network expects {params.dims[0]}")
    acts, pre = [x], []
    # overflow surfaces as NonFiniteValue from the callers' finiteness checks
    with np.errstate(over="ignore", invalid="ignore"):
        for l, theta in enumerate(params.layers):
            z = acts[-1] @ theta.T
            pre.append(z)
            acts.append(activate(params.layer_activation(l), z))
    return acts, pre


def forward(params: NetworkParams, inputs: np.ndarray) -> list[np.ndarray]:
    """All layer activations ``[a_0, ..., a_L]`` for a vector or a batch of inputs."""
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    acts, _ = _forward_cache(params, np.atleast_2d(x))
    if single:
        return [a[0] for a in acts]
    return acts


def per_sample_losses(params: NetworkParams, data: Dataset, prior: GaussianPrior) -> np.ndarray:
    if data.targets.shape[1] != params.dims[-1]:
        raise DimensionMismatch(
            f"targets have {data.targets.shape[1]} columns, network outputs {params.dims[-1]}"
        )
    yhat = forward(params, data.inputs)[-1]
    with np.errstate(over="ignore", invalid="ignore"):
        r = data.targets - yhat
        losses = np.sum(r * r, axis=1) / (2.0 * prior.noise_var)
    if not np.isfinite(losses).all():
        raise NonFiniteValue("per-sample loss is not finite")
    return losses


def empirical_risk(params: NetworkParams, data: Dataset, prior: GaussianPrior) -> float:
    return float(np.mean(per_sample_losses(params, data, prior)))


def model_codelength(params: NetworkParams, prior: GaussianPrior) -> float:
    prior.check(params)
    return float(sum(0.5 * a * np.vdot(t, t) for a, t in zip(prior.alpha, params.layers)))


def report_from_losses(losses: np.ndarray, model_code: float, N: int) -> CodelengthReport:
    risk = float(losses.mean())
    scaled = model_code / N
    bounded = bool(np.all((losses >= 0.0) & (losses <= 1.0)))
    return CodelengthReport(risk, scaled, risk + scaled, bounded)


def two_part_codelength(
    params: NetworkParams, data: Dataset, prior: GaussianPrior
) -> CodelengthReport:
    losses = per_sample_losses(params, data, prior)
    return report_from_losses(losses, model_codelength(params, prior), data.N)


def codelength(params: NetworkParams, data: Dataset, prior: GaussianPrior) -> float:
    """Scalar shortcut for ``two_part_codelength(...).total``."""
    return two_part_codelength(params, data, prior).total


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def codelength_gradient(
    params: NetworkParams, data: Dataset, prior: GaussianPrior, include_prior: bool = True
) -> list[np.ndarray]:
    """Analytic gradient of C (or of the risk alone) with respect to every layer."""
    prior.check(params)
    acts, pre = _forward_cache(params, data.inputs)
    N = data.N
    grads: list[np.ndarray] = [None] * params.n_layers  # type: ignore[list-item]
    with np.errstate(over="ignore", invalid="ignore"):
        delta = -(data.targets - acts[-1]) / (N * prior.noise_var)
        for l in range(params.n_layers - 1, -1, -1):
            grads[l] = delta.T @ acts[l]
            if l > 0:
                delta = (delta @ params.layers[l]) * activate_prime(
                    params.layer_activation(l - 1), pre[l - 1]
                )
    if include_prior:
        grads = [g + (a / N) * t for g, a, t in zip(grads, prior.alpha, params.layers)]
    for g in grads:
        if not np.isfinite(g).all():
            raise NonFiniteValue("codelength gradient is not finite")
    return grads


def gradient_norms(grads: Sequence[np.ndarray]) -> tuple[float, list[float]]:
    """Total Euclidean norm and per-block Frobenius norms."""
    blocks = [float(np.linalg.norm(g)) for g in grads]
    return float(np.sqrt(sum(b * b for b in blocks))), blocks


# ---------------------------------------------------------------------------
# predictive-coding energy
# ---------------------------------------------------------------------------


def prediction_errors(params: NetworkParams, values: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [
        values[l + 1] - activate(params.layer_activation(l), values[l] @ theta.T)
        for l, theta in enumerate(params.layers)
    ]


def pcn_energy(params: NetworkParams, latent: LatentState, prior: GaussianPrior) -> float:
    """Squared prediction errors over ``2 sigma^2`` plus the Gaussian weight prior.

    The prior term is counted once per call, whatever the batch size.
    """
    prior.check(params)
    errs = prediction_errors(params, latent.values)
    fit = sum(float(np.sum(e * e)) for e in errs) / (2.0 * prior.noise_var)
    return fit + model_codelength(params, prior)


def energy_latent_gradient(
    params: NetworkParams, latent: LatentState, prior: GaussianPrior
) -> list[np.ndarray]:
    """dE/dx_l for the free value layers ``x_1..x_{L-1}``."""
    vals = latent.values
    errs = prediction_errors(params, vals)
    out = []
    for l in range(1, params.n_layers):
        theta = params.layers[l]
        fp = activate_prime(params.layer_activation(l), vals[l] @ theta.T)
        out.append((errs[l - 1] - (errs[l] * fp) @ theta) / prior.noise_var)
    return out


def energy_weight_gradient(
    params: NetworkParams, latent: LatentState, prior: GaussianPrior
) -> list[np.ndarray]:
    """dE/dtheta_l with all value nodes held fixed."""
    vals = latent.values
    errs = prediction_errors(params, vals)
    out = []
    for l, theta in enumerate(params.layers):
        fp = activate_prime(params.layer_activation(l), vals[l] @ theta.T)
        out.append(-((errs[l] * fp).T @ vals[l]) / prior.noise_var + prior.alpha[l] * theta)
    return out
