"""Experiment drivers: PC vs BP comparison, perturbation probe, rate checks,
bound coverage, and deterministic file output."""

from __future__ import annotations

import enum
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .bounds import budget_gap_report, certify, surrogate_risk
from .bp import BpConfig, bp_train, carry_forward, own_fractions
from .errors import InvalidConfig, IoFailure
from .model import (
    Activation,
    Architecture,
    Dataset,
    GaussianPrior,
    NetworkParams,
    codelength,
    codelength_gradient,
    generate_dataset,
    gradient_norms,
    init_params,
)
from .numerics import RngStream
from .pc import PcConfig, PcMode, estimate_block_lipschitz, pc_train
from .trajectory import Trajectory

CSV_HEADER = "trial,algo,step,budget_frac,risk,model_code_scaled,total_code,grad_norm"
DECREASE_TOL = 1e-12

# substream keys below a trial's stream
_DATA, _INIT, _TEST, _PERTURB = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    dims: tuple[int, ...] = (2, 2, 1)
    activation: Activation = Activation.IDENTITY
    N: int = 100
    noise_std: float = 0.1
    teacher_std: float = 1.0
    init_std: float = 0.1
    alpha: float = 100.0
    noise_var: float = 1.0
    pc: PcConfig = field(default_factory=PcConfig)
    bp: BpConfig = field(default_factory=BpConfig)
    trials: int = 20
    base_seed: int = 0
    delta: float = 0.05
    perturbation_eps: float = 1e-2
    perturbation_trials: int = 1000
    test_size: int = 500
    rate_trials: int = 20
    rate_sweeps: int = 100
    softplus_pc: PcConfig = field(
        default_factory=lambda: PcConfig(
            mode=PcMode.INEXACT_GRADIENT, learning_rate=1.0, sweeps=30, inner_tolerance=1e-6, max_inner=200
        )
    )

    def __post_init__(self):
        try:
            object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
            object.__setattr__(self, "activation", Activation(self.activation))
            Architecture(self.dims, self.activation)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from exc
        if self.trials < 1 or self.N < 1 or self.perturbation_trials < 1:
            raise InvalidConfig("trials, N and perturbation_trials must be >= 1")
        if self.test_size < 1 or self.rate_trials < 1 or self.rate_sweeps < 1:
            raise InvalidConfig("test_size, rate_trials and rate_sweeps must be >= 1")
        if self.perturbation_eps < 0 or self.noise_std < 0 or self.teacher_std < 0 or self.init_std < 0:
            raise InvalidConfig("scales must be non-negative")
        if not (self.alpha > 0 and self.noise_var > 0):
            raise InvalidConfig("alpha and noise_var must be positive")
        if not (0.0 < self.delta < 1.0):
            raise InvalidConfig("delta must lie in (0, 1)")
        if not (0 <= self.base_seed < 2**64):
            raise InvalidConfig("base_seed must be a 64-bit unsigned integer")

    @classmethod
    def paper_defaults(cls) -> "ExperimentConfig":
        """The training and perturbation settings of the reference experiment."""
        return cls(
            dims=(2, 2, 1),
            N=100,
            noise_std=0.1,
            pc=PcConfig(sweeps=100),
            bp=BpConfig(learning_rate=0.01, steps=200),
            trials=1000,
            perturbation_eps=1e-2,
        )

    @property
    def arch(self) -> Architecture:
        return Architecture(self.dims, self.activation)

    @property
    def prior(self) -> GaussianPrior:
        return GaussianPrior.uniform(self.alpha, len(self.dims) - 1, self.noise_var)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (PcConfig, BpConfig)):
                v = {k: (x.value if isinstance(x, enum.Enum) else x) for k, x in asdict(v).items()}
            elif isinstance(v, enum.Enum):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        try:
            for key in ("pc", "softplus_pc"):
                if key in kw:
                    kw[key] = PcConfig(**kw[key])
            if "bp" in kw:
                kw["bp"] = BpConfig(**kw["bp"])
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(str(exc)) from exc

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


def trial_stream(config: ExperimentConfig, trial: int) -> RngStream:
    return RngStream(config.base_seed, (trial,))


def trial_problem(config: ExperimentConfig, trial: int) -> tuple[Dataset, NetworkParams]:
    """Dataset and initial parameters of one trial; both algorithms start from the same init."""
    rng = trial_stream(config, trial)
    data = generate_dataset(rng.substream(_DATA), config.arch, config.N, config.noise_std, config.teacher_std)
    params = init_params(rng.substream(_INIT), config.arch, config.init_std)
    return data, params


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


class RunningMoments:
    """Welford accumulator for elementwise mean and population std."""

    def __init__(self, size: int):
        self.count = 0
        self.mean = np.zeros(size)
        self._m2 = np.zeros(size)

    def push(self, x: np.ndarray) -> None:
        self.count += 1
        d = x - self.mean
        self.mean = self.mean + d / self.count
        self._m2 = self._m2 + d * (x - self.mean)

    @property
    def std(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.mean)
        return np.sqrt(np.maximum(self._m2 / self.count, 0.0))


SERIES_FIELDS = ("risk", "model_code_scaled", "total")


@dataclass
class AggregateSeries:
    fractions: np.ndarray
    mean: dict[str, dict[str, np.ndarray]]
    std: dict[str, dict[str, np.ndarray]]
    trials: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "budget_frac": self.fractions,
            "trials": self.trials,
            "mean": self.mean,
            "std": self.std,
        }


def aggregate(runs: Sequence[tuple[Trajectory, Trajectory]]) -> AggregateSeries:
    """Mean and std of codelength components on one grid shared by all runs and both algorithms."""
    grid_set: set[Fraction] = set()
    for pc, bp in runs:
        grid_set.update(own_fractions(len(pc)))
        grid_set.update(own_fractions(len(bp)))
    grid = sorted(grid_set)
    acc = {a: {f: RunningMoments(len(grid)) for f in SERIES_FIELDS} for a in ("pc", "bp")}
    for pc, bp in runs:
        for algo, traj in (("pc", pc), ("bp", bp)):
            idx = carry_forward(own_fractions(len(traj)), grid)
            for f in SERIES_FIELDS:
                acc[algo][f].push(traj.column(f)[idx])
    return AggregateSeries(
        np.array([float(g) for g in grid]),
        {a: {f: m.mean for f, m in d.items()} for a, d in acc.items()},
        {a: {f: m.std for f, m in d.items()} for a, d in acc.items()},
        len(runs),
    )


# ---------------------------------------------------------------------------
# convergence comparison
# ---------------------------------------------------------------------------


def run_trial(config: ExperimentConfig, trial: int) -> tuple[Trajectory, Trajectory]:
    data, params = trial_problem(config, trial)
    prior = config.prior
    return pc_train(params, data, prior, config.pc), bp_train(params, data, prior, config.bp)


def _run_trial_args(args):
    return run_trial(*args)


def map_trials(fn, config: ExperimentConfig, n: int, workers: int | None) -> list:
    """Evaluate ``fn(config, i)`` for ``i < n``; results come back in trial order."""
    jobs = [(config, i) for i in range(n)]
    if workers is None or workers <= 1 or n == 1:
        return [fn(c, i) for c, i in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_Star(fn), jobs, chunksize=max(1, n // (4 * workers))))


class _Star:
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, args):
        return self.fn(*args)


@dataclass
class ConvergenceResult:
    config: ExperimentConfig
    series: AggregateSeries
    runs: list[tuple[Trajectory, Trajectory]]
    final_total_mean: dict[str, float]
    pc_bound_lower_fraction: float
    pc_norm_smaller_fraction: float

    def summary(self) -> dict[str, Any]:
        return {
            "experiment": "compare",
            "config": self.config.to_dict(),
            "aggregate": self.series.to_dict(),
            "final_total_mean": self.final_total_mean,
            "pc_final_below_bp": self.final_total_mean["pc"] < self.final_total_mean["bp"],
            "pc_mean_nonincreasing": bool(np.all(np.diff(self.series.mean["pc"]["total"]) <= 0.0)),
            "pc_bound_lower_at_end_fraction": self.pc_bound_lower_fraction,
            "pc_norm_smaller_at_end_fraction": self.pc_norm_smaller_fraction,
        }


def run_convergence_experiment(config: ExperimentConfig, workers: int | None = None) -> ConvergenceResult:
    runs = map_trials(run_trial, config, config.trials, workers)
    series = aggregate(runs)
    finals = {
        "pc": float(np.mean([pc.records[-1].total for pc, _ in runs])),
        "bp": float(np.mean([bp.records[-1].total for _, bp in runs])),
    }
    gaps = [budget_gap_report(pc, bp, config.prior, config.delta) for pc, bp in runs]
    return ConvergenceResult(
        config,
        series,
        runs,
        finals,
        float(np.mean([g.pc_bound_lower_at_end for g in gaps])),
        float(np.mean([g.pc_norm_smaller_at_end for g in gaps])),
    )


# ---------------------------------------------------------------------------
# perturbation probe
# ---------------------------------------------------------------------------


class PerturbationMode(str, enum.Enum):
    BLOCKWISE = "blockwise"
    COORDINATED = "coordinated"


@dataclass
class PerturbationResult:
    mode: PerturbationMode
    trials: int
    decrease_fraction: float
    decreases: list[float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "trials": self.trials,
            "decrease_fraction": self.decrease_fraction,
            "decreases": self.decreases,
        }


def run_perturbation_test(
    params: NetworkParams,
    data: Dataset,
    prior: GaussianPrior,
    mode: PerturbationMode,
    eps: float,
    trials: int,
    rng: RngStream,
) -> PerturbationResult:
    """Add N(0, eps^2) noise to one random layer or to all layers and record the change in C.

    ``decreases`` holds every ``C(perturbed) - C(params)``; a trial counts as a
    decrease when that difference is below ``-1e-12``.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    mode = PerturbationMode(mode)
    gen = rng.generator
    base = codelength(params, data, prior)
    deltas = []
    for _ in range(trials):
        if mode is PerturbationMode.BLOCKWISE:
            l = int(gen.integers(params.n_layers))
            noise = gen.standard_normal(params.layers[l].shape) * eps
            moved = params.with_layer(l, params.layers[l] + noise)
        else:
            moved = params.with_layers(
                [t + gen.standard_normal(t.shape) * eps for t in params.layers]
            )
        deltas.append(codelength(moved, data, prior) - base)
    frac = sum(d < -DECREASE_TOL for d in deltas) / trials
    return PerturbationResult(mode, trials, frac, deltas)


@dataclass
class PerturbationExperiment:
    config: ExperimentConfig
    blockwise: PerturbationResult
    coordinated: PerturbationResult
    block_gradient_norms: list[float]
    last_sweep_change: float

    def summary(self) -> dict[str, Any]:
        return {
            "experiment": "perturb",
            "config": self.config.to_dict(),
            "blockwise": self.blockwise.to_dict(),
            "coordinated": self.coordinated.to_dict(),
            "block_gradient_norms": self.block_gradient_norms,
            "last_sweep_change": self.last_sweep_change,
            "blockwise_below_0.05": self.blockwise.decrease_fraction <= 0.05,
            "coordinated_above_blockwise": self.coordinated.decrease_fraction
            > self.blockwise.decrease_fraction,
        }


def run_perturbation_experiment(config: ExperimentConfig, trial: int = 0) -> PerturbationExperiment:
    """Train PC on one trial's problem, then probe the final point in both modes."""
    data, params = trial_problem(config, trial)
    prior = config.prior
    traj = pc_train(params, data, prior, config.pc)
    point = traj.final_params
    rng = trial_stream(config, trial).substream(_PERTURB)
    res = {
        mode: run_perturbation_test(
            point, data, prior, mode, config.perturbation_eps, config.perturbation_trials,
            rng.substream(k),
        )
        for k, mode in enumerate(PerturbationMode)
    }
    _, blocks = gradient_norms(codelength_gradient(point, data, prior))
    last = traj.totals[-1] - traj.totals[-2] if len(traj) > 1 else 0.0
    return PerturbationExperiment(
        config, res[PerturbationMode.BLOCKWISE], res[PerturbationMode.COORDINATED], blocks, float(last)
    )


# ---------------------------------------------------------------------------
# rate checks
# ---------------------------------------------------------------------------


def codelength_hessian(params: NetworkParams, data: Dataset, prior: GaussianPrior, h: float = 1e-5) -> np.ndarray:
    """Symmetrized Hessian of C over the flattened parameters, by differencing the analytic gradient."""
    v0 = params.flatten()
    n = v0.size
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        gp = np.concatenate([g.ravel() for g in codelength_gradient(params.unflatten(v0 + e), data, prior)])
        gm = np.concatenate([g.ravel() for g in codelength_gradient(params.unflatten(v0 - e), data, prior)])
        H[:, i] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


@dataclass
class InstanceRates:
    trial: int
    activation: str
    sweeps: int
    # (a) geometric contraction
    kappa: float | None
    contraction_bound: float | None
    max_gap_ratio: float | None
    strong_convexity: float | None
    geometric_ok: bool | None
    # (b) per-sweep descent
    min_descent_slack: float
    descent_ok: bool
    # (c) stationarity rate
    min_grad_sq: float
    stationarity_bound: float
    stationarity_ok: bool

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class RateReport:
    config: ExperimentConfig
    linear: list[InstanceRates]
    softplus: list[InstanceRates]

    @property
    def geometric_ok(self) -> bool:
        return all(r.geometric_ok for r in self.linear)

    @property
    def descent_ok(self) -> bool:
        return all(r.descent_ok for r in self.linear + self.softplus)

    @property
    def stationarity_ok(self) -> bool:
        return all(r.stationarity_ok for r in self.linear + self.softplus)

    def summary(self) -> dict[str, Any]:
        return {
            "experiment": "rates",
            "config": self.config.to_dict(),
            "geometric_ok": self.geometric_ok,
            "descent_ok": self.descent_ok,
            "stationarity_ok": self.stationarity_ok,
            "linear": [r.to_dict() for r in self.linear],
            "softplus": [r.to_dict() for r in self.softplus],
        }


GAP_FLOOR = 1e-8
DEGENERATE_CURVATURE = 1e-8


def _sweep_checks(traj: Trajectory, lbar: np.ndarray, descent_tol: float):
    totals = traj.totals
    grads = traj.column("grad_norm")
    T = len(traj) - 1
    slack = (totals[:-1] - totals[1:]) - grads[:-1] ** 2 / (2.0 * lbar[:-1])
    min_slack = float(slack.min()) if T else 0.0
    c_inf = float(totals.min())
    grad_sq = float(np.min(grads[:-1] ** 2)) if T else float(grads[0] ** 2)
    stat_bound = 2.0 * float(lbar.max()) * (totals[0] - c_inf) / max(T, 1)
    return min_slack, min_slack >= -descent_tol, grad_sq, stat_bound, grad_sq <= stat_bound


def _lipschitz_sum(params: NetworkParams, data: Dataset, prior: GaussianPrior, rng: RngStream) -> float:
    return float(sum(estimate_block_lipschitz(params, data, prior, rng)))


def linear_rate_instance(config: ExperimentConfig, trial: int) -> InstanceRates:
    cfg = config.replace(activation="identity")
    data, params = trial_problem(cfg, trial)
    prior = cfg.prior
    pc = PcConfig(sweeps=cfg.rate_sweeps)
    traj = pc_train(params, data, prior, pc, keep_iterates=True)
    rng = trial_stream(cfg, trial).substream(_PERTURB, 9)
    lbar = np.array([_lipschitz_sum(p, data, prior, rng) for p in traj.iterates])
    min_slack, d_ok, gsq, sbound, s_ok = _sweep_checks(traj, lbar, 1e-8)

    # reference optimum: continue the same run to a 1e-14 change in C
    long = pc_train(traj.final_params, data, prior, PcConfig(sweeps=200_000, stop_tolerance=1e-14))
    c_star = min(float(long.totals.min()), float(traj.totals.min()))
    star = long.final_params
    eig = np.linalg.eigvalsh(codelength_hessian(star, data, prior))
    mu = float(eig[0])
    if mu <= DEGENERATE_CURVATURE * float(eig[-1]):
        kappa, bound = math.inf, 1.0
    else:
        kappa = float(lbar.max()) / mu
        bound = 1.0 - 1.0 / kappa
    gaps = traj.totals - c_star
    ratios = [
        gaps[t] / gaps[t - 1] for t in range(1, len(gaps)) if gaps[t - 1] >= GAP_FLOOR
    ]
    max_ratio = float(max(ratios)) if ratios else 0.0
    return InstanceRates(
        trial, "identity", len(traj) - 1, kappa, bound, max_ratio, mu,
        max_ratio <= bound + 1e-9, min_slack, d_ok, gsq, sbound, s_ok,
    )


def softplus_rate_instance(config: ExperimentConfig, trial: int) -> InstanceRates:
    cfg = config.replace(activation="softplus")
    data, params = trial_problem(cfg, trial)
    prior = cfg.prior
    pc = cfg.softplus_pc
    traj = pc_train(params, data, prior, pc, keep_iterates=True)
    rng = trial_stream(cfg, trial).substream(_PERTURB, 9)
    lbar = np.array([_lipschitz_sum(p, data, prior, rng) for p in traj.iterates])
    min_slack, d_ok, gsq, sbound, s_ok = _sweep_checks(traj, lbar, 1e-8)
    return InstanceRates(
        trial, "softplus", len(traj) - 1, None, None, None, None, None,
        min_slack, d_ok, gsq, sbound, s_ok,
    )


def run_rate_checks(config: ExperimentConfig, workers: int | None = None) -> RateReport:
    n = config.rate_trials
    linear = map_trials(linear_rate_instance, config, n, workers)
    soft = map_trials(softplus_rate_instance, config, n, workers)
    return RateReport(config, linear, soft)


# ---------------------------------------------------------------------------
# bound coverage
# ---------------------------------------------------------------------------


@dataclass
class BoundTrial:
    trial: int
    certificate: dict[str, Any]
    test_surrogate_risk: float
    violated: bool


def bound_trial(config: ExperimentConfig, trial: int) -> BoundTrial:
    data, params = trial_problem(config, trial)
    prior = config.prior
    final = pc_train(params, data, prior, config.pc).final_params
    cert = certify(final, data, prior, config.delta)
    test = generate_dataset(
        trial_stream(config, trial).substream(_TEST), config.arch, config.test_size,
        config.noise_std, teacher=data.teacher,
    )
    risk = surrogate_risk(final, test, prior)
    return BoundTrial(trial, cert.to_dict(), risk, risk > cert.bound_value)


@dataclass
class BoundValidation:
    config: ExperimentConfig
    trials: list[BoundTrial]

    @property
    def violation_frequency(self) -> float:
        return sum(t.violated for t in self.trials) / len(self.trials)

    def summary(self) -> dict[str, Any]:
        return {
            "experiment": "bounds",
            "config": self.config.to_dict(),
            "delta": self.config.delta,
            "violation_frequency": self.violation_frequency,
            "within_delta": self.violation_frequency <= self.config.delta,
            "trials": [asdict(t) for t in self.trials],
        }


def run_bound_validation(config: ExperimentConfig, workers: int | None = None) -> BoundValidation:
    return BoundValidation(config, map_trials(bound_trial, config, config.trials, workers))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def format_float(x: float) -> str:
    return "%.17g" % x


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return _to_jsonable(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON with every float printed to 17 significant digits; non-finite floats become null."""

    def emit(o: Any, depth: int) -> str:
        pad = " " * (indent * (depth + 1))
        end = " " * (indent * depth)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {emit(v, depth + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(emit(v, depth + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + emit(v, depth + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            return format_float(o) if math.isfinite(o) else "null"
        return json.dumps(o)

    return emit(_to_jsonable(obj), 0) + "\n"


def trajectory_csv(runs: Iterable[tuple[int, Trajectory]]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for trial, traj in runs:
        fracs = own_fractions(len(traj))
        for rec, frac in zip(traj.records, fracs):
            row = [
                str(trial), traj.algo, str(rec.step), format_float(float(frac)),
                format_float(rec.risk), format_float(rec.model_code_scaled),
                format_float(rec.total), format_float(rec.grad_norm),
            ]
            buf.write(",".join(row) + "\n")
    return buf.getvalue()


def write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def emit_outputs(
    summary: dict[str, Any],
    out_dir: str | os.PathLike,
    stem: str,
    runs: Sequence[tuple[Trajectory, Trajectory]] | None = None,
    fmt: str = "csv",
) -> list[Path]:
    """Write ``<stem>.json`` and, when trajectories are given, ``<stem>_trajectories.{csv,json}``."""
    out = Path(out_dir)
    written = []
    if runs is not None:
        flat = [(i, t) for i, pair in enumerate(runs) for t in pair]
        if fmt == "csv":
            written.append(write_text(out / f"{stem}_trajectories.csv", trajectory_csv(flat)))
        elif fmt == "json":
            payload = [{"trial": i, **t.to_dict()} for i, t in flat]
            written.append(write_text(out / f"{stem}_trajectories.json", dumps(payload)))
        else:
            raise InvalidConfig(f"unknown output format {fmt!r}")
    written.append(write_text(out / f"{stem}.json", dumps(summary)))
    return written
