"""Dense linear-algebra kernels, seeded random streams and finite differences.

Every other module goes through these helpers for SPD solves, spectral
estimates and randomness, so that a run is fully determined by its seed.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy import linalg as sla

from .errors import DimensionMismatch, NoConvergence, NonFiniteValue, NotPositiveDefinite

POWER_MAX_ITER = 10_000
_RESTART_SEED = 0x5EED


class RngStream:
    """A reproducible PCG64 stream with hierarchical splitting.

    A stream is identified by ``(seed, key)``. ``substream(i)`` appends ``i``
    to the key, which maps onto numpy's ``SeedSequence`` spawn keys, so the
    draws of trial ``i`` do not depend on how many other trials exist or on
    the order in which they run.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def substream(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(key))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.isfinite(x).all():
        raise NonFiniteValue(f"{what} contains non-finite entries")


def solve_spd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` for symmetric positive-definite ``A`` via Cholesky.

    ``B`` may be a vector or a matrix; the result has the same shape.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
    _check_finite(A, "A")
    _check_finite(B, "B")
    scale = max(np.abs(A).max(initial=0.0), 1.0)
    if np.abs(A - A.T).max(initial=0.0) > 1e-10 * scale:
        raise NotPositiveDefinite("A is not symmetric")
    try:
        factor = sla.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    if np.any(np.diag(factor[0]) <= 0.0):
        raise NotPositiveDefinite("non-positive Cholesky pivot")
    return sla.cho_solve(factor, B, check_finite=False)


def _power(A: np.ndarray, v: np.ndarray, tol: float, max_iter: int) -> tuple[float, int]:
    v = v / np.linalg.norm(v)
    lam = float(v @ A @ v)
    for it in range(1, max_iter + 1):
        w = A @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, it
        v = w / nw
        new = float(v @ A @ v)
        if abs(new - lam) <= tol * max(abs(new), np.finfo(float).tiny):
            return new, it
        lam = new
    raise NoConvergence(f"power iteration did not converge in {max_iter} iterations")


def max_eigenvalue(A: np.ndarray, tol: float = 1e-13, max_iter: int = POWER_MAX_ITER) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Starts from the normalized all-ones vector. If that start stagnates (it is
    annihilated by ``A`` or is already an eigenvector, which may belong to a
    smaller eigenvalue) one restart from a fixed pseudo-random vector is made
    and the larger Rayleigh quotient wins.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {A.shape}")
    _check_finite(A, "A")
    n = A.shape[0]
    scale = float(np.abs(A).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    # work at unit scale so the relative stopping rule is immune to underflow
    B = A / scale
    lam, iters = _power(B, np.ones(n), tol, max_iter)
    if iters <= 2:
        start = np.random.default_rng(_RESTART_SEED).standard_normal(n)
        lam = max(lam, _power(B, start, tol, max_iter)[0])
    return lam * scale


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], point: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar field at ``point``."""
    if h <= 0:
        raise ValueError("h must be positive")
    p = np.array(point, dtype=float)
    grad = np.empty_like(p)
    flat = p.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(p)
        flat[i] = orig - h
        fm = f(p)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteValue(f"f is not finite around coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return grad


def gaussian_sample(rng: RngStream, rows: int, cols: int, std: float) -> np.ndarray:
    """``rows x cols`` i.i.d. N(0, std^2) draws; always consumes rows*cols normals."""
    if std < 0:
        raise ValueError("std must be non-negative")
    z = rng.generator.standard_normal((rows, cols))
    if std == 0:
        return np.zeros((rows, cols))
    return z * std
