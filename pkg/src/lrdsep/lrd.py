"""Multivariate long-range dependent Gaussian law and path samplers.

The cross-covariance is ``Cov(X_1^(i), X_{1+k}^(j)) = c_ij k^-D L(k)`` for
``k >= 1`` and the identity at lag 0. Negative lags use the transpose.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .hermite import MultiIndex, multi_factorial

PSD_RTOL = 1e-10
CLIP_CEILING = 1e-3
MAX_DOUBLINGS = 2
CHOLESKY_MAX_N = 1024
DENSE_PSD_MAX_N = 512


class CovarianceError(ValueError):
    """Covariance is not positive semidefinite at the requested length."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class EmbeddingError(RuntimeError):
    def __init__(self, message: str, clipped_mass: float):
        super().__init__(message)
        self.clipped_mass = clipped_mass


@dataclass(frozen=True)
class LrdModel:
    """Law of a standardised ``p``-variate LRD Gaussian sequence.

    ``L`` is ``"constant"`` (``L = 1``) or ``"log"`` (``L(k) = log(e + k)^beta``).
    """

    p: int
    D: float
    C: tuple[tuple[float, ...], ...]
    L: str = "constant"
    beta: float = 0.0

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.shape != (self.p, self.p):
            raise ValueError(f"C must be {self.p}x{self.p}, got shape {C.shape}")
        if not np.all(np.isfinite(C)):
            raise ValueError("C must be finite")
        if not np.any(C != 0):
            raise ValueError("the coefficients c_ij must not all be zero")
        if not 0 < self.D < 1:
            raise ValueError(f"memory exponent D must lie in (0, 1), got {self.D!r}")
        if self.L not in ("constant", "log"):
            raise ValueError(f"unknown slowly varying factor {self.L!r}")
        object.__setattr__(self, "C", tuple(tuple(float(v) for v in row) for row in C))
        object.__setattr__(self, "D", float(self.D))
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def from_matrix(cls, C, D: float, L: str = "constant", beta: float = 0.0) -> "LrdModel":
        C = np.atleast_2d(np.asarray(C, dtype=float))
        return cls(C.shape[0], D, tuple(map(tuple, C)), L, beta)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.C)

    def to_dict(self) -> dict:
        return {"p": self.p, "D": self.D, "C": [list(r) for r in self.C], "L": self.L, "beta": self.beta}

    @property
    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def slowly_varying(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if self.L == "constant":
            return np.ones_like(k)
        return np.log(math.e + k) ** self.beta

    def decay(self, k) -> np.ndarray:
        """``k^-D L(k)`` for ``k >= 1``."""
        k = np.asarray(k, dtype=float)
        return k ** -self.D * self.slowly_varying(k)


def cross_covariance(model: LrdModel, k: int) -> np.ndarray:
    """``R(k)[i, j] = Cov(X_1^(i), X_{1+k}^(j))``; ``R(-k) = R(k).T``."""
    if k == 0:
        return np.eye(model.p)
    if k < 0:
        return cross_covariance(model, -k).T
    return model.matrix * float(model.decay(k))


def covariance_sequence(model: LrdModel, n: int) -> np.ndarray:
    """``R(0), ..., R(n-1)`` stacked into shape ``(n, p, p)``."""
    out = model.matrix[None, :, :] * model.decay(np.arange(1, n))[:, None, None]
    return np.concatenate([np.eye(model.p)[None], out]) if n > 1 else np.eye(model.p)[None]


def block_toeplitz(model: LrdModel, N: int) -> np.ndarray:
    """Covariance of ``(X_1, ..., X_N)`` flattened observation-major."""
    p = model.p
    R = covariance_sequence(model, N)
    out = np.empty((N * p, N * p))
    for s in range(N):
        for t in range(s, N):
            block = R[t - s]
            out[s * p:(s + 1) * p, t * p:(t + 1) * p] = block
            out[t * p:(t + 1) * p, s * p:(s + 1) * p] = block.T
    return out


def _embedding_sequence(model: LrdModel, M: int) -> np.ndarray:
    half = M // 2
    R = covariance_sequence(model, half + 1)
    seq = np.empty((M, model.p, model.p))
    seq[:half] = R[:half]
    seq[half] = 0.5 * (R[half] + R[half].T)
    seq[half + 1:] = np.transpose(R[1:half][::-1], (0, 2, 1))
    return seq


@lru_cache(maxsize=64)
def _circulant_spectrum(model: LrdModel, M: int) -> tuple[np.ndarray, float, float]:
    """Square roots of the clipped spectral blocks, clipped mass, minimum eigenvalue."""
    lam_blocks = np.fft.fft(_embedding_sequence(model, M), axis=0)
    lam_blocks = 0.5 * (lam_blocks + np.conj(np.transpose(lam_blocks, (0, 2, 1))))
    w, U = np.linalg.eigh(lam_blocks)
    clipped = max(0.0, float(-w[w < 0].sum() / np.abs(w).sum()))
    root = (U * np.sqrt(np.clip(w, 0, None))[:, None, :]) @ np.conj(np.transpose(U, (0, 2, 1)))
    root.setflags(write=False)
    return root, clipped, float(w.min())


@dataclass(frozen=True)
class PsdReport:
    N: int
    min_eigenvalue: float
    threshold: float
    method: str

    @property
    def valid(self) -> bool:
        return self.min_eigenvalue >= self.threshold


def validate_psd(model: LrdModel, N: int) -> PsdReport:
    """Smallest eigenvalue of the covariance of ``N`` observations.

    Up to ``N = 512`` the dense block-Toeplitz matrix is used; beyond that the
    smallest eigenvalue over the spectral blocks of the size-``2N`` embedding.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    threshold = -PSD_RTOL * N * model.p
    if N <= DENSE_PSD_MAX_N:
        lo = float(scipy.linalg.eigvalsh(block_toeplitz(model, N), subset_by_index=[0, 0])[0])
        return PsdReport(N, lo, threshold, "dense")
    _, _, lo = _circulant_spectrum(model, 2 * N)
    return PsdReport(N, lo, threshold, "circulant")


@dataclass(frozen=True, eq=False)
class PathSample:
    values: np.ndarray
    model: LrdModel
    seed: object
    generator: str
    clipped_mass: float = 0.0
    embedding_size: int = 0

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def model_digest(self) -> str:
        return self.model.digest

    def sidecar(self) -> dict:
        seed = self.seed
        if isinstance(seed, np.random.SeedSequence):
            seed = {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
        return {"model": self.model.to_dict(), "model_digest": self.model_digest, "N": self.N,
                "seed": seed, "generator": self.generator, "clipped_mass": self.clipped_mass,
                "embedding_size": self.embedding_size}


@lru_cache(maxsize=16)
def _cholesky_factor(model: LrdModel, N: int) -> np.ndarray:
    cov = block_toeplitz(model, N)
    try:
        factor = scipy.linalg.cholesky(cov, lower=True)
    except np.linalg.LinAlgError:
        lo = float(scipy.linalg.eigvalsh(cov, subset_by_index=[0, 0])[0])
        raise CovarianceError(f"covariance of length {N} is not positive definite "
                              f"(min eigenvalue {lo:.3e})", lo) from None
    factor.setflags(write=False)
    return factor


def sample_cholesky(model: LrdModel, N: int, seed) -> PathSample:
    """Exact draw via a dense Cholesky factor; for ``N <= 1024`` only."""
    if not 1 <= N <= CHOLESKY_MAX_N:
        raise ValueError(f"Cholesky sampler supports 1 <= N <= {CHOLESKY_MAX_N}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(N * model.p)
    x = _cholesky_factor(model, N) @ z
    return PathSample(x.reshape(N, model.p), model, seed, "cholesky")


def circulant_plan(model: LrdModel, N: int, ceiling: float = CLIP_CEILING,
                   max_doublings: int = MAX_DOUBLINGS) -> tuple[int, np.ndarray, float]:
    """Pick the embedding size for ``N``; doubles it while the clipped mass exceeds ``ceiling``."""
    M = 2 * N
    for _ in range(max_doublings + 1):
        root, clipped, _ = _circulant_spectrum(model, M)
        if clipped <= ceiling:
            return M, root, clipped
        M *= 2
    raise EmbeddingError(f"circulant embedding clips relative mass {clipped:.3e} > {ceiling:.1e} even at "
                         f"size {M // 2}; double the embedding further or use the Cholesky sampler "
                         "(the covariance may be indefinite)", clipped)


def sample_circulant(model: LrdModel, N: int, seed, ceiling: float = CLIP_CEILING,
                     max_doublings: int = MAX_DOUBLINGS) -> PathSample:
    """Multivariate circulant embedding; exact when nothing is clipped.

    Cost per draw is ``O(p^2 M + p M log M)`` once the spectral square roots
    for embedding size ``M`` are cached.
    """
    if N < 2:
        raise ValueError("circulant sampler needs N >= 2")
    M, root, clipped = circulant_plan(model, N, ceiling, max_doublings)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((M, model.p)) + 1j * rng.standard_normal((M, model.p))
    w = np.einsum("kab,kb->ka", root, z)
    x = np.fft.fft(w, axis=0).real[:N] / math.sqrt(M)
    return PathSample(x, model, seed, "circulant", clipped, M)


def sample_path(model: LrdModel, N: int, seed, generator: str = "circulant") -> PathSample:
    if generator == "cholesky":
        return sample_cholesky(model, N, seed)
    if generator == "circulant":
        if N == 1:
            return sample_cholesky(model, N, seed)
        return sample_circulant(model, N, seed)
    raise ValueError(f"unknown generator {generator!r}")


# ---------------------------------------------------------------------------
# normalisation


def lag_weights(N: int) -> np.ndarray:
    """``N - k`` for ``k = 1, ..., N - 1``."""
    return np.arange(N - 1, 0, -1, dtype=float)


def d_n_exact(model: LrdModel, m: int, N: int) -> float:
    """``d_N = sd(sum_{j<=N} H_m(X_j^(1)))`` from ``E[H_m(X) H_m(Y)] = m! rho^m``."""
    if m < 1 or N < 1:
        raise ValueError("need m >= 1 and N >= 1")
    k = np.arange(1, N)
    r = model.C[0][0] * model.decay(k)
    var = math.factorial(m) * (N + 2.0 * float(np.dot(lag_weights(N), r ** m)))
    return math.sqrt(var)


def d_n_asymptotic_exponent(model: LrdModel, m: int) -> float:
    """Growth exponent ``1 - mD/2`` of ``d_N`` in the regime ``mD < 1``."""
    if m * model.D >= 1:
        raise ValueError(f"mD = {m * model.D:g} >= 1 is outside the long-memory regime")
    return 1.0 - m * model.D / 2.0


def _contingency_tables(rows: Sequence[int], cols: Sequence[int]):
    """Nonnegative integer matrices with the given row and column sums."""
    if not rows:
        if all(c == 0 for c in cols):
            yield ()
        return
    first, rest = rows[0], rows[1:]

    def splits(total, caps):
        if len(caps) == 1:
            if total <= caps[0]:
                yield (total,)
            return
        for v in range(min(total, caps[0]) + 1):
            for tail in splits(total - v, caps[1:]):
                yield (v,) + tail

    for row in splits(first, list(cols)):
        remaining = [c - v for c, v in zip(cols, row)]
        for tail in _contingency_tables(rest, remaining):
            yield (row,) + tail


def hermite_cross_moment(l: MultiIndex, l2: MultiIndex, R: np.ndarray) -> np.ndarray:
    """``E[H_l(X) H_l2(Y)]`` for standard ``X, Y`` with cross-covariance ``R[..., a, b]``.

    Diagram formula: ``l! l2! sum_n prod_ab R_ab^n_ab / n_ab!`` over integer
    matrices ``n`` with row sums ``l`` and column sums ``l2``.
    """
    R = np.asarray(R, dtype=float)
    total = np.zeros(R.shape[:-2])
    if sum(l) != sum(l2):
        return total
    for table in _contingency_tables(list(l), list(l2)):
        term = np.ones(R.shape[:-2])
        denom = 1
        for a, row in enumerate(table):
            for b, n in enumerate(row):
                if n:
                    term = term * R[..., a, b] ** n
                    denom *= math.factorial(n)
        total = total + term / denom
    return multi_factorial(l) * multi_factorial(l2) * total


def chaos_sum_variance(model: LrdModel, coefficients: Mapping[MultiIndex, float], N: int) -> float:
    """Exact ``Var(sum_{j<=N} sum_l J_l / l! H_l(X_j))`` for one homogeneous chaos."""
    coefficients = {l: J for l, J in coefficients.items() if J != 0}
    if not coefficients:
        return 0.0
    R = covariance_sequence(model, N)[1:]
    w = lag_weights(N)
    Rt = np.transpose(R, (0, 2, 1))
    total = 0.0
    for l, J in coefficients.items():
        for l2, J2 in coefficients.items():
            lag0 = float(hermite_cross_moment(l, l2, np.eye(model.p)))
            # lag k > 0 in both directions: Cov(X_s, X_{s+k}) = R(k), Cov(X_{s+k}, X_s) = R(k)^T
            fwd = float(np.dot(w, hermite_cross_moment(l, l2, R))) if N > 1 else 0.0
            bwd = float(np.dot(w, hermite_cross_moment(l, l2, Rt))) if N > 1 else 0.0
            total += J * J2 / (multi_factorial(l) * multi_factorial(l2)) * (N * lag0 + fwd + bwd)
    return total
