"""Function-indexed sequential empirical process and the reduced statistic."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .function_classes import ChaosProjection, FunctionClass, Member, QuadratureSpec, class_mean, hermite_rank
from .hermite import enumerate_multi_indices, hermite_table, multi_factorial
from .lrd import PathSample, d_n_exact


@dataclass(frozen=True, eq=False)
class SepSurface:
    """``R_N(f, t)`` on a member grid times a ``t`` grid."""

    values: np.ndarray
    t_grid: np.ndarray
    normalization: str = "none"
    labels: tuple[str, ...] = ()

    def long_rows(self):
        for i, label in enumerate(self.labels or map(str, range(self.values.shape[0]))):
            for t, v in zip(self.t_grid, self.values[i]):
                yield label, float(t), float(v)


@dataclass(frozen=True, eq=False)
class ReducedStat:
    """``S_N(n, f)`` for ``n = 0..N``; rows follow the member order."""

    values: np.ndarray
    labels: tuple[str, ...] = ()

    @property
    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(np.abs(self.values), axis=1)

    @property
    def sup_value(self) -> float:
        return float(np.abs(self.values).max())

    def long_rows(self):
        for i, label in enumerate(self.labels or map(str, range(self.values.shape[0]))):
            for n, v in enumerate(self.values[i]):
                yield label, n, float(v)


def jump_indices(N: int, t_grid) -> np.ndarray:
    """``floor(N t)``, robust to ``t = j / N`` rounding just below ``j``."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < 0) or np.any(t > 1) or np.any(np.diff(t) < 0):
        raise ValueError("t grid must be nondecreasing in [0, 1]")
    return np.minimum(np.floor(N * t + 1e-9).astype(int), N)


def compute_sep(path: PathSample, cls: FunctionClass, t_grid=None, normalize: bool = False,
                m: int | None = None, quad: QuadratureSpec | None = None) -> SepSurface:
    """``R_N(f, t) = sum_{j <= floor(Nt)} (f(X_j) - E f(X_1))`` for every member.

    With ``normalize`` the surface is divided by ``d_N`` at the class's Hermite
    rank (computed unless ``m`` is given).
    """
    if cls.p != path.model.p:
        raise ValueError("class and path dimensions differ")
    N = path.N
    t_grid = np.arange(N + 1) / N if t_grid is None else np.asarray(t_grid, dtype=float)
    means = cls.means(quad)
    centered = cls.evaluate(path.values) - means[:, None]
    csum = np.concatenate([np.zeros((len(cls), 1)), np.cumsum(centered, axis=1)], axis=1)
    values = csum[:, jump_indices(N, t_grid)]
    norm = "none"
    if normalize:
        m = hermite_rank(cls, quad=quad) if m is None else m
        values = values / d_n_exact(path.model, m, N)
        norm = "d_N"
    return SepSurface(values, t_grid, norm, tuple(f.label for f in cls))


def classical_sep(path: PathSample, x_grid: Sequence[float], t_grid=None) -> SepSurface:
    """Univariate ``sum_{j <= floor(Nt)} (1{Y_j <= x} - Phi(x))``."""
    if path.model.p != 1:
        raise ValueError("the classical process needs a univariate path")
    return compute_sep(path, FunctionClass.half_space([[1.0]], x_grid), t_grid)


class ChaosBasis:
    """``H_l(X_j) / l!`` for every order-``m`` multi-index, evaluated once per path."""

    def __init__(self, path: PathSample, m: int):
        self.m = m
        self.indices = enumerate_multi_indices(path.model.p, m)
        tables = [hermite_table(m, path.values[:, i]) for i in range(path.model.p)]
        rows = []
        for l in self.indices:
            row = np.full(path.N, 1.0 / multi_factorial(l))
            for i, li in enumerate(l):
                if li:
                    row = row * tables[i][li]
            rows.append(row)
        self.matrix = np.array(rows)

    def evaluate(self, proj: ChaosProjection) -> np.ndarray:
        if proj.m != self.m:
            raise ValueError(f"projection has order {proj.m}, expected {self.m}")
        return proj.vector() @ self.matrix


def _reduced_row(path: PathSample, f: Member, proj: ChaosProjection, dN: float, basis: ChaosBasis,
                 quad: QuadratureSpec | None) -> np.ndarray:
    remainder = f(path.values) - class_mean(f, quad) - basis.evaluate(proj)
    return np.concatenate([[0.0], np.cumsum(remainder)]) / dN


def compute_reduced(path: PathSample, f: Member, m: int, proj: ChaosProjection, dN: float,
                    quad: QuadratureSpec | None = None) -> ReducedStat:
    """``S_N(n, f) = d_N^-1 sum_{j <= n} (f(X_j) - E f - sum_{|l|=m} J_l / l! H_l(X_j))``."""
    if proj.m != m:
        raise ValueError(f"projection has order {proj.m}, expected {m}")
    if not dN > 0:
        raise ValueError("d_N must be positive")
    row = _reduced_row(path, f, proj, dN, ChaosBasis(path, m), quad)
    return ReducedStat(row[None, :], (f.label,))


def reduced_statistics(path: PathSample, members: Sequence[Member], m: int,
                       projections: Sequence[ChaosProjection], dN: float,
                       quad: QuadratureSpec | None = None) -> ReducedStat:
    if len(members) != len(projections):
        raise ValueError("one projection per member is required")
    basis = ChaosBasis(path, m)
    rows = [_reduced_row(path, f, proj, dN, basis, quad) for f, proj in zip(members, projections)]
    return ReducedStat(np.array(rows), tuple(f.label for f in members))


def sup_stat(path: PathSample, members: Sequence[Member], m: int, projections: Sequence[ChaosProjection],
             dN: float, means: Sequence[float] | None = None) -> float:
    """``max_{n <= N} max_f |S_N(n, f)|`` over the member grid in one pass."""
    if not members:
        raise ValueError("empty member grid")
    if len(members) != len(projections):
        raise ValueError("one projection per member is required")
    basis = ChaosBasis(path, m)
    means = [class_mean(f) for f in members] if means is None else means
    best = 0.0
    for f, proj, mu in zip(members, projections, means):
        if proj.m != m:
            raise ValueError(f"projection has order {proj.m}, expected {m}")
        partial = np.cumsum(f(path.values) - mu - basis.evaluate(proj))
        best = max(best, float(np.abs(partial).max()))
    return best / dN if math.isfinite(dN) and dN > 0 else math.nan
