"""Probabilists' Hermite polynomials and the multivariate algebra built on them.

Multi-indices are plain tuples of nonnegative integers ``(l_1, ..., l_p)``.
Every routine that enumerates them uses ascending lexicographic order, and
the matrices of :class:`BasisChange` share that row/column order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

MultiIndex = tuple[int, ...]

#: Default acceptance floor on the reciprocal condition number of ``A``.
RCOND_FLOOR = 1e-6
MAX_BASIS_TRIES = 50


class BasisChangeError(RuntimeError):
    """No well-conditioned set of directions was found within the retry budget."""

    def __init__(self, message: str, best_rcond: float):
        super().__init__(message)
        self.best_rcond = best_rcond


def hermite_eval(k: int, x):
    """Evaluate ``H_k`` at ``x`` (scalar or array) by the three-term recurrence.

    ``H_0 = 1``, ``H_1 = x`` and ``H_{k+1} = x H_k - k H_{k-1}``.
    """
    if k < 0:
        raise ValueError("Hermite order must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if k == 0:
        return prev if prev.ndim else float(prev)
    cur = x.copy()
    for j in range(1, k):
        prev, cur = cur, x * cur - j * prev
    return cur if cur.ndim else float(cur)


def hermite_table(kmax: int, x) -> np.ndarray:
    """Return ``H_0(x), ..., H_kmax(x)`` stacked along a new leading axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = x
    for j in range(1, kmax):
        out[j + 1] = x * out[j] - j * out[j - 1]
    return out


def hermite_multi_eval(l: Sequence[int], x):
    """Evaluate ``H_l(x) = prod_i H_{l_i}(x_i)``.

    ``x`` has shape ``(..., p)`` with ``p == len(l)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (len(l),):
        raise ValueError(f"point dimension {x.shape[-1:]} does not match multi-index of length {len(l)}")
    out = np.ones(x.shape[:-1])
    for i, li in enumerate(l):
        if li:
            out = out * hermite_eval(li, x[..., i])
    return out if out.ndim else float(out)


@lru_cache(maxsize=None)
def _multi_indices(p: int, m: int) -> tuple[MultiIndex, ...]:
    if p == 1:
        return ((m,),)
    return tuple((first,) + rest for first in range(m + 1) for rest in _multi_indices(p - 1, m - first))


def enumerate_multi_indices(p: int, m: int) -> list[MultiIndex]:
    """All ``l`` in ``N^p`` with ``|l| = m`` in ascending lexicographic order."""
    if p < 1 or m < 0:
        raise ValueError("need p >= 1 and m >= 0")
    return list(_multi_indices(p, m))


def multi_factorial(l: Sequence[int]) -> int:
    return math.prod(math.factorial(li) for li in l)


def multinomial(l: Sequence[int]) -> int:
    return math.factorial(sum(l)) // multi_factorial(l)


def _check_unit(a: np.ndarray, tol: float = 1e-12) -> None:
    norm = float(np.linalg.norm(a))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"direction must have unit Euclidean norm, got {norm!r}")


def addition_formula_rhs(a, x, m: int):
    """Right-hand side of the Hermite addition formula for a unit vector ``a``.

    Returns ``sum_{|l|=m} m!/l! * prod_i a_i^{l_i} H_{l_i}(x_i)``, which equals
    ``H_m(a . x)``. ``x`` may carry leading batch axes.
    """
    a = np.asarray(a, dtype=float)
    _check_unit(a)
    x = np.asarray(x, dtype=float)
    p = a.shape[0]
    if x.shape[-1] != p:
        raise ValueError("x and a must have the same dimension")
    table = [hermite_table(m, x[..., i]) for i in range(p)]
    total = np.zeros(x.shape[:-1])
    for l in _multi_indices(p, m):
        term = float(multinomial(l)) * np.ones(x.shape[:-1])
        for i, li in enumerate(l):
            term = term * a[i] ** li * table[i][li]
        total = total + term
    return total if total.ndim else float(total)


def monomial_matrix(directions: np.ndarray, m: int) -> np.ndarray:
    """``A[l, k] = prod_i (a_k^{(i)})^{l_i}`` for rows ``l`` and direction columns ``k``."""
    p = directions.shape[1]
    exps = np.array(_multi_indices(p, m))
    return np.prod(directions[None, :, :] ** exps[:, None, :], axis=2)


@dataclass(frozen=True, eq=False)
class BasisChange:
    """Directions ``a_k`` (one per order-``m`` multi-index) with matrices ``A`` and ``B``.

    ``A @ B`` is the diagonal matrix with entries ``l! / m!``; ``B[k, l]`` is
    the entry the chaos folding uses for direction ``k`` and multi-index ``l``.
    """

    p: int
    m: int
    indices: tuple[MultiIndex, ...]
    directions: np.ndarray
    A: np.ndarray
    A_inv: np.ndarray
    B: np.ndarray
    rcond: float
    seed: int

    @property
    def target_diagonal(self) -> np.ndarray:
        return np.array([multi_factorial(l) / math.factorial(self.m) for l in self.indices])

    def identity_error(self, B: np.ndarray | None = None) -> float:
        """Max-abs deviation of ``A @ B`` from the target diagonal."""
        B = self.B if B is None else B
        return float(np.abs(self.A @ B - np.diag(self.target_diagonal)).max())


def build_basis_change(p: int, m: int, seed: int, rcond_floor: float = RCOND_FLOOR,
                       max_tries: int = MAX_BASIS_TRIES) -> BasisChange:
    """Draw unit directions until the monomial matrix is well conditioned.

    Raises
    ------
    BasisChangeError
        If ``max_tries`` draws all fall below ``rcond_floor``.
    """
    if p < 1 or m < 1:
        raise ValueError("need p >= 1 and m >= 1")
    indices = _multi_indices(p, m)
    size = len(indices)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(max_tries):
        a = rng.standard_normal((size, p))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        A = monomial_matrix(a, m)
        rcond = 1.0 / np.linalg.cond(A)
        best = max(best, rcond)
        if rcond >= rcond_floor:
            break
    else:
        raise BasisChangeError(
            f"no invertible monomial matrix for p={p}, m={m} after {max_tries} draws "
            f"(best reciprocal condition number {best:.3e})", best)
    lu = scipy.linalg.lu_factor(A)
    A_inv = scipy.linalg.lu_solve(lu, np.eye(size))
    diag = np.array([multi_factorial(l) / math.factorial(m) for l in indices])
    B = A_inv * diag[None, :]
    return BasisChange(p, m, indices, a, A, A_inv, B, float(rcond), seed)


def fold_projection(coefficients: Mapping[MultiIndex, float], bc: BasisChange) -> dict[MultiIndex, float]:
    """Fold an order-``m`` chaos into weights on ``H_m(a_k . x)``.

    ``I[k] = sum_l J_l / l! * B[k, l]``, so that
    ``sum_k I[k] H_m(a_k . x) = sum_l J_l / l! H_l(x)``. Accepts a plain
    mapping or anything with a ``coefficients`` mapping.
    """
    coefficients = getattr(coefficients, "coefficients", coefficients)
    for l in coefficients:
        if len(l) != bc.p or sum(l) != bc.m:
            raise ValueError(f"multi-index {l} does not match p={bc.p}, m={bc.m}")
    J = np.array([coefficients.get(l, 0.0) / multi_factorial(l) for l in bc.indices])
    weights = bc.B @ J
    return dict(zip(bc.indices, weights.tolist()))


def folded_eval(weights: Mapping[MultiIndex, float], bc: BasisChange, x) -> np.ndarray:
    """Evaluate ``sum_k I[k] H_m(a_k . x)`` at points ``x`` of shape ``(..., p)``."""
    x = np.asarray(x, dtype=float)
    proj = x @ bc.directions.T
    w = np.array([weights[k] for k in bc.indices])
    return np.asarray(hermite_eval(bc.m, proj)) @ w


def chaos_eval(coefficients: Mapping[MultiIndex, float], x) -> np.ndarray:
    """Evaluate ``sum_l J_l / l! H_l(x)`` at points ``x`` of shape ``(..., p)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    if not coefficients:
        return out
    kmax = max(max(l) for l in coefficients)
    table = [hermite_table(kmax, x[..., i]) for i in range(x.shape[-1])]
    for l, J in coefficients.items():
        term = np.full(x.shape[:-1], J / multi_factorial(l))
        for i, li in enumerate(l):
            if li:
                term = term * table[i][li]
        out = out + term
    return out


def tilde_j(coefficients: Mapping[MultiIndex, float], components: Sequence[int], p: int) -> float:
    """Symmetrised coefficient ``J_l / m!`` with ``l_i`` the multiplicity of ``i`` in ``components``.

    Components are 1-based, so ``(1, 2)`` and ``(2, 1)`` give the same value.
    """
    if any(j < 1 or j > p for j in components):
        raise ValueError(f"component indices must lie in 1..{p}")
    l = tuple(sum(1 for j in components if j == i) for i in range(1, p + 1))
    return coefficients.get(l, 0.0) / math.factorial(len(components))
