"""Function classes indexed by a finite parameter grid.

Members know how to evaluate themselves on an ``(n, p)`` array of points and,
where a closed form exists, their Gaussian mean and Hermite coefficients.
Everything else goes through :func:`gaussian_expectation`, which uses tensor
Gauss-Hermite for ``p <= 3`` and randomized Sobol points beyond that.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial import hermite_e
from scipy import stats
from scipy.stats import qmc

from .hermite import MultiIndex, enumerate_multi_indices, hermite_eval, hermite_multi_eval, multi_factorial

RANK_TOL = 1e-8


class QuadratureError(RuntimeError):
    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


class RankError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    order: int = 64
    qmc_log2: int = 16
    qmc_replicates: int = 8
    tol: float = 1e-6
    seed: int = 0
    min_order: int = 8
    closed_form: bool = True


# ---------------------------------------------------------------------------
# members


class Member:
    """One function ``f: R^p -> R`` of a class."""

    p: int
    bound: float = math.inf
    label: str = "f"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> float | None:
        return None

    def coefficient(self, l: MultiIndex) -> float | None:
        return None


def _halfline_coefficient(c: float, q: int) -> float:
    # E[1{Y <= c} H_q(Y)] for standard normal Y
    if q == 0:
        return float(stats.norm.cdf(c))
    if not np.isfinite(c):
        return 0.0
    return -float(stats.norm.pdf(c)) * float(hermite_eval(q - 1, c))


class HalfSpace(Member):
    """``x -> 1{v . x <= c}``."""

    def __init__(self, v: Sequence[float], c: float):
        self.v = np.asarray(v, dtype=float)
        self.c = float(c)
        self.p = self.v.shape[0]
        self.bound = 1.0
        norm = float(np.linalg.norm(self.v))
        if norm == 0:
            raise ValueError("half-space direction must be nonzero")
        self.unit = self.v / norm
        self.level = self.c / norm
        self.label = f"half_space(v={self.v.tolist()}, c={self.c!r})"

    def __call__(self, x):
        return (np.asarray(x) @ self.v <= self.c).astype(float)

    def mean(self):
        return float(stats.norm.cdf(self.level))

    def coefficient(self, l):
        # f depends on x only through u . x; the addition formula folds the
        # univariate coefficients out along u
        a = _halfline_coefficient(self.level, sum(l))
        return a * float(np.prod(self.unit ** np.asarray(l)))


class Rectangle(Member):
    """``x -> 1{x <= c}`` componentwise."""

    def __init__(self, c: Sequence[float]):
        self.c = np.asarray(c, dtype=float)
        self.p = self.c.shape[0]
        self.bound = 1.0
        self.label = f"hyperrectangle(c={self.c.tolist()})"

    def __call__(self, x):
        return np.all(np.asarray(x) <= self.c, axis=-1).astype(float)

    def mean(self):
        return float(np.prod(stats.norm.cdf(self.c)))

    def coefficient(self, l):
        return math.prod(_halfline_coefficient(ci, li) for ci, li in zip(self.c, l))


def _double_factorial_odd(n: int) -> int:
    # (n-1)!! for even n >= 0
    return math.prod(range(n - 1, 0, -2))


class Ball(Member):
    """``x -> 1{|x|_2 <= c}``."""

    def __init__(self, c: float, p: int):
        self.c = float(c)
        self.p = int(p)
        self.bound = 1.0
        self.label = f"ball(c={self.c!r}, p={self.p})"

    def __call__(self, x):
        x = np.asarray(x)
        return (np.einsum("...i,...i->...", x, x) <= self.c ** 2).astype(float)

    def mean(self):
        return float(stats.chi2.cdf(self.c ** 2, self.p))

    def coefficient(self, l):
        # expand H_l into monomials x^alpha; |X| and X/|X| are independent, so
        # E[1{|X|<=c} X^alpha] = E[X^alpha] * P(chi2_{p+|alpha|} <= c^2)
        polys = [hermite_e.herme2poly([0] * li + [1]) for li in l]
        total = 0.0
        for alpha in np.ndindex(*[len(q) for q in polys]):
            coef = math.prod(q[a] for q, a in zip(polys, alpha))
            if coef == 0 or any(a % 2 for a in alpha):
                continue
            moment = math.prod(_double_factorial_odd(a) for a in alpha)
            total += coef * moment * float(stats.chi2.cdf(self.c ** 2, self.p + sum(alpha)))
        return total


class HermitePolynomial(Member):
    """``x -> sum_l J_l / l! H_l(x)`` for a finite table of coefficients ``J_l``.

    The all-zero key, if present, is the mean.
    """

    def __init__(self, table: Mapping[Sequence[int], float]):
        self.table = {tuple(int(v) for v in l): float(J) for l, J in table.items()}
        if not self.table:
            raise ValueError("empty coefficient table")
        dims = {len(l) for l in self.table}
        if len(dims) != 1:
            raise ValueError("all multi-indices must share the same length")
        self.p = dims.pop()
        self.bound = math.inf
        self.label = "polynomial(" + ", ".join(f"{l}:{J!r}" for l, J in sorted(self.table.items())) + ")"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for l, J in sorted(self.table.items()):
            out = out + J / multi_factorial(l) * hermite_multi_eval(l, x)
        return out

    def mean(self):
        return self.table.get((0,) * self.p, 0.0)

    def coefficient(self, l):
        return self.table.get(tuple(l), 0.0)


class Scaled(Member):
    def __init__(self, member: Member, factor: float):
        self.member = member
        self.factor = float(factor)
        self.p = member.p
        self.bound = abs(self.factor) * member.bound
        self.label = f"{self.factor!r}*{member.label}"

    def __call__(self, x):
        return self.factor * self.member(x)

    def mean(self):
        m = self.member.mean()
        return None if m is None else self.factor * m

    def coefficient(self, l):
        c = self.member.coefficient(l)
        return None if c is None else self.factor * c


class Custom(Member):
    """A user-supplied vectorised callable; moments come from quadrature."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], p: int, bound: float = math.inf,
                 label: str = "custom"):
        self.fn = fn
        self.p = int(p)
        self.bound = float(bound)
        self.label = label

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


# ---------------------------------------------------------------------------
# classes


KINDS = ("half_space", "hyperrectangle", "ball", "polynomial", "custom")


@dataclass(frozen=True, eq=False)
class FunctionClass:
    kind: str
    members: tuple[Member, ...]
    p: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown class kind {self.kind!r}")
        if not self.members:
            raise ValueError("a function class needs at least one member")
        if any(f.p != self.p for f in self.members):
            raise ValueError("all members must share the class dimension")

    @property
    def uniform_bound(self) -> float:
        return max(f.bound for f in self.members)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def evaluate(self, x) -> np.ndarray:
        """Member values at points ``x``, shape ``(len(self), n)``."""
        x = np.asarray(x, dtype=float)
        return np.stack([f(x) for f in self.members])

    def means(self, quad: QuadratureSpec | None = None) -> np.ndarray:
        return np.array([class_mean(f, quad) for f in self.members])

    @classmethod
    def half_space(cls, directions, offsets) -> "FunctionClass":
        """Grid ``{1{v . x <= c}}`` over every direction and offset."""
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        members = tuple(HalfSpace(v, c) for v in directions for c in offsets)
        return cls("half_space", members, directions.shape[1])

    @classmethod
    def half_planes(cls, n_directions: int, offsets=(0.0,)) -> "FunctionClass":
        """Planar half-spaces with unit normals at angles ``pi * i / n``."""
        theta = np.pi * np.arange(n_directions) / n_directions
        return cls.half_space(np.column_stack([np.cos(theta), np.sin(theta)]), offsets)

    @classmethod
    def hyperrectangle(cls, corners) -> "FunctionClass":
        corners = np.atleast_2d(np.asarray(corners, dtype=float))
        return cls("hyperrectangle", tuple(Rectangle(c) for c in corners), corners.shape[1])

    @classmethod
    def ball(cls, radii, p: int) -> "FunctionClass":
        return cls("ball", tuple(Ball(c, p) for c in radii), p)

    @classmethod
    def polynomial(cls, tables) -> "FunctionClass":
        members = tuple(HermitePolynomial(t) for t in tables)
        return cls("polynomial", members, members[0].p)

    @classmethod
    def custom(cls, members: Sequence[Member]) -> "FunctionClass":
        return cls("custom", tuple(members), members[0].p)


# ---------------------------------------------------------------------------
# quadrature


def _tensor_gauss_hermite(fn, p: int, order: int) -> float:
    nodes, weights = hermite_e.hermegauss(order)
    weights = weights / math.sqrt(2 * math.pi)
    grids = np.meshgrid(*([nodes] * p), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    w = weights
    for _ in range(p - 1):
        w = np.multiply.outer(w, weights).ravel()
    return float(np.dot(w, fn(pts)))


def gaussian_expectation(fn: Callable[[np.ndarray], np.ndarray], p: int,
                         quad: QuadratureSpec | None = None) -> tuple[float, float]:
    """``E fn(X)`` for ``X ~ N(0, I_p)`` together with an error estimate.

    For ``p <= 3`` the estimate is the gap between orders ``n`` and ``n // 2``;
    for ``p > 3`` it is the standard error across scrambled Sobol replicates.
    """
    quad = quad or QuadratureSpec()
    if quad.order < quad.min_order:
        raise ValueError(f"quadrature order {quad.order} below minimum {quad.min_order}")
    if p <= 3:
        fine = _tensor_gauss_hermite(fn, p, quad.order)
        coarse = _tensor_gauss_hermite(fn, p, quad.order // 2)
        return fine, abs(fine - coarse)
    ss = np.random.SeedSequence(quad.seed)
    estimates = []
    for child in ss.spawn(quad.qmc_replicates):
        sobol = qmc.Sobol(d=p, scramble=True, seed=np.random.default_rng(child))
        u = sobol.random_base2(quad.qmc_log2)
        estimates.append(float(np.mean(fn(stats.norm.ppf(u)))))
    est = np.asarray(estimates)
    return float(est.mean()), float(est.std(ddof=1) / math.sqrt(len(est)))


def class_mean(f: Member, quad: QuadratureSpec | None = None) -> float:
    """``E f(X)``; closed form when the member has one."""
    quad = quad or QuadratureSpec()
    if quad.closed_form:
        m = f.mean()
        if m is not None:
            return m
    value, err = gaussian_expectation(f, f.p, quad)
    if err > quad.tol:
        raise QuadratureError(f"mean of {f.label}: error estimate {err:.3e} exceeds {quad.tol:.3e}", err)
    return value


def _coefficient_with_error(f: Member, l: MultiIndex, quad: QuadratureSpec) -> tuple[float, float]:
    if quad.closed_form:
        c = f.coefficient(l)
        if c is not None:
            return c, 0.0
    return gaussian_expectation(lambda x: f(x) * hermite_multi_eval(l, x), f.p, quad)


def hermite_coefficient(f: Member, l: Sequence[int], quad: QuadratureSpec | None = None) -> float:
    """``J_l(f) = E[f(X) H_l(X)]``."""
    quad = quad or QuadratureSpec()
    l = tuple(l)
    if len(l) != f.p:
        raise ValueError(f"multi-index {l} does not match dimension {f.p}")
    value, err = _coefficient_with_error(f, l, quad)
    if err > quad.tol:
        raise QuadratureError(f"J_{l} of {f.label}: error estimate {err:.3e} exceeds {quad.tol:.3e}", err)
    return value


@dataclass(frozen=True, eq=False)
class ChaosProjection:
    """Order-``m`` Hermite coefficients ``J_l`` of one member."""

    p: int
    m: int
    coefficients: dict[MultiIndex, float]
    quadrature_error: float = 0.0

    def __post_init__(self):
        for l in self.coefficients:
            if len(l) != self.p or sum(l) != self.m:
                raise ValueError(f"key {l} is not an order-{self.m} multi-index in dimension {self.p}")

    def vector(self) -> np.ndarray:
        """Coefficients in lexicographic order of the order-``m`` multi-indices."""
        return np.array([self.coefficients.get(l, 0.0) for l in enumerate_multi_indices(self.p, self.m)])


def project_leading(f: Member, m: int, quad: QuadratureSpec | None = None) -> ChaosProjection:
    if m < 1:
        raise ValueError("projection order must be >= 1")
    quad = quad or QuadratureSpec()
    coefs, worst = {}, 0.0
    for l in enumerate_multi_indices(f.p, m):
        value, err = _coefficient_with_error(f, l, quad)
        if err > quad.tol:
            raise QuadratureError(f"J_{l} of {f.label}: error estimate {err:.3e} exceeds {quad.tol:.3e}", err)
        coefs[l] = value
        worst = max(worst, err)
    return ChaosProjection(f.p, m, coefs, worst)


def hermite_rank(cls: FunctionClass, max_order: int = 6, tol: float = RANK_TOL,
                 quad: QuadratureSpec | None = None) -> int:
    """Smallest order with a coefficient above ``tol`` on some member.

    Quasi-Monte Carlo coefficients must also clear three standard errors.
    """
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    quad = quad or QuadratureSpec()
    for m in range(1, max_order + 1):
        for f in cls:
            for l in enumerate_multi_indices(cls.p, m):
                value, err = _coefficient_with_error(f, l, quad)
                threshold = max(tol, 3 * err) if cls.p > 3 else tol
                if abs(value) > threshold:
                    return m
    raise RankError(f"all Hermite coefficients up to order {max_order} are below {tol:g}")


def moment_bound(cls: FunctionClass, two_q: int) -> float:
    """Upper bound for ``sup_f E f(X)^{2q}``; finite for every uniformly bounded class."""
    return cls.uniform_bound ** two_q


# ---------------------------------------------------------------------------
# brackets and entropy


@dataclass
class BracketCover:
    epsilon: float
    brackets: list[tuple[Member, Member]]
    assignment: list[int] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.brackets)


def _levels(step: float) -> np.ndarray:
    k = math.ceil(1.0 / step - 1e-9)
    return np.minimum(np.arange(k + 1) * step, 1.0)


def _assign(cuts: np.ndarray, t: float) -> int:
    k = int(np.searchsorted(cuts, t, side="right")) - 1
    return min(max(k, 0), len(cuts) - 2)


def build_bracket_cover(cls: FunctionClass, epsilon: float) -> BracketCover:
    """Constructive ``epsilon``-bracket cover by quantile slicing.

    Consecutive cuts of the one-parameter family differ in Gaussian mass by at
    most ``epsilon**2``, which is the squared L2 gap of an indicator bracket.
    The count is an upper bound for the bracketing number of the whole family
    the grid is drawn from.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    eps2 = epsilon * epsilon
    if cls.kind == "half_space":
        # one slice family per distinct direction; the cover is their union
        cuts = stats.norm.ppf(_levels(eps2))
        units: list[np.ndarray] = []
        brackets, assignment = [], []
        for f in cls:
            slot = next((i for i, u in enumerate(units) if np.allclose(u, f.unit, atol=1e-12)), None)
            if slot is None:
                slot = len(units)
                units.append(f.unit)
                brackets.extend((HalfSpace(f.unit, lo), HalfSpace(f.unit, hi)) for lo, hi in zip(cuts[:-1], cuts[1:]))
            assignment.append(slot * (len(cuts) - 1) + _assign(cuts, f.level))
        return BracketCover(epsilon, brackets, assignment)
    if cls.kind == "ball":
        cuts = np.sqrt(stats.chi2.ppf(_levels(eps2), cls.p))
        brackets = [(Ball(lo, cls.p), Ball(hi, cls.p)) for lo, hi in zip(cuts[:-1], cuts[1:])]
        return BracketCover(epsilon, brackets, [_assign(cuts, f.c) for f in cls])
    if cls.kind == "hyperrectangle" and cls.p <= 2:
        # each axis contributes at most half of the squared gap
        cuts = stats.norm.ppf(_levels(eps2 / cls.p))
        cells = list(np.ndindex(*([len(cuts) - 1] * cls.p)))
        brackets = [(Rectangle(cuts[list(cell)]), Rectangle(cuts[[i + 1 for i in cell]])) for cell in cells]
        n = len(cuts) - 1
        assignment = []
        for f in cls:
            cell = [_assign(cuts, ci) for ci in f.c]
            assignment.append(int(np.ravel_multi_index(cell, (n,) * cls.p)))
        return BracketCover(epsilon, brackets, assignment)
    raise ValueError(f"no bracket construction for kind {cls.kind!r} in dimension {cls.p}")


@dataclass(frozen=True)
class EntropyVerdict:
    finite: bool
    integral: float
    exponent: float
    r: int


def entropy_condition(r: int, *, exponent: float | None = None, scale: float = 1.0,
                      samples: Sequence[tuple[float, float]] | None = None) -> EntropyVerdict:
    """Evaluate ``int_0^1 eps^(r-1) N(eps)^2 d eps``.

    Give either ``exponent`` (``N(eps) = scale * eps^-exponent``) or
    ``samples`` of ``(eps, N(eps))``. Sampled growth is interpolated
    log-linearly and extended below the smallest ``eps`` with the power law
    fitted to the smaller half of the samples.
    """
    if r < 1:
        raise ValueError("r must be a positive integer")
    if (exponent is None) == (samples is None):
        raise ValueError("give exactly one of exponent or samples")
    if exponent is not None:
        s = r - 2 * exponent
        if s <= 0:
            return EntropyVerdict(False, math.inf, float(exponent), r)
        return EntropyVerdict(True, scale * scale / s, float(exponent), r)

    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("samples must be at least two (eps, N) pairs")
    arr = arr[np.argsort(arr[:, 0])]
    eps, counts = arr[:, 0], arr[:, 1]
    if np.any(eps <= 0) or np.any(eps > 1) or np.any(counts < 1) or len(np.unique(eps)) != len(eps):
        raise ValueError("samples need distinct eps in (0, 1] and N >= 1")
    if np.any(np.diff(counts) > 0):
        raise ValueError("bracketing numbers must not increase with eps")
    head = max(2, (len(eps) + 1) // 2)
    slope = np.polyfit(np.log(eps[:head]), np.log(counts[:head]), 1)[0]
    a_hat = max(-float(slope), 0.0)
    # a fitted exponent is only known to rounding; the boundary r = 2a diverges
    if r <= 2 * a_hat + 1e-9:
        return EntropyVerdict(False, math.inf, a_hat, r)

    def piece(e0, e1, n0, b):
        # int_{e0}^{e1} eps^(r-1) (n0 (eps/e0)^-b)^2 d eps
        s = r - 2 * b
        if abs(s) < 1e-12:
            return n0 * n0 * e0 ** (2 * b) * math.log(e1 / e0)
        return n0 * n0 * e0 ** (2 * b) * (e1 ** s - e0 ** s) / s

    total = counts[0] ** 2 * eps[0] ** r / (r - 2 * a_hat)
    for i in range(len(eps) - 1):
        b = -math.log(counts[i + 1] / counts[i]) / math.log(eps[i + 1] / eps[i])
        total += piece(eps[i], eps[i + 1], counts[i], b)
    if eps[-1] < 1:
        total += piece(eps[-1], 1.0, counts[-1], 0.0)
    return EntropyVerdict(True, float(total), a_hat, r)


def _exact(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(repr(x)) if isinstance(x, float) else Fraction(x)


def moment_lower_bound(m: int, D, r: int) -> tuple[Fraction, str]:
    """``max(mDr / (1 - mD), mr)`` in exact arithmetic, with the binding term's name."""
    D = _exact(D)
    if not 0 < D < Fraction(1, m):
        raise ValueError(f"need 0 < D < 1/m, got D={float(D)!r}, m={m}")
    lrd = m * D * r / (1 - m * D)
    return (lrd, "mDr/(1-mD)") if lrd > m * r else (Fraction(m * r), "mr")


def minimal_2q(m: int, D, r: int) -> int:
    """Smallest even integer strictly above ``max(mDr / (1 - mD), mr)``.

    ``D`` may be a float (read as its decimal literal) or a ``Fraction``.
    """
    bound, _ = moment_lower_bound(m, D, r)
    k = math.floor(bound) + 1
    return k if k % 2 == 0 else k + 1
