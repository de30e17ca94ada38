"""Seeded Monte Carlo experiments and reproducible reports.

Replicate ``r`` at path length ``N`` draws from
``SeedSequence(root_seed, spawn_key=(N, r))``, so every replicate owns an
independent stream and results do not depend on execution order.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy
from scipy import stats

from . import __version__
from .function_classes import (FunctionClass, HermitePolynomial, QuadratureSpec, RankError, class_mean,
                               hermite_rank, project_leading)
from .hermite import (BasisChange, addition_formula_rhs, build_basis_change, chaos_eval,
                      fold_projection, folded_eval, hermite_eval, hermite_table)
from .lrd import LrdModel, chaos_sum_variance, d_n_asymptotic_exponent, d_n_exact, sample_path
from .sep import sup_stat

DEFAULT_TOLERANCES = {
    "slope": 0.02,
    "gof_level": 0.01,
    "variance_sigmas": 3.0,
    "cancellation": 1e-9,
    "addition": 1e-9,
    "basis": 1e-8,
    "folding": 1e-9,
    "orthogonality": 1e-10,
}


class ExperimentError(ValueError):
    """Configuration outside the regime an experiment is defined for."""


def replicate_seed(root_seed: int, N: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(root_seed, spawn_key=(N, r))


def _parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def build_class(descriptor: dict, p: int) -> FunctionClass:
    """Function class from a config descriptor (see README for the keys)."""
    d = dict(descriptor)
    kind = d.pop("kind", None)
    if kind == "half_space":
        offsets = d.pop("offsets", [0.0])
        if "n_directions" in d:
            if p != 2:
                raise ValueError("n_directions needs p = 2; give explicit directions otherwise")
            cls = FunctionClass.half_planes(int(d.pop("n_directions")), offsets)
        else:
            cls = FunctionClass.half_space(d.pop("directions"), offsets)
    elif kind == "hyperrectangle":
        if "axis_grid" in d:
            grid = d.pop("axis_grid")
            corners = np.array(np.meshgrid(*grid, indexing="ij")).reshape(len(grid), -1).T
        else:
            corners = d.pop("corners")
        cls = FunctionClass.hyperrectangle(corners)
    elif kind == "ball":
        cls = FunctionClass.ball(d.pop("radii"), p)
    elif kind == "polynomial":
        cls = FunctionClass.polynomial([{tuple(l): J for l, J in table} for table in d.pop("terms")])
    else:
        raise ValueError(f"unsupported class kind {kind!r} in config")
    if d:
        raise ValueError(f"unknown class keys for kind {kind!r}: {sorted(d)}")
    if cls.p != p:
        raise ValueError(f"class dimension {cls.p} does not match model dimension {p}")
    return cls


@dataclass
class ExperimentConfig:
    model: LrdModel
    function_class: dict = field(default_factory=lambda: {"kind": "half_space", "n_directions": 25})
    m: int = 1
    N_list: tuple[int, ...] = (512, 2048, 8192)
    replicates: int = 200
    root_seed: int = 0
    tolerances: dict = field(default_factory=dict)
    sampler: str = "circulant"
    decay_ratio: float = 0.5
    workers: int = 1
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        self.N_list = tuple(int(n) for n in self.N_list)
        self.tolerances = {**DEFAULT_TOLERANCES, **self.tolerances}
        if unknown := set(self.tolerances) - set(DEFAULT_TOLERANCES):
            raise ValueError(f"unknown tolerance keys {sorted(unknown)}")
        if self.replicates < 2:
            raise ValueError("replicates must be at least 2")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not self.N_list or min(self.N_list) < 1:
            raise ValueError("N_list must hold positive path lengths")

    def check_regime(self) -> None:
        if self.m * self.model.D >= 1:
            raise ExperimentError(f"mD = {self.m * self.model.D:g} >= 1: outside the regime 0 < D < 1/m")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "function_class": self.function_class,
            "m": self.m,
            "N_list": list(self.N_list),
            "replicates": self.replicates,
            "root_seed": self.root_seed,
            "tolerances": dict(sorted(self.tolerances.items())),
            "sampler": self.sampler,
            "decay_ratio": self.decay_ratio,
            "quadrature": asdict(self.quadrature),
        }

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.value = float(self.value)
        self.tolerance = float(self.tolerance)


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    config_digest: str
    rows: list[dict]
    checks: list[Check]
    extras: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def versions(self) -> dict:
        return {"lrdsep": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                "bit_generator": "PCG64"}

    def to_json(self) -> str:
        """Deterministic JSON; wall-clock time is deliberately left out."""
        doc = {
            "kind": self.kind,
            "config_digest": self.config_digest,
            "config": self.config,
            "versions": self.versions,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "rows": self.rows,
            "extras": self.extras,
        }
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def summarize(values: Sequence[float]) -> dict:
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3), "mean": float(v.mean()),
            "se": float(v.std(ddof=1) / math.sqrt(len(v))), "min": float(v.min()), "max": float(v.max())}


# ---------------------------------------------------------------------------
# experiments


def run_scaling_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Fit the log-log slope of exact ``d_N`` and compare it with ``1 - mD/2``."""
    start = time.perf_counter()
    config.check_regime()
    target = d_n_asymptotic_exponent(config.model, config.m)
    Ns = np.array(config.N_list, dtype=float)
    dN = np.array([d_n_exact(config.model, config.m, int(n)) for n in Ns])
    slope = float(np.polyfit(np.log(Ns), np.log(dN), 1)[0])
    tol = config.tolerances["slope"]
    rows = [{"N": int(n), "d_N": float(d), "log_N": float(np.log(n)), "log_d_N": float(np.log(d))}
            for n, d in zip(Ns, dN)]
    checks = [Check("d_N slope", abs(slope - target) <= tol, slope, tol, f"reference exponent {target!r}")]
    return ExperimentReport("scaling", config.to_dict(), config.digest, rows, checks,
                            {"slope": slope, "reference_exponent": target},
                            time.perf_counter() - start)


def _is_pure_chaos(cls: FunctionClass, m: int) -> bool:
    return cls.kind == "polynomial" and all(
        sum(l) in (0, m) for f in cls.members if isinstance(f, HermitePolynomial) for l in f.table)


def run_reduction_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Distribution of ``max_n sup_f |S_N(n, f)|`` across replicates for each ``N``.

    Passes when the medians strictly decrease along ``N_list`` and the last
    median is at most ``decay_ratio`` times the first. A class lying entirely
    in the order-``m`` chaos is checked for exact cancellation instead.
    """
    start = time.perf_counter()
    config.check_regime()
    model, m, quad = config.model, config.m, config.quadrature
    cls = build_class(config.function_class, model.p)
    try:
        rank = hermite_rank(cls, max_order=m, quad=quad)
    except RankError:
        rank = None
    if rank != m:
        raise ExperimentError(f"class Hermite rank is {rank if rank else '> ' + str(m)}, config says m={m}")
    projections = [project_leading(f, m, quad) for f in cls]
    means = [class_mean(f, quad) for f in cls]

    rows, sups = [], {}
    for N in config.N_list:
        dN = d_n_exact(model, m, N)

        def one(r, N=N, dN=dN):
            path = sample_path(model, N, replicate_seed(config.root_seed, N, r), config.sampler)
            return sup_stat(path, cls.members, m, projections, dN, means)

        values = _parallel_map(one, range(config.replicates), config.workers)
        sups[str(N)] = values
        rows.append({"N": N, "d_N": dN, **summarize(values)})

    medians = [row["median"] for row in rows]
    if _is_pure_chaos(cls, m):
        worst = max(max(v) for v in sups.values())
        tol = config.tolerances["cancellation"]
        checks = [Check("pure-chaos cancellation", worst <= tol, worst, tol)]
    else:
        decreasing = all(b < a for a, b in zip(medians, medians[1:]))
        ratio = medians[-1] / medians[0]
        checks = [
            Check("strictly decreasing medians", decreasing, float(len(medians)), 0.0,
                  "medians " + ", ".join(f"{v:.6g}" for v in medians)),
            Check("decay ratio", ratio <= config.decay_ratio, ratio, config.decay_ratio,
                  f"median(N={config.N_list[-1]}) / median(N={config.N_list[0]})"),
        ]
    extras = {"hermite_rank": rank, "members": [f.label for f in cls], "sup_values": sups}
    return ExperimentReport("reduction", config.to_dict(), config.digest, rows, checks, extras,
                            time.perf_counter() - start)


def variance_standard_error(values: np.ndarray) -> float:
    """Standard error of the sample variance, from the sample fourth central moment."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    c = v - v.mean()
    s2 = float(np.dot(c, c) / (n - 1))
    mu4 = float(np.mean(c ** 4))
    return math.sqrt(max(mu4 - (n - 3) / (n - 1) * s2 * s2, 0.0) / n)


def run_limit_marginal_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Law of ``d_N^-1 R_N(f, 1)`` against the exact finite-``N`` chaos variance.

    For ``m = 1`` a Kolmogorov-Smirnov test against ``Normal(0, sigma_N^2)``
    must not reject; for ``m >= 2`` only the variance is compared.
    """
    start = time.perf_counter()
    config.check_regime()
    model, m, quad = config.model, config.m, config.quadrature
    cls = build_class(config.function_class, model.p)
    rows, checks, samples = [], [], {}
    for N in config.N_list:
        dN = d_n_exact(model, m, N)

        def one(r, N=N):
            return sample_path(model, N, replicate_seed(config.root_seed, N, r), config.sampler).values

        paths = _parallel_map(one, range(config.replicates), config.workers)
        for i, f in enumerate(cls):
            proj = project_leading(f, m, quad)
            mu = class_mean(f, quad)
            sigma2 = chaos_sum_variance(model, proj.coefficients, N) / dN ** 2
            values = np.array([(float(np.sum(f(x))) - N * mu) / dN for x in paths])
            samples[f"{N}:{i}"] = values.tolist()
            s2 = float(values.var(ddof=1))
            se = variance_standard_error(values)
            row = {"N": N, "member": i, "d_N": dN, "sigma2_exact": sigma2, "sample_variance": s2,
                   "variance_se": se, "mean": float(values.mean())}
            label = f"{f.label} N={N}"
            if m == 1:
                ks = stats.kstest(values, "norm", args=(0.0, math.sqrt(sigma2)))
                row.update(ks_statistic=float(ks.statistic), ks_pvalue=float(ks.pvalue))
                level = config.tolerances["gof_level"]
                checks.append(Check(f"KS normality {label}", bool(ks.pvalue >= level), float(ks.pvalue), level,
                                    "p-value must not fall below the level"))
            else:
                k = config.tolerances["variance_sigmas"]
                z = abs(s2 - sigma2) / se if se > 0 else math.inf
                checks.append(Check(f"variance {label}", z <= k, z, k,
                                    f"|sample - exact| / se; exact {sigma2!r}, sample {s2!r}"))
            rows.append(row)
    return ExperimentReport("limit", config.to_dict(), config.digest, rows, checks, {"samples": samples},
                            time.perf_counter() - start)


def orthogonality_error(kmax: int = 10, order: int = 64) -> tuple[float, float]:
    """Gauss-Hermite Gram matrix of ``H_0..H_kmax``: (normalised, absolute) max error.

    The normalised error divides entry ``(j, k)`` by ``sqrt(j! k!)``.
    """
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    weights = weights / math.sqrt(2 * math.pi)
    H = hermite_table(kmax, nodes)
    gram = (H * weights) @ H.T
    fact = np.array([math.factorial(k) for k in range(kmax + 1)], dtype=float)
    err = gram - np.diag(fact)
    return float(np.abs(err / np.sqrt(np.outer(fact, fact))).max()), float(np.abs(err).max())


def run_identity_suites(seed: int = 0, cases: int = 500, p_max: int = 4, m_max: int = 6, basis_m_max: int = 4,
                        negative_control: bool = False, tolerances: dict | None = None) -> ExperimentReport:
    """Addition formula, basis identity, folding identity and orthogonality checks.

    ``negative_control`` perturbs every ``B`` by ``1e-3`` noise before the
    basis-identity check, which must then fail.
    """
    start = time.perf_counter()
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    rng = np.random.default_rng(seed)
    rows, checks = [], []

    worst = 0.0
    for _ in range(cases):
        p = int(rng.integers(1, p_max + 1))
        m = int(rng.integers(1, m_max + 1))
        a = rng.standard_normal(p)
        a /= np.linalg.norm(a)
        x = rng.standard_normal(p)
        worst = max(worst, abs(addition_formula_rhs(a, x, m) - hermite_eval(m, float(a @ x))))
    checks.append(Check("addition formula", worst <= tol["addition"], worst, tol["addition"],
                        f"{cases} random cases, p <= {p_max}, m <= {m_max}"))

    basis_worst, fold_worst = 0.0, 0.0
    for p in range(1, p_max + 1):
        for m in range(1, basis_m_max + 1):
            bc: BasisChange = build_basis_change(p, m, seed=seed + 1000 * p + m)
            B = bc.B
            if negative_control:
                B = B + 1e-3 * rng.standard_normal(B.shape)
            err = bc.identity_error(B)
            basis_worst = max(basis_worst, err)
            J = dict(zip(bc.indices, rng.standard_normal(len(bc.indices)).tolist()))
            pts = rng.standard_normal((100, p))
            ferr = float(np.abs(folded_eval(fold_projection(J, bc), bc, pts) - chaos_eval(J, pts)).max())
            fold_worst = max(fold_worst, ferr)
            rows.append({"p": p, "m": m, "size": len(bc.indices), "rcond": bc.rcond,
                         "basis_error": err, "folding_error": ferr})
    checks.append(Check("basis identity", basis_worst <= tol["basis"], basis_worst, tol["basis"],
                        "negative control: B perturbed" if negative_control else ""))
    checks.append(Check("folding identity", fold_worst <= tol["folding"], fold_worst, tol["folding"]))

    normalised, absolute = orthogonality_error(10)
    checks.append(Check("orthogonality", normalised <= tol["orthogonality"], normalised, tol["orthogonality"],
                        f"entries scaled by sqrt(j! k!); absolute max error {absolute:.3e}"))
    config = {"seed": seed, "cases": cases, "p_max": p_max, "m_max": m_max, "basis_m_max": basis_m_max,
              "negative_control": negative_control, "tolerances": dict(sorted(tol.items()))}
    digest = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()
    return ExperimentReport("identity", config, digest, rows, checks, {}, time.perf_counter() - start)


EXPERIMENTS = {
    "scaling": run_scaling_experiment,
    "reduction": run_reduction_experiment,
    "limit": run_limit_marginal_experiment,
}
