"""Generators for exchangeable binary clusters and the estimator comparison study."""
from __future__ import annotations

import csv
import io
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, stats

from .distributions import FamilySpec, family_pmf
from .estimation import SumDataset, fit_mle
from .exceptions import DomainError, ExchbinError

GENERATORS = ("gaussian-threshold", "beta-mixture")
COMPARISON_FAMILIES = ("bb", "fl", "lapgam", "qpower")
GRID_P = (0.1, 0.2, 0.3, 0.4, 0.5)
GRID_RHO = (0.05, 0.10, 0.15, 0.20)


@dataclass(frozen=True)
class Scenario:
    p: float
    rho: float
    m: int
    n: int = 100
    B: int = 200
    seed: int = 0
    generator: str = "gaussian-threshold"

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise DomainError(f"unknown generator {self.generator!r}")
        if not 0 < self.p < 1:
            raise DomainError(f"p must lie in (0, 1), got {self.p}")
        if self.m < 1 or self.n < 1 or self.B < 1:
            raise DomainError("m, n and B must be positive")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.generator == "beta-mixture" and not 0 < self.rho < 1:
            raise DomainError(f"beta-mixture needs 0 < rho < 1, got {self.rho}")
        if self.generator == "gaussian-threshold" and not 0 <= self.rho < 1:
            raise DomainError(f"gaussian-threshold needs 0 <= rho < 1, got {self.rho}")

    @property
    def id(self) -> str:
        return f"p={self.p:g};rho={self.rho:g};m={self.m};n={self.n};gen={self.generator}"

    @property
    def key(self) -> int:
        return zlib.crc32(self.id.encode())

    def rng(self, replicate: int) -> np.random.Generator:
        """Private stream for one replicate, derived from (seed, scenario, replicate)."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.key, replicate))
        return np.random.Generator(np.random.PCG64(ss))


def default_grid(m=10, n=100, B=200, seed=0, generator="gaussian-threshold") -> list[Scenario]:
    return [Scenario(p, rho, m, n, B, seed, generator) for p in GRID_P for rho in GRID_RHO]


def _both_exceed(r: float, t: float) -> float:
    """P(Z1 > t, Z2 > t) for standard normals with correlation r."""
    if r <= 0:
        return stats.norm.sf(t) ** 2
    a, b = np.sqrt(r), np.sqrt(1.0 - r)

    def integrand(w):
        return stats.norm.pdf(w) * stats.norm.sf((t - a * w) / b) ** 2

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def threshold_binary_correlation(p: float, r: float) -> float:
    """Correlation of indicators 1{Z > Phi^-1(1 - p)} for latent correlation r."""
    t = stats.norm.isf(p)
    return (_both_exceed(r, t) - p * p) / (p * (1 - p))


@lru_cache(maxsize=1024)
def latent_correlation(p: float, rho: float, tol: float = 1e-8) -> float:
    """Latent normal correlation giving binary correlation ``rho`` at margin ``p``."""
    if rho == 0:
        return 0.0
    hi = 1.0 - 1e-12
    if not 0 < rho < threshold_binary_correlation(p, hi):
        raise DomainError(f"binary correlation {rho} is not attainable at p={p}")
    lo = 0.0
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        val = threshold_binary_correlation(p, mid)
        if abs(val - rho) <= tol:
            return mid
        if val < rho:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def beta_mixture_shapes(p: float, rho: float) -> tuple[float, float]:
    k = (1.0 - rho) / rho
    return p * k, (1.0 - p) * k


def gen_sums(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Draw ``scenario.n`` cluster sums."""
    p, rho, m, n = scenario.p, scenario.rho, scenario.m, scenario.n
    if scenario.generator == "beta-mixture":
        a, b = beta_mixture_shapes(p, rho)
        return rng.binomial(m, rng.beta(a, b, size=n))
    r = latent_correlation(p, rho)
    t = stats.norm.isf(p)
    shared = rng.standard_normal(n)
    own = rng.standard_normal((n, m))
    z = np.sqrt(r) * shared[:, None] + np.sqrt(1.0 - r) * own
    return (z > t).sum(axis=1)


def sample_family(spec: FamilySpec, m: int, n: int, rng: np.random.Generator) -> SumDataset:
    """n cluster sums drawn from a family's pmf, as grouped counts."""
    counts = rng.multinomial(n, family_pmf(spec, m).mass)
    return SumDataset.from_counts(m, counts)


@dataclass(frozen=True)
class McRow:
    scenario: str
    p: float
    rho: float
    m: int
    n: int
    family: str
    replicate: int
    p_hat: float
    rho_hat: float
    converged: bool


MC_COLUMNS = tuple(f.name for f in fields(McRow))


def _run_replicates(scenario: Scenario, families, replicates) -> list[McRow]:
    rows = []
    for r in replicates:
        sums = gen_sums(scenario, scenario.rng(r))
        data = SumDataset.from_sums(scenario.m, sums)
        for fam in families:
            try:
                fit = fit_mle(fam, data, compute_se=False)
                row = (fit.p_hat, fit.rho_hat, bool(fit.converged))
            except (ExchbinError, ArithmeticError, ValueError):
                row = (float("nan"), float("nan"), False)
            rows.append(McRow(scenario.id, scenario.p, scenario.rho, scenario.m, scenario.n,
                              fam, r, *row))
    return rows


def _task(args):
    return _run_replicates(*args)


def run_mc_study(scenarios, families=COMPARISON_FAMILIES, workers: int = 1,
                 chunk: int = 25) -> list[McRow]:
    """Fit every family to every replicate of every scenario.

    Output is sorted by (scenario, family, replicate) and does not depend on
    ``workers``: each replicate draws from its own seeded stream.
    """
    families = tuple(families)
    tasks = []
    for sc in scenarios:
        for start in range(0, sc.B, chunk):
            tasks.append((sc, families, range(start, min(start + chunk, sc.B))))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_task, tasks))
    else:
        parts = [_task(t) for t in tasks]
    rows = [row for part in parts for row in part]
    order = {f: i for i, f in enumerate(families)}
    rows.sort(key=lambda r: (r.scenario, order[r.family], r.replicate))
    return rows


SUMMARY_STATS = ("mean", "median", "sd", "q05", "q25", "q75", "q95", "bias")
SUMMARY_COLUMNS = ("scenario", "p", "rho", "m", "n", "family", "replicates", "converged_rate") + tuple(
    f"{est}_{stat}" for est in ("p_hat", "rho_hat") for stat in SUMMARY_STATS
)


def _describe(values: np.ndarray, truth: float) -> dict:
    if values.size == 0:
        return dict.fromkeys(SUMMARY_STATS, float("nan"))
    q = np.quantile(values, [0.05, 0.25, 0.75, 0.95])
    constant = values.min() == values.max()
    # summing identical floats can drift by an ulp
    mean = float(values[0]) if constant else float(values.mean())
    return {
        "mean": mean,
        "median": float(np.median(values)),
        "sd": 0.0 if constant or values.size == 1 else float(values.std(ddof=1)),
        "q05": float(q[0]), "q25": float(q[1]), "q75": float(q[2]), "q95": float(q[3]),
        "bias": mean - truth,
    }


def summarize(rows: list[McRow]) -> list[dict]:
    """Per (scenario, family) summaries of the converged replicates."""
    if not rows:
        raise DomainError("empty result table")
    groups: dict[tuple, list[McRow]] = {}
    for r in rows:
        groups.setdefault((r.scenario, r.family), []).append(r)
    out = []
    for (sc, fam), grp in groups.items():
        ok = [r for r in grp if r.converged and np.isfinite(r.p_hat) and np.isfinite(r.rho_hat)]
        first = grp[0]
        rec = {"scenario": sc, "p": first.p, "rho": first.rho, "m": first.m, "n": first.n,
               "family": fam, "replicates": len(grp), "converged_rate": len(ok) / len(grp)}
        for est, truth in (("p_hat", first.p), ("rho_hat", first.rho)):
            stats_ = _describe(np.array([getattr(r, est) for r in ok]), truth)
            rec.update({f"{est}_{k}": v for k, v in stats_.items()})
        out.append(rec)
    return out


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        rec = asdict(r) if not isinstance(r, dict) else r
        w.writerow([_fmt(rec[c]) for c in columns])
    return buf.getvalue()
