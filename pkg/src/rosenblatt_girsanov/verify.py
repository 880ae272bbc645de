"""Importance-sampling check of the Rosenblatt change of measure.

Shifted paths ``R~`` are simulated under ``P`` and reweighted by ``Z_T``; the
self-normalized weighted statistics must match plain Rosenblatt statistics
computed from an independent ensemble drawn on a disjoint random stream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import girsanov, kernels, simulate
from .grid import REFINE_LEVELS, TimeGrid
from .girsanov import ShiftSpec

DEGENERACY_FRACTION = 0.01
_CHUNK = 2000


@dataclass(frozen=True)
class McConfig:
    H: float = 0.7
    T: float = 1.0
    n: int = 256
    N: int = 20000
    seed: int = 0
    shift: str | ShiftSpec = "power:0"
    checkpoints: tuple = (0.25, 0.5, 0.75, 1.0)
    lambdas: tuple = (0.5, 1.0)
    k: float = 3.0
    bonferroni: bool = True
    construction: str = "direct"
    levels: int = REFINE_LEVELS

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 100:
            raise ValueError(f"N must be an integer >= 100, got {self.N!r}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k!r}")
        if self.construction not in ("direct", "tilde"):
            raise ValueError(f"construction must be 'direct' or 'tilde', got {self.construction!r}")
        if not self.checkpoints or any(not 0 < c <= 1 for c in self.checkpoints):
            raise ValueError("checkpoints are fractions of T in (0, 1]")
        kernels.make_hurst(self.H)
        TimeGrid(self.T, self.n)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.n)

    def checkpoint_nodes(self) -> np.ndarray:
        idx = np.rint(np.asarray(self.checkpoints) * self.n).astype(int)
        if np.any(np.abs(idx - np.asarray(self.checkpoints) * self.n) > 1e-9) or np.any(idx < 1):
            raise ValueError(f"checkpoints {self.checkpoints} do not fall on nodes of n={self.n}")
        return idx


@dataclass(frozen=True)
class Stat:
    name: str
    estimate: float
    se: float
    oracle: float
    oracle_se: float
    verdict: bool | None

    @property
    def z(self) -> float:
        s = math.hypot(self.se, self.oracle_se)
        d = abs(self.estimate - self.oracle)
        return d / s if s > 0 else (0.0 if d == 0 else math.inf)


@dataclass(frozen=True)
class McReport:
    config: McConfig
    mean_Z: float
    mean_Z_se: float
    ess: float
    k_eff: float
    tests: list[Stat]
    covariance: list[Stat]
    sensitivity: list[Stat]
    degenerate: bool
    extra: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.config.N

    @property
    def martingale_ok(self) -> bool:
        return abs(self.mean_Z - 1.0) <= self.config.k * self.mean_Z_se or self.mean_Z_se == 0 and self.mean_Z == 1.0

    @property
    def covariance_ok(self) -> bool | None:
        return None if self.degenerate else all(s.verdict for s in self.covariance)

    @property
    def tests_ok(self) -> bool | None:
        return None if self.degenerate else all(s.verdict for s in self.tests)

    @property
    def passed(self) -> bool | None:
        if self.degenerate:
            return None
        return bool(self.covariance_ok and self.tests_ok and self.martingale_ok)

    @property
    def sensitivity_detects(self) -> bool:
        """True when the unweighted comparison (wrong oracle) fails somewhere."""
        return not all(s.verdict for s in self.sensitivity)

    def rows(self):
        yield Stat("mean_Z", self.mean_Z, self.mean_Z_se, 1.0, 0.0, self.martingale_ok)
        yield Stat("ess", self.ess, 0.0, float(self.N), 0.0, not self.degenerate)
        yield from self.tests
        yield from self.covariance
        for s in self.sensitivity:
            yield Stat("unweighted:" + s.name, s.estimate, s.se, s.oracle, s.oracle_se, s.verdict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["name", "estimate", "SE", "oracle", "oracle_SE", "verdict"])
            for s in self.rows():
                v = "" if s.verdict is None else ("pass" if s.verdict else "fail")
                wr.writerow([s.name, *(format(x, ".17g") for x in (s.estimate, s.se, s.oracle, s.oracle_se)), v])

    def summary(self) -> str:
        c = self.config
        lines = [
            f"H={c.H} T={c.T} n={c.n} N={c.N} seed={c.seed} shift={_shift_name(c.shift)} construction={c.construction}",
            f"mean Z_T = {self.mean_Z:.5f} +- {self.mean_Z_se:.5f}  ({'ok' if self.martingale_ok else 'FAIL'})",
            f"ESS = {self.ess:.1f} of {self.N}",
        ]
        if self.degenerate:
            lines.append("weight degeneracy: ESS below 1% of N, verdicts suppressed")
            return "\n".join(lines)
        worst = max(self.tests + self.covariance, key=lambda s: s.z)
        lines += [
            f"tolerance: {self.k_eff:.3f} combined SE",
            f"test functions: {sum(s.verdict for s in self.tests)}/{len(self.tests)} pass",
            f"covariance entries: {sum(s.verdict for s in self.covariance)}/{len(self.covariance)} pass",
            f"largest discrepancy: {worst.name} at {worst.z:.2f} SE",
            f"unweighted comparison (wrong oracle): {'fails as it should' if self.sensitivity_detects else 'passes'}",
            f"overall: {'PASS' if self.passed else 'FAIL'}",
        ]
        return "\n".join(lines)


def _shift_name(shift) -> str:
    return shift.description if isinstance(shift, ShiftSpec) else str(shift)


# ---------------------------------------------------------------------------
# estimators


def ess(weights) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise ValueError("ess of an empty weight vector")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    s2 = float(np.sum(w**2))
    return float(np.sum(w)) ** 2 / s2 if s2 > 0 else 0.0


def _normalized(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if not total > 0:
        raise ValueError("total weight is zero")
    return w / total


def weighted_moment(values, weights, f=None) -> tuple[float, float]:
    """Self-normalized ``sum w f(x) / sum w`` with its delta-method standard error."""
    x = np.asarray(values, dtype=float)
    fx = x if f is None else np.asarray(f(x), dtype=float)
    w = _normalized(weights)
    if w.shape[0] != fx.shape[0]:
        raise ValueError(f"{fx.shape[0]} values but {w.shape[0]} weights")
    est = float(w @ fx)
    se = float(np.sqrt(np.sum(w**2 * (fx - est) ** 2)))
    return est, se


def weighted_covariance(X, weights) -> tuple[np.ndarray, np.ndarray]:
    """Self-normalized covariance matrix of the columns of ``X`` and entrywise SEs."""
    X = np.asarray(X, dtype=float)
    w = _normalized(weights)
    mu = w @ X
    D = X - mu
    cov = np.einsum("r,ri,rj->ij", w, D, D)
    infl = D[:, :, None] * D[:, None, :] - cov
    se = np.sqrt(np.einsum("r,rij->ij", w**2, infl**2))
    return cov, se


def covariance_compare(weighted, oracle, k: float, names=None) -> list[Stat]:
    """Entrywise ``|C_w - C_o| <= k * combined SE`` on the upper triangle (inclusive)."""
    (cw, sw), (co, so) = weighted, oracle
    cw, sw, co, so = (np.asarray(a, dtype=float) for a in (cw, sw, co, so))
    if cw.shape != co.shape or cw.shape != sw.shape or co.shape != so.shape or cw.ndim != 2:
        raise ValueError(f"covariance shapes differ: {cw.shape} vs {co.shape}")
    m = cw.shape[0]
    names = names or [str(i) for i in range(m)]
    out = []
    for i in range(m):
        for j in range(i, m):
            tol = k * math.hypot(sw[i, j], so[i, j])
            ok = abs(cw[i, j] - co[i, j]) <= tol * (1 + 1e-12)
            out.append(Stat(f"cov[{names[i]},{names[j]}]", cw[i, j], sw[i, j], co[i, j], so[i, j], bool(ok)))
    return out


def bonferroni_k(k: float, m: int) -> float:
    """Widen ``k`` so that ``m`` two-sided tests keep the single-test false-alarm rate."""
    if m <= 1:
        return float(k)
    alpha = 2 * stats.norm.sf(k)
    return float(max(k, stats.norm.isf(alpha / (2 * m))))


def default_test_functions(names, lambdas=(0.5, 1.0)):
    """First and second moments, pairwise products and ``exp(-lambda x)`` at checkpoints."""
    fns = []
    m = len(names)
    for i in range(m):
        fns.append((f"mean[{names[i]}]", lambda X, i=i: X[:, i]))
    for i in range(m):
        fns.append((f"second[{names[i]}]", lambda X, i=i: X[:, i] ** 2))
    for i in range(m):
        for j in range(i + 1, m):
            fns.append((f"product[{names[i]},{names[j]}]", lambda X, i=i, j=j: X[:, i] * X[:, j]))
    for lam in lambdas:
        for i in range(m):
            fns.append((f"exp(-{lam:g}x)[{names[i]}]", lambda X, i=i, lam=lam: np.exp(-lam * X[:, i])))
    return fns


def _compare(fns, X, weights, Y, k) -> list[Stat]:
    ones = np.ones(Y.shape[0])
    out = []
    for name, f in fns:
        est, se = weighted_moment(X, weights, f)
        o, ose = weighted_moment(Y, ones, f)
        tol = k * math.hypot(se, ose)
        out.append(Stat(name, est, se, o, ose, bool(abs(est - o) <= tol * (1 + 1e-12))))
    return out


# ---------------------------------------------------------------------------
# ensembles


def _ensembles(cfg: McConfig, spec: ShiftSpec, nodes: np.ndarray):
    hp = kernels.make_hurst(cfg.H)
    grid = cfg.grid
    shifted = np.empty((cfg.N, nodes.size))
    logZ = np.empty(cfg.N)
    plain = np.empty((cfg.N, nodes.size))
    for lo in range(0, cfg.N, _CHUNK):
        idx = np.arange(lo, min(lo + _CHUNK, cfg.N))
        w = simulate.gen_increments(grid, cfg.seed, idx, cfg.levels, simulate.MAIN_STREAM)
        if cfg.construction == "tilde":
            paths = girsanov.shifted_rosenblatt_via_tilde(w, spec, hp)
        else:
            bundle = simulate.PathBundle(w, hp, np.empty(0), simulate.rosenblatt_path(w, hp))
            paths = girsanov.shifted_rosenblatt_direct(bundle, spec, hp)
        shifted[idx] = paths[:, nodes]
        logZ[idx] = girsanov.log_density(spec, w).log_ZT
        wo = simulate.gen_increments(grid, cfg.seed, idx, cfg.levels, simulate.ORACLE_STREAM)
        plain[idx] = simulate.rosenblatt_path(wo, hp)[:, nodes]
    return shifted, logZ, plain


def run_mc(cfg: McConfig) -> McReport:
    """Simulate, reweight and compare; see :class:`McReport` for the verdicts."""
    grid = cfg.grid
    spec = cfg.shift if isinstance(cfg.shift, ShiftSpec) else girsanov.parse_shift(cfg.shift, grid, cfg.H)
    if spec.grid != grid:
        raise ValueError("shift was built on a different grid")
    nodes = cfg.checkpoint_nodes()
    names = [f"t={grid.nodes[i]:g}" for i in nodes]
    X, logZ, Y = _ensembles(cfg, spec, nodes)

    Z = np.exp(logZ)
    mean_Z = float(Z.mean())
    mean_Z_se = float(Z.std(ddof=1) / math.sqrt(cfg.N))
    weights = np.exp(logZ - logZ.max())
    e = ess(weights)
    degenerate = e < DEGENERACY_FRACTION * cfg.N

    fns = default_test_functions(names, cfg.lambdas)
    m = len(fns) + len(nodes) * (len(nodes) + 1) // 2
    k_eff = bonferroni_k(cfg.k, m) if cfg.bonferroni else float(cfg.k)

    tests = _compare(fns, X, weights, Y, k_eff)
    ones = np.ones(cfg.N)
    cov = covariance_compare(weighted_covariance(X, weights), weighted_covariance(Y, ones), k_eff, names)
    wrong = _compare(fns, X, ones, Y, k_eff)
    wrong += covariance_compare(weighted_covariance(X, ones), weighted_covariance(Y, ones), k_eff, names)
    if degenerate:
        tests = [Stat(s.name, s.estimate, s.se, s.oracle, s.oracle_se, None) for s in tests]
        cov = [Stat(s.name, s.estimate, s.se, s.oracle, s.oracle_se, None) for s in cov]
    return McReport(cfg, mean_Z, mean_Z_se, e, k_eff, tests, cov, wrong, degenerate)
