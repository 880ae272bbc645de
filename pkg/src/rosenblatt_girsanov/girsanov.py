"""Change of measure for the Rosenblatt process.

A deterministic shift ``theta`` of the Rosenblatt process corresponds to the
drift ``phi = K_{H'}^-1 int_0^. theta`` of the underlying Wiener process,
``H' = H/2 + 1/2``.  Under ``dP~ = Z_T dP`` with

    log Z_t = -int_0^t phi dB - 1/2 int_0^t phi^2 ds

the process ``R + 2 d_H int theta dB^{H'} + d_H int theta^2`` is again a
Rosenblatt process of index ``H``.  Here that shifted process is built twice:
from the formula above (``direct``) and as the double integral of the
shifted noise ``B + int phi`` (``tilde``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import special
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import frac_calc, kernels, simulate
from .grid import REFINE_LEVELS, NoisePartition, SampledFunction, TimeGrid
from .kernels import HurstParam, _as_hurst
from .simulate import PathBundle, WienerIncrements

#: relative L^2 roundtrip error above which a shift is rejected
ROUNDTRIP_TOL = 0.05


class NotReducibleError(ValueError):
    """Raised when ``D = b^2 - 4 d_H a`` is negative somewhere."""

    def __init__(self, node: int, t: float, D: float):
        self.node = node
        self.t = t
        self.D = D
        super().__init__(f"model not reducible: D = {D:.6g} < 0 at node {node} (t = {t:.6g})")


@dataclass(frozen=True, eq=False)
class ShiftSpec:
    """Deterministic shift ``theta`` with its Wiener drift ``phi``."""

    theta: SampledFunction
    phi: SampledFunction
    hurst: HurstParam
    description: str = ""

    @property
    def grid(self) -> TimeGrid:
        return self.theta.grid

    def phi_on(self, partition: NoisePartition) -> np.ndarray:
        """``phi`` at the noise-cell midpoints, straight from ``theta``."""
        if partition.grid != self.grid:
            raise ValueError("partition and shift live on different grids")
        return _phi_on_partition(self.theta, self.hurst, partition)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.theta.values)


@dataclass(frozen=True)
class GirsanovDensity:
    """``log Z`` at the grid nodes (last axis); ``Z_T`` is exponentiated on demand."""

    logZ: np.ndarray

    @property
    def log_ZT(self):
        return self.logZ[..., -1]

    @property
    def Z_T(self):
        return np.exp(self.log_ZT)


def _phi_scale(hp: HurstParam) -> float:
    return hp.cHalf * math.gamma(hp.H / 2)


def _phi_points(theta: SampledFunction, hp: HurstParam, points) -> np.ndarray:
    return frac_calc.weighted_frac_op(theta, hp.H / 2, "inverse", points) / _phi_scale(hp)


@lru_cache(maxsize=32)
def _phi_on_partition(theta: SampledFunction, hp: HurstParam, partition: NoisePartition) -> np.ndarray:
    out = _phi_points(theta, hp, partition.midpoints)
    out.setflags(write=False)
    return out


def theta_from_phi(phi: SampledFunction, h) -> SampledFunction:
    """``theta = c_{H'} Gamma(H/2) u^{H/2} I^{H/2}_{0+}(y^{-H/2} phi)``."""
    hp = _as_hurst(h)
    return frac_calc.weighted_frac_op(phi, hp.H / 2, "forward") * _phi_scale(hp)


def _relative_l2(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> float:
    num = float(np.sum((a - b) ** 2 * weights))
    den = float(np.sum(b**2 * weights))
    return math.sqrt(num / den) if den > 0 else math.sqrt(num)


def roundtrip_error(spec: ShiftSpec) -> float:
    """Relative ``L^2`` distance between ``theta`` and ``theta_from_phi(phi)``."""
    grid = spec.grid
    back = frac_calc.weighted_frac_op(spec.phi, spec.hurst.H / 2, "forward",
                                      points=grid.midpoints) * _phi_scale(spec.hurst)
    return _relative_l2(back, spec.theta(grid.midpoints), np.full(grid.n, grid.dt))


def phi_from_theta(theta: SampledFunction, h, description: str = "", tol: float | None = ROUNDTRIP_TOL) -> ShiftSpec:
    """``phi = c_{H'}^-1 Gamma(H/2)^-1 u^{H/2} I^{-H/2}_{0+}(y^{-H/2} theta)``.

    With ``tol`` set, the result is mapped back through :func:`theta_from_phi`
    and rejected when the relative ``L^2`` roundtrip error exceeds ``tol``,
    the working proxy for ``theta`` being an admissible shift at this
    resolution.
    """
    hp = _as_hurst(h)
    phi = frac_calc.weighted_frac_op(theta, hp.H / 2, "inverse") * (1.0 / _phi_scale(hp))
    spec = ShiftSpec(theta, phi, hp, description or theta.label)
    if tol is not None and not spec.is_zero:
        err = roundtrip_error(spec)
        if not err <= tol:
            raise ValueError(
                f"theta -> phi -> theta roundtrip error {err:.3g} exceeds {tol:g}; "
                "shift is not admissible at this resolution"
            )
    return spec


# ---------------------------------------------------------------------------
# ready-made shifts


def zero_shift(grid: TimeGrid, h) -> ShiftSpec:
    hp = _as_hurst(h)
    z = SampledFunction(grid, np.zeros(grid.n + 1), label="zero")
    return ShiftSpec(z, z, hp, "zero")


def power_shift(grid: TimeGrid, h, alpha: float) -> ShiftSpec:
    """Shift with Wiener drift ``phi(u) = u^alpha``, ``alpha > -1/2``.

    ``theta(u) = c_{H'} B(H/2, 1 + alpha - H/2) u^{alpha + H/2}``.
    """
    hp = _as_hurst(h)
    if not alpha > -0.5:
        raise ValueError(f"power shift needs alpha > -1/2, got {alpha}")
    c = hp.cHalf * special.beta(hp.H / 2, 1 + alpha - hp.H / 2)
    theta = SampledFunction(grid, np.full(grid.n + 1, c), power=alpha + hp.H / 2, label=f"power:{alpha:g}")
    return phi_from_theta(theta, hp)


def power_shift_drift(h, alpha: float, t) -> np.ndarray:
    """Closed-form ``d_H int_0^t theta^2`` for :func:`power_shift`."""
    hp = _as_hurst(h)
    b = special.beta(hp.H / 2, 1 + alpha - hp.H / 2)
    p = 2 * alpha + hp.H + 1
    return hp.eH / p * b**2 * np.asarray(t, dtype=float) ** p


def _check_intervals(intervals, T: float):
    out = []
    for a, b in intervals:
        a, b = float(a), float(b)
        if not 0 <= a < b <= T:
            raise ValueError(f"interval ({a}, {b}) must satisfy 0 <= a < b <= T={T}")
        out.append((a, b))
    if not out:
        raise ValueError("indicator shift needs at least one interval")
    return out


def indicator_shift(grid: TimeGrid, h, intervals) -> ShiftSpec:
    """``theta^A = 1_A - 1_{[0,T] \\ A}`` for ``A`` a finite union of intervals."""
    iv = _check_intervals(intervals, grid.T)

    def theta(x):
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in iv:
            inside |= (x > a) & (x < b)
        return np.where(inside, 1.0, -1.0)

    label = "indicator:" + ";".join(f"{a:g},{b:g}" for a, b in iv)
    return phi_from_theta(SampledFunction.from_callable(grid, theta, kind="step", label=label), h)


def tabulated_shift(grid: TimeGrid, h, path) -> ShiftSpec:
    """``theta`` read from a two-column CSV ``t,theta`` and interpolated to the nodes."""
    t, v = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                t.append(float(row[0]))
                v.append(float(row[1]))
            except (ValueError, IndexError):
                if t:
                    raise ValueError(f"bad row in {path}: {row!r}") from None
    if len(t) < 2:
        raise ValueError(f"{path} needs at least two (t, theta) rows")
    t = np.asarray(t)
    if np.any(np.diff(t) <= 0) or t[0] > 0 or t[-1] < grid.T:
        raise ValueError(f"{path}: times must increase and cover [0, {grid.T}]")
    theta = SampledFunction(grid, np.interp(grid.nodes, t, v), label=f"table:{path}")
    return phi_from_theta(theta, h)


def parse_shift(text: str, grid: TimeGrid, h) -> ShiftSpec:
    """Build a shift from ``zero``, ``power:ALPHA``, ``indicator:a,b;c,d`` or ``table:PATH``."""
    kind, _, arg = str(text).strip().partition(":")
    kind = kind.lower()
    try:
        if kind in ("zero", "none"):
            return zero_shift(grid, h)
        if kind == "power":
            return power_shift(grid, h, float(arg))
        if kind == "indicator":
            pairs = [p.split(",") for p in arg.split(";") if p.strip()]
            if any(len(p) != 2 for p in pairs):
                raise ValueError("intervals must be written a,b;c,d")
            return indicator_shift(grid, h, [(float(a), float(b)) for a, b in pairs])
        if kind == "table":
            return tabulated_shift(grid, h, arg)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed shift spec {text!r}: {exc}") from None
    raise ValueError(f"malformed shift spec {text!r}: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# density and shifted processes


def novikov_check(spec: ShiftSpec, partition: NoisePartition | None = None) -> tuple[float, bool]:
    """``1/2 int phi^2`` and whether it is finite (Novikov for deterministic ``phi``)."""
    part = partition or NoisePartition(spec.grid)
    phi = spec.phi_on(part)
    q = 0.5 * float(np.sum(phi**2 * part.widths))
    return q, bool(np.isfinite(q))


def wiener_drift(spec: ShiftSpec, partition: NoisePartition) -> np.ndarray:
    """``int_c phi`` per noise cell (midpoint rule)."""
    return spec.phi_on(partition) * partition.widths


def log_density(spec: ShiftSpec, w: WienerIncrements) -> GirsanovDensity:
    """``log Z_{t_i} = -sum phi_c xi_c - 1/2 sum phi_c^2 |c|`` over cells in ``(0, t_i]``.

    ``phi_c`` is ``phi`` at the noise-cell midpoint; with this choice the
    shifted noise ``xi + phi |c|`` is exactly Gaussian white noise under the
    reweighted measure.
    """
    part = w.partition
    phi = spec.phi_on(part)
    per_cell = -w.noise * phi - 0.5 * phi**2 * part.widths
    return GirsanovDensity(simulate._cumulative(part.aggregate(per_cell)))


def theta_square_integral(theta: SampledFunction, q: int = 8) -> np.ndarray:
    """``int_0^{t_i} theta^2`` at every node.

    The first cell uses Gauss-Jacobi points for the ``y^(2p)`` weight, the
    others Gauss-Legendre; both are exact for step and linear ``theta``
    times a power.
    """
    grid = theta.grid
    dt = grid.dt
    x, w = np.polynomial.legendre.leggauss(q)
    pts = grid.nodes[1:-1, None] + 0.5 * dt * (x[None, :] + 1.0)
    rest = 0.5 * dt * (theta(pts) ** 2) @ w
    p2 = 2 * theta.power
    xj, wj = special.roots_jacobi(q, 0.0, p2)
    y = 0.5 * dt * (xj + 1.0)
    g = theta.values[0] if theta.kind == "step" else np.interp(y, grid.nodes, theta.values)
    first = (0.5 * dt) ** (p2 + 1) * np.sum(wj * np.broadcast_to(g, y.shape) ** 2)
    return np.concatenate([[0.0], np.cumsum(np.concatenate([[first], rest]))])


def shifted_rosenblatt_direct(bundle: PathBundle, spec: ShiftSpec, h=None) -> np.ndarray:
    """``R + 2 d_H int_0^t theta dB^{H'} + d_H int_0^t theta^2`` at every node."""
    hp = bundle.hurst if h is None else _as_hurst(h)
    if spec.grid != bundle.grid:
        raise ValueError("shift and bundle live on different grids")
    if spec.is_zero:
        return np.array(bundle.rosenblatt)
    stoch = simulate.wiener_integral_fbm(spec.theta, bundle.w, hp.companion, upto="nodes")
    return bundle.rosenblatt + 2 * hp.dH * stoch + hp.dH * theta_square_integral(spec.theta)


def shifted_rosenblatt_via_tilde(w: WienerIncrements, spec: ShiftSpec, h) -> np.ndarray:
    """Rosenblatt path of the shifted noise ``xi + phi |c|``."""
    if spec.grid != w.grid:
        raise ValueError("shift and increments live on different grids")
    return simulate.rosenblatt_path(w.shifted(wiener_drift(spec, w.partition)), h)


def tilde_deterministic_part(spec: ShiftSpec, h, levels: int = REFINE_LEVELS) -> np.ndarray:
    """``2 sum_{j,k} Kbar phi_j phi_k |c_j||c_k|`` (all pairs), the drift of the tilde construction."""
    hp = _as_hurst(h)
    basis = kernels.volterra_basis(hp.companion, spec.grid, levels=levels)
    drift = wiener_drift(spec, basis.partition)
    return simulate._rosenblatt_rows(drift[None, :], hp, basis, centered=False)[0]


def inverse_shift_identity(bundle: PathBundle, spec: ShiftSpec, h=None) -> float:
    """Max residual of ``R = R~ - 2 d_H int theta dB~^{H'} + d_H int theta^2``.

    ``R~`` is the tilde construction and ``int theta dB~^{H'}`` the FBM
    integral against the shifted noise, so nothing cancels by algebra.
    """
    hp = bundle.hurst if h is None else _as_hurst(h)
    tilde = bundle.shifted_tilde
    if tilde is None:
        tilde = shifted_rosenblatt_via_tilde(bundle.w, spec, hp)
    if spec.is_zero:
        return float(np.max(np.abs(bundle.rosenblatt - tilde)))
    w_tilde = bundle.w.shifted(wiener_drift(spec, bundle.w.partition))
    stoch = simulate.wiener_integral_fbm(spec.theta, w_tilde, hp.companion, upto="nodes")
    rebuilt = tilde - 2 * hp.dH * stoch + hp.dH * theta_square_integral(spec.theta)
    return float(np.max(np.abs(bundle.rosenblatt - rebuilt)))


def apply_shift(bundle: PathBundle, spec: ShiftSpec) -> PathBundle:
    """Fill the shifted paths and the log-density of ``bundle``."""
    hp = bundle.hurst
    return replace(
        bundle,
        shifted_direct=shifted_rosenblatt_direct(bundle, spec, hp),
        shifted_tilde=shifted_rosenblatt_via_tilde(bundle.w, spec, hp),
        log_density=log_density(spec, bundle.w).logZ,
    )


# ---------------------------------------------------------------------------
# drift removal


@dataclass(frozen=True)
class DriftRemoval:
    """Outcome of :func:`drift_removal`.

    ``residual`` is the integrand ``-sign * sqrt(D)`` left in front of
    ``dB~^{H'}``; it vanishes when ``full`` (``D == 0``), i.e. ``X = R~``.
    """

    theta: SampledFunction
    D: np.ndarray
    sign: int
    full: bool
    residual: SampledFunction


def drift_removal(a: SampledFunction, b: SampledFunction, h, sign: int | str = "+",
                  atol: float = 1e-12) -> DriftRemoval:
    """Solve ``d_H theta^2 - b theta + a = 0`` for ``theta = (b +- sqrt(D)) / (2 d_H)``.

    ``D = b^2 - 4 d_H a`` is checked node by node; values within ``atol``
    (relative to the size of ``b^2`` and ``4 d_H a``) count as zero.
    """
    hp = _as_hurst(h)
    s = {"+": 1, "-": -1, 1: 1, -1: -1}.get(sign)
    if s is None:
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    if a.grid != b.grid or a.kind != b.kind or a.power != 0 or b.power != 0:
        raise ValueError("a and b must be unweighted functions of the same kind on one grid")
    bb = b.values**2
    fa = 4 * hp.dH * a.values
    D = bb - fa
    scale = atol * np.maximum(1.0, np.maximum(bb, np.abs(fa)))
    bad = np.nonzero(D < -scale)[0]
    if bad.size:
        k = int(bad[0])
        x = a.grid.nodes if a.kind == "linear" else a.grid.midpoints
        raise NotReducibleError(k, float(x[k]), float(D[k]))
    D = np.where(np.abs(D) <= scale, 0.0, D)
    root = np.sqrt(D)
    theta = b.with_values((b.values + s * root) / (2 * hp.dH))
    return DriftRemoval(theta, D, s, bool(np.all(D == 0)), b.with_values(-s * root))


def drifted_model_path(a: SampledFunction, b: SampledFunction, bundle: PathBundle) -> np.ndarray:
    """``X_t = int_0^t a + int_0^t b dB^{H'} + R_t`` at every node."""
    hp = bundle.hurst
    grid = bundle.grid
    ia = frac_calc.frac_integral(a, frac_calc.FracOrder(1.0, "left"))(grid.nodes)
    stoch = simulate.wiener_integral_fbm(b, bundle.w, hp.companion, upto="nodes")
    return ia + stoch + bundle.rosenblatt


# ---------------------------------------------------------------------------
# estimator front end


class GirsanovShift(TransformerMixin, BaseEstimator):
    """Map noise to shifted Rosenblatt paths; ``score_samples`` gives ``log Z_T``.

    ``shift`` uses the :func:`parse_shift` syntax.  ``construction`` picks the
    direct formula or the shifted-noise double integral.
    """

    def __init__(self, H=0.7, T=1.0, n=256, shift="power:0", construction="direct", levels=REFINE_LEVELS):
        self.H = H
        self.T = T
        self.n = n
        self.shift = shift
        self.construction = construction
        self.levels = levels

    def fit(self, X=None, y=None):
        if self.construction not in ("direct", "tilde"):
            raise ValueError(f"construction must be 'direct' or 'tilde', got {self.construction!r}")
        self.hurst_ = kernels.make_hurst(self.H)
        self.grid_ = TimeGrid(self.T, self.n)
        self.partition_ = NoisePartition(self.grid_, self.levels)
        self.spec_ = parse_shift(self.shift, self.grid_, self.hurst_)
        self.n_features_in_ = self.partition_.size
        return self

    def _increments(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} noise cells, got {X.shape[1]}")
        return WienerIncrements(self.partition_, X, 0, np.arange(X.shape[0]))

    def transform(self, X):
        w = self._increments(X)
        if self.construction == "tilde":
            return shifted_rosenblatt_via_tilde(w, self.spec_, self.hurst_)
        return shifted_rosenblatt_direct(simulate.build_bundle(w, self.hurst_), self.spec_)

    def score_samples(self, X):
        return log_density(self.spec_, self._increments(X)).log_ZT
