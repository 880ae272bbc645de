"""Normalizing constants, Volterra kernels and the Rosenblatt kernel.

The workhorse is :class:`VolterraBasis`: cell averages of ``d/du K_H(u, .)``
over every grid cell, tabulated at graded Gauss points ``u`` inside each cell.
The averages are exact (incomplete Beta functions), so the singularities at
``y = 0`` and ``y = u`` never get evaluated pointwise.  Cell-averaged Volterra
kernels, Rosenblatt kernels and the FBM/Rosenblatt paths all derive from it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from . import frac_calc
from .frac_calc import FracOrder
from .grid import REFINE_LEVELS, NoisePartition, SampledFunction, TimeGrid


@dataclass(frozen=True)
class HurstParam:
    """Hurst index in ``(1/2, 1)`` and the constants derived from it."""

    H: float
    cH: float
    dH: float
    eH: float
    cHalf: float

    @property
    def companion(self) -> "HurstParam":
        """Parameters of the FBM with index ``H/2 + 1/2`` that drives the Rosenblatt kernel."""
        return make_hurst(self.H / 2 + 0.5)


def _c_const(H: float) -> float:
    return math.sqrt(H * (2 * H - 1) / special.beta(2 - 2 * H, H - 0.5))


@lru_cache(maxsize=128)
def make_hurst(H: float) -> HurstParam:
    """Build :class:`HurstParam`; ``H`` must lie strictly inside ``(1/2, 1)``."""
    H = float(H)
    if not 0.5 < H < 1.0:
        raise ValueError(f"Hurst index must lie in (1/2, 1), got {H}")
    cH = _c_const(H)
    dH = (H / (2 * (2 * H - 1))) ** -0.5 / (H + 1)
    cHalf = _c_const(H / 2 + 0.5)
    return HurstParam(H=H, cH=cH, dH=dH, eH=cHalf**2 * dH, cHalf=cHalf)


def _as_hurst(h) -> HurstParam:
    return h if isinstance(h, HurstParam) else make_hurst(h)


def fbm_covariance(s, t, h) -> np.ndarray | float:
    """``R_H(s, t) = (s^2H + t^2H - |t - s|^2H) / 2``."""
    H = _as_hurst(h).H
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    out = 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(t - s) ** (2 * H))
    return float(out) if out.ndim == 0 else out


def volterra_kernel_deriv(h, u, s):
    """``d/du K_H(u, s) = c_H (u/s)^(H-1/2) (u-s)^(H-3/2)`` for ``0 < s < u``."""
    hp = _as_hurst(h)
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0) or np.any(s >= u):
        raise ValueError("kernel derivative needs 0 < s < u")
    g = hp.H - 0.5
    out = hp.cH * (u / s) ** g * (u - s) ** (g - 1.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# cell-averaged kernel derivative


@dataclass(frozen=True, eq=False)
class VolterraBasis:
    """Cell averages of ``d/du K_H(u, .)`` at graded quadrature points.

    ``A[(m, q), j] = (1/|c_j|) int_{c_j, y < u} d/du K_H(u, y) dy`` where
    ``c_j`` are the noise cells and ``u = u[m, q]`` is the ``q``-th point
    inside noise cell ``m``; ``w`` are the matching quadrature weights, so
    ``sum_q w[m, q] g(u[m, q])`` integrates ``g`` over cell ``m``.
    """

    hurst: HurstParam
    partition: NoisePartition
    u: np.ndarray
    w: np.ndarray
    A: np.ndarray

    @property
    def grid(self) -> TimeGrid:
        return self.partition.grid

    @property
    def q(self) -> int:
        return self.u.shape[1]

    def rows_before(self, i: int) -> int:
        """Number of noise cells lying in ``(0, t_i]``."""
        return 0 if i <= 0 else int(self.partition.last_of_cell[i - 1]) + 1

    def cell_integrated(self) -> np.ndarray:
        """``int_{c_m} A(u, j) du`` as an ``(M, M)`` matrix (rows ``m``)."""
        m, q = self.u.shape
        return np.einsum("mq,mqj->mj", self.w, self.A.reshape(m, q, -1))


def _graded_rule(q: int):
    # u = left + width * s**3 flattens the (u - left)**(H-1/2) behaviour
    s, w = np.polynomial.legendre.leggauss(q)
    s = 0.5 * (s + 1.0)
    w = 0.5 * w
    return s**3, 3.0 * s**2 * w


@lru_cache(maxsize=16)
def volterra_basis(h, grid: TimeGrid, q: int = 6, levels: int = REFINE_LEVELS) -> VolterraBasis:
    """Tabulate the cell-averaged kernel derivative for FBM index ``h.H``."""
    hp = _as_hurst(h)
    part = NoisePartition(grid, levels)
    s, ws = _graded_rule(q)
    width = part.widths
    u = part.edges[:-1, None] + width[:, None] * s[None, :]
    w = width[:, None] * ws[None, :]
    g = hp.H - 0.5
    flat = u.ravel()
    m0 = frac_calc.left_edge_moments(part.edges, flat, g, -g)
    A = hp.cH * flat[:, None] ** g * m0 / width[None, :]
    for arr in (u, w, A):
        arr.setflags(write=False)
    return VolterraBasis(hp, part, u, w, A)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Kernel values indexed by (time node ``i``, noise cell ``j``).

    Entries vanish exactly for cells lying past ``t_i``.
    """

    partition: NoisePartition
    entries: np.ndarray

    @property
    def grid(self) -> TimeGrid:
        return self.partition.grid

    def to_csv(self, path) -> None:
        """Dump nonzero entries as ``row,col,value`` rows."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["row", "col", "value"])
            for i, j in zip(*np.nonzero(self.entries)):
                wr.writerow([int(i), int(j), repr(float(self.entries[i, j]))])


@lru_cache(maxsize=16)
def volterra_kernel(h, grid: TimeGrid, q: int = 6, levels: int = REFINE_LEVELS) -> KernelMatrix:
    """Cell averages ``(1/|c_j|) int_{c_j} K_H(t_i, s) ds`` for all nodes ``t_i``.

    Uses ``K_H(t, s) = int_s^t d/du K_H(u, s) du`` with the inner singular
    integral done exactly over ``s`` and the outer one by graded quadrature.
    """
    basis = volterra_basis(h, grid, q, levels)
    part = basis.partition
    per_cell = part.aggregate(basis.cell_integrated().T).T
    K = np.zeros((grid.n + 1, part.size))
    K[1:] = np.cumsum(per_cell, axis=0)
    K[np.arange(grid.n + 1)[:, None] <= part.parent[None, :]] = 0.0
    K.setflags(write=False)
    return KernelMatrix(part, K)


# ---------------------------------------------------------------------------
# Rosenblatt kernel


def rosenblatt_kernel(h, t: float, y1: float, y2: float) -> float:
    """Pointwise Rosenblatt kernel ``K^H_t(y1, y2)`` by adaptive Jacobi-weighted quadrature."""
    hp = _as_hurst(h)
    if y1 <= 0 or y2 <= 0:
        raise ValueError("Rosenblatt kernel is singular at y = 0; use cell averages")
    lo, other = max(y1, y2), min(y1, y2)
    if lo >= t:
        return 0.0
    if lo == other:
        raise ValueError("Rosenblatt kernel diverges on the diagonal y1 == y2")
    a = hp.H / 2 - 1.0

    def smooth(u):
        return u**hp.H * (u - other) ** a

    val, _ = integrate.quad(smooth, lo, t, weight="alg", wvar=(a, 0.0), limit=200, epsabs=0, epsrel=1e-11)
    return hp.eH * (y1 * y2) ** (-hp.H / 2) * val


def rosenblatt_kernel_matrix(h, grid: TimeGrid, t_index: int | None = None, q: int = 6) -> np.ndarray:
    """Cell-averaged Rosenblatt kernel at ``t_i`` over pairs of noise cells.

    By Fubini the average over cells ``j x k`` equals
    ``d_H int_0^t abar(u, j) abar(u, k) du`` with ``abar`` the cell-averaged
    derivative of the companion Volterra kernel.
    """
    hp = _as_hurst(h)
    i = grid.n if t_index is None else int(t_index)
    basis = volterra_basis(hp.companion, grid, q)
    r = basis.rows_before(i)
    A = basis.A[: r * basis.q]
    w = basis.w[:r].ravel()
    return hp.dH * (A.T * w) @ A


def rosenblatt_l2_norm_sq(h, grid: TimeGrid, t_index: int | None = None, off_diagonal: bool = False) -> float:
    """``||K^H_t||^2`` on ``[0, t]^2`` from the cell-averaged kernel.

    Twice this number is the variance of the discrete double integral built
    by :func:`rosenblatt_path`.  ``off_diagonal`` drops the diagonal cells.
    """
    K = rosenblatt_kernel_matrix(h, grid, t_index)
    width = volterra_basis(_as_hurst(h).companion, grid).partition.widths
    sq = K**2
    if off_diagonal:
        sq = sq - np.diag(np.diag(sq))
    return float(width @ sq @ width)


def rosenblatt_variance_oracle(h, t: float = 1.0) -> float:
    """``2 ||K^H_t||^2`` by adaptive quadrature, independent of any grid.

    Integrating out ``y1, y2`` first (the Beta identity) leaves
    ``2 d_H^2 (H'(2H'-1))^2 int int_{[0,t]^2} |u-v|^(2H-2) du dv`` with
    ``H' = H/2 + 1/2``; the inner integral in ``v`` is done with an
    algebraic endpoint weight.
    """
    hp = _as_hurst(h)
    H = hp.H
    hc = H / 2 + 0.5
    c = hc * (2 * hc - 1)

    def inner(u):
        left, _ = integrate.quad(lambda v: 1.0, 0.0, u, weight="alg", wvar=(0.0, 2 * H - 2.0))
        right, _ = integrate.quad(lambda v: 1.0, u, t, weight="alg", wvar=(2 * H - 2.0, 0.0))
        return left + right

    val, _ = integrate.quad(inner, 0.0, t, limit=200, epsrel=1e-11)
    return 2.0 * hp.dH**2 * c**2 * val


def beta_identity_lhs(alpha: float, u: float, v: float, n: int = 512) -> float:
    """Left side of the Beta-function identity, by product integration on ``n`` cells.

    ``(uv)^a / B(1-2a, a) int_0^{min(u,v)} y^(-2a) (u-y)^(a-1) (v-y)^(a-1) dy``;
    the weights ``y^(-2a)`` and ``(min - y)^(a-1)`` are integrated exactly and
    the remaining smooth factor is interpolated linearly.
    """
    if not 0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
    if u == v or u <= 0 or v <= 0:
        raise ValueError("need distinct positive u, v")
    lo, hi = min(u, v), max(u, v)
    grid = TimeGrid(lo, n)
    W = frac_calc.left_weights(grid, np.array([lo]), alpha, -2 * alpha)
    smooth = (hi - grid.nodes) ** (alpha - 1.0)
    integral = float((W @ smooth)[0])
    return (u * v) ** alpha / special.beta(1 - 2 * alpha, alpha) * integral


# ---------------------------------------------------------------------------
# operators built from fractional calculus


def adjoint_op(f: SampledFunction, h, points=None):
    """``(d1K*_{H,T} f)(s) = c_H Gamma(H-1/2) s^-(H-1/2) I^{H-1/2}_{T-}(u^{H-1/2} f)(s)``.

    Returns a node-sampled function carrying the ``s^-(H-1/2)`` weight, or an
    array when ``points`` is given.
    """
    hp = _as_hurst(h)
    g = hp.H - 0.5
    lifted = f.with_values(f.values, power=f.power + g)
    inner = frac_calc.frac_integral(lifted, FracOrder(g, "right"), points)
    scale = hp.cH * math.gamma(g)
    if points is not None:
        x, _ = frac_calc._check_points(f.grid, points)
        with np.errstate(divide="ignore"):
            return scale * x**-g * inner
    return SampledFunction(f.grid, scale * inner.values, power=-g)


def adjoint_op_inverse(psi: SampledFunction, h, points=None):
    """Right inverse ``c_H^-1 Gamma(H-1/2)^-1 s^-(H-1/2) I^-(H-1/2)_{T-}(u^{H-1/2} psi)``."""
    hp = _as_hurst(h)
    g = hp.H - 0.5
    lifted = psi.with_values(psi.values, power=psi.power + g)
    inner = frac_calc.frac_derivative(lifted, FracOrder(g, "right"), points)
    scale = 1.0 / (hp.cH * math.gamma(g))
    if points is not None:
        x, _ = frac_calc._check_points(psi.grid, points)
        return scale * x**-g * inner
    if inner.kind == "step":
        return SampledFunction(psi.grid, scale * inner.values, "step", power=-g)
    return SampledFunction(psi.grid, scale * inner.values, power=-g)


def adjoint_family(f: SampledFunction, h, points="midpoints") -> np.ndarray:
    """``d1K*`` applied to ``f 1_(0, t_i)`` for every node ``t_i``.

    Shape ``(n + 1, len(points))``; row ``i`` is zero at points past ``t_i``.
    """
    hp = _as_hurst(h)
    g = hp.H - 0.5
    x, _ = frac_calc._check_points(f.grid, points)
    fam = frac_calc.right_integral_family(f, g, x, extra_power=g)
    return hp.cH * math.gamma(g) * x[None, :] ** -g * fam


def adjoint_inverse_indicator_family(h, grid: TimeGrid, points="midpoints") -> np.ndarray:
    """``(d1K*)^-1 1_(0, t_i)`` at ``points`` for every node ``t_i``.

    For ``s < t`` the right derivative of ``u^g 1_(0,t)`` is
    ``[(t-s)^-g t^g - g int_s^t (y-s)^-g y^(g-1) dy] / Gamma(1-g)``; it
    vanishes identically for ``s > t``.
    """
    hp = _as_hurst(h)
    g = hp.H - 0.5
    x, _ = frac_calc._check_points(grid, points)
    t = grid.nodes
    p0, _ = frac_calc.right_cell_moments(grid, x, 1.0 - g, g - 1.0)
    cum = np.zeros((grid.n + 1, x.size))
    cum[1:] = np.cumsum(p0, axis=1).T
    gap = t[:, None] - x[None, :]
    live = gap > 0
    out = np.zeros_like(cum)
    out[live] = np.abs(gap[live]) ** -g * np.broadcast_to(t[:, None] ** g, gap.shape)[live] - g * cum[live]
    scale = 1.0 / (hp.cH * math.gamma(g) * math.gamma(1.0 - g))
    return scale * x[None, :] ** -g * out


def kh_operator(phi: SampledFunction, h, q: int = 6) -> SampledFunction:
    """``(K_H phi)(t_i) = int_0^{t_i} K_H(t_i, s) phi(s) ds`` from the cell-averaged kernel matrix."""
    km = volterra_kernel(h, phi.grid, q)
    part = km.partition
    return SampledFunction(phi.grid, km.entries @ (phi(part.midpoints) * part.widths))


def kh_inverse(f: SampledFunction, h) -> SampledFunction:
    """``K_H^-1 f = c_H^-1 Gamma(H-1/2)^-1 x^(H-1/2) I^-(H-1/2)_{0+}(y^-(H-1/2) f')``.

    ``f'`` is the exact (piecewise constant) derivative of the linear
    interpolant; the result is returned at cell midpoints as a step function.
    """
    hp = _as_hurst(h)
    if f.kind != "linear" or f.power != 0:
        raise ValueError("kh_inverse expects a plain node-sampled function")
    if abs(f.values[0]) > 1e-12 * max(1.0, np.abs(f.values).max()):
        raise ValueError("kh_inverse needs f(0) = 0")
    g = hp.H - 0.5
    deriv = SampledFunction(f.grid, np.diff(f.values) / f.grid.dt, kind="step")
    out = frac_calc.weighted_frac_op(deriv, g, "inverse")
    return out * (1.0 / (hp.cH * math.gamma(g)))
