"""Riemann-Liouville fractional integrals and derivatives on a uniform grid.

All operators use product integration: inside each cell the sampled function
is linear (or constant, for step functions) and the singular factors
``(x - y) ** (beta - 1)`` and ``y ** gamma`` are integrated exactly, via
regularized incomplete Beta functions for left-sided operators and
Gauss-Jacobi rules for right-sided ones.  Derivatives are exact derivatives of
the product-integrated antiderivative, never differences of raw samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .grid import SampledFunction, TimeGrid

_GL_POINTS = 8


@dataclass(frozen=True)
class FracOrder:
    """Order ``alpha`` and side (``"left"`` = 0+, ``"right"`` = T-)."""

    alpha: float
    side: str = "left"

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")
        if not np.isfinite(self.alpha):
            raise ValueError("order must be finite")


# ---------------------------------------------------------------------------
# cell moments


def _left_moments(x, lo, hi, beta, gamma):
    """``int_lo^hi (x - y)**(beta-1) * y**gamma dy`` for ``0 <= lo <= hi <= x``."""
    x, lo, hi = np.broadcast_arrays(*map(np.asarray, (x, lo, hi)))
    out = np.zeros(x.shape)
    ok = hi > lo
    if gamma == 0:
        out[ok] = ((x[ok] - lo[ok]) ** beta - np.maximum(x[ok] - hi[ok], 0.0) ** beta) / beta
        return out
    xs, zl, zh = x[ok], lo[ok] / x[ok], np.minimum(hi[ok] / x[ok], 1.0)
    a = gamma + 1.0
    upper = zl >= 0.5
    diff = np.where(
        upper,
        special.betaincc(a, beta, zl) - special.betaincc(a, beta, zh),
        special.betainc(a, beta, zh) - special.betainc(a, beta, zl),
    )
    out[ok] = xs ** (beta + gamma) * special.beta(a, beta) * diff
    return out


@lru_cache(maxsize=8)
def _gauss_legendre(q):
    t, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (t + 1.0), 0.5 * w


@lru_cache(maxsize=32)
def _gauss_jacobi(q, b):
    # weight s**b on (0, 1)
    t, w = special.roots_jacobi(q, 0.0, b)
    return 0.5 * (t + 1.0), w * 0.5 ** (b + 1.0)


def _right_moments(x, lo, hi, beta, gamma, p):
    """``int_max(lo,x)^hi (y - x)**(beta-1) * y**gamma * (y - lo)**p dy``, p in {0, 1}.

    Requires ``x <= hi``.  Exact for ``gamma == 0``; otherwise a Gauss-Jacobi
    rule absorbs ``(y - x)**(beta-1)`` on the cell that contains ``x`` and a
    Gauss-Legendre rule handles the smooth cells above it.
    """
    x, lo, hi = np.broadcast_arrays(*map(np.asarray, (x, lo, hi)))
    a = np.maximum(lo, x)
    out = np.zeros(x.shape)
    ok = hi > a
    if not np.any(ok):
        return out
    x, lo, hi, a = x[ok], lo[ok], hi[ok], a[ok]
    if gamma == 0:
        # (y - lo) = (y - x) - (lo - x)
        m0 = ((hi - x) ** beta - (a - x) ** beta) / beta
        if p == 0:
            out[ok] = m0
        else:
            m1 = ((hi - x) ** (beta + 1) - (a - x) ** (beta + 1)) / (beta + 1)
            out[ok] = m1 - (lo - x) * m0
        return out
    res = np.empty(x.shape)
    touching = a == x
    if np.any(touching):
        s, w = _gauss_jacobi(_GL_POINTS, beta - 1.0)
        xs, hs, ls = x[touching], hi[touching], lo[touching]
        L = hs - xs
        y = xs[:, None] + L[:, None] * s
        with np.errstate(divide="ignore"):
            g = y**gamma * (y - ls[:, None]) ** p
        res[touching] = L**beta * (g @ w)
        zero = touching.copy()
        zero[touching] = xs == 0.0
        if np.any(zero):
            # y**(beta-1+gamma) * y**p on (0, hi): closed form
            e = beta + gamma + p
            res[zero] = hi[zero] ** e / e
    far = ~touching
    if np.any(far):
        s, w = _gauss_legendre(_GL_POINTS)
        xs, ls, hs = x[far], lo[far], hi[far]
        L = hs - ls
        y = ls[:, None] + L[:, None] * s
        g = (y - xs[:, None]) ** (beta - 1.0) * y**gamma * (y - ls[:, None]) ** p
        res[far] = L * (g @ w)
    out[ok] = res
    return out


def _cells(grid: TimeGrid):
    y = grid.nodes
    return y[:-1], y[1:]


# ---------------------------------------------------------------------------
# weight matrices: rows are evaluation points, columns are nodes (hat basis)
# or cells (step basis)


def _named(grid, x):
    for name in ("nodes", "midpoints"):
        ref = getattr(grid, name)
        if x.shape == ref.shape and (x is ref or np.array_equal(x, ref)):
            return name
    return None


def left_weights(grid: TimeGrid, x, beta, gamma, kind="linear"):
    """Matrix ``W`` with ``int_0^x (x-y)**(beta-1) y**gamma f(y) dy = W @ f``."""
    x = np.asarray(x, dtype=float)
    name = _named(grid, x)
    if name is not None:
        return _left_weights_cached(grid, name, float(beta), float(gamma), kind)
    return _left_weights(grid, x, beta, gamma, kind)


@lru_cache(maxsize=64)
def _left_weights_cached(grid, name, beta, gamma, kind):
    W = _left_weights(grid, getattr(grid, name), beta, gamma, kind)
    W.setflags(write=False)
    return W


def _left_weights(grid, x, beta, gamma, kind):
    m0 = _left_cell_moments(grid, x, beta, gamma)
    if kind == "step":
        return m0
    m1 = _left_cell_moments(grid, x, beta, gamma + 1.0)
    lo, hi = _cells(grid)
    dt = grid.dt
    W = np.zeros((x.size, grid.n + 1))
    W[:, :-1] += (hi[None, :] * m0 - m1) / dt
    W[:, 1:] += (m1 - lo[None, :] * m0) / dt
    return W


def _left_cell_moments(grid, x, beta, gamma):
    """Grid-cell version of :func:`left_edge_moments`."""
    return left_edge_moments(grid.nodes, x, beta, gamma)


def left_edge_moments(edges, x, beta, gamma):
    """``int_{cell c, y < x} (x-y)**(beta-1) y**gamma dy`` for all points and cells.

    Cells are ``(edges[c], edges[c+1]]``.

    The regularized incomplete Beta function is evaluated once per
    (point, node) pair and differenced along the cells; values with
    ``y/x >= 1/2`` go through the complementary function to keep precision
    where the kernel singularity sits.
    """
    edges = np.asarray(edges, dtype=float)
    x = np.asarray(x, dtype=float)
    if gamma == 0:
        lo, hi = edges[:-1], edges[1:]
        X = x[:, None]
        return _left_moments(X, np.minimum(lo[None, :], X), np.minimum(hi[None, :], X), beta, 0.0)
    a = gamma + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        Z = np.where(x[:, None] > 0, edges[None, :] / x[:, None], 1.0)
    Z = np.minimum(Z, 1.0)
    low = Z < 0.5
    inner = (Z > 0) & (Z < 1)
    I = np.zeros(Z.shape)
    Ic = np.zeros(Z.shape)
    m = low & inner
    I[m] = special.betainc(a, beta, Z[m])
    m = ~low & inner
    Ic[m] = special.betaincc(a, beta, Z[m])
    I = np.where(low, I, 1.0 - Ic)
    Ic = np.where(low, 1.0 - I, Ic)
    upper_cell = ~low[:, :-1]
    diff = np.where(upper_cell, Ic[:, :-1] - Ic[:, 1:], I[:, 1:] - I[:, :-1])
    scale = np.zeros(x.shape)
    pos = x > 0
    scale[pos] = x[pos] ** (beta + gamma) * special.beta(a, beta)
    return scale[:, None] * diff


def right_cell_moments(grid: TimeGrid, x, beta, gamma):
    """Per-cell right moments ``(P0, P1)``, each of shape ``(len(x), n)``."""
    x = np.asarray(x, dtype=float)
    name = _named(grid, x)
    if name is not None:
        return _right_moments_cached(grid, name, float(beta), float(gamma))
    return _right_cell_moments(grid, x, beta, gamma)


@lru_cache(maxsize=64)
def _right_moments_cached(grid, name, beta, gamma):
    p0, p1 = _right_cell_moments(grid, getattr(grid, name), beta, gamma)
    p0.setflags(write=False)
    p1.setflags(write=False)
    return p0, p1


def _right_cell_moments(grid, x, beta, gamma):
    lo, hi = _cells(grid)
    X = np.broadcast_to(x[:, None], (x.size, grid.n))
    LO = np.broadcast_to(lo[None, :], X.shape)
    HI = np.broadcast_to(hi[None, :], X.shape)
    above = HI > X
    p0 = np.zeros(X.shape)
    p1 = np.zeros(X.shape)
    p0[above] = _right_moments(X[above], LO[above], HI[above], beta, gamma, 0)
    p1[above] = _right_moments(X[above], LO[above], HI[above], beta, gamma, 1)
    return p0, p1


def _hat_from_cells(p0, p1, dt, n):
    W = np.zeros((p0.shape[0], n + 1))
    W[:, :-1] += p0 - p1 / dt
    W[:, 1:] += p1 / dt
    return W


def right_weights(grid: TimeGrid, x, beta, gamma, kind="linear"):
    """Matrix ``W`` with ``int_x^T (y-x)**(beta-1) y**gamma f(y) dy = W @ f``."""
    p0, p1 = right_cell_moments(grid, x, beta, gamma)
    if kind == "step":
        return p0
    return _hat_from_cells(p0, p1, grid.dt, grid.n)


# ---------------------------------------------------------------------------
# evaluation helpers


def _check_points(grid: TimeGrid, points, step=False):
    if points is None:
        if step:
            return grid.midpoints, True
        return grid.nodes, True
    if isinstance(points, str):
        if points not in ("nodes", "midpoints"):
            raise ValueError(f"unknown point set {points!r}")
        return getattr(grid, points), False
    x = np.atleast_1d(np.asarray(points, dtype=float))
    if np.any(x < 0) or np.any(x > grid.T * (1 + 1e-12)):
        raise ValueError("evaluation points must lie in [0, T]")
    return np.minimum(x, grid.T), False


def _check_function(f: SampledFunction):
    if not isinstance(f, SampledFunction):
        raise TypeError("expected a SampledFunction")


def _as_nodes(grid, values, power=0.0, node0=None):
    """Wrap node values of ``x**power * g(x)`` as a sampled function.

    ``values`` are the full function values; they are divided by the weight at
    interior nodes.  An undefined ``g(0)`` is linearly extrapolated.
    """
    values = np.array(values, dtype=float)
    if power:
        values[1:] /= grid.nodes[1:] ** power
    if node0 is None or not np.isfinite(node0):
        values[0] = 2.0 * values[1] - values[2]
    else:
        values[0] = node0
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite values at interior nodes")
    return SampledFunction(grid, values, power=power)


def _lowered_power(power, alpha):
    """Weight exponent of a left derivative of order ``alpha``; kept integrable."""
    p = power - alpha
    return p if p > -1.0 else 0.0


def _as_cells(grid, values, power=0.0):
    """Wrap midpoint values of ``x**power * g(x)`` as a step function."""
    values = np.array(values, dtype=float)
    if power:
        values /= grid.midpoints**power
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite values at cell midpoints")
    return SampledFunction(grid, values, kind="step", power=power)


def _slopes(f: SampledFunction):
    return np.diff(f.values) / f.grid.dt


def _jumps(f: SampledFunction):
    # jump at interior node t_c between cell c and cell c+1 (c = 1..n-1)
    return np.diff(f.values)


def _left_integral_raw(f: SampledFunction, x, beta, extra_gamma=0.0):
    """``int_0^x (x-y)**(beta-1) y**extra * f(y) dy`` (no Gamma normalisation)."""
    W = left_weights(f.grid, x, beta, f.power + extra_gamma, f.kind)
    return W @ f.values


def _left_derivative_raw(f: SampledFunction, x, beta, extra_gamma=0.0):
    """``d/dx int_0^x (x-y)**(beta-1) y**gamma f(y) dy`` at ``x > 0``.

    Uses ``(beta+gamma)/x * int (x-y)**(beta-1) y**gamma f
    + 1/x * int (x-y)**(beta-1) y**(gamma+1) f'(y) dy``.
    """
    gamma = f.power + extra_gamma
    grid = f.grid
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        first = (beta + gamma) * _left_integral_raw(f, x, beta, extra_gamma) / x
        if f.kind == "linear":
            S = left_weights(grid, x, beta, gamma + 1.0, "step")
            second = S @ _slopes(f) / x
        else:
            yc = grid.nodes[1:-1]
            d = x[:, None] - yc[None, :]
            K = np.where(d > 0, np.abs(d) ** (beta - 1.0), 0.0) * yc[None, :] ** (gamma + 1.0)
            second = K @ _jumps(f) / x
    return first + second


def _right_integral_raw(f: SampledFunction, x, beta, extra_gamma=0.0):
    W = right_weights(f.grid, x, beta, f.power + extra_gamma, f.kind)
    return W @ f.values


def _right_derivative_raw(f: SampledFunction, x, beta, extra_gamma=0.0):
    """``-d/dx int_x^T (y-x)**(beta-1) y**gamma f(y) dy`` at ``x < T``.

    Equals ``(T-x)**(beta-1) T**gamma f(T-) - int_x^T (y-x)**(beta-1) (y**gamma f)' dy``.
    """
    gamma = f.power + extra_gamma
    grid = f.grid
    T = grid.T
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        boundary = np.where(T > x, (T - x) ** (beta - 1.0), np.inf) * T**gamma * f.values[-1]
    inner = np.zeros(x.size)
    if gamma != 0:
        inner += gamma * (right_weights(grid, x, beta, gamma - 1.0, f.kind) @ f.values)
    if f.kind == "linear":
        inner += right_weights(grid, x, beta, gamma, "step") @ _slopes(f)
    else:
        yc = grid.nodes[1:-1]
        d = yc[None, :] - x[:, None]
        K = np.where(d > 0, np.abs(d) ** (beta - 1.0), 0.0) * yc[None, :] ** gamma
        inner += K @ _jumps(f)
    return boundary - inner


# ---------------------------------------------------------------------------
# public operators


def frac_integral(f: SampledFunction, order: FracOrder, points=None):
    """Riemann-Liouville fractional integral of order ``order.alpha > 0``.

    Returns a node-sampled :class:`SampledFunction` when ``points`` is None,
    otherwise an array of values at ``points``.
    """
    _check_function(f)
    if order.alpha <= 0:
        raise ValueError(f"integral order must be positive, got {order.alpha}")
    x, on_nodes = _check_points(f.grid, points)
    raw = _left_integral_raw if order.side == "left" else _right_integral_raw
    vals = raw(f, x, order.alpha) / math.gamma(order.alpha)
    if not on_nodes:
        return vals
    if order.side == "right":
        return _as_nodes(f.grid, vals, 0.0, vals[0])
    # left integral of y**p g behaves like x**(p + alpha) at the origin
    return _as_nodes(f.grid, vals, f.power + order.alpha)


def frac_derivative(f: SampledFunction, order: FracOrder, points=None):
    """Riemann-Liouville fractional derivative ``d/dx I^{1-alpha} f``, ``0 < alpha < 1``.

    The value at the singular endpoint (``t = 0`` for the left derivative,
    ``t = T`` for the right one) is not defined by the scheme; on nodes it is
    linearly extrapolated from the neighbouring interior nodes.
    """
    _check_function(f)
    if not 0 < order.alpha < 1:
        raise ValueError(f"derivative order must lie in (0, 1), got {order.alpha}")
    beta = 1.0 - order.alpha
    step = f.kind == "step"
    x, on_nodes = _check_points(f.grid, points, step)
    g = math.gamma(beta)
    if order.side == "left":
        vals = _left_derivative_raw(f, x, beta) / g
        if not on_nodes:
            return vals
        if step:
            return _as_cells(f.grid, vals, _lowered_power(f.power, order.alpha))
        return _as_nodes(f.grid, vals, _lowered_power(f.power, order.alpha))
    vals = _right_derivative_raw(f, x, beta) / g
    if not on_nodes:
        return vals
    if step:
        return _as_cells(f.grid, vals)
    vals = np.array(vals)
    vals[-1] = 2.0 * vals[-2] - vals[-3]
    return _as_nodes(f.grid, vals, 0.0, vals[0])


def weighted_frac_op(f: SampledFunction, alpha: float, direction: str = "forward", points=None):
    """Weighted (Kober-Erdelyi type) operator ``x**a I^{+-a}_{0+}(y**-a f)``.

    ``direction="forward"`` applies the fractional integral, ``"inverse"`` the
    fractional derivative; the two are mutually inverse for ``0 < a < 1/2``.
    """
    _check_function(f)
    if not 0 < alpha < 0.5:
        raise ValueError(f"weighted operator needs alpha in (0, 1/2), got {alpha}")
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    step = f.kind == "step" and direction == "inverse"
    x, on_nodes = _check_points(f.grid, points, step)
    if direction == "forward":
        core = _left_integral_raw(f, x, alpha, -alpha) / math.gamma(alpha)
    else:
        core = _left_derivative_raw(f, x, 1.0 - alpha, -alpha) / math.gamma(1.0 - alpha)
    with np.errstate(invalid="ignore"):
        vals = x**alpha * core
    if not on_nodes:
        return vals
    if direction == "forward":
        return _as_nodes(f.grid, vals, f.power + alpha)
    if step:
        return _as_cells(f.grid, vals, _lowered_power(f.power, alpha))
    return _as_nodes(f.grid, vals, _lowered_power(f.power, alpha))


def right_integral_family(f: SampledFunction, alpha: float, points, extra_power: float = 0.0):
    """Right integrals of ``y**extra * f`` truncated at every node.

    Row ``i`` holds ``int_x^{t_i} (y-x)**(alpha-1) y**extra f(y) dy / Gamma(alpha)``
    at each point ``x`` (zero where ``x >= t_i``); shape ``(n + 1, len(points))``.
    """
    _check_function(f)
    grid = f.grid
    x, _ = _check_points(grid, points)
    p0, p1 = right_cell_moments(grid, x, alpha, f.power + extra_power)
    if f.kind == "step":
        contrib = p0 * f.values[None, :]
    else:
        v = f.values
        contrib = p0 * v[None, :-1] + p1 / grid.dt * np.diff(v)[None, :]
    out = np.zeros((grid.n + 1, x.size))
    out[1:] = np.cumsum(contrib, axis=1).T
    out[x[None, :] >= grid.nodes[:, None]] = 0.0
    return out / math.gamma(alpha)


def integration_by_parts_check(f: SampledFunction, g: SampledFunction, alpha: float):
    """Both sides of ``int f I^a_{0+} g = int (I^a_{T-} f) g``, computed independently.

    Each side integrates the product of a sampled function with a fractional
    integral evaluated at Gauss-Legendre points inside every cell.
    """
    _check_function(f)
    _check_function(g)
    if f.grid != g.grid:
        raise ValueError("functions live on different grids")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    grid = f.grid
    s, w = _gauss_legendre(6)
    lo, _ = _cells(grid)
    y = (lo[:, None] + grid.dt * s[None, :]).ravel()
    wy = np.tile(w * grid.dt, grid.n)
    ga = math.gamma(alpha)
    lhs = np.sum(wy * f(y) * _left_integral_raw(g, y, alpha) / ga)
    rhs = np.sum(wy * _right_integral_raw(f, y, alpha) / ga * g(y))
    return float(lhs), float(rhs)


def discrete_l2_norm(f: SampledFunction) -> float:
    """``L^2([0, T])`` norm of the interpolant (trapezoid on node values)."""
    v = f.values
    if f.kind == "step":
        return float(np.sqrt(np.sum(v**2) * f.grid.dt))
    sq = v**2
    return float(np.sqrt(f.grid.dt * (sq.sum() - 0.5 * (sq[0] + sq[-1]))))
