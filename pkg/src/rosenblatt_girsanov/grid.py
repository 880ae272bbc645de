"""Uniform time grids and functions sampled on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``t_i = i * T / n`` of ``[0, T]``."""

    T: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise ValueError(f"horizon T must be positive and finite, got {self.T!r}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"number of steps n must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self) -> float:
        return self.T / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dt

    def index_of(self, t: float) -> int:
        """Index of the node closest to ``t``; raises if ``t`` is not a node."""
        i = int(round(t / self.dt))
        if i < 0 or i > self.n or abs(i * self.dt - t) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"time {t!r} is not a node of {self}")
        return i

    def coarsen(self, factor: int) -> "TimeGrid":
        if factor < 1 or self.n % factor:
            raise ValueError(f"cannot coarsen n={self.n} by {factor}")
        return TimeGrid(self.T, self.n // factor)


#: dyadic splits of the first cell used by default for the driving noise
REFINE_LEVELS = 32


@dataclass(frozen=True)
class NoisePartition:
    """Cells carrying the discrete Wiener noise.

    These are the grid cells, except that the first cell ``(0, dt]`` is split
    dyadically into ``(0, dt 2^-L], (dt 2^-L, dt 2^(1-L)], ..., (dt/2, dt]``.
    The Volterra and Rosenblatt kernels blow up like a power of ``y`` at
    ``y = 0``; a uniform first cell would lose a fraction of the kernel's
    ``L^2`` mass that decays only like ``dt^(1-H)``.  With ``levels = 0`` the
    partition is the plain grid.
    """

    grid: TimeGrid
    levels: int = REFINE_LEVELS

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 0:
            raise ValueError(f"levels must be a non-negative integer, got {self.levels!r}")
        object.__setattr__(self, "levels", int(self.levels))

    @cached_property
    def edges(self) -> np.ndarray:
        dt = self.grid.dt
        head = dt * 2.0 ** -np.arange(self.levels, 0, -1)
        out = np.concatenate([[0.0], head, self.grid.nodes[1:]])
        out.setflags(write=False)
        return out

    @property
    def size(self) -> int:
        return self.grid.n + self.levels

    @cached_property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @cached_property
    def parent(self) -> np.ndarray:
        """Grid cell index of every noise cell."""
        return np.concatenate([np.zeros(self.levels + 1, dtype=int), np.arange(1, self.grid.n)])

    @cached_property
    def last_of_cell(self) -> np.ndarray:
        """Index of the last noise cell inside each grid cell."""
        return np.arange(self.grid.n) + self.levels

    def aggregate(self, values: np.ndarray) -> np.ndarray:
        """Sum noise-cell quantities (last axis) over each grid cell."""
        c = np.cumsum(values, axis=-1)[..., self.last_of_cell]
        return np.diff(c, axis=-1, prepend=0.0)


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """A real function on ``[0, T]`` known through grid samples.

    ``kind="linear"`` stores ``n + 1`` node values joined by linear
    interpolation; ``kind="step"`` stores ``n`` cell values, constant on each
    cell ``(t_{k-1}, t_k]``.  The function represented is
    ``y ** power * interpolant(y)``, which is how singular behaviour at ``t = 0``
    (``y ** -a`` with ``a < 1``) is carried without ever evaluating it at zero.
    """

    grid: TimeGrid
    values: np.ndarray
    kind: str = "linear"
    power: float = 0.0
    label: str = field(default="", compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if self.kind == "linear":
            expected = self.grid.n + 1
        elif self.kind == "step":
            expected = self.grid.n
        else:
            raise ValueError(f"unknown kind {self.kind!r}")
        if values.size != expected:
            raise ValueError(
                f"{self.kind} function on n={self.grid.n} needs {expected} values, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("sampled values must be finite")
        if self.power <= -1:
            raise ValueError(f"weight exponent {self.power} is not integrable at 0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: TimeGrid, func, kind: str = "linear", power: float = 0.0, label: str = ""):
        """Sample ``func`` at nodes (linear) or midpoints (step)."""
        x = grid.nodes if kind == "linear" else grid.midpoints
        return cls(grid, np.asarray(func(x), dtype=float) * np.ones_like(x), kind, power, label)

    @classmethod
    def constant(cls, grid: TimeGrid, c: float = 1.0) -> "SampledFunction":
        return cls(grid, np.full(grid.n + 1, float(c)))

    @property
    def singular_at_zero(self) -> bool:
        return self.power < 0 and (self.kind == "step" or self.values[0] != 0.0)

    def __call__(self, x) -> np.ndarray:
        """Evaluate the represented function at points in ``[0, T]``.

        Points where the weight is singular (``x == 0`` with negative power)
        return ``nan``.
        """
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            g = np.interp(x, self.grid.nodes, self.values)
        else:
            k = np.clip(np.ceil(x / self.grid.dt).astype(int) - 1, 0, self.grid.n - 1)
            g = self.values[k]
        if self.power == 0:
            return g
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(x > 0, x**self.power, np.nan if self.power < 0 else 0.0)
        return w * g

    def with_values(self, values, kind: str | None = None, power: float | None = None) -> "SampledFunction":
        return SampledFunction(
            self.grid,
            values,
            self.kind if kind is None else kind,
            self.power if power is None else power,
            self.label,
        )

    def __neg__(self):
        return self.with_values(-self.values)

    def __mul__(self, c: float):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__
