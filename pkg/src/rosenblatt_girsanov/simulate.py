"""Wiener increments and the FBM / Rosenblatt paths they drive.

Every path in this package is a deterministic function of one vector of
Gaussian noise on a :class:`NoisePartition`.  The Rosenblatt path is the
double Wiener-Ito integral of the cell-averaged kernel; with ``X(u)`` the
cell-discretized derivative of the companion FBM,

    R_t = d_H int_0^t (X(u)^2 - E X(u)^2) du,

which is the Hermite-renormalized double sum over all pairs of noise cells,
evaluated in ``O(q M^2)`` per path instead of ``O(M^3)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import kernels
from .grid import REFINE_LEVELS, NoisePartition, SampledFunction, TimeGrid
from .kernels import HurstParam, KernelMatrix, _as_hurst

#: stream id of the test ensemble; the oracle ensemble uses ``ORACLE_STREAM``
MAIN_STREAM = 0
ORACLE_STREAM = 1

_CHUNK = 2048


def _philox(seed: int, stream: int, path_index: int) -> np.random.Generator:
    # the key separates (seed, stream); the top counter word separates paths,
    # so no two paths ever share a counter block
    if seed < 0 or path_index < 0 or stream < 0:
        raise ValueError("seed, stream and path_index must be non-negative")
    bg = np.random.Philox(key=np.array([seed, stream], dtype=np.uint64),
                          counter=np.array([0, 0, 0, path_index], dtype=np.uint64))
    return np.random.Generator(bg)


@dataclass(frozen=True, eq=False)
class WienerIncrements:
    """Noise-cell increments of one path, or of a batch of paths (leading axis).

    ``noise[..., c]`` is ``B`` increment over noise cell ``c``; ``dB`` sums them
    back to the grid cells, each of variance ``dt``.
    """

    partition: NoisePartition
    noise: np.ndarray
    seed: int = 0
    path_index: int | np.ndarray = 0
    stream: int = MAIN_STREAM

    def __post_init__(self):
        noise = np.asarray(self.noise, dtype=float)
        if noise.shape[-1] != self.partition.size:
            raise ValueError(
                f"expected {self.partition.size} noise cells, got {noise.shape[-1]}"
            )
        noise.setflags(write=False)
        object.__setattr__(self, "noise", noise)

    @property
    def grid(self) -> TimeGrid:
        return self.partition.grid

    @property
    def dB(self) -> np.ndarray:
        return self.partition.aggregate(self.noise)

    @property
    def batch(self) -> bool:
        return self.noise.ndim == 2

    def wiener_path(self) -> np.ndarray:
        """``B`` at the grid nodes, starting at 0."""
        return _cumulative(self.dB)

    def shifted(self, drift: np.ndarray) -> "WienerIncrements":
        """Increments plus a deterministic drift per noise cell."""
        return replace(self, noise=self.noise + drift)

    def coarsen(self, factor: int) -> "WienerIncrements":
        """The same Brownian path seen on a grid ``factor`` times coarser.

        ``factor`` must be a power of two so that every coarse noise edge is
        also a fine one; the coarse increments are then exact sums.
        """
        if factor < 1 or factor & (factor - 1):
            raise ValueError(f"coarsening factor must be a power of two, got {factor}")
        part = NoisePartition(self.grid.coarsen(factor), self.partition.levels)
        fine = self.partition.edges
        pos = np.searchsorted(fine, part.edges)
        pos = np.minimum(pos, fine.size - 1)
        if not np.allclose(fine[pos], part.edges, rtol=1e-12, atol=0.0):
            raise ValueError("coarse noise edges are not nested in the fine ones")
        B = _cumulative(self.noise)
        return replace(self, partition=part, noise=np.diff(B[..., pos], axis=-1))

    def __len__(self) -> int:
        return self.noise.shape[0] if self.batch else 1


def _cumulative(cells: np.ndarray) -> np.ndarray:
    out = np.zeros(cells.shape[:-1] + (cells.shape[-1] + 1,))
    np.cumsum(cells, axis=-1, out=out[..., 1:])
    return out


def _bridge_refine(first: np.ndarray, dt: float, z: np.ndarray) -> np.ndarray:
    """Split the first-cell increment into dyadic sub-increments.

    Brownian bridge: given ``B(a) = b``, ``B(a/2) = b/2 + sqrt(a)/2 * z``.
    Output cells run from the innermost ``(0, dt 2^-L]`` outwards.
    """
    levels = z.shape[-1]
    out = np.empty(first.shape + (levels + 1,))
    b = first
    a = dt
    for k in range(levels):
        half = 0.5 * b + 0.5 * np.sqrt(a) * z[..., k]
        out[..., levels - k] = b - half
        b = half
        a *= 0.5
    out[..., 0] = b
    return out


def gen_increments(grid: TimeGrid, seed: int, path_index, levels: int = REFINE_LEVELS,
                   stream: int = MAIN_STREAM) -> WienerIncrements:
    """Reproducible Gaussian increments keyed by ``(seed, stream, path_index)``.

    ``path_index`` may be an int or a sequence of ints; a sequence gives a
    batch whose rows equal the single-path draws.
    """
    part = NoisePartition(grid, levels)
    idx = np.atleast_1d(np.asarray(path_index, dtype=np.int64))
    if idx.ndim != 1:
        raise ValueError("path_index must be an int or a 1-d sequence")
    z = np.empty((idx.size, grid.n + levels))
    for r, p in enumerate(idx):
        z[r] = _philox(int(seed), int(stream), int(p)).standard_normal(grid.n + levels)
    sq = np.sqrt(grid.dt)
    dB = sq * z[:, : grid.n]
    head = _bridge_refine(dB[:, 0], grid.dt, z[:, grid.n:])
    noise = np.concatenate([head, dB[:, 1:]], axis=1)
    if np.ndim(path_index) == 0:
        return WienerIncrements(part, noise[0], int(seed), int(idx[0]), int(stream))
    return WienerIncrements(part, noise, int(seed), idx, int(stream))


def _check_partition(w: WienerIncrements, part: NoisePartition):
    if w.partition != part:
        raise ValueError(f"increments live on {w.partition}, kernel on {part}")


def fbm_path(w: WienerIncrements, h, km: KernelMatrix | None = None) -> np.ndarray:
    """``B^H_{t_i} = sum_c K_H(t_i, c) xi_c`` with cell-averaged kernel entries."""
    hp = _as_hurst(h)
    if km is None:
        km = kernels.volterra_kernel(hp, w.grid, levels=w.partition.levels)
    _check_partition(w, km.partition)
    return w.noise @ km.entries.T


def _rosenblatt_rows(noise: np.ndarray, hp: HurstParam, basis: kernels.VolterraBasis,
                     centered: bool = True) -> np.ndarray:
    part = basis.partition
    A = basis.A
    mean_sq = (A**2) @ part.widths if centered else 0.0
    out = np.empty((noise.shape[0], part.grid.n + 1))
    for lo in range(0, noise.shape[0], _CHUNK):
        X = noise[lo: lo + _CHUNK] @ A.T
        per_node = (X**2 - mean_sq).reshape(X.shape[0], part.size, basis.q)
        per_cell = np.einsum("rmq,mq->rm", per_node, basis.w)
        out[lo: lo + _CHUNK] = hp.dH * _cumulative(part.aggregate(per_cell))
    return out


def rosenblatt_path(w: WienerIncrements, h, grid: TimeGrid | None = None) -> np.ndarray:
    """Rosenblatt path ``R^H`` at the grid nodes built from ``w``.

    Equals ``sum_{j,k} Kbar_t(j, k) (xi_j xi_k - delta_jk |c_j|)`` over all
    pairs of noise cells, i.e. the conditional expectation of the exact
    double integral given the discrete noise.
    """
    hp = _as_hurst(h)
    if grid is not None and grid != w.grid:
        raise ValueError("grid does not match the increments")
    basis = kernels.volterra_basis(hp.companion, w.grid, levels=w.partition.levels)
    _check_partition(w, basis.partition)
    rows = _rosenblatt_rows(np.atleast_2d(w.noise), hp, basis)
    return rows if w.batch else rows[0]


@lru_cache(maxsize=16)
def _integrand_family(f: SampledFunction, h, part: NoisePartition) -> np.ndarray:
    # keyed on object identity of f, which is immutable
    out = kernels.adjoint_family(f, h, part.midpoints)
    out.setflags(write=False)
    return out


def wiener_integral_fbm(f: SampledFunction, w: WienerIncrements, h, upto: str = "T"):
    """``int_0^T f dB^H = sum_c (d1K* f)(s_c) xi_c`` with ``s_c`` the noise-cell midpoints.

    ``upto="nodes"`` returns the running integral ``int_0^{t_i}`` at every
    node instead of the total.
    """
    if f.grid != w.grid:
        raise ValueError("integrand and increments live on different grids")
    fam = _integrand_family(f, h, w.partition)
    if upto == "T":
        return w.noise @ fam[-1]
    if upto == "nodes":
        return w.noise @ fam.T
    raise ValueError(f"upto must be 'T' or 'nodes', got {upto!r}")


def recover_wiener(fbm: np.ndarray, h, grid: TimeGrid) -> np.ndarray:
    """Rebuild ``B`` from an FBM path through the right inverse of ``d1K*``.

    ``B_t = int_0^T ((d1K*)^-1 1_(0,t))(s) dB^H_s``, discretized with the
    integrand at cell midpoints against the grid increments of ``fbm``.
    Works on one path or a batch (leading axis).
    """
    fbm = np.asarray(fbm, dtype=float)
    if fbm.shape[-1] != grid.n + 1:
        raise ValueError(f"path needs {grid.n + 1} node values, got {fbm.shape[-1]}")
    if not np.all(np.isfinite(fbm)):
        raise ValueError("FBM path has non-finite values")
    psi = kernels.adjoint_inverse_indicator_family(h, grid, "midpoints")
    if not np.all(np.isfinite(psi)):
        raise FloatingPointError(f"inverse operator is not finite on n={grid.n}")
    return np.diff(fbm, axis=-1) @ psi.T


@dataclass(eq=False)
class PathBundle:
    """Paths driven by one set of increments (single path or batch).

    ``fbm`` is ``B^{H/2+1/2}``; shifted fields are filled by the girsanov module.
    """

    w: WienerIncrements
    hurst: HurstParam
    fbm: np.ndarray
    rosenblatt: np.ndarray
    shifted_direct: np.ndarray | None = None
    shifted_tilde: np.ndarray | None = None
    log_density: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def grid(self) -> TimeGrid:
        return self.w.grid

    def to_csv(self, path) -> None:
        """Write ``path_index,t,B,B_fbm,R`` rows with 17 significant digits."""
        write_paths_csv(path, self)


def build_bundle(w: WienerIncrements, h) -> PathBundle:
    hp = _as_hurst(h)
    return PathBundle(w, hp, fbm_path(w, hp.companion), rosenblatt_path(w, hp))


def simulate_bundle(h, grid: TimeGrid, seed: int, path_index, levels: int = REFINE_LEVELS,
                    stream: int = MAIN_STREAM) -> PathBundle:
    return build_bundle(gen_increments(grid, seed, path_index, levels, stream), h)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_paths_csv(path, bundle: PathBundle) -> None:
    grid = bundle.grid
    B = np.atleast_2d(bundle.w.wiener_path())
    fbm = np.atleast_2d(bundle.fbm)
    R = np.atleast_2d(bundle.rosenblatt)
    idx = np.atleast_1d(bundle.w.path_index)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["path_index", "t", "B", "B_fbm", "R"])
        for r, p in enumerate(idx):
            for i, t in enumerate(grid.nodes):
                wr.writerow([int(p), _fmt(t), _fmt(B[r, i]), _fmt(fbm[r, i]), _fmt(R[r, i])])


class RosenblattSimulator(TransformerMixin, BaseEstimator):
    """Estimator-style front end: ``fit`` builds the kernels, ``transform`` maps noise to paths.

    ``transform`` takes noise-cell increments of shape ``(n_paths, n + levels)``
    (see :meth:`sample`) and returns paths at the ``n + 1`` grid nodes;
    ``output`` selects the Rosenblatt path or the companion FBM.
    """

    def __init__(self, H=0.75, T=1.0, n=256, levels=REFINE_LEVELS, seed=0, output="rosenblatt"):
        self.H = H
        self.T = T
        self.n = n
        self.levels = levels
        self.seed = seed
        self.output = output

    def fit(self, X=None, y=None):
        if self.output not in ("rosenblatt", "fbm"):
            raise ValueError(f"output must be 'rosenblatt' or 'fbm', got {self.output!r}")
        self.hurst_ = kernels.make_hurst(self.H)
        self.grid_ = TimeGrid(self.T, self.n)
        self.partition_ = NoisePartition(self.grid_, self.levels)
        self.basis_ = kernels.volterra_basis(self.hurst_.companion, self.grid_, levels=self.levels)
        self.n_features_in_ = self.partition_.size
        return self

    def sample(self, n_paths: int, start: int = 0, stream: int = MAIN_STREAM) -> np.ndarray:
        """Noise for paths ``start .. start + n_paths - 1``."""
        check_is_fitted(self)
        w = gen_increments(self.grid_, self.seed, np.arange(start, start + n_paths), self.levels, stream)
        return np.array(w.noise)

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} noise cells, got {X.shape[1]}")
        w = WienerIncrements(self.partition_, X, self.seed, np.arange(X.shape[0]))
        if self.output == "fbm":
            return fbm_path(w, self.hurst_.companion)
        return rosenblatt_path(w, self.hurst_)
