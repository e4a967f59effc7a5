"""Implicit dyadic grids on [0,1]^d: index arithmetic, merging, batch errors.

A resolution vector rho = (rho_1, ..., rho_d) defines the point set X(rho)
whose points are the centers of the 2^{rho_1} x ... x 2^{rho_d} uniform
voxels of the unit cube.  Points are never materialized unless a caller
asks for them; everything here works on (resolution, index) pairs.

All coordinates, volumes and batch errors are dyadic rationals.  Their
float64 representations are exact for every exponent this package accepts,
so equality assertions downstream are legitimate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

# Exponent cap keeps every dyadic quantity (coordinates, volumes, batch
# errors) exactly representable in float64 and all index math in int64.
MAX_AXIS_EXPONENT = 20
MAX_TOTAL_EXPONENT = 48


@dataclass(frozen=True)
class Resolution:
    """Per-axis dyadic exponents (rho_1, ..., rho_d); axis t has 2^{rho_t} points."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        object.__setattr__(self, "exponents", exps)
        if len(exps) < 1:
            raise ValueError("resolution needs at least one axis")
        for e in exps:
            if e < 0:
                raise ValueError(f"axis exponent must be >= 0, got {e}")
            if e > MAX_AXIS_EXPONENT:
                raise ValueError(f"axis exponent {e} exceeds cap {MAX_AXIS_EXPONENT}")
        if sum(exps) > MAX_TOTAL_EXPONENT:
            raise ValueError(f"total exponent {sum(exps)} exceeds cap {MAX_TOTAL_EXPONENT}")

    @property
    def d(self) -> int:
        return len(self.exponents)

    @property
    def axis_points(self) -> tuple[int, ...]:
        return tuple(1 << e for e in self.exponents)

    @property
    def n(self) -> int:
        return 1 << sum(self.exponents)

    def __le__(self, other: "Resolution") -> bool:
        # componentwise comparison; used for "tau <= rho" preconditions
        if self.d != other.d:
            raise ValueError("resolutions of different dimension are incomparable")
        return all(a <= b for a, b in zip(self.exponents, other.exponents))

    def __str__(self) -> str:
        return "x".join(str(e) for e in self.exponents)


def as_resolution(value) -> Resolution:
    """Coerce an int, iterable of ints, or Resolution to a Resolution."""
    if isinstance(value, Resolution):
        return value
    if isinstance(value, (int, np.integer)):
        return Resolution((int(value),))
    return Resolution(tuple(int(v) for v in value))


@dataclass(frozen=True)
class Batch:
    """Fiber p^{-1}(q) of the merging function: the fine indices of one coarse voxel."""

    q: tuple[int, ...]
    members: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.members)


def _check_index(rho: Resolution, j: tuple[int, ...]) -> tuple[int, ...]:
    j = tuple(int(v) for v in j)
    if len(j) != rho.d:
        raise ValueError(f"index has {len(j)} axes, resolution has {rho.d}")
    for t, (jt, m) in enumerate(zip(j, rho.axis_points)):
        if not 1 <= jt <= m:
            raise ValueError(f"axis {t}: index {jt} out of range [1, {m}]")
    return j


def _check_tau(rho: Resolution, tau: Resolution) -> None:
    if tau.d != rho.d:
        raise ValueError("tau and rho must have the same dimension")
    if not tau <= rho:
        raise ValueError(f"tau={tau.exponents} is not componentwise <= rho={rho.exponents}")


def voxel_volume(rho) -> Fraction:
    """Exact voxel volume nu(rho) = prod_t 2^{-rho_t}."""
    rho = as_resolution(rho)
    return Fraction(1, 1 << sum(rho.exponents))


def flatten_index(rho, j: tuple[int, ...]) -> int:
    """Row-major flat index in [0, n) of a 1-based multi-index (j_1, ..., j_d)."""
    rho = as_resolution(rho)
    j = _check_index(rho, j)
    flat = 0
    for jt, m in zip(j, rho.axis_points):
        flat = flat * m + (jt - 1)
    return flat


def unflatten_index(rho, flat: int) -> tuple[int, ...]:
    """Inverse of flatten_index."""
    rho = as_resolution(rho)
    flat = int(flat)
    if not 0 <= flat < rho.n:
        raise ValueError(f"flat index {flat} out of range [0, {rho.n})")
    axes = []
    for m in reversed(rho.axis_points):
        axes.append(flat % m + 1)
        flat //= m
    return tuple(reversed(axes))


def point_coords(rho, j: tuple[int, ...]) -> tuple[float, ...]:
    """Coordinates of grid point j: x_t = (2*j_t - 1) / 2^{rho_t + 1}.

    Each coordinate is an odd multiple of 2^{-(rho_t+1)}, exact in float64.
    """
    rho = as_resolution(rho)
    j = _check_index(rho, j)
    return tuple((2 * jt - 1) / (1 << (e + 1)) for jt, e in zip(j, rho.exponents))


def coords_array(rho) -> np.ndarray:
    """All n grid points as an (n, d) float64 array in row-major flat order."""
    rho = as_resolution(rho)
    axes = [
        (2.0 * np.arange(1, m + 1) - 1.0) / (1 << (e + 1))
        for m, e in zip(rho.axis_points, rho.exponents)
    ]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def merge_index(rho, tau, j: tuple[int, ...]) -> tuple[int, ...]:
    """The merging function p: per-axis q_t = ceil(j_t / 2^{rho_t - tau_t})."""
    rho = as_resolution(rho)
    tau = as_resolution(tau)
    _check_tau(rho, tau)
    j = _check_index(rho, j)
    return tuple(
        (jt - 1) // (1 << (re - te)) + 1
        for jt, re, te in zip(j, rho.exponents, tau.exponents)
    )


def merge_map(rho, tau) -> np.ndarray:
    """Flat fine index -> flat coarse index for all n points, vectorized."""
    rho = as_resolution(rho)
    tau = as_resolution(tau)
    _check_tau(rho, tau)
    fine_shape = rho.axis_points
    coarse_shape = tau.axis_points
    multi = np.unravel_index(np.arange(rho.n), fine_shape)
    coarse_multi = tuple(
        axis >> (re - te)
        for axis, re, te in zip(multi, rho.exponents, tau.exponents)
    )
    return np.ravel_multi_index(coarse_multi, coarse_shape).astype(np.int64)


def batch_of(rho, tau, q: tuple[int, ...]) -> Batch:
    """All fine indices mapped to coarse index q; cardinality prod_t 2^{rho_t - tau_t}."""
    rho = as_resolution(rho)
    tau = as_resolution(tau)
    _check_tau(rho, tau)
    q = _check_index(tau, q)
    per_axis = []
    for qt, re, te in zip(q, rho.exponents, tau.exponents):
        m = 1 << (re - te)
        per_axis.append(range((qt - 1) * m + 1, qt * m + 1))
    members = tuple(itertools.product(*per_axis))
    return Batch(q=q, members=members)


def batch_centroid(rho, tau, q: tuple[int, ...]) -> tuple[float, ...]:
    """Centroid of batch q, which telescopes to the coarse point itself.

    The batch average along axis t is ((2q_t - 1) * 2^{rho_t - tau_t}) over
    (2^{rho_t - tau_t} * 2^{rho_t + 1}), i.e. exactly (2q_t - 1)/2^{tau_t + 1}.
    """
    rho = as_resolution(rho)
    tau = as_resolution(tau)
    _check_tau(rho, tau)
    q = _check_index(tau, q)
    return point_coords(tau, q)


def batch_error_exact(rho, tau) -> Fraction:
    """Batch error V(tau) as an exact rational: (1/12) nu(tau) sum_t (4^{-tau_t} - 4^{-rho_t})."""
    rho = as_resolution(rho)
    tau = as_resolution(tau)
    _check_tau(rho, tau)
    axis_sum = sum(
        (Fraction(1, 1 << (2 * te)) - Fraction(1, 1 << (2 * re)))
        for re, te in zip(rho.exponents, tau.exponents)
    )
    return Fraction(1, 12) * voxel_volume(tau) * axis_sum


def batch_error(rho, tau) -> float:
    """Batch error V(tau); identical for every batch, zero iff tau = rho.

    The rational value has a power-of-two denominator (4^m - 1 is divisible
    by 3), so the float conversion is exact.
    """
    return float(batch_error_exact(rho, tau))


def scatter(points, weights) -> tuple[np.ndarray, float]:
    """Weighted centroid and weighted squared scatter V(Y) = sum w ||x - c||^2."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64).ravel()
    if pts.shape[0] == 0:
        raise ValueError("scatter of an empty point set")
    if w.shape[0] != pts.shape[0]:
        raise ValueError("weights and points disagree in length")
    total = float(np.sum(w))
    if total <= 0.0:
        raise ValueError("total weight must be positive")
    centroid = (w @ pts) / total
    diff = pts - centroid
    value = float(w @ np.einsum("nd,nd->n", diff, diff))
    return centroid, value


@dataclass(frozen=True)
class HuygensDecomposition:
    """cost = scatter + total_weight * ||centroid - s||^2, with the residual kept."""

    cost: float
    scatter: float
    total_weight: float
    centroid: tuple[float, ...]
    shift_term: float
    residual: float


def huygens_cost(points, weights, s) -> HuygensDecomposition:
    """Weighted squared distance sum to s, checked against its centroid decomposition.

    Raises ArithmeticError if the two sides differ by more than 1e-12 relative;
    they agree identically in exact arithmetic, so a larger gap means the
    inputs broke the float error model (e.g. wildly scaled weights).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64).ravel()
    s_arr = np.asarray(s, dtype=np.float64).ravel()
    if pts.shape[0] == 0:
        raise ValueError("huygens_cost of an empty point set")
    diff = pts - s_arr
    cost = float(w @ np.einsum("nd,nd->n", diff, diff))
    centroid, v = scatter(pts, w)
    total = float(np.sum(w))
    cdiff = centroid - s_arr
    shift = total * float(cdiff @ cdiff)
    residual = abs(cost - (v + shift))
    if residual > 1e-12 * (1.0 + abs(cost)):
        raise ArithmeticError(
            f"centroid decomposition violated: |{cost} - ({v} + {shift})| = {residual}"
        )
    return HuygensDecomposition(
        cost=cost,
        scatter=v,
        total_weight=total,
        centroid=tuple(centroid.tolist()),
        shift_term=shift,
        residual=residual,
    )
