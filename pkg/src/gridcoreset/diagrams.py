"""Power diagrams certifying optimality of weight-constrained assignments.

An optimal transportation solution leaves behind cluster potentials mu_i;
with cell offsets gamma_i = -mu_i, every support point of cluster i
minimizes the power distance ||x - s_i||^2 + gamma_i.  Checking that is a
direct optimality certificate independent of the solver's internals.
Offsets only matter up to a common additive constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import as_resolution, coords_array
from .model import Clustering

# Power-distance differences below this count as a tie (a cell boundary).
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class PowerDiagram:
    """Sites plus additive cell offsets; cell i collects the points where
    ||x - s_i||^2 + gamma_i is minimal."""

    sites: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=np.float64)
        if sites.ndim == 1:
            sites = sites.reshape(-1, 1)
        gamma = np.asarray(self.gamma, dtype=np.float64).ravel()
        if sites.shape[0] != gamma.size:
            raise ValueError(f"{sites.shape[0]} sites but {gamma.size} offsets")
        if not (np.all(np.isfinite(sites)) and np.all(np.isfinite(gamma))):
            raise ValueError("sites and offsets must be finite")
        sites.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "gamma", gamma)

    @property
    def k(self) -> int:
        return self.sites.shape[0]

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    def powers(self, points) -> np.ndarray:
        """Power distances as a (k, m) matrix."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif pts.ndim == 1:
            pts = pts.reshape(-1, 1) if self.d == 1 else pts.reshape(1, -1)
        out = np.empty((self.k, pts.shape[0]), dtype=np.float64)
        for i in range(self.k):
            diff = pts - self.sites[i]
            out[i] = np.einsum("nd,nd->n", diff, diff) + self.gamma[i]
        return out


def from_duals(sites, duals) -> PowerDiagram:
    """Diagram induced by cluster potentials: gamma_i = -mu_i."""
    sites = np.asarray(sites, dtype=np.float64)
    duals = np.asarray(duals, dtype=np.float64).ravel()
    if sites.ndim == 1:
        sites = sites.reshape(-1, 1)
    if sites.shape[0] != duals.size:
        raise ValueError(f"{sites.shape[0]} sites but {duals.size} duals")
    return PowerDiagram(sites=sites, gamma=-duals)


def assign(diagram: PowerDiagram, points):
    """Cell label and boundary flag per point.

    The label is the argmin of the power distance (lowest index on ties);
    the flag is set when the two smallest powers differ by at most
    BOUNDARY_TOL, i.e. the point lies on a cell boundary.  A single point
    yields plain (int, bool); an array of points yields two arrays.
    """
    single = np.ndim(points) == 0 if diagram.d == 1 else np.ndim(points) == 1
    pw = diagram.powers(points)
    labels = np.argmin(pw, axis=0)
    if diagram.k == 1:
        boundary = np.zeros(pw.shape[1], dtype=bool)
    else:
        two = np.partition(pw, 1, axis=0)
        boundary = two[1] - two[0] <= BOUNDARY_TOL
    if single:
        return int(labels[0]), bool(boundary[0])
    return labels, boundary


@dataclass(frozen=True)
class CompatibilityReport:
    compatible: bool
    worst_violation: float
    boundary_points: int
    strong: bool


def check_compatibility(C: Clustering, diagram: PowerDiagram, rho,
                        strong: bool = False) -> CompatibilityReport:
    """Whether every support point of every cluster lies in that cluster's cell.

    The violation at a support point is its power distance to its own site
    minus the minimum over all sites; compatible means the worst violation
    is at most BOUNDARY_TOL.  With strong=True, additionally every grid
    point with a unique nearest cell must be fully assigned to that cell;
    points within tolerance of two or more cells are boundary points and
    are exempt.
    """
    rho = as_resolution(rho)
    if C.n != rho.n:
        raise ValueError(f"clustering has {C.n} points, grid has {rho.n}")
    if diagram.k != C.k:
        raise ValueError(f"diagram has {diagram.k} cells, clustering has {C.k} clusters")
    pw = diagram.powers(coords_array(rho))
    mins = pw.min(axis=0)
    worst = 0.0
    if C.rows.size:
        worst = float(np.max(pw[C.rows, C.cols] - mins[C.cols]))
    ok = worst <= BOUNDARY_TOL
    on_boundary = np.count_nonzero(pw <= mins + BOUNDARY_TOL, axis=0) >= 2
    boundary_points = int(np.count_nonzero(on_boundary))

    strong_ok = ok
    if strong and ok:
        # Interior points must be integrally assigned to their unique cell.
        winners = np.argmin(pw, axis=0)
        entry_count = np.bincount(C.cols, minlength=C.n)
        single = entry_count == 1
        interior = ~on_boundary
        if np.any(interior & ~single):
            strong_ok = False
        else:
            by_col = np.argsort(C.cols, kind="stable")
            col_sorted = C.cols[by_col]
            row_sorted = C.rows[by_col]
            val_sorted = C.vals[by_col]
            first = np.searchsorted(col_sorted, np.nonzero(interior)[0])
            if np.any(row_sorted[first] != winners[interior]):
                strong_ok = False
            elif np.any(val_sorted[first] != 1.0):
                strong_ok = False

    return CompatibilityReport(
        compatible=bool(ok if not strong else (ok and strong_ok)),
        worst_violation=worst,
        boundary_points=boundary_points,
        strong=bool(strong),
    )
