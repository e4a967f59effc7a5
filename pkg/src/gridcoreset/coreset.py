"""Coarse-grid coresets with an exact additive offset.

Merging each fine grid X(rho) batch into its coarse representative loses a
fixed amount of within-batch scatter that is independent of the clustering
and of the sites.  That amount, delta_offset, is an exact dyadic rational,
so "solve coarse, add the offset" reproduces fine costs up to the epsilon
guarantee checked by verify_property_b.  Everything here is isotropic; the
anisotropic case goes through transfer_bound instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .grid import Resolution, as_resolution, merge_map
from .model import Clustering, Instance, NormFamily, cost_sites
from .solver import SolveResult, solve_assignment

PROPERTY_A_TOL = 1e-10
PROPERTY_B_TOL = 1e-9


def _exact_epsilon(epsilon) -> Fraction:
    # Floats are read as their decimal literal, so epsilon=0.1 means 1/10.
    if isinstance(epsilon, float):
        return Fraction(str(epsilon))
    return Fraction(epsilon)


def coarsening_exponent(k: int, epsilon) -> int:
    """Smallest integer T with 2^(3T) >= 32 k^3 / eps^2.

    This is ceil(log2(2^(5/3) k / eps^(2/3))) computed in exact integer
    arithmetic, so power-of-two boundary cases round correctly.
    """
    if k < 2:
        raise ValueError(f"cluster count must be >= 2, got {k}")
    eps = _exact_epsilon(epsilon)
    if not 0 < eps <= Fraction(1, 2):
        raise ValueError(f"epsilon must lie in (0, 1/2], got {epsilon}")
    need = 32 * k**3 / eps**2
    t = max(0, (need.numerator // need.denominator).bit_length() // 3 - 1)
    while 8**t < need:
        t += 1
    return t


def target_resolution(k: int, epsilon, rho) -> Resolution:
    """Coarse resolution tau with tau_t = min(rho_t, T), T the coarsening exponent.

    At this resolution the coarse grid is an epsilon-coreset for every
    weight-constrained clustering problem with at most k clusters.
    """
    rho = as_resolution(rho)
    t = coarsening_exponent(k, epsilon)
    return Resolution(tuple(min(e, t) for e in rho.exponents))


def delta_offset_exact(rho, tau) -> Fraction:
    """The offset as an exact rational: sum_t (1/12)(4^-tau_t - 4^-rho_t)."""
    rho = as_resolution(rho)
    tau = as_resolution(tau)
    if not tau <= rho:
        raise ValueError(f"tau={tau.exponents} not componentwise <= rho={rho.exponents}")
    total = Fraction(0)
    for re, te in zip(rho.exponents, tau.exponents):
        total += Fraction(1, 12) * (Fraction(1, 4**te) - Fraction(1, 4**re))
    return total


def delta_offset(rho, tau) -> float:
    """Scatter lost by merging X(rho) into X(tau); exact dyadic, so the float is exact."""
    return float(delta_offset_exact(rho, tau))


@dataclass(frozen=True)
class CoresetPlan:
    """A chosen coarsening: source and coarse resolutions plus the exact offset."""

    rho: Resolution
    tau: Resolution
    k: int
    epsilon: float
    tau_star: int
    delta: float

    @property
    def delta_exact(self) -> Fraction:
        return delta_offset_exact(self.rho, self.tau)

    @property
    def clamped(self) -> bool:
        """True when some axis hit rho_t < tau_star (coreset = original set there)."""
        return any(e < self.tau_star for e in self.rho.exponents)


def make_plan(k: int, epsilon, rho, tau=None) -> CoresetPlan:
    """Plan a coarsening; tau defaults to target_resolution, overrides are allowed.

    An override below the target loses the epsilon guarantee; verification
    still runs and simply reports what it finds.
    """
    rho = as_resolution(rho)
    tau_star = coarsening_exponent(k, epsilon)
    if tau is None:
        tau = Resolution(tuple(min(e, tau_star) for e in rho.exponents))
    else:
        tau = as_resolution(tau)
        if tau.d != rho.d:
            raise ValueError(f"tau has {tau.d} axes, rho has {rho.d}")
        if not tau <= rho:
            raise ValueError(f"tau={tau.exponents} not componentwise <= rho={rho.exponents}")
    return CoresetPlan(
        rho=rho, tau=tau, k=int(k), epsilon=float(_exact_epsilon(epsilon)),
        tau_star=tau_star, delta=delta_offset(rho, tau),
    )


def restrict(C: Clustering, plan: CoresetPlan) -> Clustering:
    """Push a fine clustering down to X(tau) by averaging over each batch.

    Preserves cluster weights exactly (nu(tau)/|B| = nu(rho)) and keeps
    column sums at exactly 1; all values stay dyadic.
    """
    rho, tau = plan.rho, plan.tau
    if C.n != rho.n:
        raise ValueError(f"clustering has {C.n} points, grid has {rho.n}")
    m = merge_map(rho, tau)
    batch = rho.n // tau.n
    keys = C.rows * tau.n + m[C.cols]
    uniq, inv = np.unique(keys, return_inverse=True)
    sums = np.bincount(inv, weights=C.vals, minlength=uniq.size)
    return Clustering(k=C.k, n=tau.n, rows=uniq // tau.n, cols=uniq % tau.n,
                      vals=sums / batch)


def extend(C_tilde: Clustering, plan: CoresetPlan) -> Clustering:
    """Lift a coarse clustering to X(rho): every point inherits its batch's fractions.

    This is the section g of the merge map; restrict(extend(C), plan)
    returns C unchanged.
    """
    rho, tau = plan.rho, plan.tau
    if C_tilde.n != tau.n:
        raise ValueError(f"clustering has {C_tilde.n} points, coarse grid has {tau.n}")
    m = merge_map(rho, tau)
    batch = rho.n // tau.n
    by_cell = np.argsort(m, kind="stable").reshape(tau.n, batch)
    cols = by_cell[C_tilde.cols].ravel()
    rows = np.repeat(C_tilde.rows, batch)
    vals = np.repeat(C_tilde.vals, batch)
    return Clustering(k=C_tilde.k, n=rho.n, rows=rows, cols=cols, vals=vals)


def verify_property_a(C_tilde: Clustering, sites, instance: Instance,
                      plan: CoresetPlan) -> float:
    """Residual of the exact lift identity; zero in exact arithmetic.

    cost(X, extend(C), S) = cost(X(tau), C, S) + delta for every coarse
    clustering with unit column sums and every site family.  Isotropic only:
    the offset does not see the norm matrices.
    """
    if instance.norms is not None:
        raise ValueError("the offset identity is isotropic only")
    fine = extend(C_tilde, plan)
    lhs = cost_sites(fine, sites, plan.rho)
    rhs = cost_sites(C_tilde, sites, plan.tau) + plan.delta
    return abs(lhs - rhs)


def verify_property_b(sites, instance: Instance, plan: CoresetPlan) -> float:
    """Margin of the coreset cost inequality at the planned coarse resolution.

    Solves the assignment LP at rho and at tau and returns
    (1 + eps) * cost(X, S) - (cost(X(tau), S) + delta), which the coreset
    guarantee makes nonnegative whenever tau came from target_resolution.
    """
    if instance.norms is not None:
        raise ValueError("the coreset guarantee is isotropic only")
    fine = solve_assignment(instance, sites=sites)
    coarse = solve_assignment(instance, resolution=plan.tau, sites=sites)
    return (1.0 + plan.epsilon) * fine.objective - (coarse.objective + plan.delta)


@dataclass(frozen=True)
class CoarseSolve:
    """A coarse solve together with its lift back to the fine grid."""

    plan: CoresetPlan
    coarse: SolveResult
    extended: Clustering
    extended_cost: float


def solve_coarse(instance: Instance, sites=None, plan: CoresetPlan | None = None,
                 norms: NormFamily | None = None) -> CoarseSolve:
    """Solve at the coarse resolution (Euclidean costs) and lift the optimum.

    The lifted clustering is feasible for the fine problem; its cost is
    evaluated under `norms` when given, which is how anisotropic instances
    reuse the Euclidean coreset machinery.
    """
    if plan is None:
        plan = make_plan(instance.k, instance.epsilon, instance.rho)
    if sites is None:
        sites = instance.sites
    if sites is None:
        raise ValueError("no sites: pass sites= or construct the instance with sites")
    if norms is None:
        norms = instance.norms
    euclid = instance if instance.norms is None else Instance(
        k=instance.k, rho=instance.rho, kappa=instance.kappa, epsilon=instance.epsilon,
    )
    coarse = solve_assignment(euclid, resolution=plan.tau, sites=sites)
    extended = extend(coarse.clustering, plan)
    cost = cost_sites(extended, sites, plan.rho, norms)
    return CoarseSolve(plan=plan, coarse=coarse, extended=extended, extended_cost=cost)


def transfer_bound(gamma: float, epsilon, norms: NormFamily) -> float:
    """Approximation factor carried from the Euclidean solve to anisotropic costs.

    A gamma-approximate clustering of the Euclidean problem is a
    (1 + eps) * gamma * lambda+ / lambda- approximation under the norm
    family, because each squared norm is sandwiched by the extreme
    eigenvalues times the Euclidean one.
    """
    if gamma < 1.0:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    eps = float(_exact_epsilon(epsilon))
    return (1.0 + eps) * gamma * norms.lambda_max / norms.lambda_min


def _cube_root_exact(x: Fraction) -> Fraction | None:
    num = round(x.numerator ** (1 / 3))
    den = round(x.denominator ** (1 / 3))
    for dn in (num - 1, num, num + 1):
        for dd in (den - 1, den, den + 1):
            if dn > 0 and dd > 0 and dn**3 == x.numerator and dd**3 == x.denominator:
                return Fraction(dn, dd)
    return None


@dataclass(frozen=True)
class SizeReport:
    """Coreset size against the guaranteed bounds and the dense-pencil alternative."""

    axis_size: int              # 2^tau_star, points per unclamped axis
    axis_bound: float           # 2^(8/3) k / eps^(2/3)
    axis_bound_holds: bool      # checked exactly via cubes
    coarse_points: int
    fine_points: int
    clamped: bool
    pencil_bound: Fraction      # k^2 / eps^(d+1)
    resolution_bound: float     # (k / eps^(2/3))^d
    advantage: Fraction | float  # pencil_bound / resolution_bound


def size_report(plan: CoresetPlan) -> SizeReport:
    """Sizes and bound checks for a plan; bound comparisons are exact.

    The axis bound 2^tau_star <= 2^(8/3) k / eps^(2/3) is equivalent to
    8^tau_star * eps^2 <= 2^8 k^3, which is checked in exact rationals.
    The advantage over a dense pencil grid of k^2/eps^(d+1) points is
    reported exactly whenever it is rational.
    """
    eps = _exact_epsilon(plan.epsilon)
    k = plan.k
    d = plan.rho.d
    axis_size = 1 << plan.tau_star
    holds = 8**plan.tau_star * eps**2 <= 256 * k**3
    axis_bound = float(2 ** Fraction(8, 3)) * k / float(eps) ** (2.0 / 3.0)
    pencil = k**2 / eps ** (d + 1)
    res_bound_cubed = Fraction(k) ** (3 * d) / eps ** (2 * d)
    res_bound = float(res_bound_cubed) ** (1.0 / 3.0)
    advantage_cubed = pencil**3 / res_bound_cubed
    advantage = _cube_root_exact(advantage_cubed)
    if advantage is None:
        advantage = float(advantage_cubed) ** (1.0 / 3.0)
    return SizeReport(
        axis_size=axis_size,
        axis_bound=axis_bound,
        axis_bound_holds=bool(holds),
        coarse_points=plan.tau.n,
        fine_points=plan.rho.n,
        clamped=plan.clamped,
        pencil_bound=pencil,
        resolution_bound=res_bound,
        advantage=advantage,
    )
