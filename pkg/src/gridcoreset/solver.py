"""Exact weight-constrained assignment via a transportation network simplex.

The assignment LP is a balanced transportation problem: grid points supply
mass nu(r) each, clusters demand kappa_i, arcs cost ||x_j - s_i||^2_{A_i}.
All supplies and demands are scaled by a common power of two into integers,
so every basic solution the simplex visits has exactly integer flows and the
returned assignment fractions are exact dyadic rationals.

The simplex itself is primal, on the bipartite graph plus an artificial
root.  Entering arcs follow Dantzig's rule with a fixed deterministic tie
order (lowest cluster index, then lowest point index); after a long run of
degenerate pivots it falls back to Bland's rule (lowest eligible arc index)
until progress resumes.  Leaving arcs are chosen to keep the spanning tree
strongly feasible, which rules out cycling.  When every cost is exactly
representable over a small power-of-four denominator (dyadic sites,
Euclidean norm), pricing runs in 64-bit integers and the optimum is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .grid import Resolution, as_resolution, coords_array
from .model import Clustering, Instance, NormFamily, centroids, cluster_weights

# Dense arc cap: beyond this, refuse and point the caller at coarsening.
MAX_ARCS = 50_000_000

# Largest power-of-two cost denominator for the exact integer mode.
MAX_COST_BITS = 26

# Relative pricing tolerance in float mode.
ENTER_TOL = 1e-11

# Degenerate-pivot streak after which entering switches to Bland's rule.
_BLAND_AFTER = 1000


@dataclass(frozen=True)
class TransportProblem:
    """Integer-scaled transportation formulation of one assignment solve."""

    resolution: Resolution
    sites: np.ndarray
    costs: np.ndarray           # (k, n) float64
    supply: int                 # per-point supply, units of 2^-unit_bits
    demands: tuple[int, ...]    # per-cluster demand, same units
    unit_bits: int              # the common scale: 1 unit = 2^-unit_bits mass
    int_costs: np.ndarray | None = None   # (k, n) int64, units of 4^-cost_bits
    cost_bits: int = 0

    @property
    def k(self) -> int:
        return self.costs.shape[0]

    @property
    def n(self) -> int:
        return self.costs.shape[1]


@dataclass(frozen=True)
class SolveResult:
    """Optimal basic solution of one transportation solve.

    duals are the cluster potentials mu_i, normalized so mu_1 = 0; support
    arcs attain min_i (c_ij - mu_i).  dual_objective uses the matching point
    potentials, so objective - dual_objective is the duality gap.
    """

    clustering: Clustering
    objective: float
    duals: tuple[float, ...]
    fractional_count: int
    resolution: Resolution
    dual_objective: float
    pivots: int
    exact: bool


def _dyadic_int_grid(values: np.ndarray, bits: int) -> np.ndarray | None:
    """values * 2^bits as int64 if that is exact and small, else None.

    The magnitude cap (coordinates within [-4, 4]) keeps squared differences
    against in-cube grid points far from int64 overflow.
    """
    scaled = values * float(1 << bits)
    if not np.all(np.isfinite(scaled)):
        return None
    if np.any(np.abs(scaled) > (1 << (bits + 2))):
        return None
    rounded = np.rint(scaled)
    if np.any(scaled != rounded):
        return None
    return rounded.astype(np.int64)


def build_transport(instance: Instance, resolution=None, sites=None) -> TransportProblem:
    """Assemble the transportation problem at the given solve resolution.

    resolution defaults to the instance grid; a coarser one must be
    componentwise <= rho.  sites defaults to the instance sites.
    """
    rho = instance.rho
    r = as_resolution(resolution) if resolution is not None else rho
    if not r <= rho:
        raise ValueError(f"solve resolution {r.exponents} not componentwise <= rho={rho.exponents}")
    if sites is None:
        sites = instance.sites
    if sites is None:
        raise ValueError("no sites: pass sites= or construct the instance with sites")
    s = np.asarray(sites, dtype=np.float64)
    if s.ndim == 1:
        s = s.reshape(-1, 1) if rho.d == 1 else s.reshape(1, -1)
    if s.shape != (instance.k, rho.d):
        raise ValueError(f"sites must have shape ({instance.k}, {rho.d}), got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("sites must be finite")

    k = instance.k
    n = r.n
    if n * k > MAX_ARCS:
        raise ValueError(
            f"dense arc set n*k = {n * k} exceeds {MAX_ARCS}; "
            "coarsen the instance first (see the coreset module)"
        )

    # Common integer scale for supplies and demands: 1 unit = 2^-L.
    L = max(instance.kappa_bits, sum(r.exponents))
    supply = 1 << (L - sum(r.exponents))
    demands = tuple(u << (L - instance.kappa_bits) for u in instance.kappa_units)

    pts = coords_array(r)
    costs = np.empty((k, n), dtype=np.float64)
    for i in range(k):
        diff = pts - s[i]
        if instance.norms is None:
            costs[i] = np.einsum("nd,nd->n", diff, diff)
        else:
            costs[i] = np.einsum("nd,de,ne->n", diff, instance.norms.matrices[i], diff)

    # Exact integer costs when isotropic and all coordinates share a small
    # power-of-two denominator.  Point coordinates live over 2^(r_t+1); the
    # sites must too, up to MAX_COST_BITS.
    int_costs = None
    cost_bits = 0
    if instance.norms is None:
        bits = max(e + 1 for e in r.exponents)
        site_ints = None
        for b in range(bits, MAX_COST_BITS + 1):
            site_ints = _dyadic_int_grid(s, b)
            if site_ints is not None:
                bits = b
                break
        if site_ints is not None:
            # Reduced costs stay within int64: potentials are alternating
            # cost sums along tree paths, at most 2k+4 terms, each at most
            # 25 * d * 4^bits (coordinates differ by at most 5 * 2^bits).
            if (2 * k + 4) * 25 * rho.d * (4 ** bits) < 2 ** 62:
                pts_int = _dyadic_int_grid(pts, bits)
                ic = np.empty((k, n), dtype=np.int64)
                for i in range(k):
                    diff = pts_int - site_ints[i]
                    ic[i] = np.einsum("nd,nd->n", diff, diff)
                int_costs = ic
                cost_bits = bits

    return TransportProblem(
        resolution=r, sites=s, costs=costs, supply=supply, demands=demands,
        unit_bits=L, int_costs=int_costs, cost_bits=cost_bits,
    )


def _greedy_flows(cost2d: np.ndarray, supply: int, demands) -> list[list[tuple[int, int]]]:
    """Cheapest-available greedy assignment; returns per-point [(cluster, amount)].

    Processes points in flat order; ties go to the lowest cluster index.
    The split arcs (points assigned to several clusters) form a forest.
    """
    k, n = cost2d.shape
    cap = list(demands)
    best = np.argmin(cost2d, axis=0)
    arcs: list[list[tuple[int, int]]] = []
    for j in range(n):
        i = int(best[j])
        if cap[i] >= supply:
            cap[i] -= supply
            arcs.append([(i, supply)])
            continue
        need = supply
        got: list[tuple[int, int]] = []
        order = np.lexsort((np.arange(k), cost2d[:, j]))
        for i in order:
            i = int(i)
            if cap[i] <= 0:
                continue
            take = min(cap[i], need)
            cap[i] -= take
            need -= take
            got.append((i, take))
            if need == 0:
                break
        arcs.append(got)
    return arcs


def _network_simplex(problem: TransportProblem):
    """Primal network simplex specialized to the bipartite transportation graph.

    Node layout: points 0..n-1, clusters n..n+k-1, artificial root n+k.
    Real arc a = i*n + j runs point j -> cluster i with cost C[i, j];
    artificial arc e+i runs cluster i -> root with cost 0 and flow fixed 0.

    Returns (flows over real arcs as (k*n,) int64, potentials, pivots).
    """
    exact = problem.int_costs is not None
    C2 = problem.int_costs if exact else problem.costs
    k, n = problem.k, problem.n
    e = k * n
    root = n + k
    N = n + k + 1
    supply = problem.supply

    INF = 1 << 62

    flows = np.zeros(e + k, dtype=np.int64)
    greedy = _greedy_flows(C2, supply, problem.demands)

    # Forest components: clusters linked whenever a point splits across them.
    comp = list(range(k))

    def find(i):
        while comp[i] != i:
            comp[i] = comp[comp[i]]
            i = comp[i]
        return i

    point_adj: dict[int, list[tuple[int, int]]] = {}
    cluster_leaves: list[list[int]] = [[] for _ in range(k)]
    cluster_splits: list[list[tuple[int, int]]] = [[] for _ in range(k)]
    for j, got in enumerate(greedy):
        for i, amount in got:
            flows[i * n + j] = amount
        if len(got) == 1:
            cluster_leaves[got[0][0]].append(j)
        else:
            point_adj[j] = [(i, i * n + j) for i, _ in got]
            for i, _ in got:
                cluster_splits[i].append((j, i * n + j))
            base = find(got[0][0])
            for i, _ in got[1:]:
                comp[find(i)] = base

    anchors = sorted({find(i) for i in range(k)})

    parent = [-1] * N
    parent_edge = [-1] * N
    order = [root]
    seen_cluster = [False] * k
    seen_point = set()
    # Depth-first construction: anchors under the root, leaf points and split
    # points under clusters, further clusters under their split points.
    for a in anchors:
        parent[n + a] = root
        parent_edge[n + a] = e + a
        stack = [n + a]
        seen_cluster[a] = True
        while stack:
            v = stack.pop()
            order.append(v)
            if v >= n:
                i = v - n
                children = []
                for j in cluster_leaves[i]:
                    parent[j] = v
                    parent_edge[j] = i * n + j
                    children.append(j)
                for j, arc in cluster_splits[i]:
                    if j in seen_point:
                        continue
                    seen_point.add(j)
                    parent[j] = v
                    parent_edge[j] = arc
                    children.append(j)
                stack.extend(reversed(children))
            else:
                children = []
                for i, arc in point_adj.get(v, ()):
                    if not seen_cluster[i]:
                        seen_cluster[i] = True
                        parent[n + i] = v
                        parent_edge[n + i] = arc
                        children.append(n + i)
                stack.extend(reversed(children))

    # Depth-first thread (cyclic), subtree sizes, last descendants.
    next_ = [0] * N
    prev = [0] * N
    for a, b in zip(order, order[1:]):
        next_[a] = b
        prev[b] = a
    next_[order[-1]] = order[0]
    prev[order[0]] = order[-1]
    size = [1] * N
    last = list(range(N))
    for v in reversed(order[1:]):
        p = parent[v]
        size[p] += size[v]
        if last[p] == p:
            last[p] = last[v]

    # Node potentials: rc of every tree arc is zero.  Root and anchor
    # clusters sit at 0 because artificial arcs cost 0.
    if exact:
        pi = np.zeros(N, dtype=np.int64)
    else:
        pi = np.zeros(N, dtype=np.float64)
    Cflat = C2.ravel()
    for v in order[1:]:
        a = parent_edge[v]
        p = parent[v]
        if a >= e:
            pi[v] = pi[p]
        elif v >= n:
            # v is the arc's head (cluster): pi[T] = pi[S] - c
            pi[v] = pi[p] - Cflat[a]
        else:
            # v is the arc's tail (point): pi[S] = pi[T] + c
            pi[v] = pi[p] + Cflat[a]

    if exact:
        tol = 0
    else:
        tol = ENTER_TOL * max(1.0, float(problem.costs.max(initial=0.0)))

    rc_buf = np.empty((k, n), dtype=pi.dtype)

    def entering_dantzig():
        np.subtract(pi[n:n + k, None], pi[None, :n], out=rc_buf)
        np.add(rc_buf, C2, out=rc_buf)
        a = int(np.argmin(rc_buf.ravel()))
        if rc_buf.ravel()[a] < -tol:
            return a
        return -1

    def entering_bland():
        np.subtract(pi[n:n + k, None], pi[None, :n], out=rc_buf)
        np.add(rc_buf, C2, out=rc_buf)
        mask = rc_buf.ravel() < -tol
        a = int(np.argmax(mask))
        if mask[a]:
            return a
        return -1

    def find_apex(p, q):
        sp, sq = size[p], size[q]
        while True:
            while sp < sq:
                p = parent[p]
                sp = size[p]
            while sp > sq:
                q = parent[q]
                sq = size[q]
            if sp == sq:
                if p == q:
                    return p
                p = parent[p]
                sp = size[p]
                q = parent[q]
                sq = size[q]

    def trace_path(p, w):
        nodes = [p]
        edges = []
        while p != w:
            edges.append(parent_edge[p])
            p = parent[p]
            nodes.append(p)
        return nodes, edges

    def arc_tail(a):
        return a % n if a < e else n + (a - e)

    def arc_head(a):
        return n + a // n if a < e else root

    def find_cycle(a, p, q):
        # Cycle containing the entering arc, oriented p -> q, listed from the apex.
        w = find_apex(p, q)
        nodes, edges = trace_path(p, w)
        nodes.reverse()
        edges.reverse()
        edges.append(a)
        nodes_q, edges_q = trace_path(q, w)
        del nodes_q[-1]
        nodes += nodes_q
        edges += edges_q
        return nodes, edges

    def residual(a, frm):
        # Uncapacitated: only arcs traversed against their direction block.
        return INF if arc_tail(a) == frm else int(flows[a])

    def remove_edge(s, t):
        size_t = size[t]
        prev_t = prev[t]
        last_t = last[t]
        next_last_t = next_[last_t]
        parent[t] = -1
        parent_edge[t] = -1
        next_[prev_t] = next_last_t
        prev[next_last_t] = prev_t
        next_[last_t] = t
        prev[t] = last_t
        while s != -1:
            size[s] -= size_t
            if last[s] == last_t:
                last[s] = prev_t
            s = parent[s]

    def make_root(q):
        ancestors = []
        while q != -1:
            ancestors.append(q)
            q = parent[q]
        ancestors.reverse()
        for p, q in zip(ancestors, ancestors[1:]):
            size_p = size[p]
            last_p = last[p]
            prev_q = prev[q]
            last_q = last[q]
            next_last_q = next_[last_q]
            parent[p] = q
            parent[q] = -1
            parent_edge[p] = parent_edge[q]
            parent_edge[q] = -1
            size[p] = size_p - size[q]
            size[q] = size_p
            next_[prev_q] = next_last_q
            prev[next_last_q] = prev_q
            next_[last_q] = q
            prev[q] = last_q
            if last_p == last_q:
                last[p] = prev_q
                last_p = prev_q
            prev[p] = last_q
            next_[last_q] = p
            next_[last_p] = q
            prev[q] = last_p
            last[q] = last_p

    def add_edge(a, p, q):
        last_p = last[p]
        next_last_p = next_[last_p]
        size_q = size[q]
        last_q = last[q]
        parent[q] = p
        parent_edge[q] = a
        next_[last_p] = q
        prev[q] = last_p
        prev[next_last_p] = last_q
        next_[last_q] = next_last_p
        while p != -1:
            size[p] += size_q
            if last[p] == last_p:
                last[p] = last_q
            p = parent[p]

    def update_potentials(a, p, q):
        if q == arc_head(a):
            d = pi[p] - Cflat[a] - pi[q]
        else:
            d = pi[p] + Cflat[a] - pi[q]
        v = q
        l = last[q]
        pi[v] += d
        while v != l:
            v = next_[v]
            pi[v] += d

    pivots = 0
    degenerate_streak = 0
    max_pivots = 1000 + 200 * (n + k) * max(4, k)
    while True:
        a = entering_bland() if degenerate_streak >= _BLAND_AFTER else entering_dantzig()
        if a < 0:
            break
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError(f"network simplex exceeded {max_pivots} pivots; "
                               "this indicates a bug, please report it")
        p, q = arc_tail(a), arc_head(a)
        nodes, edges = find_cycle(a, p, q)
        # Leaving arc: minimum residual, scanning the cycle backwards so ties
        # pick the last blocking arc from the apex (keeps the tree strongly
        # feasible, which prevents cycling).
        best_res = INF
        j = s_node = -1
        for arc, node in zip(reversed(edges), reversed(nodes)):
            res = residual(arc, node)
            if res < best_res:
                best_res = res
                j, s_node = arc, node
        delta = best_res
        degenerate_streak = degenerate_streak + 1 if delta == 0 else 0
        if delta > 0:
            for arc, node in zip(edges, nodes):
                if arc_tail(arc) == node:
                    flows[arc] += delta
                else:
                    flows[arc] -= delta
        # Swap the entering and leaving arcs in the tree.
        t_node = arc_head(j) if arc_tail(j) == s_node else arc_tail(j)
        if parent[t_node] != s_node:
            s_node, t_node = t_node, s_node
        if edges.index(a) > edges.index(j):
            p, q = q, p
        remove_edge(s_node, t_node)
        make_root(q)
        add_edge(a, p, q)
        update_potentials(a, p, q)

    return flows[:e], pi, pivots


def solve_assignment(instance: Instance, resolution=None, sites=None) -> SolveResult:
    """Globally optimal basic solution of the assignment LP at resolution r.

    Deterministic: fixed greedy start, fixed pivot and tie-break rules.
    When every kappa_i is an integer multiple of nu(r), the basic optimum is
    integer; in general at most 2(k-1) assignment fractions are fractional.
    """
    problem = build_transport(instance, resolution=resolution, sites=sites)
    flows, pi, pivots = _network_simplex(problem)
    k, n = problem.k, problem.n
    exact = problem.int_costs is not None

    support = np.nonzero(flows > 0)[0]
    rows = support // n
    cols = support % n
    vals = flows[support].astype(np.float64) / float(problem.supply)
    clustering = Clustering(k=k, n=n, rows=rows, cols=cols, vals=vals)
    fractional = int(np.count_nonzero(flows[support] < problem.supply))

    unit = Fraction(1, 1 << problem.unit_bits)
    if exact:
        cost_unit = Fraction(1, 1 << (2 * problem.cost_bits))
        cflat = problem.int_costs.ravel()
        primal_units = sum(int(flows[a]) * int(cflat[a]) for a in support)
        objective = float(primal_units * unit * cost_unit)
        pi_exact = [int(v) for v in pi]
        dual_units = (
            problem.supply * sum(pi_exact[j] - pi_exact[n] for j in range(n))
            + sum(problem.demands[i] * (pi_exact[n] - pi_exact[n + i]) for i in range(k))
        )
        dual_objective = float(dual_units * unit * cost_unit)
        duals = tuple(float((pi_exact[n] - pi_exact[n + i]) * cost_unit) for i in range(k))
    else:
        cflat = problem.costs.ravel()
        objective = float(unit) * float(
            np.dot(flows[support].astype(np.float64), cflat[support])
        )
        u_pts = pi[:n] - pi[n]
        mu = pi[n] - pi[n:n + k]
        dual_objective = float(unit) * (
            problem.supply * float(np.sum(u_pts))
            + float(np.dot(np.asarray(problem.demands, dtype=np.float64), mu))
        )
        duals = tuple(float(v) for v in mu)

    return SolveResult(
        clustering=clustering,
        objective=objective,
        duals=duals,
        fractional_count=fractional,
        resolution=problem.resolution,
        dual_objective=dual_objective,
        pivots=pivots,
        exact=exact,
    )


@dataclass(frozen=True)
class AlternateOutcome:
    """Result of the alternating sites/assignment heuristic."""

    sites: np.ndarray
    result: SolveResult
    objectives: tuple[float, ...]


# Named RNG stream for alternate_minimize site initialization.
_ALTMIN_STREAM = 2


def alternate_minimize(
    instance: Instance,
    max_rounds: int = 50,
    seed: int = 0,
    init_sites=None,
) -> AlternateOutcome:
    """Alternate optimal assignment with centroid updates until stationary.

    A heuristic for the free-sites clustering problem: each round solves the
    assignment LP at the current sites, then moves every site to its cluster
    centroid.  The objective is non-increasing round over round; stops at
    relative improvement below 1e-9 or after max_rounds.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    if init_sites is not None:
        sites = np.asarray(init_sites, dtype=np.float64).reshape(instance.k, instance.d)
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_ALTMIN_STREAM,)))
        sites = rng.uniform(0.0, 1.0, size=(instance.k, instance.d))
    history: list[float] = []
    result = None
    for round_index in range(max_rounds):
        result = solve_assignment(instance, sites=sites)
        history.append(result.objective)
        if len(history) >= 2:
            prev, cur = history[-2], history[-1]
            if prev - cur <= 1e-9 * (1.0 + abs(prev)):
                break
        if round_index == max_rounds - 1:
            break  # keep sites consistent with the final solve
        w = cluster_weights(result.clustering, instance.rho)
        if np.any(w <= 0.0):
            raise AssertionError("cluster lost all weight despite kappa > 0")
        sites = centroids(result.clustering, instance.rho)
    return AlternateOutcome(sites=sites, result=result, objectives=tuple(history))
