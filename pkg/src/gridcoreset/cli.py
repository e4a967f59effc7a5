"""Command-line surface: generate, solve, coarsen, verify, and benchmark.

Instance files are JSON; reports are CSV with a fixed header.  All
randomness flows from one 64-bit seed through named substreams (instance
generation, per-trial draws), so adding trials never changes earlier rows.
Exit codes: 0 success, 2 validation failure, 3 property violation (the
offending row goes to standard error).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .coreset import (CoresetPlan, make_plan, extend, size_report, solve_coarse,
                      transfer_bound, verify_property_a, verify_property_b)
from .diagrams import check_compatibility, from_duals
from .grid import Resolution, as_resolution, coords_array, voxel_volume
from .model import Clustering, Instance, NormFamily, cost_sites
from .oracle import lower_bound_1d, opt1d_closed, opt1d_dp
from .solver import solve_assignment

# Named RNG streams (SeedSequence spawn keys).
STREAM_GEN = 0
STREAM_TRIAL = 1

CSV_FIELDS = ["instance_id", "resolution", "trial", "check", "objective", "delta",
              "bound", "margin", "quality_ratio", "speedup", "wall_time_s",
              "fractional_count", "seed"]

GEN_ATTEMPTS = 100


def _parse_axes(text: str) -> tuple[int, ...]:
    parts = text.replace("x", ",").split(",")
    return tuple(int(p) for p in parts if p != "")


def _kappa_to_json(instance: Instance) -> list:
    return [[u, 1 << instance.kappa_bits] for u in instance.kappa_units]


def _kappa_from_json(values) -> list[Fraction]:
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ValueError(f"kappa pair must be [numerator, denominator], got {v}")
            out.append(Fraction(int(v[0]), int(v[1])))
        else:
            out.append(Fraction(v))
    return out


def save_instance(instance: Instance, path, plan: CoresetPlan | None = None) -> None:
    doc = {
        "d": instance.d,
        "rho": list(instance.rho.exponents),
        "k": instance.k,
        "kappa": _kappa_to_json(instance),
        "sites": None if instance.sites is None else instance.sites.tolist(),
        "matrices": None if instance.norms is None else instance.norms.matrices.tolist(),
        "epsilon": instance.epsilon,
    }
    if plan is not None:
        doc["plan"] = {
            "rho": list(plan.rho.exponents),
            "tau": list(plan.tau.exponents),
            "tau_star": plan.tau_star,
            "delta": [plan.delta_exact.numerator, plan.delta_exact.denominator],
            "epsilon": plan.epsilon,
        }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def instance_from_dict(doc: dict) -> Instance:
    rho = as_resolution(doc["rho"])
    if int(doc.get("d", rho.d)) != rho.d:
        raise ValueError(f"d = {doc['d']} does not match rho with {rho.d} axes")
    kappa = _kappa_from_json(doc["kappa"])
    norms = None
    if doc.get("matrices") is not None:
        norms = NormFamily(np.asarray(doc["matrices"], dtype=np.float64))
    sites = doc.get("sites")
    return Instance(
        k=int(doc["k"]), rho=rho, kappa=kappa,
        sites=None if sites is None else np.asarray(sites, dtype=np.float64),
        norms=norms, epsilon=float(doc.get("epsilon", 0.5)),
    )


def load_instance(path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text()))


def generate_instance(d: int, rho, k: int, seed: int,
                      anisotropy: tuple[float, float] | None = None,
                      epsilon: float = 0.5) -> Instance:
    """Random power-diagram instance: sites, offsets, and cell-count weights.

    Each grid point joins the cell minimizing ||x - s||^2 + gamma (lowest
    index on ties); kappa_i is that cell's point count times the voxel
    volume, resampled on a fresh substream until every cell is nonempty.
    """
    rho = as_resolution(rho)
    if rho.d != d:
        raise ValueError(f"rho has {rho.d} axes, expected d = {d}")
    if k > rho.n:
        raise ValueError(f"cluster count {k} exceeds point count {rho.n}")
    pts = coords_array(rho)
    for attempt in range(GEN_ATTEMPTS):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_GEN, attempt)))
        sites = rng.uniform(0.0, 1.0, size=(k, d))
        gammas = rng.uniform(0.0, 0.1, size=k)
        powers = np.empty((k, rho.n))
        for i in range(k):
            diff = pts - sites[i]
            powers[i] = np.einsum("nd,nd->n", diff, diff) + gammas[i]
        counts = np.bincount(np.argmin(powers, axis=0), minlength=k)
        if np.all(counts > 0):
            break
    else:
        raise ValueError(f"no nonempty-cell draw in {GEN_ATTEMPTS} attempts")
    kappa = [Fraction(int(c), rho.n) for c in counts]
    norms = None
    if anisotropy is not None:
        lo, hi = float(anisotropy[0]), float(anisotropy[1])
        if not 0 < lo <= hi:
            raise ValueError(f"anisotropy range must satisfy 0 < lo <= hi, got {lo}, {hi}")
        mats = np.empty((k, d, d))
        for i in range(k):
            if lo == hi:
                mats[i] = lo * np.eye(d)
                continue
            q, r = np.linalg.qr(rng.normal(size=(d, d)))
            q = q * np.sign(np.diag(r))
            eigs = rng.uniform(lo, hi, size=d)
            a = (q * eigs) @ q.T
            mats[i] = (a + a.T) / 2.0
        norms = NormFamily(mats)
    return Instance(k=k, rho=rho, kappa=kappa, sites=sites, norms=norms, epsilon=epsilon)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class _Reporter:
    """Collects ReportRows; optionally writes them as CSV with a fixed header."""

    def __init__(self, instance_id: str, seed: int):
        self.instance_id = instance_id
        self.seed = seed
        self.rows: list[dict] = []

    def add(self, resolution: Resolution, trial, check: str, **fields) -> dict:
        row = {f: None for f in CSV_FIELDS}
        row.update(instance_id=self.instance_id, seed=self.seed, trial=trial,
                   resolution="x".join(str(e) for e in resolution.exponents),
                   check=check, **fields)
        self.rows.append(row)
        return row

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_FIELDS)
            for row in self.rows:
                writer.writerow([_fmt(row[f]) for f in CSV_FIELDS])


def _row_to_stderr(row: dict) -> None:
    print(",".join(_fmt(row[f]) for f in CSV_FIELDS), file=sys.stderr)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_TRIAL, trial)))


def _cmd_gen(args) -> int:
    rho = _parse_axes(args.rho)
    aniso = None
    if args.anisotropy:
        lo, hi = (float(v) for v in args.anisotropy.split(","))
        aniso = (lo, hi)
    inst = generate_instance(args.d, rho, args.k, args.seed,
                             anisotropy=aniso, epsilon=args.epsilon)
    out = args.out or f"instance_d{args.d}_k{args.k}_seed{args.seed}.json"
    save_instance(inst, out)
    print(f"wrote {out}: d={inst.d} rho={inst.rho} k={inst.k} "
          f"kappa={[f'{v:g}' for v in inst.kappa]}")
    return 0


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    if inst.sites is None:
        raise ValueError("instance has no sites; add them or use gen")
    resolution = as_resolution(_parse_axes(args.tau)) if args.tau else None
    t0 = time.perf_counter()
    res = solve_assignment(inst, resolution=resolution)
    dt = time.perf_counter() - t0
    print(f"resolution {res.resolution}")
    print(f"objective {res.objective!r}")
    print(f"duality_gap {res.objective - res.dual_objective!r}")
    print(f"fractional_count {res.fractional_count}")
    print(f"pivots {res.pivots}")
    print(f"exact_arithmetic {res.exact}")
    print(f"wall_time_s {dt:.6f}")
    weights = np.bincount(res.clustering.rows, weights=res.clustering.vals,
                          minlength=inst.k) * float(voxel_volume(res.resolution))
    print("weights " + " ".join(repr(float(w)) for w in weights))
    if args.out:
        doc = {"resolution": list(res.resolution.exponents), "objective": res.objective,
               "duals": list(res.duals), "fractional_count": res.fractional_count,
               "pivots": res.pivots, "exact": res.exact,
               "entries": [[int(i), int(j), float(v)] for i, j, v in
                           zip(res.clustering.rows, res.clustering.cols, res.clustering.vals)]}
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        print(f"wrote {args.out}")
    return 0


def _cmd_coarsen(args) -> int:
    inst = load_instance(args.instance)
    epsilon = args.epsilon if args.epsilon is not None else inst.epsilon
    tau = as_resolution(_parse_axes(args.tau)) if args.tau else None
    plan = make_plan(inst.k, epsilon, inst.rho, tau=tau)
    coarse = Instance(k=inst.k, rho=plan.tau, kappa=inst.kappa, sites=inst.sites,
                      norms=inst.norms, epsilon=epsilon)
    out = args.out or str(Path(args.instance).with_suffix(".coarse.json"))
    save_instance(coarse, out, plan=plan)
    print(f"tau {plan.tau} (tau_star {plan.tau_star}{', clamped' if plan.clamped else ''})")
    print(f"delta {plan.delta!r} = {plan.delta_exact}")
    print(f"coarse_points {plan.tau.n} of {plan.rho.n}")
    rep = size_report(plan)
    print(f"axis_size {rep.axis_size} bound {rep.axis_bound:.3f} holds {rep.axis_bound_holds}")
    print(f"wrote {out}")
    return 0


def _random_stochastic(rng, k: int, n: int) -> Clustering:
    dense = rng.random((k, n))
    dense /= dense.sum(axis=0, keepdims=True)
    return Clustering.from_dense(dense)


def _verify_isotropic(inst, plan, reporter, trials, seed) -> dict | None:
    for t in range(trials):
        rng = _trial_rng(seed, t)
        sites = rng.uniform(0.0, 1.0, size=(inst.k, inst.d))
        c_tilde = _random_stochastic(rng, inst.k, plan.tau.n)
        lift = cost_sites(extend(c_tilde, plan), sites, plan.rho)
        resid = verify_property_a(c_tilde, sites, inst, plan)
        row = reporter.add(plan.tau, t, "property_a", margin=resid,
                           bound=1e-10 * (1.0 + lift))
        if resid > 1e-10 * (1.0 + lift):
            return row

        fine = solve_assignment(inst, sites=sites)
        coarse = solve_assignment(inst, resolution=plan.tau, sites=sites)
        margin = (1.0 + plan.epsilon) * fine.objective - (coarse.objective + plan.delta)
        row = reporter.add(plan.tau, t, "property_b", objective=fine.objective,
                           delta=plan.delta, margin=margin,
                           bound=(1.0 + plan.epsilon) * fine.objective,
                           fractional_count=coarse.fractional_count)
        if margin < -1e-9:
            return row

        for res in (fine, coarse):
            rep = check_compatibility(res.clustering, from_duals(sites, res.duals),
                                      res.resolution)
            row = reporter.add(res.resolution, t, "compatibility",
                               margin=rep.worst_violation,
                               fractional_count=res.fractional_count)
            if not rep.compatible:
                return row
    return None


def _verify_anisotropic(inst, plan, reporter, trials, seed) -> dict | None:
    lam_lo, lam_hi = inst.norms.lambda_min, inst.norms.lambda_max
    factor = transfer_bound(1.0, plan.epsilon, inst.norms)
    for t in range(trials):
        rng = _trial_rng(seed, t)
        sites = rng.uniform(0.0, 1.0, size=(inst.k, inst.d))
        best = solve_assignment(inst, sites=sites)
        lifted = solve_coarse(inst, sites=sites, plan=plan)
        bound = factor * best.objective
        margin = bound - lifted.extended_cost
        row = reporter.add(plan.tau, t, "transfer", objective=best.objective,
                           delta=plan.delta, bound=bound, margin=margin,
                           quality_ratio=lifted.extended_cost / best.objective
                           if best.objective > 0 else None)
        if margin < -1e-9:
            return row
    return None


def _cmd_verify(args) -> int:
    inst = load_instance(args.instance)
    epsilon = args.epsilon if args.epsilon is not None else inst.epsilon
    tau = as_resolution(_parse_axes(args.tau)) if args.tau else None
    if inst.norms is not None:
        # The coreset is planned at epsilon/3 and certified through the
        # eigenvalue transfer factor.
        plan = make_plan(inst.k, Fraction(str(epsilon)) / 3, inst.rho, tau=tau)
    else:
        plan = make_plan(inst.k, epsilon, inst.rho, tau=tau)
    reporter = _Reporter(Path(args.instance).stem, args.seed)
    if inst.norms is None:
        bad = _verify_isotropic(inst, plan, reporter, args.trials, args.seed)
    else:
        bad = _verify_anisotropic(inst, plan, reporter, args.trials, args.seed)
    if args.out:
        reporter.write(args.out)
        print(f"wrote {args.out} ({len(reporter.rows)} rows)")
    if bad is not None:
        _row_to_stderr(bad)
        return 3
    checks = sorted({r["check"] for r in reporter.rows})
    print(f"verified {args.trials} trials ({', '.join(checks)}): all passed")
    return 0


def _cmd_bench(args) -> int:
    inst = load_instance(args.instance)
    epsilon = args.epsilon if args.epsilon is not None else inst.epsilon
    tau = as_resolution(_parse_axes(args.tau)) if args.tau else None
    plan = make_plan(inst.k, epsilon, inst.rho, tau=tau)
    reporter = _Reporter(Path(args.instance).stem, args.seed)
    for t in range(args.trials):
        rng = _trial_rng(args.seed, t)
        sites = rng.uniform(0.0, 1.0, size=(inst.k, inst.d))
        t0 = time.perf_counter()
        fine = solve_assignment(inst, sites=sites)
        t_full = time.perf_counter() - t0
        t0 = time.perf_counter()
        lifted = solve_coarse(inst, sites=sites, plan=plan)
        t_coarse = time.perf_counter() - t0
        quality = lifted.extended_cost / fine.objective if fine.objective > 0 else None
        reporter.add(plan.rho, t, "bench", objective=fine.objective,
                     wall_time_s=t_full, fractional_count=fine.fractional_count)
        reporter.add(plan.tau, t, "bench", objective=lifted.coarse.objective,
                     delta=plan.delta, quality_ratio=quality,
                     speedup=t_full / t_coarse, wall_time_s=t_coarse,
                     fractional_count=lifted.coarse.fractional_count)
    if args.out:
        reporter.write(args.out)
        print(f"wrote {args.out} ({len(reporter.rows)} rows)")
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(CSV_FIELDS)
        for row in reporter.rows:
            writer.writerow([_fmt(row[f]) for f in CSV_FIELDS])
    return 0


def _cmd_oracle(args) -> int:
    res = opt1d_dp(args.rho, args.k)
    print(f"dp_cost {res.cost!r} (units {res.units})")
    print(f"boundaries {' '.join(str(b) for b in res.boundaries)}")
    print(f"centroids {' '.join(repr(c) for c in res.centroids)}")
    if args.k & (args.k - 1) == 0:
        gamma = args.k.bit_length() - 1
        print(f"closed_form {opt1d_closed(args.rho, gamma)!r}")
    if args.k >= 2:
        print(f"lower_bound {lower_bound_1d(args.rho, args.k)!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridcoreset",
        description="Weight-constrained clustering on dyadic grids with "
                    "resolution coresets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random power-diagram instance")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--rho", required=True, help="axis exponents, e.g. 6,6 or 6x6")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--anisotropy", help="eigenvalue range lo,hi for random norms")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("solve", help="solve the assignment LP exactly")
    p.add_argument("instance")
    p.add_argument("--tau", help="solve at this coarse resolution instead of rho")
    p.add_argument("--out", help="write the clustering as JSON")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("coarsen", help="plan a coreset and write the coarse instance")
    p.add_argument("instance")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tau", help="override the target resolution")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_coarsen)

    p = sub.add_parser("verify", help="run the coreset property sweeps")
    p.add_argument("instance")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tau", help="override the target resolution")
    p.add_argument("--out", help="write ReportRows as CSV")
    p.add_argument("--format", choices=["csv"], default="csv")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("bench", help="time full vs coarse solves")
    p.add_argument("instance")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tau", help="override the target resolution")
    p.add_argument("--out", help="write ReportRows as CSV")
    p.add_argument("--format", choices=["csv"], default="csv")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("oracle", help="1D DP optimum, closed form, and lower bound")
    p.add_argument("--rho", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
