"""Regenerate fixtures/solver/cases.json: 200 small exhaustive-check instances.

Every case has n <= 8 points, k <= 3 clusters, and weights that are integer
multiples of the voxel volume, so brute-force enumeration over integer
clusterings is exact and fast.  Deterministic: python fixtures/make_solver_cases.py
rewrites the same file byte for byte.
"""

import json
from pathlib import Path

import numpy as np

from gridcoreset.grid import as_resolution

SEED = 12345
CASES = 200

# (d, axis exponents) with n = 2^(sum) <= 8.
SHAPES = [
    (1, (1,)), (1, (2,)), (1, (3,)),
    (2, (1, 1)), (2, (1, 2)), (2, (2, 1)),
    (3, (1, 1, 1)),
]


def main() -> None:
    rng = np.random.default_rng(np.random.SeedSequence(SEED))
    cases = []
    for index in range(CASES):
        d, exps = SHAPES[int(rng.integers(0, len(SHAPES)))]
        n = as_resolution(exps).n
        k = int(rng.integers(1, min(3, n) + 1))
        units = np.ones(k, dtype=np.int64)
        units += rng.multinomial(n - k, np.full(k, 1.0 / k))
        if rng.integers(0, 2):
            sites = rng.integers(0, 17, size=(k, d)) / 16  # dyadic sites
        else:
            sites = rng.uniform(0.0, 1.0, size=(k, d))
        cases.append({
            "d": d,
            "rho": list(exps),
            "k": k,
            "kappa": [[int(u), n] for u in units],
            "sites": sites.tolist(),
            "matrices": None,
            "epsilon": 0.5,
        })
    out = Path(__file__).parent / "solver" / "cases.json"
    out.write_text(json.dumps(cases, indent=1, sort_keys=True) + "\n")
    print(f"wrote {out}: {len(cases)} cases")


if __name__ == "__main__":
    main()
