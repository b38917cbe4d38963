"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from psi_pareto import kernels
from psi_pareto.estimator import init
from psi_pareto.instance import load_covboost, rotation_instance
from psi_pareto.learners import ScanContext


def _concentrated(instance, rng, pulls: float = 1e6) -> ScanContext:
    """Context whose posterior is tight around the true means: every draw is scanned."""
    est = init(instance, "unstructured", rng)
    est.theta_hat = instance.theta.copy()
    est.V_inv = np.eye(instance.K) / pulls
    return ScanContext.build(est, instance.pareto_set(), None)


def _cases(rng: np.random.Generator):
    cov = load_covboost()
    S = cov.pareto_set()
    ctx = _concentrated(cov, rng)
    G = rng.standard_normal((4096, cov.K, cov.d))
    rot = rotation_instance()
    rot_ctx = _concentrated(rot, rng)
    G_rot = rng.standard_normal((4096, rot.K, rot.d))
    pts2 = rng.standard_normal((2000, 2))
    pts3 = rng.standard_normal((500, 3))
    in_set = S.mask(cov.K)

    def scan(backend, c, block):
        return lambda: backend.scan_block(block, c.theta_hat, c.lv, c.diag_v, c.lsig, c.Z, c.identity_z,
                                          c.in_set, 1.0, block.shape[0], kernels.REGION_NONE, 0.0,
                                          1.0, block.shape[0], kernels.REGION_ROW_ELLIPSOID, 1e9,
                                          c.sig_inv)

    return {
        "pareto_mask n=2000 d=2": lambda b: (lambda: b.pareto_mask(pts2)),
        "pareto_mask n=500 d=3": lambda b: (lambda: b.pareto_mask(pts3)),
        "in_alt covboost": lambda b: (lambda: b.in_alt(cov.arm_means, in_set)),
        "scan_block covboost 4096 draws": lambda b: scan(b, ctx, G),
        "scan_block rotation 4096 draws": lambda b: scan(b, rot_ctx, G_rot),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    cases = _cases(np.random.default_rng(0))
    names = list(kernels.BACKENDS)
    print(f"{'kernel':<34}" + "".join(f"{n + ' (ms)':>16}" for n in names) + f"{'speedup':>10}")
    for label, make in cases.items():
        times = {}
        for name in names:
            fn = make(kernels.BACKENDS[name])
            number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
            times[name] = 1000.0 * min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
        speedup = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{label:<34}" + "".join(f"{times[n]:>16.4f}" for n in names) + f"{speedup:>10.1f}")


if __name__ == "__main__":
    main()
