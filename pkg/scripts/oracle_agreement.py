"""How often the greedy allocation is optimal under the k-means distortion oracle.

Optimality is only guaranteed for the Gaussian distortion-rate oracle; this
reports the agreement rate with exhaustive search when distortions come from
actual k-means fits instead.

    python scripts/oracle_agreement.py --instances 200
"""
import argparse

import numpy as np

from csifeedback.bitalloc import DistortionOracle, allocate_bits, exhaustive_allocate
from csifeedback.quantizer import KMeansConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=200)
    ap.add_argument("--samples", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    agree, gaps = 0, []
    for i in range(args.instances):
        R = int(rng.integers(1, 5))
        B = int(rng.integers(1, 9))
        scale = np.sort(rng.lognormal(0.0, 1.0, R))[::-1]
        z = (rng.standard_normal((args.samples, R)) + 1j * rng.standard_normal((args.samples, R))) * scale
        oracle = DistortionOracle.empirical(z, KMeansConfig(seed=i))
        g = oracle.total(allocate_bits(B, oracle).bits)
        e = oracle.total(exhaustive_allocate(B, oracle, R).bits)
        agree += g == e
        gaps.append((g - e) / e if e > 0 else 0.0)
    gaps = np.array(gaps)
    print(f"instances: {args.instances}")
    print(f"greedy optimal: {agree / args.instances:.1%}")
    print(f"relative excess distortion: mean {gaps.mean():.2e}, max {gaps.max():.2e}")


if __name__ == "__main__":
    main()
