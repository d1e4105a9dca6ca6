"""Offloading overhead at full scale: basis and codebook parameter counts.

    python scripts/offload_counts.py
"""
import numpy as np

from csifeedback.bits import BitAllocation
from csifeedback.offload import count_codebook_params, count_model_params

N_A, N_C, N_P, B, B1 = 64, 160, 374, 2048, 11


def main():
    print(f"basis, exact:            {count_model_params(N_A, N_C, N_P, mode='exact'):>10,}")
    for eta in (1, 2, 4, 8, 16, 32, 64, 128):
        print(f"basis, sparsified eta={eta:<3} {count_model_params(N_A, N_C, N_P, eta, 'sparsified'):>10,}")
    # an allocation with b_1 = 11, N_P = 374 and B = 2048
    bits = np.r_[B1, np.full(172, 6), np.full(201, 5)]
    alloc = BitAllocation(bits, np.repeat(np.arange(N_P), bits))
    assert alloc.total == B and alloc.latent_dim == N_P
    print(f"codebook, per component: {count_codebook_params(alloc, 'per_component'):>10,}")
    print(f"codebook, shared:        {count_codebook_params(alloc, 'shared'):>10,}")


if __name__ == "__main__":
    main()
