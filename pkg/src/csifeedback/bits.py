"""The bit allocation record shared by the allocator, quantizer and codec."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class BitAllocation:
    bits: np.ndarray   # (R,) non-negative, non-increasing
    order: np.ndarray  # (B,) component (0-based) receiving the i-th bit
    oracle_mode: str = "analytic"
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=np.int64))
        object.__setattr__(self, "order", np.asarray(self.order, dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.bits.sum())

    @property
    def latent_dim(self) -> int:
        """1-based index of the last component with bits (0 when B = 0)."""
        nz = np.flatnonzero(self.bits)
        return int(nz[-1]) + 1 if len(nz) else 0

    @property
    def n_components(self) -> int:
        return len(self.bits)

    @classmethod
    def from_order(cls, order, n_components: int, **kw) -> "BitAllocation":
        order = np.asarray(order, dtype=np.int64)
        if len(order) and (order.min() < 0 or order.max() >= n_components):
            raise ValueError("order refers to a component outside the basis")
        return cls(np.bincount(order, minlength=n_components), order, **kw)

    def prefix(self, total: int) -> "BitAllocation":
        """Allocation of the first ``total`` bits (variable-length feedback)."""
        if not 0 <= total <= self.total:
            raise ValueError(f"prefix length must be in [0, {self.total}], got {total}")
        return BitAllocation.from_order(self.order[:total], self.n_components,
                                        oracle_mode=self.oracle_mode, seed=self.seed)

    def check(self) -> None:
        """Raise ``AssertionError`` if any structural invariant is violated."""
        assert np.all(self.bits >= 0)
        assert len(self.order) == self.total
        assert np.all(np.diff(self.bits) <= 0), "bits must be non-increasing"
        replay = np.bincount(self.order, minlength=len(self.bits))
        assert np.array_equal(replay, self.bits), "order does not replay to bits"

    def to_dict(self) -> dict:
        return {
            "B": self.total,
            "bits": self.bits.tolist(),
            "order": self.order.tolist(),
            "latent_dim": self.latent_dim,
            "oracle_mode": self.oracle_mode,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "BitAllocation":
        alloc = cls(d["bits"], d["order"], d.get("oracle_mode", "analytic"), d.get("seed"))
        if alloc.total != d["B"] or alloc.latent_dim != d["latent_dim"]:
            raise ValueError("inconsistent allocation record")
        return alloc

    @classmethod
    def from_json(cls, text: str) -> "BitAllocation":
        return cls.from_dict(json.loads(text))
