"""UE encoder and BS decoder over a bit-exact feedback frame.

Frame wire format (little-endian): 8-byte model id, 4-byte B, then
``ceil(B / 8)`` payload bytes. Indices are packed in ascending component
order, each as ``b_n`` bits, most significant bit first; tail bits of the
last byte are zero.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .bits import BitAllocation
from .errors import ModelMismatchError
from .quantizer import Codebook, LevelTable, codebook_arrays

NORM_TOLERANCE = 0.01


@dataclass(frozen=True, eq=False)
class FeedbackFrame:
    payload: np.ndarray  # (B,) uint8 of 0/1
    model_id: int

    @property
    def b_used(self) -> int:
        return len(self.payload)

    def to_bytes(self) -> bytes:
        head = struct.pack("<QI", self.model_id, self.b_used)
        return head + np.packbits(self.payload.astype(np.uint8)).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "FeedbackFrame":
        if len(data) < 12:
            raise ModelMismatchError("frame/model mismatch: truncated header")
        model_id, B = struct.unpack_from("<QI", data, 0)
        body = np.frombuffer(data, dtype=np.uint8, offset=12)
        if len(body) != (B + 7) // 8:
            raise ModelMismatchError("frame/model mismatch: payload length")
        return cls(np.unpackbits(body)[:B].copy(), model_id)

    def __eq__(self, other):
        return (isinstance(other, FeedbackFrame) and self.model_id == other.model_id
                and np.array_equal(self.payload, other.payload))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CodecState:
    """Everything one side needs: basis, mean, codebook and allocation.

    ``basis`` may have more columns than the allocation uses; only the first
    ``latent_dim`` are read. ``allocation`` may be a prefix of the one the
    codebook was built for (variable-length feedback).
    """

    basis: np.ndarray  # (D, >= N_P)
    mean: np.ndarray   # (D,)
    codebook: Codebook
    allocation: BitAllocation
    shape: tuple[int, int]  # (n_a, n_c)

    def __post_init__(self):
        n_p = self.allocation.latent_dim
        if self.basis.shape[0] != self.shape[0] * self.shape[1] or self.basis.shape[1] < n_p:
            raise ValueError(
                f"basis shape {self.basis.shape} incompatible with channel {self.shape} and N_P={n_p}")

    @property
    def n_p(self) -> int:
        return self.allocation.latent_dim

    @property
    def B(self) -> int:
        return self.allocation.total

    @cached_property
    def basis_np(self) -> np.ndarray:
        return np.ascontiguousarray(self.basis[:, :self.n_p])

    @cached_property
    def table(self) -> LevelTable:
        return LevelTable(self.codebook, self.allocation)

    @cached_property
    def _layout(self) -> tuple[np.ndarray, np.ndarray]:
        rates = self.allocation.bits[:self.n_p]
        comp = np.repeat(np.arange(self.n_p), rates)
        starts = np.cumsum(rates) - rates
        shift = rates[comp] - 1 - (np.arange(len(comp)) - starts[comp])
        return comp, shift

    @cached_property
    def model_id(self) -> int:
        h = hashlib.blake2b(digest_size=8)
        h.update(struct.pack("<II", *self.shape))
        h.update(np.ascontiguousarray(self.basis_np, dtype="<c16").tobytes())
        h.update(np.ascontiguousarray(self.mean, dtype="<c16").tobytes())
        h.update(self.codebook.variant.encode())
        for name, arr in sorted(codebook_arrays(self.codebook).items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(self.allocation.bits.astype("<i8").tobytes())
        h.update(self.allocation.order.astype("<i8").tobytes())
        return int.from_bytes(h.digest(), "little")

    def truncated(self, B: int) -> "CodecState":
        """State for the first ``B`` bits of this allocation."""
        return CodecState(self.basis, self.mean, self.codebook, self.allocation.prefix(B), self.shape)

    def pack(self, indices: np.ndarray) -> np.ndarray:
        comp, shift = self._layout
        return ((np.asarray(indices, dtype=np.int64)[comp] >> shift) & 1).astype(np.uint8)

    def unpack(self, payload: np.ndarray) -> np.ndarray:
        comp, shift = self._layout
        vals = payload.astype(np.int64) << shift
        return np.bincount(comp, weights=vals, minlength=self.n_p).astype(np.int64)

    def latent(self, h: np.ndarray) -> np.ndarray:
        """Unquantized latent coordinates of one channel or a stack of channels."""
        flat = np.asarray(h).reshape(*np.shape(h)[:-2], -1)
        return (flat - self.mean) @ self.basis_np

    def synthesize(self, z_bar: np.ndarray) -> np.ndarray:
        flat = np.asarray(z_bar) @ self.basis_np.conj().T + self.mean
        return flat.reshape(*flat.shape[:-1], *self.shape)

    def reconstruct_many(self, h: np.ndarray) -> np.ndarray:
        """Quantize and rebuild a stack of channels without materializing frames.

        Equivalent to ``decode(encode(h))`` per channel.
        """
        h = np.asarray(h)
        idx = self.table.quantize(self.latent(h))
        return self.synthesize(self.table.dequantize(idx))


def _check_channel(h: np.ndarray, state: CodecState) -> None:
    if h.shape != tuple(state.shape):
        raise ValueError(f"channel shape {h.shape} does not match model {state.shape}")
    energy = float(np.vdot(h, h).real)
    target = h.size
    if abs(energy - target) > NORM_TOLERANCE * target:
        raise ValueError(
            f"channel not normalized: ||H||^2 = {energy:.4g}, expected {target}")


def encode(h_noisy_dl: np.ndarray, state: CodecState, strict: bool = True) -> FeedbackFrame:
    """Quantize one ``(n_a, n_c)`` channel into a frame of exactly ``B`` bits.

    ``strict=False`` skips the normalization guard, e.g. to re-encode a
    decoder output.
    """
    h = np.asarray(h_noisy_dl)
    if strict:
        _check_channel(h, state)
    elif h.shape != tuple(state.shape):
        raise ValueError(f"channel shape {h.shape} does not match model {state.shape}")
    idx = state.table.quantize(state.latent(h))
    return FeedbackFrame(state.pack(idx), state.model_id)


def decode(frame: FeedbackFrame, state: CodecState) -> np.ndarray:
    if frame.model_id != state.model_id or frame.b_used != state.B:
        raise ModelMismatchError("frame/model mismatch")
    idx = state.unpack(frame.payload)
    return state.synthesize(state.table.dequantize(idx))
