"""Offline training at the BS and artifact persistence.

``train`` runs the whole offline stage on noisy uplink channels:

1. PCA on the vectorized training set;
2. sparsify the leading components at ``eta``, round to what is actually
   offloaded, rebuild the orthonormal basis exactly as the UE will;
3. greedy bit allocation for the largest feedback length on the projection
   of the training set onto the rebuilt basis;
4. codebook on the leading ``N_P`` latent columns.

Smaller feedback lengths reuse the bit order of the largest one: the greedy
allocation of ``B' < B`` bits is exactly the first ``B'`` awards of the run
for ``B``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import container, offload, pca
from .bitalloc import ANALYTIC, EMPIRICAL, DistortionOracle, allocate_bits
from .bits import BitAllocation
from .codec import CodecState
from .errors import ModelMismatchError
from .quantizer import (PER_COMPONENT, SHARED, Codebook, KMeansConfig, build_per_component,
                        build_shared, load_codebook, save_codebook)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    B_list: tuple[int, ...] = (64, 128, 256, 512)
    eta: float = 16.0
    oracle: str = EMPIRICAL
    codebook: str = SHARED
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)

    def __post_init__(self):
        object.__setattr__(self, "B_list", tuple(int(b) for b in self.B_list))
        if any(b < 0 for b in self.B_list):
            raise ValueError("feedback lengths must be non-negative")
        if self.oracle not in (ANALYTIC, EMPIRICAL):
            raise ValueError(f"unknown oracle {self.oracle!r}")
        if self.codebook not in (PER_COMPONENT, SHARED):
            raise ValueError(f"unknown codebook variant {self.codebook!r}")

    @property
    def B_max(self) -> int:
        return max(self.B_list) if self.B_list else 0


@dataclass(eq=False)
class TrainedSystem:
    model: pca.PcaModel
    offloaded: offload.SparsifiedModel  # at wire precision
    basis: np.ndarray                   # rebuilt orthonormal basis (D, n_basis)
    allocation: BitAllocation           # for B_max
    codebook: Codebook                  # at wire precision
    config: TrainConfig
    shape: tuple[int, int]

    @property
    def mean(self) -> np.ndarray:
        return self.offloaded.mean

    def state(self, B: int) -> CodecState:
        return CodecState(self.basis, self.mean, self.codebook, self.allocation.prefix(B), self.shape)

    def states(self) -> dict[int, CodecState]:
        return {B: self.state(B) for B in self.config.B_list}


def train(ul_observed: np.ndarray, dims: tuple[int, int, int], cfg: TrainConfig) -> TrainedSystem:
    """Offline stage on ``(N_train, n_a, n_c)`` noisy, normalized uplink channels."""
    ul_observed = np.asarray(ul_observed)
    n_train = ul_observed.shape[0]
    if n_train < 2:
        raise ValueError(f"need at least 2 training samples, got {n_train}")
    n_a, n_c = ul_observed.shape[1:]
    x = ul_observed.reshape(n_train, -1)
    model = pca.fit(x, dims)

    # Only components up to B_max + 1 can ever be candidates for a bit.
    n_basis = min(model.rank, cfg.B_max + 1)
    sparse = offload.sparsify(model, n_basis, cfg.eta)
    wire = offload.to_wire_precision(sparse)
    basis = offload.densify(wire)
    log.info("basis rebuilt: %d components, eta=%g", n_basis, cfg.eta)

    g_hat = (x - wire.mean) @ basis
    if cfg.oracle == EMPIRICAL:
        oracle = DistortionOracle.empirical(g_hat, cfg.kmeans)
    else:
        oracle = DistortionOracle.analytic(np.mean(np.abs(g_hat - g_hat.mean(axis=0)) ** 2, axis=0))
    alloc = allocate_bits(cfg.B_max, oracle)
    log.info("allocated B=%d: N_P=%d, b_1=%d", alloc.total, alloc.latent_dim,
             int(alloc.bits[0]) if alloc.total else 0)

    z_hat = g_hat[:, :alloc.latent_dim]
    if cfg.codebook == SHARED:
        codebook = build_shared(z_hat, alloc, cfg.kmeans)
    else:
        fits = oracle.per_component_fits() if cfg.oracle == EMPIRICAL else None
        codebook = build_per_component(z_hat, alloc, cfg.kmeans, fit_cache=fits)
    return TrainedSystem(model, wire, basis, alloc, codebook.at_wire_precision(), cfg, (n_a, n_c))


def _config_echo(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["B_list"] = list(cfg.B_list)
    return d


def save_system(system: TrainedSystem, out_dir, meta: dict | None = None) -> dict:
    """Persist every artifact; returns the manifest (also written as JSON)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = dict(meta or {})
    fp_model = pca.save(system.model, out / "pca.bin", meta)
    wire_bytes = system.offloaded.to_bytes()
    (out / "offload.bin").write_bytes(wire_bytes)
    fp_offload = container.fingerprint(wire_bytes)
    container.sidecar_path(out / "offload.bin").write_text(json.dumps(
        {"kind": "sparsified_model", "fingerprint": fp_offload, "eta": system.offloaded.eta,
         "n_p": system.offloaded.n_p, "dims": list(system.offloaded.dims), **meta},
        indent=2, sort_keys=True))
    fp_codebook = save_codebook(system.codebook, out / "codebook.bin",
                                {"offload_fingerprint": fp_offload, **meta})
    allocs = {}
    for B in system.config.B_list:
        name = f"alloc_B{B}.json"
        (out / name).write_text(json.dumps(system.allocation.prefix(B).to_dict(), sort_keys=True))
        allocs[str(B)] = {"file": name, "model_id": f"{system.state(B).model_id:016x}"}
    manifest = {
        "kind": "csi_feedback_system",
        "train_config": _config_echo(system.config),
        "shape": list(system.shape),
        "dims": list(system.model.dims),
        "fingerprints": {"pca": fp_model, "offload": fp_offload, "codebook": fp_codebook},
        "allocations": allocs,
        **meta,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_states(out_dir) -> tuple[dict[int, CodecState], dict]:
    """Rebuild the codec states from disk; BS and UE both go through here."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    wire_bytes = (out / "offload.bin").read_bytes()
    if container.fingerprint(wire_bytes) != manifest["fingerprints"]["offload"]:
        raise ModelMismatchError("offload artifact does not match manifest")
    wire = offload.SparsifiedModel.from_bytes(wire_bytes)
    basis = offload.densify(wire)
    codebook, cmeta = load_codebook(out / "codebook.bin")
    if cmeta["fingerprint"] != manifest["fingerprints"]["codebook"]:
        raise ModelMismatchError("codebook artifact does not match manifest")
    shape = tuple(manifest["shape"])
    states = {}
    for B_str, entry in manifest["allocations"].items():
        alloc = BitAllocation.from_json((out / entry["file"]).read_text())
        states[int(B_str)] = CodecState(basis, wire.mean, codebook, alloc, shape)
    return states, manifest
