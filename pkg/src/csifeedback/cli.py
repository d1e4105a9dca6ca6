"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data/model mismatch, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channel, codec, container, evaluation, offload, pipeline
from .config import PROFILES, Profile, ScenarioConfig, load_scenario
from .errors import ModelMismatchError, NumericalError
from .quantizer import KMeansConfig

log = logging.getLogger("csifeedback")

EXIT_OK, EXIT_USAGE, EXIT_MISMATCH, EXIT_NUMERICAL = 0, 1, 2, 3

# stream tags for seed derivation
_UL_NOISE, _DL_NOISE, _MONTE_CARLO = 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    scenario: ScenarioConfig
    profile: Profile
    B_list: list[int]
    eta: list[float]
    oracle_mode: str
    codebook_variant: str
    seed: int
    out: Path
    paths: dict = field(default_factory=dict)
    n_trials: int = 200
    n_users: int = 8
    snr_db: float = 10.0

    def __post_init__(self):
        if any(b < 0 for b in self.B_list) or any(b2 <= b1 for b1, b2 in zip(self.B_list, self.B_list[1:])):
            raise UsageError(f"--b-list must be strictly increasing non-negative integers, got {self.B_list}")
        for name, p in self.paths.items():
            if p is not None and name in _CONSUMED and not Path(p).exists():
                raise UsageError(f"--{name} {p} does not exist")

    def sub_seed(self, tag: int) -> int:
        return int(np.random.SeedSequence([self.seed, tag]).generate_state(1)[0])

    def echo(self) -> dict:
        return {
            "command": self.command,
            "scenario": self.scenario.to_dict(),
            "n_train": self.profile.n_train,
            "n_test": self.profile.n_test,
            "snr_ul_db": self.profile.snr_ul_db,
            "snr_dl_db": self.profile.snr_dl_db,
            "B_list": self.B_list,
            "eta": self.eta,
            "oracle": self.oracle_mode,
            "codebook": self.codebook_variant,
            "seed": self.seed,
            "n_trials": self.n_trials,
            "n_users": self.n_users,
            "snr_db": self.snr_db,
        }


_CONSUMED = {"dataset", "model", "frame"}


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()] if text.strip() else []


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()] if text.strip() else []


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value scenario file (overrides the profile)")
    common.add_argument("--scenario", choices=sorted(PROFILES), default="desk")
    common.add_argument("--b-list", type=_int_list, default=[64, 128, 256, 512])
    common.add_argument("--eta", type=_float_list, default=[16.0], help="one value, or a list for sweep")
    common.add_argument("--oracle", choices=["analytic", "empirical"], default="empirical")
    common.add_argument("--codebook", choices=["per-component", "shared"], default="shared")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=Path("out"))
    common.add_argument("--dataset", type=Path, help="dataset container from 'generate'")
    common.add_argument("--model", type=Path, help="artifact directory from 'train'")
    common.add_argument("--n-train", type=int)
    common.add_argument("--n-test", type=int)
    common.add_argument("--n-trials", type=int, default=200)
    common.add_argument("--users", type=int, default=8, help="K users per Monte Carlo trial")
    common.add_argument("--snr-db", type=float, default=10.0, help="downlink transmit SNR for the sum rate")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="csifb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("generate", parents=[common], help="generate uplink/downlink channel pairs")
    sub.add_parser("train", parents=[common], help="offline learning at the BS")
    sub.add_parser("offload", parents=[common], help="write the UE bundle and offload counts")
    p = sub.add_parser("encode", parents=[common], help="UE side: channel -> feedback frame")
    p.add_argument("--index", type=_int_list, default=[0], help="test-set indices to encode")
    p.add_argument("--B", type=int, dest="feedback", help="feedback length (default: largest trained)")
    p = sub.add_parser("decode", parents=[common], help="BS side: feedback frame -> channel")
    p.add_argument("--frame", type=Path, required=True)
    sub.add_parser("evaluate", parents=[common], help="Monte Carlo evaluation of a trained model")
    sub.add_parser("sweep", parents=[common], help="train and evaluate over a (B, eta) grid")
    return parser


def make_run_config(args) -> RunConfig:
    profile = PROFILES[args.scenario]
    scenario = profile.scenario
    if args.config is not None:
        if not args.config.exists():
            raise UsageError(f"--config {args.config} does not exist")
        scenario = load_scenario(args.config, base=scenario)
    scenario = scenario.replace(seed=args.seed)
    profile = Profile(scenario,
                      n_train=args.n_train if args.n_train is not None else profile.n_train,
                      n_test=args.n_test if args.n_test is not None else profile.n_test,
                      snr_ul_db=profile.snr_ul_db, snr_dl_db=profile.snr_dl_db)
    if args.command != "sweep" and len(args.eta) > 1:
        raise UsageError("--eta takes a single value except for 'sweep'")
    paths = {"dataset": args.dataset, "model": args.model, "frame": getattr(args, "frame", None)}
    return RunConfig(args.command, scenario, profile, args.b_list, args.eta, args.oracle,
                     args.codebook.replace("-", "_"), args.seed, args.out, paths,
                     n_trials=args.n_trials, n_users=args.users, snr_db=args.snr_db)


# -- datasets -----------------------------------------------------------------

def _generate(rc: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    n = rc.profile.n_train + rc.profile.n_test
    return channel.generate_dataset(rc.scenario, n)


def _save_dataset(path: Path, ul, dl, rc: RunConfig) -> str:
    meta = {"kind": "dataset", "scenario": rc.scenario.to_dict(), "user_seeds": [0, len(ul)],
            "n_train": rc.profile.n_train, "n_test": rc.profile.n_test, "normalized": True}
    return container.save(path, {"h_ul": ul.astype(np.complex64), "h_dl": dl.astype(np.complex64)}, meta)


def _dataset(rc: RunConfig) -> tuple[np.ndarray, np.ndarray, dict]:
    if rc.paths.get("dataset") is not None:
        arrays, meta = container.load(rc.paths["dataset"])
        sc = ScenarioConfig(**meta["scenario"])
        rc.scenario = sc
        rc.profile = Profile(sc, meta["n_train"], meta["n_test"], rc.profile.snr_ul_db, rc.profile.snr_dl_db)
        return arrays["h_ul"].astype(complex), arrays["h_dl"].astype(complex), meta
    ul, dl = _generate(rc)
    return ul, dl, {"scenario": rc.scenario.to_dict(), "fingerprint": None}


def _split(rc: RunConfig, ul, dl):
    n_tr = rc.profile.n_train
    if n_tr < 2:
        raise ValueError(f"need at least 2 training samples, got {n_tr}")
    train_obs = channel.noisy_normalized(ul[:n_tr], rc.profile.snr_ul_db, rc.sub_seed(_UL_NOISE))
    test_true = dl[n_tr:]
    test_obs = channel.noisy_normalized(test_true, rc.profile.snr_dl_db, rc.sub_seed(_DL_NOISE))
    return train_obs, test_true, test_obs


def _train_config(rc: RunConfig, eta: float) -> pipeline.TrainConfig:
    return pipeline.TrainConfig(tuple(rc.B_list), eta, rc.oracle_mode, rc.codebook_variant,
                                KMeansConfig(seed=rc.seed))


# -- commands -----------------------------------------------------------------

def cmd_generate(rc: RunConfig) -> dict:
    rc.out.mkdir(parents=True, exist_ok=True)
    ul, dl = _generate(rc)
    fp = _save_dataset(rc.out / "dataset.bin", ul, dl, rc)
    return {"dataset": str(rc.out / "dataset.bin"), "fingerprint": fp, "users": len(ul)}


def cmd_train(rc: RunConfig) -> dict:
    ul, dl, dmeta = _dataset(rc)
    train_obs, _, _ = _split(rc, ul, dl)
    system = pipeline.train(train_obs, rc.scenario.dims, _train_config(rc, rc.eta[0]))
    meta = {"config_echo": rc.echo(), "dataset_fingerprint": dmeta.get("fingerprint"),
            "training_fingerprint": container.fingerprint(train_obs.astype(np.complex64).tobytes())}
    manifest = pipeline.save_system(system, rc.out, meta)
    return {"out": str(rc.out), "N_P": system.allocation.latent_dim,
            "b_1": int(system.allocation.bits[0]) if system.allocation.total else 0,
            "model_ids": {B: e["model_id"] for B, e in manifest["allocations"].items()}}


def _model_dir(rc: RunConfig) -> Path:
    if rc.paths.get("model") is None:
        raise UsageError("--model is required")
    return Path(rc.paths["model"])


def cmd_offload(rc: RunConfig) -> dict:
    states, manifest = pipeline.load_states(_model_dir(rc))
    src = _model_dir(rc)
    rc.out.mkdir(parents=True, exist_ok=True)
    names = ["offload.bin", "offload.bin.json", "codebook.bin", "codebook.bin.json", "manifest.json"]
    names += [e["file"] for e in manifest["allocations"].values()]
    for name in names:
        if (src / name).resolve() != (rc.out / name).resolve():
            (rc.out / name).write_bytes((src / name).read_bytes())
    wire = offload.SparsifiedModel.from_bytes((src / "offload.bin").read_bytes())
    n_a, n_c = manifest["shape"]
    rows = {}
    for B, st in sorted(states.items()):
        rows[str(B)] = {
            "N_P": st.n_p,
            "model_params_exact": offload.count_model_params(n_a, n_c, st.n_p, mode="exact"),
            "model_params_sparsified": offload.count_model_params(n_a, n_c, st.n_p, wire.eta, "sparsified"),
            "codebook_params_per_component": offload.count_codebook_params(st.allocation, "per_component"),
            "codebook_params_shared": offload.count_codebook_params(st.allocation, "shared"),
        }
    report = {"eta": wire.eta, "offload_bytes": len((src / "offload.bin").read_bytes()),
              "offloaded_components": wire.n_p, "per_B": rows}
    (rc.out / "offload_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return report


def cmd_encode(rc: RunConfig, indices: list[int], feedback: int | None) -> dict:
    states, _ = pipeline.load_states(_model_dir(rc))
    B = max(states) if feedback is None else feedback
    if B not in states:
        raise UsageError(f"B={B} not trained; available {sorted(states)}")
    ul, dl, _ = _dataset(rc)
    _, _, test_obs = _split(rc, ul, dl)
    rc.out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in indices:
        if not 0 <= i < len(test_obs):
            raise UsageError(f"--index {i} outside test set of {len(test_obs)}")
        frame = codec.encode(test_obs[i], states[B])
        path = rc.out / f"frame_{i}_B{B}.bin"
        path.write_bytes(frame.to_bytes())
        written.append(str(path))
    return {"B": B, "model_id": f"{states[B].model_id:016x}", "frames": written}


def cmd_decode(rc: RunConfig) -> dict:
    states, _ = pipeline.load_states(_model_dir(rc))
    frame = codec.FeedbackFrame.from_bytes(Path(rc.paths["frame"]).read_bytes())
    state = states.get(frame.b_used)
    if state is None:
        raise ModelMismatchError("frame/model mismatch: no model for this feedback length")
    h_hat = codec.decode(frame, state)
    rc.out.mkdir(parents=True, exist_ok=True)
    path = rc.out / (Path(rc.paths["frame"]).stem + "_decoded.bin")
    container.save(path, {"h_hat": h_hat.astype(np.complex64)},
                   {"kind": "reconstruction", "model_id": f"{frame.model_id:016x}", "B": frame.b_used})
    return {"reconstruction": str(path), "B": frame.b_used}


def _evaluate_states(rc: RunConfig, states, test_true, test_obs) -> evaluation.EvalReport:
    stack = evaluation.ModelStack(states, test_true, test_obs)
    ecfg = evaluation.EvalConfig(rc.n_users, rc.snr_db)
    report = evaluation.run_monte_carlo(ecfg, stack, sorted(states), rc.n_trials, rc.sub_seed(_MONTE_CARLO))
    report.config_echo.update(rc.echo())
    report.seeds.update({"master": rc.seed, "ul_noise": rc.sub_seed(_UL_NOISE), "dl_noise": rc.sub_seed(_DL_NOISE)})
    return report


def cmd_evaluate(rc: RunConfig) -> dict:
    states, manifest = pipeline.load_states(_model_dir(rc))
    ul, dl, _ = _dataset(rc)
    _, test_true, test_obs = _split(rc, ul, dl)
    report = _evaluate_states(rc, states, test_true, test_obs)
    report.config_echo["model_fingerprints"] = manifest["fingerprints"]
    rc.out.mkdir(parents=True, exist_ok=True)
    report.to_csv(rc.out / "report.csv")
    report.to_json(rc.out / "report.json")
    return {B: {k: v for k, v in s.items() if not k.endswith("quantiles")}
            for B, s in report.summary()["per_B"].items()}


SWEEP_COLUMNS = ["B", "eta", "N_P", "median_nmse", "median_nmse_db", "mean_cosine", "mean_sum_rate",
                 "sum_rate_stderr", "model_params", "codebook_params"]


def cmd_sweep(rc: RunConfig) -> dict:
    rc.out.mkdir(parents=True, exist_ok=True)
    rows = []
    if rc.B_list and rc.eta:
        ul, dl, _ = _dataset(rc)
        train_obs, test_true, test_obs = _split(rc, ul, dl)
        for eta in rc.eta:
            t0 = time.perf_counter()
            system = pipeline.train(train_obs, rc.scenario.dims, _train_config(rc, eta))
            report = _evaluate_states(rc, system.states(), test_true, test_obs)
            summary = report.summary()["per_B"]
            log.info("eta=%g done in %.1fs", eta, time.perf_counter() - t0)
            for B in rc.B_list:
                st = system.state(B)
                s = summary[str(B)]
                rows.append({
                    "B": B, "eta": eta, "N_P": st.n_p,
                    "median_nmse": s["median_nmse"], "median_nmse_db": s["median_nmse_db"],
                    "mean_cosine": s["mean_cosine"], "mean_sum_rate": s["mean_sum_rate"],
                    "sum_rate_stderr": s["sum_rate_stderr"],
                    "model_params": offload.count_model_params(
                        rc.scenario.n_a, rc.scenario.n_c, st.n_p, eta, "sparsified"),
                    "codebook_params": offload.count_codebook_params(st.allocation, rc.codebook_variant),
                })
    with open(rc.out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    (rc.out / "sweep.json").write_text(json.dumps({"config": rc.echo(), "rows": rows}, indent=2))
    return {"rows": len(rows), "csv": str(rc.out / "sweep.csv")}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = make_run_config(args)
        if rc.command == "generate":
            result = cmd_generate(rc)
        elif rc.command == "train":
            result = cmd_train(rc)
        elif rc.command == "offload":
            result = cmd_offload(rc)
        elif rc.command == "encode":
            result = cmd_encode(rc, args.index, args.feedback)
        elif rc.command == "decode":
            result = cmd_decode(rc)
        elif rc.command == "evaluate":
            result = cmd_evaluate(rc)
        else:
            result = cmd_sweep(rc)
    except ModelMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
