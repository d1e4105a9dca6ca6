import csv
import json

import numpy as np
import pytest

from csifeedback import cli, codec, container, pipeline

FAST = ["--n-train", "200", "--n-test", "40", "--oracle", "analytic", "--codebook", "per-component",
        "--b-list", "32,64"]


def run(*args):
    return cli.run([str(a) for a in args])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("generate", *FAST, "--out", d / "ds") == 0
    assert run("train", *FAST, "--dataset", d / "ds" / "dataset.bin", "--out", d / "model") == 0
    return d


def test_generate_persists_container_and_sidecar(workdir):
    arrays, meta = container.load(workdir / "ds" / "dataset.bin")
    assert arrays["h_dl"].shape == (240, 16, 32) and arrays["h_dl"].dtype == np.complex64
    assert meta["scenario"]["n_c"] == 32 and meta["n_train"] == 200


def test_train_artifacts_and_idempotence(workdir):
    manifest = json.loads((workdir / "model" / "manifest.json").read_text())
    assert set(manifest["allocations"]) == {"32", "64"}
    assert manifest["config_echo"]["seed"] == 0 and manifest["training_fingerprint"]
    assert run("train", *FAST, "--dataset", workdir / "ds" / "dataset.bin", "--out", workdir / "again") == 0
    for name in ("pca.bin", "offload.bin", "codebook.bin", "alloc_B64.json", "manifest.json"):
        assert (workdir / "model" / name).read_bytes() == (workdir / "again" / name).read_bytes()


def test_offload_encode_decode(workdir):
    assert run("offload", *FAST, "--model", workdir / "model", "--out", workdir / "ue") == 0
    report = json.loads((workdir / "ue" / "offload_report.json").read_text())
    assert report["per_B"]["64"]["model_params_sparsified"] < report["per_B"]["64"]["model_params_exact"]
    assert report["offload_bytes"] == (workdir / "model" / "offload.bin").stat().st_size

    # UE encodes with the offloaded bundle, BS decodes with its own artifacts
    assert run("encode", *FAST, "--model", workdir / "ue", "--dataset", workdir / "ds" / "dataset.bin",
               "--index", "0,3", "--B", 64, "--out", workdir / "frames") == 0
    frame_path = workdir / "frames" / "frame_3_B64.bin"
    frame = codec.FeedbackFrame.from_bytes(frame_path.read_bytes())
    assert frame.b_used == 64
    assert run("decode", *FAST, "--model", workdir / "model", "--frame", frame_path, "--out", workdir / "dec") == 0
    arrays, meta = container.load(workdir / "dec" / "frame_3_B64_decoded.bin")
    states, _ = pipeline.load_states(workdir / "model")
    np.testing.assert_allclose(arrays["h_hat"], codec.decode(frame, states[64]), atol=1e-5)
    ue_states, _ = pipeline.load_states(workdir / "ue")
    assert ue_states[64].model_id == states[64].model_id


def test_evaluate(workdir):
    assert run("evaluate", *FAST, "--model", workdir / "model", "--dataset", workdir / "ds" / "dataset.bin",
               "--n-trials", 5, "--out", workdir / "eval") == 0
    rows = list(csv.DictReader(open(workdir / "eval" / "report.csv")))
    assert len(rows) == 10
    summary = json.loads((workdir / "eval" / "report.json").read_text())
    assert summary["config"]["command"] == "evaluate" and "model_fingerprints" in summary["config"]


def test_mismatch_exit_code(workdir):
    assert run("train", *FAST, "--seed", 1, "--out", workdir / "other") == 0
    assert run("encode", *FAST, "--seed", 1, "--model", workdir / "other", "--B", 64,
               "--out", workdir / "oframes") == 0
    assert run("decode", *FAST, "--model", workdir / "model",
               "--frame", workdir / "oframes" / "frame_0_B64.bin", "--out", workdir / "x") == 2


def test_tampered_artifact_exit_code(workdir, tmp_path):
    for name in ("offload.bin", "codebook.bin", "codebook.bin.json", "manifest.json", "alloc_B64.json",
                 "alloc_B32.json"):
        (tmp_path / name).write_bytes((workdir / "model" / name).read_bytes())
    blob = bytearray((tmp_path / "codebook.bin").read_bytes())
    blob[-1] ^= 0xFF
    (tmp_path / "codebook.bin").write_bytes(bytes(blob))
    assert run("offload", *FAST, "--model", tmp_path, "--out", tmp_path / "ue") == 2


def test_usage_errors(workdir, tmp_path):
    assert run("train", "--b-list", "64,32", "--out", tmp_path) == 1
    assert run("evaluate", "--model", tmp_path / "missing", "--out", tmp_path) == 1
    assert run("encode", "--dataset", tmp_path / "missing.bin", "--model", workdir / "model") == 1
    assert run("train", "--eta", "1,16", "--out", tmp_path) == 1
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run("decode", "--model", workdir / "model")
    assert exc.value.code == 1


def test_numerical_failure_exit_code(tmp_path):
    # one coefficient per component cannot span 65 directions
    assert run("train", *FAST, "--eta", 512, "--out", tmp_path) == 3


def test_zero_feedback_model(tmp_path):
    args = [a if a != "32,64" else "0" for a in FAST]
    assert run("train", *args, "--out", tmp_path) == 0
    states, _ = pipeline.load_states(tmp_path)
    assert states[0].B == 0 and states[0].n_p == 0


def test_sweep(tmp_path):
    args = [a if a != "32,64" else "32,48" for a in FAST]
    assert run("sweep", *args, "--eta", "1,16", "--n-trials", 3, "--out", tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert len(rows) == 4
    for B in ("32", "48"):
        by_eta = {r["eta"]: int(r["model_params"]) for r in rows if r["B"] == B}
        assert by_eta["1.0"] > by_eta["16.0"]


def test_empty_sweep(tmp_path):
    assert run("sweep", "--b-list", "", "--out", tmp_path) == 0
    assert (tmp_path / "sweep.csv").read_text().strip().startswith("B,eta")
    assert json.loads((tmp_path / "sweep.json").read_text())["rows"] == []
