"""CLI: config resolution, emission formats, exit codes, determinism."""

import csv
import json

import numpy as np
import pytest

from sovlab.cli import (
    config_hash,
    emit,
    main,
    parse_config_file,
    read_structured,
    resolve_params,
)
from sovlab.errors import ConfigError

FAST_SOV = ["--param", "S=2", "--param", "n_times=4", "--param", "conv_tol=0.1"]


def read_csv(path):
    raw = path.read_bytes().decode("utf-8")
    assert "\r\n" in raw
    lines = raw.split("\r\n")
    assert lines[0].startswith("# manifest: manifest.json config_hash=")
    body = [l for l in lines[1:] if l]
    return lines[0], list(csv.reader(body))


def test_config_file_parser(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("S = 4\n# full line comment\nOmega=2.0  # trailing\n\n")
    assert parse_config_file(cfg) == {"S": "4", "Omega": "2.0"}
    cfg.write_text("S = 4\nS = 5\n")
    with pytest.raises(ConfigError):
        parse_config_file(cfg)
    cfg.write_text("just words\n")
    with pytest.raises(ConfigError):
        parse_config_file(cfg)
    with pytest.raises(ConfigError):
        parse_config_file(tmp_path / "missing.cfg")


def test_resolution_precedence_and_rejection():
    params = resolve_params("quantum-sov", {"S": "4", "t_max": "0.3"},
                            {"S": "6"})
    assert params["S"] == 6.0
    assert params["t_max"] == 0.3
    assert params["Omega"] == 1.0  # untouched default
    with pytest.raises(ConfigError):
        resolve_params("quantum-sov", {"bogus": "1"}, {})
    with pytest.raises(ConfigError):
        resolve_params("quantum-sov", {}, {"gamma": "-1"})
    with pytest.raises(ConfigError):
        resolve_params("quantum-sov", {}, {"S": "2.3"})
    with pytest.raises(ConfigError):
        resolve_params("phase-diagram", {}, {"omega_min": "0"})


def test_config_hash_tracks_only_the_computation():
    base = resolve_params("classical-lyapunov", {}, {})
    assert config_hash("classical-lyapunov", base) == \
        config_hash("classical-lyapunov", dict(base))
    changed = dict(base, seed=1)
    assert config_hash("classical-lyapunov", base) != \
        config_hash("classical-lyapunov", changed)
    assert config_hash("classical-lyapunov", base) != \
        config_hash("phase-diagram", base)


def test_emit_csv_shape_and_empty_table(tmp_path):
    files = emit(tmp_path, "demo", ["a", "b"], [[1, 2.5], [3, -0.125]],
                 "csv", "f" * 64)
    assert files == ["demo.csv"]
    comment, rows = read_csv(tmp_path / "demo.csv")
    assert comment.endswith("f" * 64)
    assert rows[0] == ["a", "b"]
    assert rows[1] == ["1", "2.5"]
    # empty result set still carries the header
    emit(tmp_path, "empty", ["x", "y"], [], "csv", "0" * 64)
    _, rows = read_csv(tmp_path / "empty.csv")
    assert rows == [["x", "y"]]


def test_emit_structured_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(4)
    rows = [[float(x), float(y)] for x, y in rng.normal(size=(20, 2))]
    emit(tmp_path, "rt", ["u", "v"], rows, "structured", "a" * 64)
    back = read_structured(tmp_path / "rt.json")
    assert back["columns"] == ["u", "v"]
    assert back["rows"] == rows  # exact float equality after the roundtrip
    assert back["manifest_ref"]["config_hash"] == "a" * 64


def test_quantum_sov_run_writes_table_and_manifest(tmp_path):
    out = tmp_path / "run"
    code = main(["quantum-sov", *FAST_SOV, "--out", str(out)])
    assert code == 0
    comment, rows = read_csv(out / "quantum-sov.csv")
    # S = 2: columns t, lambda_0..lambda_4, minstate_expectation
    assert rows[0] == ["t"] + [f"lambda_{k}" for k in range(5)] + \
        ["minstate_expectation"]
    assert len(rows) == 1 + 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == "quantum-sov"
    assert manifest["data_files"] == ["quantum-sov.csv"]
    assert manifest["config_hash"] in comment
    assert "wall_time_s" in manifest
    # eigenvalues come out sorted and the min-state column is bracketed
    # by the extreme eigenvalues
    for row in rows[1:]:
        lams = [float(x) for x in row[1:6]]
        assert lams == sorted(lams)
        assert lams[0] - 1e-9 <= float(row[6]) <= lams[4] + 1e-9


def test_otoc_run_model_column(tmp_path):
    out = tmp_path / "run"
    code = main(["otoc", "--param", "S=2", "--param", "n_times=6",
                 "--out", str(out)])
    assert code == 0
    _, rows = read_csv(out / "otoc.csv")
    assert rows[0] == ["t", "C_t", "C0_exp_model"]
    manifest = json.loads((out / "manifest.json").read_text())
    t0, c0 = float(rows[1][0]), float(rows[1][1])
    # inside the dissipation window the model tracks the exact series
    assert t0 < 0.05 * manifest["tau_D"]
    assert float(rows[1][2]) == pytest.approx(c0, rel=0.05)


def test_min_state_run(tmp_path):
    out = tmp_path / "run"
    code = main(["min-state", "--param", "S=2", "--param", "conv_tol=0.1",
                 "--out", str(out)])
    assert code == 0
    _, rows = read_csv(out / "min-state.csv")
    amps = np.array([complex(float(r[1]), float(r[2])) for r in rows[1:]])
    assert amps.shape == (5,)
    assert np.linalg.norm(amps) == pytest.approx(1.0, abs=1e-9)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["eigenvalue"] >= 0


def test_classical_lyapunov_run(tmp_path):
    out = tmp_path / "run"
    code = main(["classical-lyapunov", "--param", "M=20",
                 "--param", "t_max=5", "--seed", "3", "--out", str(out)])
    assert code == 0
    _, rows = read_csv(out / "classical-lyapunov.csv")
    assert rows[0] == ["Omega", "gamma", "lambda", "stderr", "n_blowups",
                       "reliable", "lambda_van_kampen"]
    assert float(rows[1][6]) == pytest.approx(0.75)  # Omega=1, gamma=0.25
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["params"]["seed"] == 3


def test_phase_diagram_determinism_across_workers(tmp_path):
    args = ["phase-diagram", "--param", "n_omega=2", "--param", "n_gamma=2",
            "--param", "M=6", "--param", "t_max=2"]
    blobs = []
    for threads in ("1", "2", "4"):
        out = tmp_path / f"w{threads}"
        assert main([*args, "--threads", threads, "--out", str(out)]) == 0
        blobs.append((out / "phase-diagram.csv").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]
    _, rows = read_csv(tmp_path / "w1" / "phase-diagram.csv")
    assert rows[0] == ["Omega", "gamma", "lambda", "stderr", "n_blowups"]
    assert len(rows) == 1 + 4


def test_threads_environment_fallback(tmp_path, monkeypatch):
    out1 = tmp_path / "env"
    monkeypatch.setenv("SOVLAB_THREADS", "2")
    args = ["phase-diagram", "--param", "n_omega=2", "--param", "n_gamma=1",
            "--param", "M=4", "--param", "t_max=1"]
    assert main([*args, "--out", str(out1)]) == 0
    out2 = tmp_path / "flag"
    monkeypatch.delenv("SOVLAB_THREADS")
    assert main([*args, "--threads", "1", "--out", str(out2)]) == 0
    assert (out1 / "phase-diagram.csv").read_bytes() == \
        (out2 / "phase-diagram.csv").read_bytes()


def test_structured_format_run_and_reingest(tmp_path):
    out = tmp_path / "run"
    code = main(["classical-lyapunov", "--param", "M=10", "--param", "t_max=2",
                 "--out", str(out), "--format", "structured"])
    assert code == 0
    data = read_structured(out / "classical-lyapunov.json")
    manifest = json.loads((out / "manifest.json").read_text())
    assert data["manifest_ref"]["config_hash"] == manifest["config_hash"]
    assert len(data["rows"]) == 1


def test_exit_code_2_on_config_errors(tmp_path, capsys):
    assert main(["quantum-sov", "--param", "bogus=1",
                 "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config"
    assert main(["quantum-sov", "--param", "S=0", "--out", str(tmp_path)]) == 2
    assert main(["otoc", "--config", str(tmp_path / "nope.cfg"),
                 "--out", str(tmp_path)]) == 2
    assert main(["classical-lyapunov", "--threads", "0",
                 "--out", str(tmp_path)]) == 2
    # --seed only applies to experiments that consume a seed
    assert main(["quantum-sov", "--seed", "1", "--out", str(tmp_path)]) == 2


def test_exit_code_4_on_nonconvergence(tmp_path, capsys):
    # S=2 at short t_max does not settle to 1e-9 eigenvector overlap
    code = main(["min-state", "--param", "S=2", "--param", "conv_tol=1e-9",
                 "--out", str(tmp_path)])
    assert code == 4
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "convergence"


def test_repeat_runs_are_bit_identical(tmp_path):
    args = ["quantum-sov", *FAST_SOV]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main([*args, "--out", str(out1)]) == 0
    assert main([*args, "--out", str(out2)]) == 0
    assert (out1 / "quantum-sov.csv").read_bytes() == \
        (out2 / "quantum-sov.csv").read_bytes()
