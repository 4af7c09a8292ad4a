import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from fraclap.cli import canonical_key, expand_range, main, ConfigError

GRID = {"n": 1, "N": 2048, "L": 8.0}
BALL = {"shape": "ball", "radius": 2.0}


def write_config(tmp_path, name="run", **over):
    cfg = {"grid": GRID, "domain": BALL, "params": {"m": 0.3, "s": 0.2},
           "output_dir": str(tmp_path / "out")}
    cfg.update(over)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    return path


def run_cli(args, env_extra=None):
    env = dict(os.environ)
    env.pop("FRACLAP_OUTPUT_DIR", None)
    env.update(env_extra or {})
    return subprocess.run([sys.executable, "-m", "fraclap.cli", *args], capture_output=True,
                          text=True, env=env)


def test_lemma31(tmp_path, capsys):
    cfg = write_config(tmp_path, grid={"n": 1, "N": 4096, "L": 4.0})
    assert main(["lemma31", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    lines = [ln for ln in out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert len(lines) == 3 and "PASS A_m" in out and "PASS B" in out
    csv_text = (tmp_path / "out" / "lemma31.csv").read_text().splitlines()
    assert csv_text[0].startswith("# fraclap-bubble-report/1")
    assert csv_text[1] == "eps,A_m,A_s,A_s_tilde,B"


def test_order_violation(tmp_path, capsys):
    cfg = write_config(tmp_path, params={"m": 0.6, "s": 0.2})
    assert main(["eigen", "--config", str(cfg)]) == 1
    assert "requires m < n/2" in capsys.readouterr().err


def test_s_not_below_m(tmp_path, capsys):
    cfg = write_config(tmp_path, params={"m": 0.3, "s": 0.3})
    assert main(["groundstate", "--config", str(cfg)]) == 1
    assert "requires s < m" in capsys.readouterr().err


def test_unreadable_config(tmp_path, capsys):
    assert main(["eigen", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["eigen", "--config", str(bad)]) == 1


def test_bad_domain(tmp_path):
    cfg = write_config(tmp_path, domain={"shape": "ball", "radius": 5.0})
    assert main(["eigen", "--config", str(cfg)]) == 1


def test_output_dir_override(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, dump_fields=True)
    monkeypatch.setenv("FRACLAP_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    assert main(["eigen", "--config", str(cfg)]) == 0
    res = json.loads((tmp_path / "elsewhere" / "eigen.json").read_text())
    assert res["lambda1"] > 0
    assert (tmp_path / "elsewhere" / "eigenfield.f8.json").exists()
    assert not (tmp_path / "out").exists()


def test_groundstate_with_fraction(tmp_path):
    cfg = write_config(tmp_path, params={"m": 0.35, "s": 0.25, "lambda_fraction": 0.7})
    assert main(["groundstate", "--config", str(cfg)]) == 0
    res = json.loads((tmp_path / "out" / "groundstate.json").read_text())
    assert res["lambda"] == pytest.approx(0.7 * res["lambda1"])


def test_scurve(tmp_path):
    cfg = write_config(tmp_path, params={"m": 0.35, "s": 0.25}, lambda_fractions=[0.0, 0.5, 0.9])
    assert main(["scurve", "--config", str(cfg)]) == 0
    lines = (tmp_path / "out" / "scurve.csv").read_text().splitlines()
    assert lines[0] == "# fraclap-scurve/1"
    assert lines[1] == "lambda,S_value,converged,concentrated,r_eff,iterations,error"
    assert len(lines) == 5


def test_scurve_partial_failure(tmp_path):
    cfg = write_config(tmp_path, params={"m": 0.35, "s": 0.25}, lambda_fractions=[0.5, 1.2])
    assert main(["scurve", "--config", str(cfg)]) == 2


def test_constants(tmp_path):
    cfg = write_config(tmp_path, params={"m": 0.25}, with_hardy=False)
    assert main(["constants", "--config", str(cfg)]) == 0
    c = json.loads((tmp_path / "out" / "constants.json").read_text())
    assert c["H_m_hat"] is None and c["S_m_hat"] > 0


def test_lambdastar_with_constants_file(tmp_path):
    cfg0 = write_config(tmp_path, params={"m": 0.35}, with_hardy=False)
    assert main(["constants", "--config", str(cfg0)]) == 0
    cfg = write_config(tmp_path, params={"m": 0.35, "s": 0.25}, tolerances={"lambda": 0.05},
                       constants=str(tmp_path / "out" / "constants.json"))
    assert main(["lambdastar", "--config", str(cfg)]) == 0
    res = json.loads((tmp_path / "out" / "lambdastar.json").read_text())
    assert 0 <= res["lambda_star"] < res["lambda1"]


def test_constants_file_mismatch(tmp_path):
    cfg0 = write_config(tmp_path, params={"m": 0.25}, with_hardy=False)
    main(["constants", "--config", str(cfg0)])
    cfg = write_config(tmp_path, params={"m": 0.35, "s": 0.25},
                       constants=str(tmp_path / "out" / "constants.json"))
    assert main(["lambdastar", "--config", str(cfg)]) == 1


def test_expand_range():
    assert expand_range([0.1, 0.2], "m") == [0.1, 0.2]
    assert expand_range(0.3, "m") == [0.3]
    assert expand_range({"start": 0, "stop": 1, "num": 3}, "s") == [0.0, 0.5, 1.0]
    with pytest.raises(ConfigError, match="empty"):
        expand_range([], "m")
    with pytest.raises(ConfigError):
        expand_range({"start": 0}, "m")


def test_canonical_key():
    assert canonical_key(0.3, 0.1) == "m=0.3|s=0.1"


SWEEP = {"m": [0.3, 0.35], "s": [0.1, 0.25, 0.3]}


def sweep_config(tmp_path, name, **sweep):
    return write_config(tmp_path, name, params={"m": 0.3}, tolerances={"lambda": 0.05},
                        sweep=sweep or SWEEP, output_dir=str(tmp_path / name))


def test_empty_range(tmp_path):
    cfg = sweep_config(tmp_path, "e", m=[], s=[0.1])
    assert main(["sweep", "--config", str(cfg)]) == 1


def test_sweep_invalid_pair_recorded(tmp_path):
    cfg = sweep_config(tmp_path, "a")
    proc = run_cli(["sweep", "--config", str(cfg)])
    # m=0.3, s=0.3 violates s < m: recorded as failed, not fatal
    assert proc.returncode == 2
    rows = (tmp_path / "a" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 2 + 6
    bad = [r for r in rows if r.startswith("m=0.3|s=0.3,")]
    assert bad and ",failed," in bad[0] and "requires s < m" in bad[0]


def test_sweep_determinism_and_resume(tmp_path):
    cfg1 = sweep_config(tmp_path, "w1", m=[0.3, 0.35], s=[0.1, 0.25])
    cfg4 = sweep_config(tmp_path, "w4", m=[0.3, 0.35], s=[0.1, 0.25])
    assert run_cli(["sweep", "--config", str(cfg1)]).returncode == 0
    assert run_cli(["sweep", "--config", str(cfg4), "--workers", "4"]).returncode == 0
    ref = (tmp_path / "w1" / "sweep.csv").read_bytes()
    assert (tmp_path / "w4" / "sweep.csv").read_bytes() == ref

    cfgk = sweep_config(tmp_path, "k", m=[0.3, 0.35], s=[0.1, 0.25])
    killed = run_cli(["sweep", "--config", str(cfgk)], {"FRACLAP_ABORT_AFTER": "2"})
    assert killed.returncode != 0
    assert not (tmp_path / "k" / "sweep.csv").exists()
    ckpt = tmp_path / "k" / "sweep.checkpoint.jsonl"
    assert len(ckpt.read_text().splitlines()) == 2
    resumed = run_cli(["sweep", "--config", str(cfgk), "--resume", str(ckpt)])
    assert resumed.returncode == 0
    # only the two pending keys ran
    assert resumed.stdout.count("done   m=") == 2
    assert (tmp_path / "k" / "sweep.csv").read_bytes() == ref

    again = run_cli(["sweep", "--config", str(cfgk), "--resume", str(ckpt)])
    assert again.stdout.count("done   m=") == 0
    assert (tmp_path / "k" / "sweep.csv").read_bytes() == ref


def test_torn_checkpoint_line_ignored(tmp_path):
    from fraclap.cli import read_checkpoint

    p = tmp_path / "c.jsonl"
    p.write_text(json.dumps({"key": "m=0.3|s=0.1", "status": "done", "payload": {}}) + "\n{\"key\": \"m=")
    assert list(read_checkpoint(p)) == ["m=0.3|s=0.1"]
