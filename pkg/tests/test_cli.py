import json

import numpy as np
import pytest

from qudit_forge.cli import main
from qudit_forge.io import decode_complex_matrix, sha256_file

SMALL = {"pulses": {"t_pi": 360}}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def manifest(out, command):
    return json.loads((out / f"manifest_{command}.json").read_text())


def test_characterize_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["characterize", "--config", write(tmp_path, {}), "--out", str(out)]) == 0
    for name in ("levels.csv", "transitions.csv", "populations.csv"):
        assert (out / name).exists()
    m = manifest(out, "characterize")
    assert m["outputs"]["levels.csv"] == sha256_file(out / "levels.csv")
    assert {"python", "numpy", "scipy"} <= set(m["versions"])
    assert m["summary"]["qutrit_indices"] == [8, 9, 10]


def test_check_mode_reports_missed_threshold(tmp_path):
    # f01 from the rounded parameters sits outside the 2 MHz window
    assert main(["characterize", "--config", write(tmp_path, {}), "--out", str(tmp_path / "o"), "--check"]) == 4


@pytest.mark.parametrize(
    "text",
    ['{"pulses": {"t_pi": -1}}', '{"unknown": 1}', "{not json", '{"initial_state": 5}', "[]"],
)
def test_config_errors_exit_2(tmp_path, capsys, text):
    p = tmp_path / "bad.json"
    p.write_text(text)
    assert main(["qft", "--config", str(p)]) == 2
    assert "config" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert main(["echo", "--config", str(tmp_path / "nope.json")]) == 2


def test_thread_variable_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("QUDIT_FORGE_THREADS", "many")
    assert main(["qft", "--config", write(tmp_path, SMALL), "--out", str(tmp_path / "o")]) == 2


def test_zero_field(tmp_path, capsys):
    cfg = write(tmp_path, {"system": {"B_vec": [0, 0, 0]}})
    assert main(["characterize", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert "ambiguous" in capsys.readouterr().err
    assert not (tmp_path / "o" / "transitions.csv").exists()
    assert main(["qft", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_qft_then_tomo_round_trip(tmp_path):
    out = tmp_path / "q"
    assert main(["qft", "--config", write(tmp_path, SMALL), "--out", str(out), "--check"]) == 0
    m = manifest(out, "qft")
    assert set(m["variant_element_map"]) == {"plain_none", "refocused_A", "refocused_B"}
    assert m["summary"]["refocused"]["fidelity"] >= 0.98
    recs = [json.loads((out / f"record_refocused_{v}.json").read_text()) for v in "AB"]
    ideal = json.loads((out / "rho_ideal.json").read_text())["rho"]
    (tmp_path / "int.json").write_text(json.dumps({"records": recs, "ideal": ideal}))
    cfg = write(tmp_path, {"tomo": {"intensities": "int.json"}}, "tomo.json")
    assert main(["tomo", "--config", cfg, "--out", str(tmp_path / "t")]) == 0
    a = decode_complex_matrix(json.loads((out / "rho_refocused.json").read_text())["rho"])
    b = decode_complex_matrix(json.loads((tmp_path / "t" / "rho_reconstructed.json").read_text())["rho"])
    assert np.allclose(a, b)


def test_tomo_from_raw_intensities(tmp_path):
    # synthetic intensities for |0><0| with eps = 0 and unit equilibrium signals
    dp = (7.7e-4, 8.3e-4)
    eq = {"01": [1.0, 0.0], "12": [1.0, 0.0]}
    pur = {"01": [1.5, 0.0], "12": [0.0, 0.0]}
    alpha = 1.5 * dp[0]
    q = {"p01": 1.0, "p12": 0.0, "re01": 0.0, "im01": 0.0, "re12": 0.0, "im12": 0.0, "re02": 0.0, "im02": 0.0}
    det = {k: (dp[1] if k in ("p12", "re12", "im12") else dp[0]) for k in q}
    raw = {k: [q[k] * alpha / det[k], 0.0] for k in q}
    doc = {"records": [{"intensities": raw, "eq": eq, "pur": pur, "pop_diffs": dp}],
           "ideal": [[[1, 0], [0, 0], [0, 0]], [[0, 0], [0, 0], [0, 0]], [[0, 0], [0, 0], [0, 0]]]}
    (tmp_path / "raw.json").write_text(json.dumps(doc))
    cfg = write(tmp_path, {"tomo": {"intensities": "raw.json"}})
    assert main(["tomo", "--config", cfg, "--out", str(tmp_path / "t")]) == 0
    m = manifest(tmp_path / "t", "tomo")
    assert m["summary"]["fidelity"] == pytest.approx(1.0, abs=1e-12)


def test_tomo_requires_intensities(tmp_path):
    assert main(["tomo", "--config", write(tmp_path, {}), "--out", str(tmp_path / "t")]) == 2


def test_custom_sequence(tmp_path):
    seq = {"rotations": [{"transition": [0, 1], "theta": 1.5707963267948966, "phi": 0.0}]}
    (tmp_path / "seq.json").write_text(json.dumps(seq))
    cfg = {**SMALL, "sequence": {"kind": "custom", "path": "seq.json", "variants": ["A"]},
           "refocus": {"mode": "on"}, "pulses": {"t_pi": 360, "mode": "ideal"}}
    out = tmp_path / "c"
    assert main(["qft", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    assert manifest(out, "qft")["summary"]["refocused"]["fidelity"] > 0.999


def test_echo_and_decay(tmp_path):
    cfg = write(tmp_path, {"ensemble": {"n_points": 21}, "echo": {"strain_targets": ["hyperfine"]}})
    out = tmp_path / "e"
    assert main(["echo", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "t2star.csv").read_text().splitlines()
    assert rows[0].startswith("detection_t_pi_ns")
    assert (out / "echo_hyperfine_01.csv").exists()
    cfg = write(tmp_path, {"dephasing": {"envelope": "gaussian", "T2_us": {"01": 50, "12": 40}},
                           "decay": {"n_points": 41}}, "d.json")
    assert main(["decay", "--config", cfg, "--out", str(tmp_path / "d"), "--check"]) == 0
    s = manifest(tmp_path / "d", "decay")["summary"]
    assert s["rabi_period_01_ns"] == pytest.approx(720.0, rel=1e-3)
