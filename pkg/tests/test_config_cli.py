import csv
import json

import numpy as np
import pytest

from optlyap import cli, output, threelevel
from optlyap.config import parse_config
from optlyap.designs import Conventional, PowerConstrained, StrengthConstrained
from optlyap.dynamics import IntegratorConfig
from optlyap.errors import ConfigError


def test_three_level_defaults():
    cfg = parse_config("[experiment]\nname = three-level\n[design]\n")
    assert cfg.design.law == Conventional(0.01)
    assert cfg.design.epsilon == 1e-3
    assert cfg.integrator == IntegratorConfig(0.01, 400.0, "unitary-step")
    assert cfg.seed == 0 and cfg.output_format == "csv"


def test_strength_law():
    cfg = parse_config("[experiment]\nname = three-level\n[design]\nlaw = strength\ns = 0.007\n")
    assert cfg.design.law == StrengthConstrained(0.007)
    cfg = parse_config("[experiment]\nname = three-level\n[design]\nlaw = power\n")
    assert cfg.design.law == PowerConstrained(1e-4)


@pytest.mark.parametrize("text,needle", [
    ("[experiment]\nname = three-level\n[design]\nlaw = power\nw_max = -1\n", "w_max"),
    ("[experiment]\nname = three-level\n[design]\nbogus = 1\n", "bogus"),
    ("[design]\nk = 0.1\n", "experiment name"),
    ("[experiment]\nname = nope\n", "nope"),
    ("[experiment]\nname = three-level\n[design]\nk = 0.1\nw_max = 1\n", "w_max"),
    ("[experiment]\nname = three-level\nseed = -4\n", "seed"),
    ("[experiment]\nname = cooling\ng_max = 0.191\n[design]\nlaw = power\n", "cooling"),
    ("[experiment]\nname = robustness-h0\ngenerator = 12\n", "generator"),
    ("[experiment]\nname = three-level\n[integrator]\ndt = 1\nt_max = 0.5\n", "t_max"),
    ("[experiment]\nname = three-level\n[output]\nformat = xml\n", "format"),
    ("[experiment]\nname = three-level\nname = cooling\n", "duplicate"),
    ("[weird]\n", "weird"),
    ("name = three-level\n", "outside"),
])
def test_parse_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_error_carries_line_number():
    with pytest.raises(ConfigError) as exc:
        parse_config("# comment\n[experiment]\nname = three-level\n\n[design]\nlaw = power\nw_max = -1\n")
    assert exc.value.lineno == 7
    assert str(exc.value).startswith("line 7:")


def test_comments_lists_and_overrides():
    cfg = parse_config(
        "[experiment]\nname = robustness-decoherence  # inline\nseed = 18446744073709551615\n"
        "gammas = 0.001, 0.002\nn_states = 4\n[integrator]\nt_max = 100\n"
    )
    assert cfg.params["gammas"] == [0.001, 0.002]
    assert cfg.seed == 2**64 - 1
    assert cfg.integrator.t_max == 100.0 and cfg.integrator.dt == 0.01


def test_cooling_presets():
    with pytest.raises(ConfigError, match="g_max"):
        parse_config("[experiment]\nname = cooling\n")
    cfg = parse_config("[experiment]\nname = cooling\ng_max_preset = text\n")
    assert cfg.params["g_max"] == 0.191
    assert cfg.design.law == Conventional(0.03)
    cfg = parse_config("[experiment]\nname = cooling\ng_max_preset = caption\n[design]\nlaw = bang-bang\n")
    assert cfg.design.law == StrengthConstrained(1.91)
    assert cfg.cooling_params().g_max == 1.91
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nname = cooling\ng_max = 0.191\n[design]\nlaw = bang-bang\ns = 0.5\n")
    with pytest.raises(ConfigError, match="not both"):
        parse_config("[experiment]\nname = cooling\ng_max = 0.2\ng_max_preset = text\n")


def test_resolved_contains_defaults():
    cfg = parse_config("[experiment]\nname = robustness-h0\n")
    r = cfg.resolved()
    assert r["experiment"]["deltas"] == [0.005, 0.01, 0.02]
    assert r["design"] == {"law": "conventional", "k": 0.01, "epsilon": 1e-3, "averaging_window": None}
    assert r["integrator"]["t_max"] == 3000.0


def _traj():
    from optlyap.designs import ControlDesign
    from optlyap.dynamics import run_trajectory
    p = threelevel.build_three_level()
    return run_trajectory(p, ControlDesign(StrengthConstrained(0.007)), threelevel.uniform_superposition(),
                          cfg=IntegratorConfig(0.01, 0.02), run_past_stop=True)


def test_csv_layout(tmp_path):
    traj = _traj()
    assert len(traj) == 3
    path = tmp_path / "t.csv"
    output.emit_trajectory(traj, "csv", path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert len(rows) == 4
    assert rows[0] == ["t", "f1", "f2", "f3", "f4", "V", "W", "metric", "switched_on"]
    for r in rows[1:]:
        f = np.array(r[1:5], dtype=float)
        assert float(r[6]) == pytest.approx(np.sum(f * f), rel=1e-12)
        assert r[8] in ("0", "1")


def test_json_round_trip(tmp_path):
    traj = _traj()
    path = tmp_path / "t.json"
    output.emit_trajectory(traj, "json", path)
    doc = json.loads(path.read_text())
    assert doc["metadata"]["n_samples"] == 3
    for i, rec in enumerate(doc["records"]):
        assert rec["t"] == traj.t[i]
        assert rec["V"] == traj.V[i]
        assert [rec[f"f{n}"] for n in range(1, 5)] == list(traj.fields[i])


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        output.emit_trajectory(_traj(), "csv", tmp_path / "missing" / "dir" / "x.csv")


def _run(tmp_path, text, *extra):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(text)
    return cli.main(["--config", str(cfg_path), *extra])


def test_cli_three_level_reproducible(tmp_path):
    text = "[experiment]\nname = three-level\n[design]\nlaw = power\n"
    out = tmp_path / "a.csv"
    assert _run(tmp_path, text, "--output", str(out)) == 0
    first = out.read_bytes(), (tmp_path / "a.csv.manifest.json").read_bytes()
    assert _run(tmp_path, text, "--output", str(out)) == 0
    assert (out.read_bytes(), (tmp_path / "a.csv.manifest.json").read_bytes()) == first
    manifest = json.loads(first[1])
    assert manifest["config"]["design"]["w_max"] == 1e-4
    assert 85 <= manifest["results"]["stop_time"] <= 97


def test_cli_seed_and_format_override(tmp_path):
    text = "[experiment]\nname = robustness-decoherence\nn_states = 2\ngammas = 0.001\n[integrator]\nt_max = 600\n"
    out = tmp_path / "r.json"
    assert _run(tmp_path, text, "--output", str(out), "--format", "json", "--seed", "77") == 0
    doc = json.loads(out.read_text())
    assert doc["metadata"]["seed"] == 77
    assert doc["records"][0]["gamma"] == 0.001
    manifest = json.loads((tmp_path / "r.json.manifest.json").read_text())
    assert manifest["config"]["experiment"]["seed"] == 77


def test_cli_robustness_h0_table(tmp_path):
    text = "[experiment]\nname = robustness-h0\nn_states = 2\ngenerator = 3\ndeltas = 0.01, -0.01\n"
    out = tmp_path / "h.csv"
    assert _run(tmp_path, text, "--output", str(out)) == 0
    rows = list(csv.reader(out.read_text().splitlines()))
    assert rows[0] == ["generator", "delta", "mean_fidelity", "stderr", "n_states"]
    assert [r[1] for r in rows[1:]] == ["0.01", "-0.01"]


def test_cli_convergence_table(tmp_path):
    text = ("[experiment]\nname = convergence-ensemble\nn_states = 3\n[design]\nlaw = bang-bang\n"
            "[integrator]\nt_max = 300\nrecord_every = 50\n")
    out = tmp_path / "c.csv"
    assert _run(tmp_path, text, "--output", str(out)) == 0
    rows = list(csv.reader(out.read_text().splitlines()))
    assert rows[0] == ["t", "mean_D", "min_D", "max_D"]
    vals = np.array(rows[1:], dtype=float)
    assert np.all(vals[:, 2] <= vals[:, 1]) and np.all(vals[:, 1] <= vals[:, 3])


def test_cli_reports_config_errors(tmp_path, capsys):
    assert _run(tmp_path, "[experiment]\nname = three-level\n[design]\nk = -1\n") == 1
    assert "line 4" in capsys.readouterr().err
    assert cli.main(["--config", str(tmp_path / "absent.cfg")]) == 2
