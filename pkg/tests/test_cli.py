import csv
import io
import json

import pytest

from mvtraffic.cli import main
from mvtraffic.trace import parse_trace, serialize_trace

from conftest import make_trace


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def view_trace(tmp_path):
    p = tmp_path / "t.trace"
    p.write_text(serialize_trace(make_trace([[1000, 2000, 3000]], psnr=[[35, 36, 37]])))
    return str(p)


@pytest.fixture
def mux_trace(tmp_path):
    # demand [1000, 3000] bits per period
    p = tmp_path / "m.trace"
    p.write_text(serialize_trace(make_trace([[125, 375]])))
    return str(p)


def test_stats_view(capsys, view_trace):
    code, out, _ = run(capsys, "stats", view_trace, "--view", "1")
    assert code == 0
    (row,) = rows(out)
    assert row["mean_frame_size"] == "2000"
    assert row["cov"] == "0.5"
    assert row["mean_bitrate"] == "384000"
    assert row["samples"] == "3"


def test_stats_modes(capsys, tmp_path):
    p = tmp_path / "mv.trace"
    p.write_text(serialize_trace(make_trace([[4, 2], [2, 0]])))
    code, out, _ = run(capsys, "stats", str(p), "--sequential")
    assert code == 0 and rows(out)[0]["variance"] == "8"
    code, out, _ = run(capsys, "stats", str(p), "--sequential", "--normalization", "standard")
    assert float(rows(out)[0]["variance"]) == pytest.approx(8 / 3)
    code, out, _ = run(capsys, "stats", str(p), "--combined")
    assert rows(out)[0]["label"] == "C" and rows(out)[0]["variance"] == "8"
    code, out, _ = run(capsys, "stats", str(p))
    assert [r["label"] for r in rows(out)] == ["view1", "view2"]
    code, out, _ = run(capsys, "stats", str(p), "--smooth", "2")
    (row,) = rows(out)
    assert row["label"] == "smooth2" and row["cov"] == "0"


def test_stats_json_and_human(capsys, view_trace):
    code, out, _ = run(capsys, "stats", view_trace, "--view", "1", "--format", "json")
    data = json.loads(out)
    assert data[0]["mean_bitrate"] == 384000 and data[0]["cov"] == 0.5
    code, out, _ = run(capsys, "stats", view_trace, "--view", "1", "--human")
    assert rows(out)[0]["mean_bitrate"] == "0.384000"


def test_curves(capsys, view_trace, tmp_path):
    other = tmp_path / "b.trace"
    other.write_text(serialize_trace(make_trace([[500, 1000, 1500]], psnr=[[30, 31, 32]])))
    code, out, _ = run(capsys, "curves", view_trace, str(other), "--shaping", "view")
    assert code == 0
    r = rows(out)
    assert [x["kind"] for x in r] == ["RD", "VD", "RD", "VD"]
    assert r[0]["avg_psnr"] == "31" and r[0]["avg_bitrate"] == "192000"
    assert r[1]["cov"] == "0.5" and r[1]["avg_bitrate"] == ""


def test_mux_loss(capsys, mux_trace):
    code, out, _ = run(capsys, "mux", "loss", mux_trace, "--J", "2", "--C", "96000",
                       "--seed", "4", "--max-reps", "100000", "--rel-width", "0.01")
    assert code == 0
    (row,) = rows(out)
    assert row["budget_bits"] == "4000"
    p, hw = float(row["p_hat"]), float(row["ci_half_width"])
    assert abs(p - 0.125) <= hw


def test_mux_cmin_and_jmax(capsys, mux_trace):
    code, out, _ = run(capsys, "mux", "cmin", mux_trace, "--J", "1", "--runs", "10",
                       "--sims", "100", "--epsilon", "0.01")
    assert code == 0
    row = rows(out)[0]
    # loss (3000 - b) / 4000 <= 0.01 first holds at budget b = 2960
    assert 71040 <= float(row["c_min"]) <= 71040 * 1.001
    code, out, _ = run(capsys, "mux", "jmax", mux_trace, "--C", "1e6", "--epsilon", "0.001",
                       "--runs", "10", "--sims", "300", "--shaping", "smooth2")
    assert code == 0
    # smoothed demand is 2000 bits every period; 21 streams lose 334/42000 > 0.001
    assert rows(out)[0]["j_max"] == "20"


def test_synth_deterministic(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "frames": 48, "views": 2, "gop": 16, "pattern": "B7", "view_scale": 0.5,
        "size_params": {"I": {"location": 40000, "dispersion": 0.2},
                        "P": [15000, 0.4], "B": [5000, 0.5]},
        "psnr_mean": 40.0, "psnr_sd": 1.0, "quantizer": 28}))
    a, b = tmp_path / "a.trace", tmp_path / "b.trace"
    assert main(["synth", "--spec", str(spec), "--seed", "7", "-o", str(a)]) == 0
    assert main(["synth", "--spec", str(spec), "--seed", "7", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    t = parse_trace(a.read_text())
    assert t.M == 48 and t.V == 2 and t.meta.quantizer == 28


def test_seed_env(capsys, tmp_path, monkeypatch):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"frames": 8, "views": 1, "gop": 4}))
    monkeypatch.setenv("MVTRAFFIC_SEED", "5")
    code, env_out, _ = run(capsys, "synth", "--spec", str(spec))
    code, flag_out, _ = run(capsys, "synth", "--spec", str(spec), "--seed", "5")
    assert env_out == flag_out


def test_exit_codes(capsys, tmp_path, view_trace):
    code, _, err = run(capsys, "stats", view_trace, "--bogus")
    assert code == 2
    bad = tmp_path / "bad.trace"
    bad.write_text("#!video=x\n#!representation=SBS\n#!views=1\n#!frames=2\n#!fps=24\n"
                   "#!gop=2\n#!pattern=B1\n1,1,I,10\n2,1,P,-5\n")
    code, _, err = run(capsys, "stats", str(bad))
    assert code == 1 and "line 9" in err
    mismatch = tmp_path / "mv.trace"
    mismatch.write_text("#!video=x\n#!representation=MV\n#!views=1\n#!frames=2\n#!fps=24\n"
                        "#!gop=2\n#!pattern=B1\n1,1,I,10\n2,1,P,5\n")
    code, _, err = run(capsys, "stats", str(mismatch))
    assert code == 1 and "MV traces must have 2 views" in err
    code, _, _ = run(capsys, "stats", str(tmp_path / "missing.trace"))
    assert code == 1
    code, _, _ = run(capsys, "stats", view_trace, "--smooth", "9")
    assert code == 2


def test_stdin_input(capsys, monkeypatch):
    text = serialize_trace(make_trace([[1000, 2000, 3000]]))
    monkeypatch.setattr("sys.stdin", io.StringIO(text))
    code, out, _ = run(capsys, "stats", "-", "--view", "1")
    assert code == 0 and rows(out)[0]["cov"] == "0.5"


def test_reports_are_reproducible(capsys, mux_trace):
    argv = ["mux", "loss", mux_trace, "--J", "2", "--C", "96000", "--seed", "1"]
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv, "--workers", "3")
    assert a == b
