import json

import numpy as np
import pytest

from paraxfem import cli
from paraxfem import harness as hn


def test_minimal_converge_config():
    cfg = cli.parse_config("[run]\nmodel = N\n[converge]\ncase=1\nlevels=100,200\n", "converge")
    assert cfg.case == 1 and cfg.levels == (100, 200) and cfg.models == ("N",)


def test_h_zero_rejected_with_line():
    with pytest.raises(cli.ConfigError, match="line 4: h must be positive"):
        cli.parse_config("[run]\nmodel=N\n[mesh]\nh=0\n[environment]\ndirection=up\n", "wedge")


def test_k_must_be_positive():
    with pytest.raises(cli.ConfigError, match="k must be positive"):
        cli.parse_config("[environment]\ndirection=up\n[time]\nk=-1\n", "wedge")


@pytest.mark.parametrize("text,msg", [
    ("[run]\nexperiment=plot\n", "unknown experiment"),
    ("[run]\nmodel=XYZ\n", "unknown model"),
    ("[run]\ncolour=red\n", "unknown key"),
    ("[bogus]\n", "unknown section"),
    ("[run]\nmodel N\n", "expected key = value"),
])
def test_config_errors(text, msg):
    exp = None if "experiment" in text else "converge"
    with pytest.raises(cli.ConfigError, match=msg):
        cli.parse_config(text, exp)


def test_missing_environment():
    with pytest.raises(cli.ConfigError, match="missing environment"):
        cli.parse_config("[run]\nmodel=N\n", "wedge")


def test_downslope_annotation():
    cfg = cli.parse_config("[run]\nmodel=N\n[environment]\ndirection=down\n", "wedge")
    assert "analysis requires upsloping" in cfg.annotations
    cfg = cli.parse_config("[run]\nmodel=AK\n[environment]\ndirection=down\n", "wedge")
    assert not cfg.annotations


def test_empty_growth_report_is_header_only(tmp_path):
    rep = hn.GrowthReport("b", np.zeros(0), np.zeros(0))
    p = cli.write_report(rep, tmp_path / "g.csv")
    assert p.read_text() == "t,l2_norm,profile\n"


def _roundtrip(report, tmp_path):
    path = cli.write_report(report, tmp_path / "r.csv")
    assert cli.read_report(path) == cli.to_table(report)
    return cli.read_report(path)


def test_roundtrip_all_report_types(tmp_path):
    conv = hn.strip_study(1, (100, 200, 400, 800))
    table = _roundtrip(conv, tmp_path)
    assert len(table.rows) == 4
    np.testing.assert_array_equal(cli.table_floats(table, "rate")[:-1], conv.rates[:-1])
    np.testing.assert_array_equal(cli.table_floats(table, "error"), conv.errors)
    _roundtrip(hn.growth_study("b", n=20), tmp_path)
    _roundtrip(hn.asa_wedge("N", "up", n=40, steps=200, samples=100), tmp_path)
    _roundtrip(hn.solve_run("parabolic-reactive", n=4), tmp_path)


def test_main_end_to_end_is_deterministic(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nmodel = N, AK\n[converge]\ncase = 2\nlevels = 20,40\n")
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert cli.main(["converge", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out)
    for name in ("converge_case2_N.csv", "converge_case2_AK.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    man = json.loads((outs[0] / "manifest.json").read_text())
    assert [r["status"] for r in man["runs"]] == ["complete", "complete"]


def test_flagged_wedge_exits_zero(tmp_path):
    cfg = tmp_path / "w.ini"
    cfg.write_text("[run]\nmodel=N\n[environment]\ndirection=down\nsamples=100\n"
                   "[mesh]\nn=200\n[time]\nsteps=8000\n")
    assert cli.main(["wedge", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["runs"][0]["status"] == "flagged"
    rows = cli.read_report(tmp_path / "o" / "wedge_N_down.csv").rows
    assert rows and all(r[4] == "unstable" for r in rows)


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[mesh]\nh=0\n")
    assert cli.main(["growth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "h must be positive" in capsys.readouterr().err


def test_failed_run_gives_nonzero_exit(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")
    monkeypatch.setattr(hn, "growth_study", boom)
    cfg = tmp_path / "g.ini"
    cfg.write_text("[growth]\nprofiles=b\n")
    assert cli.main(["growth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
