import csv
import json

import numpy as np
import pytest

from qfs import cli
from qfs.multibody import BodyCollection, pairwise_separations


def test_parse_sweep():
    assert cli.parse_sweep("100:300:100") == [100, 200, 300]
    assert cli.parse_sweep("8, 12,16") == [8, 12, 16]
    assert cli.parse_sweep("2:4") == [2, 3, 4]
    for bad in ("a:b", "5:1", "1:5:0"):
        with pytest.raises(cli.UsageError):
            cli.parse_sweep(bad)
    with pytest.raises(cli.UsageError):
        cli.parse_sweep("100,101", even=True)


def test_parse_range():
    assert cli.parse_range("1:2:3") == [1.0, 1.5, 2.0]
    assert cli.parse_range("0.5") == [0.5]
    with pytest.raises(cli.UsageError):
        cli.parse_range("1:2:3:4")


def test_format_csv_keeps_full_precision():
    x = 1 / 3
    text = cli.format_csv([{"N": 10, "err": x, "flag": True, "miss": None}, {"N": 12, "extra": np.nan}])
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["N", "err", "flag", "miss", "extra"]
    assert float(rows[1][1]) == x and rows[1][2] == "1" and rows[1][3] == ""
    assert rows[2][4] == "nan"


def test_usage_errors_exit_2(tmp_path, capsys):
    assert cli.main(["converge2d", "--N", "101"]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"no_such_option": 1}))
    assert "error" in capsys.readouterr().err
    for argv in (["ptr-rate", "--config", str(cfg)], ["no-such-command"]):
        with pytest.raises(SystemExit) as e:
            cli.main(argv)
        assert e.value.code == 2


def test_check_exit_codes(tmp_path):
    assert cli.main(["ptr-rate", "--check", "--out", str(tmp_path / "a")]) == 0
    # on the unit circle the logarithmic capacity vanishes and the check fails
    assert cli.main(["eigendecay", "--radius", "1", "--N", "64", "--check",
                     "--out", str(tmp_path / "b")]) == 1
    s = json.loads((tmp_path / "b" / "eigendecay_summary.json").read_text())
    assert not all(c["ok"] for c in s["checks"])


def test_geometry_gen_roundtrip(tmp_path):
    out = tmp_path / "g"
    assert cli.main(["geometry-gen", "--K", "4", "--dmin", "0.1", "--seed", "2", "--check",
                     "--out", str(out)]) == 0
    coll = BodyCollection.from_json(json.loads((out / "geometry.json").read_text()))
    assert len(coll.bodies) == 4
    assert min(s for _, _, s in pairwise_separations(coll)) >= 0.1 - 1e-9


def test_geometry_gen_prints_json(capsys):
    assert cli.main(["geometry-gen", "--K", "3", "--dmin", "0.2", "--seed", "0"]) == 0
    coll = BodyCollection.from_json(json.loads(capsys.readouterr().out))
    assert len(coll.bodies) == 3


def test_converge2d_small_sweep(tmp_path):
    out = tmp_path / "c"
    assert cli.main(["converge2d", "--N-sweep", "100,120", "--variant", "d", "--out", str(out)]) == 0
    with open(out / "converge2d.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["N"]) for r in rows] == [100, 120]
    for col in ("near_qfs_err", "far_qfs_err", "near_oracle_err", "nyquist_ratio", "P", "fallback"):
        assert col in rows[0]
    assert float(rows[1]["near_qfs_err"]) < float(rows[0]["near_plain_err"])


def test_config_file_sets_defaults(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"N-sweep": "100", "target": "far", "pde": "laplace"}))
    assert cli.main(["converge2d", "--config", str(cfg)]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    assert header.startswith("N,qfs_err,plain_err") and row.startswith("100,")
