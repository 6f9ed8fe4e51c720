import csv
import math

import pytest

from cwpolar.cli import parse_chain, parse_channel, run
from cwpolar.errors import BadChannel, BadFile
from cwpolar.params import PROFILE_COLUMNS
from cwpolar.process import channel_bsc, save_chain


def data_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(rows))


def test_parse_chain_shorthands():
    assert parse_chain("prefix:4:2").n_states == 13
    assert parse_chain("condensed:4:2").n_states == 8
    assert parse_chain("mod:3:2").n_states == 3
    assert parse_chain("mod:2").n_states == 2
    assert parse_chain("window:4:1/4:3/4").n_states == 10


def test_parse_chain_file_and_errors(tmp_path, mod3):
    path = tmp_path / "chain.json"
    save_chain(mod3, path)
    assert parse_chain(str(path)).states == mod3.states
    with pytest.raises(BadFile):
        parse_chain("prefix:x:y")
    with pytest.raises(BadFile):
        parse_chain("window:4:1:junk")
    with pytest.raises(BadFile):
        parse_chain(str(tmp_path / "missing.json"))


def test_parse_channel():
    assert parse_channel(None) is None
    assert parse_channel("") is None
    assert parse_channel("none") is None
    assert parse_channel("native") is None
    assert parse_channel("bsc:11/100") == channel_bsc("11/100")
    assert parse_channel("constant:+")[0][0][0] == "+"
    assert set(parse_channel("noiseless")) == {0, 1}
    with pytest.raises(BadChannel):
        parse_channel("bsc:junk")
    with pytest.raises(BadChannel):
        parse_channel("bsc:3/2")
    with pytest.raises(BadChannel):
        parse_channel("gauss:1")


def test_validate_command(capsys):
    assert run(["validate", "--chain", "mod:2"]) == 0
    out = capsys.readouterr().out
    assert "ok=True" in out and "period=1" in out
    assert run(["validate", "--chain", "prefix:4:2"]) == 0
    assert "period=4" in capsys.readouterr().out


def test_error_reporting_and_exit_codes(capsys):
    assert run(["validate", "--chain", "no-such-chain"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: BAD_FILE")
    assert run(["validate"]) == 2
    assert run([]) == 2


def test_build_chain_roundtrip(tmp_path, capsys):
    path = tmp_path / "chain.json"
    assert run(["build-chain", "--kind", "prefix", "--b", "4", "--a", "2",
                "--out", str(path)]) == 0
    assert "states=13" in capsys.readouterr().out
    assert run(["validate", "--chain", str(path)]) == 0
    assert run(["build-chain", "--kind", "prefix", "--b", "4",
                "--out", str(tmp_path / "x.json")]) == 1
    assert "BAD_FILE" in capsys.readouterr().err


def test_analyze_writes_profiles(tmp_path, capsys):
    out = tmp_path / "prof"
    assert run(["analyze", "--chain", "mod:2", "--N", "2", "4",
                "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "N=2 use_y=True" in stdout
    for name in ("profile_N2_y.csv", "profile_N2_noy.csv",
                 "profile_N4_y.csv", "profile_N4_noy.csv", "fractions.csv"):
        assert (out / name).exists()
    rows = data_rows(out / "profile_N2_noy.csv")
    assert list(rows[0]) == PROFILE_COLUMNS
    assert float(rows[0]["k"]) == pytest.approx(1.0, abs=1e-9)
    assert len(data_rows(out / "fractions.csv")) == 4


def test_analyze_mc_estimator(tmp_path):
    out = tmp_path / "prof"
    assert run(["analyze", "--chain", "mod:2", "--channel", "bsc:1/10",
                "--N", "2", "--use-y", "with", "--estimator", "mc",
                "--frames", "30", "--out", str(out)]) == 0
    rows = data_rows(out / "profile_N2_y.csv")
    assert rows[0]["estimator"] == "monte-carlo"
    assert float(rows[1]["stderr_h"]) >= 0.0


def test_martingale_command(tmp_path, capsys):
    path = tmp_path / "mart.csv"
    assert run(["martingale", "--chain", "mod:2", "--delta", "0",
                "--n-max", "1", "--strict", "--out", str(path)]) == 0
    assert "martingale: ok=True" in capsys.readouterr().out
    header = path.read_text(encoding="utf-8")
    assert "# check=martingale" in header
    assert "# ok=True" in header
    assert len(data_rows(path)) == 2


def test_inequalities_command(tmp_path, capsys):
    out = tmp_path / "checks"
    assert run(["inequalities", "--chain", "mod:2", "--channel", "bsc:11/100",
                "--delta", "0", "--n", "2", "--mixing", "--boundary",
                "--triples", "--strict", "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    for name in ("transform-inequalities", "mixing", "boundary-bounds",
                 "triple-entropy"):
        assert f"{name}: ok=True" in stdout
        assert (out / f"{name}.csv").exists()


def test_construct_encode_decode_pipeline(tmp_path, capsys):
    code = tmp_path / "code.json"
    assert run(["construct", "--chain", "mod:2", "--N", "4",
                "--rate", "0.25", "--estimator", "exact",
                "--out", str(code)]) == 0
    assert "N=4 info=1 rate=0.25" in capsys.readouterr().out

    assert run(["encode", "--code", str(code), "--message", "1",
                "--shaping-seed", "7"]) == 0
    word = capsys.readouterr().out.strip()
    assert len(word) == 4 and set(word) <= {"0", "1"}
    assert word.count("1") % 2 == 0

    assert run(["decode", "--code", str(code), "--y", word,
                "--shaping-seed", "7"]) == 0
    assert capsys.readouterr().out.strip() == "1"

    out = tmp_path / "frame.csv"
    assert run(["encode", "--code", str(code), "--random", "--seed", "3",
                "--out", str(out)]) == 0
    capsys.readouterr()
    row = data_rows(out)[0]
    assert set(row) == {"message", "x"}
    assert len(row["x"]) == 4

    assert run(["encode", "--code", str(code), "--message", "2"]) == 1
    assert "BAD_FILE" in capsys.readouterr().err


def test_simulate_replay_is_byte_identical(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    argv = ["simulate", "--chain", "mod:2", "--N", "4", "--rate", "0.25",
            "--estimator", "exact", "--trials", "30", "--seed", "5",
            "--out", str(out)]
    assert run(argv) == 0
    first_line = capsys.readouterr().out
    first = out.read_bytes()
    assert run(argv) == 0
    assert capsys.readouterr().out == first_line
    assert out.read_bytes() == first

    threaded = ["simulate", "--chain", "mod:2", "--N", "4", "--rate", "0.25",
                "--estimator", "exact", "--trials", "30", "--seed", "5",
                "--threads", "4", "--out", str(out)]
    assert run(threaded) == 0
    capsys.readouterr()
    assert data_rows(out) == list(csv.DictReader(
        [ln for ln in first.decode("utf-8").splitlines(keepends=True)
         if not ln.startswith("#")]))


def test_simulate_from_code_file_and_guards(tmp_path, capsys):
    code = tmp_path / "code.json"
    assert run(["construct", "--chain", "mod:2", "--channel", "bsc:1/10",
                "--N", "4", "--rate", "0.25", "--estimator", "exact",
                "--out", str(code)]) == 0
    capsys.readouterr()
    assert run(["simulate", "--code", str(code), "--trials", "5"]) == 1
    assert "BAD_CHANNEL" in capsys.readouterr().err
    assert run(["simulate", "--code", str(code), "--channel", "bsc:1/10",
                "--trials", "20", "--seed", "2"]) == 0
    assert "trials=20" in capsys.readouterr().out
    assert run(["simulate", "--trials", "5"]) == 1
    assert "BAD_FILE" in capsys.readouterr().err
    assert run(["simulate", "--chain", "mod:2", "--trials", "5"]) == 1
    assert "BAD_FILE" in capsys.readouterr().err


def test_entropy_rate_command(tmp_path, capsys):
    assert run(["entropy-rate", "--chain", "prefix:4:2", "--channel",
                "constant", "--N", "4", "--start", "state:ε"]) == 0
    out = capsys.readouterr().out
    rate = float(out.split("rate=")[1].split()[0])
    assert rate == pytest.approx(math.log2(6) / 4, abs=1e-9)

    path = tmp_path / "rate.csv"
    assert run(["entropy-rate", "--chain", "mod:2", "--channel", "bsc:1/10",
                "--N", "2", "--method", "mc", "--frames", "40",
                "--out", str(path)]) == 0
    assert "stderr_total=" in capsys.readouterr().out
    assert len(data_rows(path)) == 1

    assert run(["entropy-rate", "--chain", "mod:2", "--N", "2",
                "--start", "bogus"]) == 1
    assert "BAD_FILE" in capsys.readouterr().err
