from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Mapping

import pytest

from qlv_sim import cli, selftest
from qlv_sim.analysis import CompareConfig, CurvesConfig
from qlv_sim.protocol import load_scenario

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GEOMETRY = {"stations": {"A": [0, 0], "B": [30000, 0]}, "device": [12000, 0]}


def _write(path: Path, payload: Mapping[str, Any]) -> str:
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def _rows(path: Path) -> list:
    with open(path, encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def test_curves_command(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    config = _write(
        tmp_path / "curves.json",
        {"channels": [{"family": "phaseDamping"}], "N": [2, 6], "grid": {"start": 0, "end": 0.5}},
    )
    out = tmp_path / "curves.csv"
    assert cli.main(["curves", "--config", config, "--out", str(out)]) == cli.EXIT_OK
    rows = _rows(out)
    assert len(rows) == 202
    row = next(r for r in rows if r["N"] == "2" and float(r["p"]) == pytest.approx(0.1))
    assert float(row["mean_fidelity"]) == pytest.approx(0.905, abs=1e-10)
    assert "phaseDamping" in capsys.readouterr().out


def test_curves_grid_override(tmp_path: Path) -> None:
    config = _write(tmp_path / "c.json", {"channels": [{"family": "depolarization"}], "N": [3]})
    out = tmp_path / "c.csv"
    assert cli.main(["curves", "--config", config, "--out", str(out), "--grid", "0:0.5:11"]) == 0
    assert len(_rows(out)) == 11


def test_curves_output_is_reproducible(tmp_path: Path) -> None:
    config = _write(
        tmp_path / "random.json",
        {
            "channels": [{"family": "randomNoise", "trials": 25, "seed": 1}],
            "N": [2],
            "grid": {"start": 0, "end": 0.3, "points": 4},
        },
    )
    outputs = []
    for name, seed in (("a.csv", "7"), ("b.csv", "7"), ("c.csv", "8")):
        path = tmp_path / name
        assert cli.main(["curves", "--config", config, "--out", str(path), "--seed", seed]) == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]
    assert outputs[0] != outputs[2]


def test_curves_to_standard_output(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    config = _write(
        tmp_path / "c.json",
        {"channels": [{"family": "phaseDamping"}], "N": [2], "grid": {"points": 3}},
    )
    assert cli.main(["curves", "--config", config]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("channel,family_params,N,p")
    assert len(lines) == 4


def test_compare_command(tmp_path: Path) -> None:
    config = _write(
        tmp_path / "compare.json",
        {"channels": [{"family": "amplitudeDamping"}], "N": [3], "grid": {"end": 0.2, "points": 5}},
    )
    out = tmp_path / "compare.csv"
    assert cli.main(["compare", "--config", config, "--out", str(out), "--quiet"]) == 0
    rows = _rows(out)
    assert len(rows) == 5
    assert float(rows[0]["instance_prob_bell"]) == pytest.approx(1.0)
    for row in rows:
        assert float(row["instance_prob_ghz"]) >= float(row["instance_prob_bell"]) - 1e-12


def test_invalid_config_exits_with_usage(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    config = _write(
        tmp_path / "bad.json", {"channels": [{"family": "phaseDamping"}], "N": [2], "bogus": 1}
    )
    assert cli.main(["curves", "--config", config]) == cli.EXIT_USAGE
    assert "bogus" in capsys.readouterr().err


def test_missing_inputs_exit_with_usage(tmp_path: Path) -> None:
    assert cli.main(["curves"]) == cli.EXIT_USAGE
    assert cli.main(["curves", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_USAGE
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    assert cli.main(["protocol", "--config", str(broken)]) == cli.EXIT_USAGE
    config = _write(tmp_path / "c.json", {"channels": [{"family": "phaseDamping"}], "N": [2]})
    out = tmp_path / "no-such-dir" / "out.csv"
    assert cli.main(["curves", "--config", config, "--out", str(out)]) == cli.EXIT_USAGE


def test_protocol_command_accepts_honest_device(tmp_path: Path) -> None:
    config = _write(tmp_path / "honest.json", {"geometry": GEOMETRY, "L": 40, "K": 32, "seed": 1})
    out = tmp_path / "verdict.json"
    trace = tmp_path / "trace.jsonl"
    code = cli.main(
        ["protocol", "--config", config, "--out", str(out), "--trace", str(trace), "--quiet"]
    )
    assert code == cli.EXIT_OK
    verdict = json.loads(out.read_text(encoding="utf-8"))
    assert verdict["accept"] is True
    events = [json.loads(line) for line in trace.read_text(encoding="utf-8").splitlines()]
    assert events[0]["kind"] == "setup"
    assert events[-1]["kind"] == "verdict"


def test_protocol_output_is_byte_identical(tmp_path: Path) -> None:
    config = _write(tmp_path / "honest.json", {"geometry": GEOMETRY, "L": 40, "K": 32})
    traces = []
    for name in ("a", "b"):
        trace = tmp_path / f"{name}.jsonl"
        out = tmp_path / f"{name}.json"
        args = ["--out", str(out), "--trace", str(trace), "--seed", "3"]
        cli.main(["protocol", "--config", config, *args])
        traces.append((out.read_bytes(), trace.read_bytes()))
    assert traces[0] == traces[1]


def test_attack_command_displaced(tmp_path: Path) -> None:
    config = _write(tmp_path / "honest.json", {"geometry": GEOMETRY, "L": 40, "K": 32})
    out = tmp_path / "verdict.json"
    code = cli.main(["attack", "--config", config, "--out", str(out), "--displace", "1000"])
    assert code == cli.EXIT_REJECTED
    assert json.loads(out.read_text(encoding="utf-8"))["reasons"] == ["timing"]


def test_attack_command_cloner(tmp_path: Path) -> None:
    config = _write(tmp_path / "honest.json", {"geometry": GEOMETRY, "L": 400, "K": 200, "seed": 2})
    out = tmp_path / "verdict.json"
    code = cli.main(["attack", "--config", config, "--out", str(out), "--clone", "0.7"])
    assert code == cli.EXIT_REJECTED
    assert "error-rate" in json.loads(out.read_text(encoding="utf-8"))["reasons"]


def test_attack_needs_an_adversary(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    config = _write(tmp_path / "honest.json", {"geometry": GEOMETRY, "L": 40, "K": 32})
    assert cli.main(["attack", "--config", config]) == cli.EXIT_USAGE
    assert "deviceBehavior" in capsys.readouterr().err


def test_seed_must_be_unsigned_64_bit() -> None:
    with pytest.raises(SystemExit):
        cli.main(["protocol", "--seed", "-1"])


def test_version_flag(capsys: pytest.CaptureFixture) -> None:
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["--version"])
    assert excinfo.value.code == 0
    assert "qlv-sim" in capsys.readouterr().out


def test_selftest_command_reports_failures(
    monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture
) -> None:
    def broken(_settings: object) -> None:
        raise selftest.CheckFailure("corrupted Kraus constant")

    monkeypatch.setattr(
        selftest, "GROUPS", (("anchors", selftest.check_anchors), ("completeness", broken))
    )
    assert cli.main(["selftest"]) == cli.EXIT_SELFTEST_FAILED
    output = capsys.readouterr().out
    assert "PASS  anchors" in output
    assert "FAIL  completeness" in output


@pytest.mark.parametrize("name", ["honest", "displaced", "cloner", "honest_2d"])
def test_checked_in_scenarios_load(name: str) -> None:
    config = load_scenario(CONFIGS / f"{name}.json")
    assert config.pairs > config.challenge_bits


@pytest.mark.parametrize(
    "name, expected",
    [("honest", cli.EXIT_OK), ("displaced", cli.EXIT_REJECTED), ("cloner", cli.EXIT_REJECTED)],
)
def test_checked_in_scenarios_run(name: str, expected: int) -> None:
    assert cli.main(["protocol", "--config", str(CONFIGS / f"{name}.json"), "--quiet"]) == expected


@pytest.mark.parametrize(
    "name",
    ["amplitude_random_n2_n3", "phase_random_n2_n3", "phase_random_n2_n6", "depolarization_n2_n6"],
)
def test_checked_in_curve_configs_parse(name: str) -> None:
    payload = json.loads((CONFIGS / f"{name}.json").read_text(encoding="utf-8"))
    config = CurvesConfig.from_payload(payload)
    assert 2 in config.qubits
    assert config.grid.points == 101


def test_checked_in_compare_config_parses() -> None:
    payload = json.loads((CONFIGS / "compare.json").read_text(encoding="utf-8"))
    assert CompareConfig.from_payload(payload).stations == (3, 6)
