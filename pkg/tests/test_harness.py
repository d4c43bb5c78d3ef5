import json
import re

import pytest
from click.testing import CliRunner

from gridlight import config, harness
from gridlight.cli import main
from gridlight.errors import NotReadyError, OutputError


def _cfg(name, **kw):
    return config.from_dict({"scenario": name, "seed": 7, **kw})


def test_outputs_written(tmp_path):
    summary = harness.run_scenario(_cfg("bomb_test", shots=2000), out_dir=tmp_path)
    assert {p.name for p in tmp_path.iterdir()} == {"summary.json", "histogram.csv", "events.jsonl"}
    data = json.loads((tmp_path / "summary.json").read_text())
    assert data["config"]["seed"] == 7
    assert data["fingerprint"] == summary.fingerprint
    assert sum(r["count"] for r in data["result"]["outcomes"]) == 2000
    assert sum(summary.frequencies) == pytest.approx(1.0)
    rows = (tmp_path / "histogram.csv").read_text().splitlines()
    assert rows[0] == "bin,count,frequency,oracle_prob" and len(rows) == 4
    events = [json.loads(line) for line in (tmp_path / "events.jsonl").read_text().splitlines()]
    assert len(events) == 2000
    assert set(events[0]) == {"shot", "tick", "site", "outcome"}
    assert [e["shot"] for e in events] == list(range(2000))


def test_events_can_be_switched_off(tmp_path):
    harness.run_scenario(_cfg("mach_zehnder", shots=100, events=False), out_dir=tmp_path)
    assert not (tmp_path / "events.jsonl").exists()


def test_no_oracle_run_with_field_dump(tmp_path):
    summary = harness.run_scenario(_cfg("refraction", shots=1000, dump_every=2500), out_dir=tmp_path)
    assert summary.chi_square == {"skipped": harness.NO_ORACLE}
    assert "no-oracle" in (tmp_path / "histogram.csv").read_text()
    lines = (tmp_path / "field.csv").read_text().splitlines()
    assert lines[0] == "tick,x,y,re,im,channel"
    assert {int(row.split(",")[0]) for row in lines[1:]} <= {0, 2500, 5000, 7500, 10000}


def _strip_wall(text):
    return re.sub(r'"wall_time_s": [^\n]*\n', "", text)


def test_reruns_and_workers_are_byte_identical(tmp_path):
    cfg = _cfg("entangled_chsh", shots=200_000)
    texts = []
    for i, workers in enumerate((1, 1, 4)):
        harness.run_scenario(cfg, workers=workers, out_dir=tmp_path / str(i))
        texts.append(_strip_wall((tmp_path / str(i) / "summary.json").read_text()))
    assert texts[0] == texts[1] == texts[2]
    assert (tmp_path / "0" / "events.jsonl").read_bytes() == (tmp_path / "2" / "events.jsonl").read_bytes()


def test_seed_changes_counts():
    a = harness.run_scenario(_cfg("polarizer_chain", shots=5000))
    b = harness.run_scenario(config.from_dict({"scenario": "polarizer_chain", "seed": 8, "shots": 5000}))
    assert a.counts != b.counts


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OutputError):
        harness.run_scenario(_cfg("mach_zehnder", shots=10), out_dir=blocker / "sub")


def test_too_few_ticks():
    with pytest.raises(NotReadyError):
        harness.run_scenario(_cfg("least_action", shots=10, ticks=20))


def test_summary_json_is_strict(tmp_path):
    harness.run_scenario(_cfg("bomb_test", shots=100), out_dir=tmp_path)
    text = (tmp_path / "summary.json").read_text()
    json.loads(text, parse_constant=lambda c: pytest.fail(f"non-standard constant {c}"))
    assert text.endswith("}\n")


# command line

def test_cli_run_ok(tmp_path):
    res = CliRunner().invoke(main, ["run", "mach_zehnder", "--seed", "1", "--shots", "1000", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert "1000 shots" in res.output
    assert (tmp_path / "summary.json").exists()


def test_cli_config_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("scenario: polarizer_chain\nseed: 4\nshots: 2000\nangles: [0, 60]\n")
    res = CliRunner().invoke(main, ["run", "polarizer_chain", "--config", str(path), "--set", "shots=3000"])
    assert res.exit_code == 0, res.output
    assert "3000 shots" in res.output


@pytest.mark.parametrize("args", [["run", "mach_zehnder", "--shots", "10"],
                                  ["run", "mach_zehnder", "--seed", "1", "--set", "shots=-5"],
                                  ["run", "mach_zehnder", "--seed", "1", "--workers", "0"],
                                  ["run", "least_action", "--seed", "1", "--set", "ticks=5"]])
def test_cli_config_errors(args):
    res = CliRunner().invoke(main, args)
    assert res.exit_code == 1
    assert "error:" in res.output


def test_cli_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    res = CliRunner().invoke(main, ["run", "mach_zehnder", "--seed", "1", "--out", str(blocker / "x")])
    assert res.exit_code == 3


def test_cli_failed_run(monkeypatch):
    real = harness.run_scenario

    def broken(cfg, **kw):
        summary = real(cfg, **kw)
        summary.checks["forced"] = False
        return summary

    monkeypatch.setattr(harness, "run_scenario", broken)
    res = CliRunner().invoke(main, ["run", "mach_zehnder", "--seed", "1", "--shots", "10"])
    assert res.exit_code == 2
    assert "FAIL forced" in res.output


def test_cli_oracle_table():
    res = CliRunner().invoke(main, ["oracle", "bomb_test", "--json"])
    assert res.exit_code == 0
    table = json.loads(res.output)
    probs = {r["outcome"]: r["oracle_prob"] for r in table["outcomes"]}
    assert probs == pytest.approx({"D1": 0.25, "D2": 0.25, "bomb": 0.5})


def test_cli_oracle_text():
    res = CliRunner().invoke(main, ["oracle", "polarizer_chain", "--set", "angles=[0, 45, 90]"])
    assert res.exit_code == 0
    assert "oracle_prob" in res.output.splitlines()[0]


def test_cli_audit_subset():
    res = CliRunner().invoke(main, ["audit", "--only", "unitarity", "--only", "oracle_independence"])
    assert res.exit_code == 0, res.output
    assert res.output.count("PASS") == 2
