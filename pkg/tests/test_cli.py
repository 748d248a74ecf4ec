import json
from pathlib import Path

import jsonschema
import pytest

from retrialq import cli, commands
from retrialq.config import RunConfig, apply_overrides, canonical, dump_config, load_config, parse_config
from retrialq.engine import InvariantViolation
from retrialq.report import RunReport, published_schema, report_schema

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
[system]
n = 4
mu = 1.0

[arrival]
kind = "poisson"
rate = 3.0

[retrial]
kind = "poisson"
rate = 1.0

[simulation]
horizon = 200.0
replications = 5
seed = 9

[search]
alpha = 0.01
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


def invoke(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_config_round_trip():
    for path in sorted(CONFIGS.glob("*.toml")):
        cfg = load_config(path)
        again = parse_config(dump_config(cfg))
        assert canonical(again) == canonical(cfg)
        assert dump_config(again) == dump_config(cfg)


def test_config_defaults_resolved():
    cfg = parse_config('[arrival]\nrate = 1.0\n[retrial]\nrate = 1.0\n')
    assert cfg.simulation.horizon == 10_000.0
    assert cfg.n_values() == [1]


@pytest.mark.parametrize("text", [
    "[arrival]\nrate = 1.0\n",
    '[arrival]\nrate = -1.0\n[retrial]\nrate = 1.0\n',
    '[arrival]\nrate = 1.0\nbogus = 2\n[retrial]\nrate = 1.0\n',
    '[arrival]\nkind = "deterministic"\nrate = 1.0\nproposal_rate = 2.0\n[retrial]\nrate = 1.0\n',
    '[arrival]\nrate = 1.0\n[retrial]\nrate = 1.0\n[simulation]\nhorizon = 5.0\narrivals = 10\n',
    '[arrival]\nrate = 1.0\n[retrial]\nrate = 1.0\n[simulation]\nhorizon = 5.0\nwarmup = 5.0\n',
])
def test_invalid_configs_rejected(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_overrides_replace_horizon_kind():
    cfg = apply_overrides(parse_config(SMALL), arrivals=1000, n=7, proposal_rate=3.5)
    assert cfg.simulation.horizon is None and cfg.simulation.arrivals == 1000
    assert cfg.system.n == 7 and cfg.arrival.proposal_rate == 3.5


def test_published_schemas_are_current():
    assert published_schema("report") == report_schema()
    assert published_schema("config") == RunConfig.model_json_schema()


def test_schema_command(capsys):
    code, out, _ = invoke(capsys, "schema", "config")
    assert code == 0 and json.loads(out) == RunConfig.model_json_schema()


def test_config_command_prints_canonical_form(capsys, small):
    code, out, _ = invoke(capsys, "config", small)
    assert code == 0
    assert canonical(parse_config(out)) == canonical(parse_config(SMALL))


@pytest.mark.parametrize("command", ["analyze", "simulate", "bound", "optimize"])
def test_reports_validate_against_schema(capsys, small, command):
    code, out, _ = invoke(capsys, command, small, "--format", "json")
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, published_schema())
    assert doc["command"] == command and doc["seed"] == 9


def test_analyze_range_and_literal_variant(capsys, small):
    code, out, _ = invoke(capsys, "analyze", small, "--n-min", "1", "--n-max", "3", "--format", "json")
    doc = json.loads(out)
    assert [r["n"] for r in doc["results"]] == [1, 2, 3]
    r = doc["results"][0]
    values = [loss["value"] for loss in r["losses"]]
    assert max(values) - min(values) < 1e-10
    assert r["literal_corollary"]["residual_norm"] > 0


def test_bound_table(capsys, tmp_path):
    path = tmp_path / "b.toml"
    path.write_text('[arrival]\nkind = "deterministic"\nrate = 10.0\n[retrial]\nkind = "deterministic"\nrate = 2.0\n'
                    "[search]\nalpha = 0.0001\nn_min = 21\nn_max = 22\n")
    code, out, _ = invoke(capsys, "bound", path, "--format", "csv")
    assert code == 0
    rows = [line.split(",") for line in out.strip().splitlines()[1:]]
    assert [(r[1], round(float(r[3]), 6)) for r in rows] == [("21", 0.000137), ("22", 0.000036)]


def test_optimize_markov(capsys):
    code, out, _ = invoke(capsys, "optimize", CONFIGS / "example1.toml", "--format", "json")
    doc = json.loads(out)
    assert code == 0
    assert doc["search"]["result"] == 23 and doc["search"]["bound_n"] == 27


def test_optimize_alpha_one(capsys, small):
    code, out, _ = invoke(capsys, "optimize", small, "--alpha", "1", "--format", "json")
    assert code == 0 and json.loads(out)["search"]["result"] == 1


def test_simulate_reproducible(capsys, small):
    _, a, _ = invoke(capsys, "simulate", small, "--format", "json")
    _, b, _ = invoke(capsys, "simulate", small, "--format", "json")
    ra, rb = RunReport.model_validate_json(a), RunReport.model_validate_json(b)
    assert ra.deterministic_part() == rb.deterministic_part()
    # the echoed config reproduces the run
    echoed = RunConfig.model_validate(ra.config)
    again = commands.simulate(echoed)
    assert again.deterministic_part() == ra.deterministic_part()


def test_simulate_without_arrivals(capsys, small):
    text = SMALL.replace("rate = 3.0", "rate = 0.0")
    path = small.with_name("idle.toml")
    path.write_text(text)
    code, out, _ = invoke(capsys, "simulate", path, "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["results"][0]["losses"] == []
    assert any("losses=0" in note for note in doc["notes"])


def test_trace_file(capsys, small, tmp_path):
    trace = tmp_path / "events.jsonl"
    code, _, _ = invoke(capsys, "simulate", small, "--horizon", "20", "--replications", "2", "--trace", trace)
    assert code == 0
    events = [json.loads(line) for line in trace.read_text().splitlines()]
    assert events and set(events[0]) == {"time", "kind", "pre", "post", "loss"}
    assert {e["kind"] for e in events} <= {"arrival", "retrial", "service"}
    for a, b in zip(events, events[1:]):
        assert a["post"] == b["pre"] and a["time"] <= b["time"]


def test_low_effective_sample_size_is_flagged(capsys, small):
    code, out, _ = invoke(capsys, "simulate", small, "--proposal-rate", "6", "--horizon", "2000",
                          "--estimator", "sdn10", "--format", "json")
    assert code == 0
    assert any("effective sample size" in note for note in json.loads(out)["notes"])


def test_output_file_and_formats(capsys, small, tmp_path):
    target = tmp_path / "out.txt"
    code, out, _ = invoke(capsys, "bound", small, "-o", target)
    assert code == 0 and out == ""
    assert target.read_text().startswith("# bound")


def test_exit_code_for_missing_file(capsys, tmp_path):
    code, _, err = invoke(capsys, "simulate", tmp_path / "nope.toml")
    assert code == 2 and "invalid configuration" in err


def test_exit_code_for_bad_value(capsys, small):
    assert invoke(capsys, "simulate", small, "--replications", "0")[0] == 2


def test_exit_code_for_non_markovian_analyze(capsys):
    code, _, err = invoke(capsys, "analyze", CONFIGS / "example2.toml")
    assert code == 2 and "poisson" in err


def test_exit_code_for_inconclusive_search(capsys, small):
    # target sits on the simulated loss, so the interval never clears it
    text = SMALL.replace('kind = "poisson"\nrate = 3.0', 'kind = "deterministic"\nrate = 3.0')
    path = small.with_name("det.toml")
    path.write_text(text + "max_effort = 1\nn_lower = 2\nn_upper = 2\n")
    code, out, _ = invoke(capsys, "optimize", path, "--n", "2", "--alpha",
                          repr(_sdn10_at(path, 2)), "--format", "json")
    assert code == 3
    assert json.loads(out)["status"] == "inconclusive"


def _sdn10_at(path, n):
    cfg = apply_overrides(load_config(path), n=n, estimator="sdn10")
    return commands.simulate(cfg).results[0].losses[0].raw_value


def test_exit_code_for_invariant_violation(capsys, small, monkeypatch):
    def broken(cfg, trace=None):
        raise InvariantViolation("q1 out of range")

    monkeypatch.setattr(commands, "simulate", broken)
    code, _, err = invoke(capsys, "simulate", small)
    assert code == 4 and "invariant" in err
