import json
from pathlib import Path

import pytest

from ri2d import cli
from ri2d.experiments import (EXPERIMENTS, REGISTRY, SCHEMAS, Experiment, ExperimentConfig,
                              ResultRecord, ValidationError, merge_records, run_experiment)
from ri2d.report import emit_report, load_record, plot_series, record_json, rows_csv
from ri2d.walks import TruncationError
from tiny_configs import SEED, TINY

GOLDEN = Path(__file__).parent / "golden"


def _run(exp, **kw):
    return run_experiment(ExperimentConfig(exp, SEED, dict(TINY[exp])), **kw)


def test_every_experiment_has_a_tiny_config():
    assert set(TINY) == set(EXPERIMENTS) == set(SCHEMAS) == set(REGISTRY)


@pytest.mark.parametrize("exp", EXPERIMENTS)
def test_golden_rows(exp):
    got = rows_csv(_run(exp)).encode()
    assert got == (GOLDEN / f"{exp}.csv").read_bytes()


@pytest.mark.parametrize("exp", ["lemma2", "xi-law", "torus-excursions"])
def test_rerun_is_byte_identical(exp):
    assert rows_csv(_run(exp)) == rows_csv(_run(exp))


def test_workers_do_not_change_rows():
    assert rows_csv(_run("iid-noncover", workers=2)) == rows_csv(_run("iid-noncover"))


def test_validation_collects_all_errors():
    cfg = ExperimentConfig("lemma2", None, {"n": 2, "epsilon": 3, "bogus": 1, "alpha": "x"})
    with pytest.raises(ValidationError) as e:
        cfg.validated()
    msg = " ".join(e.value.errors)
    for key in ("seed", "n:", "epsilon", "bogus", "alpha"):
        assert key in msg
    with pytest.raises(ValidationError):
        ExperimentConfig("nope", 1).validated()
    with pytest.raises(ValidationError):
        ExperimentConfig("poisson-tv", 2**64).validated()
    with pytest.raises(ValidationError):
        ExperimentConfig("poisson-tv", 1, {"lambdas": []}).validated()


def test_defaults_filled():
    cfg = ExperimentConfig("xi-law", 3).validated()
    assert cfg.params["K"] == "B2" and cfg.params["max_truncation"] == 0.01
    assert cfg.params["R_kill"] is None


def test_json_roundtrip(tmp_path):
    rec = _run("xi-law")
    (p,) = emit_report(rec, "json", tmp_path)
    back = load_record(p)
    assert back == rec
    assert record_json(back) == record_json(rec)


def test_empty_record_csv_has_headers_only():
    cfg = ExperimentConfig("lemma2", 1, {"n": 8, "replicas": 3}).validated()
    rec = run_experiment(cfg, replicas=range(0))
    text = rows_csv(rec)
    assert text.count("\r\n") == 1 and text.startswith("replica,n,stage")


def test_ndist_plotdata_matches_csv(tmp_path):
    rec = _run("n-distribution")
    files = emit_report(rec, "plotdata", tmp_path)
    assert files
    row = rec.rows[0]
    for name, text in plot_series(rec).items():
        for line in text.splitlines():
            if line.startswith("#"):
                continue
            x, y = map(float, line.split())
            assert row[f"F({x:+.1f})"] == y


def test_merge_is_order_free_and_associative():
    cfg = ExperimentConfig("iid-noncover", SEED, TINY["iid-noncover"])
    a, b, c = (run_experiment(cfg, replicas=range(i, i + 1)) for i in range(3))
    full = run_experiment(cfg)
    m1 = merge_records(merge_records(a, b), c)
    m2 = merge_records(a, merge_records(c, b))
    assert m1.rows == m2.rows == full.rows
    assert m1.aggregate == m2.aggregate == full.aggregate
    other = run_experiment(ExperimentConfig("iid-noncover", SEED + 1, TINY["iid-noncover"]),
                           replicas=range(1))
    with pytest.raises(ValueError):
        merge_records(a, other)


def _raising(p, r, stream):
    if r % 2:
        raise TruncationError(None, 10)
    return {"lambda": 1.0}


def test_truncations_are_counted(monkeypatch):
    base = REGISTRY["poisson-tv"]
    monkeypatch.setitem(REGISTRY, "poisson-tv",
                        Experiment(_raising, lambda p, rows: {}, base.count, None, base.columns))
    rec = _run("poisson-tv")
    assert [t["replica"] for t in rec.truncated] == [1]
    assert rec.truncation_fraction == 0.5


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    out = tmp_path / "o"
    assert cli.main(["poisson-tv", "--seed", "1", "--out", str(out),
                     "--set", "lambdas=[1,4]", "--set", "h_factors=[0.5]"]) == 0
    assert (out / "poisson-tv.csv").exists() and (out / "poisson-tv.json").exists()
    summary = json.loads(capsys.readouterr().out)
    assert summary["replicas"] == 2
    assert cli.main(["poisson-tv", "--out", str(out)]) == 2
    assert cli.main(["lemma2", "--seed", "1", "--set", "epsilon=2", "--out", str(out)]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "xi-law", "seed": 1}))
    assert cli.main(["poisson-tv", "--config", str(cfg), "--out", str(out)]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["poisson-tv", "--seed", "1", "--out", str(blocker / "x"),
                     "--set", "lambdas=[1]"]) == 2
    base = REGISTRY["poisson-tv"]
    monkeypatch.setitem(REGISTRY, "poisson-tv",
                        Experiment(_raising, lambda p, rows: {}, base.count, None, base.columns))
    assert cli.main(["poisson-tv", "--seed", "1", "--out", str(out),
                     "--set", "lambdas=[1,4]", "--set", "h_factors=[0.5]"]) == 3
    assert cli.main(["poisson-tv", "--seed", "1", "--out", str(out), "--set", "max_truncation=1",
                     "--set", "lambdas=[1,4]", "--set", "h_factors=[0.5]"]) == 0


def test_cli_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "n-distribution", "seed": 5,
                               "params": TINY["n-distribution"], "out": str(tmp_path / "r")}))
    assert cli.main(["n-distribution", "--config", str(cfg), "--format", "csv",
                     "--format", "plotdata"]) == 0
    assert (tmp_path / "r" / "n-distribution.csv").exists()
    assert list((tmp_path / "r").glob("*.dat"))
    agg = json.loads(capsys.readouterr().out)["aggregate"]
    assert 0 < agg["ks_mean"] < 0.5
    lo, hi = agg["p_down"]["ci_low"], agg["p_down"]["ci_high"]
    assert lo <= agg["p_down"]["estimate"] <= hi


def test_record_fields():
    rec = _run("poisson-tv")
    assert isinstance(rec, ResultRecord)
    assert len(rec.build_id) == 12 and rec.seed == SEED and not rec.partial
