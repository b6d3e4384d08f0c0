import csv
import json

import pytest
from click.testing import CliRunner

from comorbid.cli import main
from comorbid.ingest import parse_cohort
from comorbid.pipeline import RESULT_COLUMNS, AnalysisConfig, analyze_differential, analyze_population
from comorbid.synth import SynthConfig, TermSpec, simulate


def read_tsv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


@pytest.fixture(scope="module")
def synthetic(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthetic")
    result = CliRunner().invoke(main, ["simulate", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


def run(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env, catch_exceptions=False)


def test_simulate_writes_exports(synthetic):
    names = sorted(p.name for p in synthetic.iterdir())
    assert names == ["bg_base.csv", "bg_condition.csv", "senior_base.csv", "senior_condition.csv", "truth.csv"]
    text = (synthetic / "senior_base.csv").read_text()
    assert text.startswith("#cohort=senior,total=5253320\n")


def test_simulate_width_zero_unrounded(tmp_path):
    assert run("simulate", "--out", tmp_path, "--width", 0).exit_code == 0
    cohort = parse_cohort((tmp_path / "senior_condition.csv").read_text())
    assert cohort.total.exact
    assert any(c.reported % 10 for c in cohort.freq.values())


def test_simulate_rejects_bad_rate(tmp_path):
    config = {"populations": [{"name": "p", "n_base": 1000, "n_condition": 100}],
              "terms": [{"term_id": "t", "base_rate": 1.5, "planted_or": 2.0}]}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(config))
    result = CliRunner().invoke(main, ["simulate", str(path), "--out", str(tmp_path / "o")])
    assert result.exit_code == 2
    assert "base_rate" in result.output


def test_simulate_infeasible_effect(tmp_path):
    config = {"populations": [{"name": "p", "n_base": 100000, "n_condition": 100}],
              "terms": [{"term_id": "t", "base_rate": 0.001, "planted_or": 0.0001}]}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(config))
    result = CliRunner().invoke(main, ["simulate", str(path), "--out", str(tmp_path / "o")])
    assert result.exit_code == 3


def test_analyze_outputs(synthetic, tmp_path):
    result = run("analyze", synthetic / "senior_base.csv", synthetic / "senior_condition.csv",
                 "--out", tmp_path, "--samples", 20)
    assert result.exit_code == 0
    for name in ("results.tsv", "histogram.tsv", "below_threshold.tsv", "invalid.tsv", "summary.tsv"):
        assert (tmp_path / name).exists()
    rows = read_tsv(tmp_path / "results.tsv")
    assert tuple(rows[0]) == RESULT_COLUMNS
    raw_lo = [float(r["raw_lo"]) for r in rows]
    q_t = [float(r["q_t"]) for r in rows]
    assert raw_lo == sorted(raw_lo, reverse=True)
    assert q_t == sorted(q_t, reverse=True)
    # every term lands in exactly one report
    below = read_tsv(tmp_path / "below_threshold.tsv")
    invalid = read_tsv(tmp_path / "invalid.tsv")
    ids = [r["term_id"] for r in rows + below + invalid]
    assert len(ids) == len(set(ids)) == 60
    hist = read_tsv(tmp_path / "histogram.tsv")
    assert [r["label"] for r in hist if r["kind"] == "threshold"] == ["Minor", "Moderate", "High"]
    bins = [r for r in hist if r["kind"] == "bin"]
    assert sum(int(r["count"]) for r in bins) == len(rows) + len(below)
    assert all(float(r["log2_hi"]) - float(r["log2_lo"]) == pytest.approx(0.25) for r in bins)


def test_planted_high_term_ranked_first():
    terms = [TermSpec(f"N{i}", 0.01, 1.0, 3.0) for i in range(20)] + [TermSpec("HIGH", 0.005, 20.0, 3.0)]
    pop = simulate(SynthConfig(1_000_000, 2000, terms, seed=3))
    analysis = analyze_population(pop.pair, AnalysisConfig(samples=30))
    assert analysis.ranked()[0].term_id == "HIGH"
    assert analysis.ranked()[0].level.value == "High"


def test_empty_condition_overlap(tmp_path):
    base = tmp_path / "b.csv"
    cond = tmp_path / "c.csv"
    base.write_text("#cohort=B,total=100000\nterm_id,description,count\nA,a,500\nB,b,70\n")
    cond.write_text("#cohort=C,total=1000\nterm_id,description,count\n")
    result = run("analyze", base, cond, "--out", tmp_path / "o")
    assert result.exit_code == 0
    assert read_tsv(tmp_path / "o" / "results.tsv") == []
    assert len(read_tsv(tmp_path / "o" / "invalid.tsv")) == 2


def test_identical_pairs_no_difference(synthetic, tmp_path):
    pair = (synthetic / "senior_base.csv", synthetic / "senior_condition.csv")
    result = run("diff", *pair, *pair, "--out", tmp_path, "--samples", 20)
    assert result.exit_code == 0
    rows = read_tsv(tmp_path / "diff.tsv")
    assert rows
    assert all(float(r["dc_ratio"]) == 1.0 for r in rows)
    assert all(r["confident"] == "false" for r in rows)
    scatter = read_tsv(tmp_path / "scatter.tsv")
    assert len(scatter) == len(rows)


def test_diff_outputs(synthetic, tmp_path):
    result = run("diff", synthetic / "senior_base.csv", synthetic / "senior_condition.csv",
                 synthetic / "bg_base.csv", synthetic / "bg_condition.csv", "--out", tmp_path, "--samples", 20)
    assert result.exit_code == 0
    for name in ("diff.tsv", "scatter.tsv", "diff_histogram.tsv", "senior_results.tsv", "bg_results.tsv"):
        assert (tmp_path / name).exists()
    confident = {r["term_id"] for r in read_tsv(tmp_path / "diff.tsv") if r["confident"] == "true"}
    assert "H001" in confident
    assert not any(t.startswith("N") for t in confident)


def test_planted_differential_confident_across_seeds():
    hits = 0
    for seed in range(100):
        senior = [TermSpec(f"N{i}", 0.01, 1.0, 3.0) for i in range(5)] + [TermSpec("D", 0.01, 10.0, 3.0)]
        bg = [TermSpec(f"N{i}", 0.01, 1.0, 3.0) for i in range(5)] + [TermSpec("D", 0.01, 2.0, 3.0)]
        s = simulate(SynthConfig(1_000_000, 2000, senior, seed=2 * seed, stochastic=True, name="s"))
        b = simulate(SynthConfig(2_000_000, 4000, bg, seed=2 * seed + 1, stochastic=True, name="b"))
        diff = analyze_differential(s.pair, b.pair, AnalysisConfig(samples=50, seed=seed))
        hits += diff.results["D"].confident
    assert hits >= 95


def test_parse_error_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("#cohort=B,total=1000\nterm_id,description,count\nA,a,17\n")
    result = CliRunner().invoke(main, ["analyze", str(bad), str(bad), "--out", str(tmp_path / "o")])
    assert result.exit_code == 1
    assert "line 3" in result.output
    missing = CliRunner().invoke(main, ["analyze", str(tmp_path / "nope.csv"), str(bad)])
    assert missing.exit_code == 1


def test_non_strict_rounds(tmp_path):
    base = tmp_path / "b.csv"
    cond = tmp_path / "c.csv"
    base.write_text("#cohort=B,total=100000\nterm_id,description,count\nA,a,503\n")
    cond.write_text("#cohort=C,total=1000\nterm_id,description,count\nA,a,52\n")
    result = run("analyze", base, cond, "--out", tmp_path / "o", "--strict", "false")
    assert result.exit_code == 0
    rows = read_tsv(tmp_path / "o" / "results.tsv") + read_tsv(tmp_path / "o" / "below_threshold.tsv")
    assert rows[0]["n_z_term"] == "500"


@pytest.mark.parametrize("args", [["--alpha", "1.5"], ["--mu", "0.5"], ["--samples", "1"],
                                  ["--thresholds", "3,5"], ["--grid-lo", "8", "--grid-hi", "2"]])
def test_config_errors_exit_2(synthetic, tmp_path, args):
    result = CliRunner().invoke(main, ["analyze", str(synthetic / "senior_base.csv"),
                                       str(synthetic / "senior_condition.csv"), "--out", str(tmp_path), *args])
    assert result.exit_code == 2


def test_env_override(synthetic, tmp_path):
    env = {"COMORBID_OUT": str(tmp_path / "env"), "COMORBID_SAMPLES": "10", "COMORBID_MU": "2"}
    result = run("analyze", synthetic / "senior_base.csv", synthetic / "senior_condition.csv", env=env)
    assert result.exit_code == 0
    rows = read_tsv(tmp_path / "env" / "results.tsv")
    assert float(rows[0]["adj_or"]) == pytest.approx(float(rows[0]["raw_or"]) / 2, rel=1e-5)


def test_parallel_matches_serial(synthetic, tmp_path):
    inputs = (synthetic / "senior_base.csv", synthetic / "senior_condition.csv")
    run("analyze", *inputs, "--out", tmp_path / "serial", "--samples", 20)
    run("analyze", *inputs, "--out", tmp_path / "parallel", "--samples", 20, "--jobs", 2)
    for name in ("results.tsv", "below_threshold.tsv", "histogram.tsv", "summary.tsv"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()
