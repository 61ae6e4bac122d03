import numpy as np
import pytest

from causalmi.cli import DEFAULT_SEED, data_file, main
from causalmi.dataset import load_traces
from causalmi.features import write_predictions, PredictionBatch
from causalmi.graph import load_dot


@pytest.fixture
def sim(tmp_path):
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--model", "random", "--nodes", "4", "--edge-probability", "0.7",
                 "--rows", "600", "--seed", "3", "--out", str(out)]) == 0
    return out


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_no_subcommand():
    assert main([]) == 2


def test_missing_input_file(tmp_path):
    assert main(["learn", "--traces", str(tmp_path / "none.csv"), "--out", str(tmp_path / "g.dot")]) == 2


def test_simulate_writes_sidecars(sim, capsys):
    stem = sim.with_suffix("")
    truth = load_dot(f"{stem}.truth.dot")
    d = load_traces(sim)
    assert d.columns == truth.nodes and d.n_rows == 600
    assert (sim.parent / "sim.truth.coefficients.csv").read_text().startswith("node,parent,coefficient")
    assert (sim.parent / "sim.truth.parameters.csv").exists()


def test_simulate_learn_ate(sim, tmp_path, capsys):
    dot = tmp_path / "g.dot"
    strengths = tmp_path / "s.csv"
    assert main(["learn", "--traces", str(sim), "-B", "8", "--seed", "1",
                 "--out", str(dot), "--strengths", str(strengths)]) == 0
    g = load_dot(dot)
    assert set(g.nodes) == {"X0", "X1", "X2", "X3"}
    assert strengths.read_text().startswith("from,to,strength\n")
    report = tmp_path / "r.csv"
    suite = tmp_path / "suite.txt"
    suite.write_text("Q1: X0 -> X1\nQ2: X2 -> X3\n")
    assert main(["ate", "--traces", str(sim), "--graph", str(dot), "--suite", str(suite), "--out", str(report)]) == 0
    lines = report.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 3 and lines[0].startswith("query,attack,feature,ate")
    assert any(m in lines[1] for m in "✓×○")


def test_contradictory_constraints(sim, tmp_path, capsys):
    c = tmp_path / "c.txt"
    c.write_text("enforce X0 -> X1\nforbid X0 -> X1\n")
    assert main(["learn", "--traces", str(sim), "--constraints", str(c), "--out", str(tmp_path / "g.dot")]) == 1
    assert "X0 -> X1 is both enforced and forbidden" in capsys.readouterr().err


def test_malformed_traces_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1\n")
    assert main(["learn", "--traces", str(bad), "--out", str(tmp_path / "g.dot")]) == 1
    assert "ragged" in capsys.readouterr().err


def test_usage_error_exit_2(sim, tmp_path):
    assert main(["ate", "--traces", str(sim), "--treatment", "X0"]) == 2
    assert main(["ate", "--traces", str(sim), "--treatment", "X0", "--outcome", "X1", "--a", "1"]) == 2


def test_default_seed_printed_and_env_override(sim, tmp_path, capsys, monkeypatch):
    out = tmp_path / "g.dot"
    main(["learn", "--traces", str(sim), "-B", "2", "--out", str(out)])
    assert f"seed {DEFAULT_SEED}" in capsys.readouterr().out
    monkeypatch.setenv("CAUSALMI_SEED", "77")
    main(["learn", "--traces", str(sim), "-B", "2", "--out", str(out)])
    assert "seed 77" in capsys.readouterr().out
    monkeypatch.setenv("CAUSALMI_SEED", "x")
    assert main(["learn", "--traces", str(sim), "-B", "2", "--out", str(out)]) == 2


def test_ate_single_query_with_adjustment(sim, tmp_path, capsys):
    truth = sim.with_suffix("").as_posix() + ".truth.dot"
    args = ["ate", "--traces", str(sim), "--graph", truth, "--treatment", "X0", "--outcome", "X3",
            "--a", "1", "--b", "0", "--out", str(tmp_path / "r.csv")]
    assert main(args) == 0
    assert main(args + ["--adjust", ""]) == 0
    row = (tmp_path / "r.csv").read_text(encoding="utf-8").splitlines()[1].split(",")
    assert row[9] == "" and row[6:8] == ["1.0", "0.0"]


def test_ate_learn_inline(sim, tmp_path):
    assert main(["ate", "--traces", str(sim), "--treatment", "X0", "--outcome", "X1", "-B", "4",
                 "--out", str(tmp_path / "r.csv")]) == 0


def test_ate_all_queries_failing(sim, tmp_path):
    truth = sim.with_suffix("").as_posix() + ".truth.dot"
    assert main(["ate", "--traces", str(sim), "--graph", truth, "--treatment", "X0", "--outcome", "Nope"]) == 1


def test_predict_and_cv(sim, tmp_path, capsys):
    truth = sim.with_suffix("").as_posix() + ".truth.dot"
    assert main(["predict", "--traces", str(sim), "--graph", truth, "--target", "X3",
                 "--evidence", "X0=1.0", "--out", str(tmp_path / "p.csv"),
                 "--save-net", str(tmp_path / "net")]) == 0
    assert "E[X3 | evidence]" in capsys.readouterr().out
    assert load_traces(tmp_path / "p.csv").columns == ("X3",)
    assert (tmp_path / "net.coefficients.csv").exists()
    assert main(["predict", "--traces", str(sim), "--graph", truth, "--target", "X3",
                 "--rows", str(sim), "--out", str(tmp_path / "rows.csv")]) == 0
    assert load_traces(tmp_path / "rows.csv").n_rows == 600
    assert main(["predict", "--traces", str(sim), "--graph", truth, "--target", "X3", "--evidence", "X0"]) == 2
    assert main(["cv", "--traces", str(sim), "--graph", truth, "--target", "X3", "--runs", "5",
                 "--out", str(tmp_path / "cv.csv"), "--baseline", str(tmp_path / "b.csv")]) == 0
    cv = load_traces(tmp_path / "cv.csv")
    assert cv.columns == ("run", "correlation", "mse") and cv.n_rows <= 5
    assert load_traces(tmp_path / "b.csv").n_cols == 3


def test_derive_traces_and_predictions(tmp_path, capsys):
    t = tmp_path / "t.csv"
    t.write_text("TrainAcc,TestAcc\n0.921,0.007\n")
    assert main(["derive", "--traces", str(t), "--out", str(tmp_path / "o.csv")]) == 0
    assert load_traces(tmp_path / "o.csv").column("AccDiff")[0] == pytest.approx(0.914)
    b = PredictionBatch(np.array([[[0.9, 0.1]], [[0.1, 0.9]]]), np.array([[1.0, 0.0]]))
    write_predictions(b, tmp_path / "p.csv", tmp_path / "l.csv")
    assert main(["derive", "--predictions", str(tmp_path / "p.csv"), "--labels", str(tmp_path / "l.csv"),
                 "--prefix", "Test", "--out", str(tmp_path / "bv.csv")]) == 0
    bv = load_traces(tmp_path / "bv.csv")
    assert bv.columns == ("TestLoss", "TestVar", "TestBias")
    assert bv.column("TestBias")[0] == pytest.approx(np.log(2))
    assert main(["derive", "--out", str(tmp_path / "x.csv")]) == 2


def test_export_dot(sim, tmp_path, capsys):
    coef = sim.parent / "sim.truth.coefficients.csv"
    assert main(["export-dot", "--coefficients", str(coef), "--out", str(tmp_path / "a.dot")]) == 0
    truth = load_dot(sim.with_suffix("").as_posix() + ".truth.dot")
    assert load_dot(tmp_path / "a.dot").edges == truth.edges
    s = tmp_path / "s.csv"
    s.write_text("from,to,strength\nA,B,0.9\nB,A,0.1\nB,C,0.05\n")
    assert main(["export-dot", "--strengths", str(s), "--threshold", "0.5"]) == 0
    assert "A -> B;" in capsys.readouterr().out
    assert main(["export-dot"]) == 2


def test_attack_template_required(tmp_path):
    fixture = data_file("mi_traces.csv")
    assert main(["learn", "--traces", str(fixture), "--attack", "ShadowAcc", "--attack", "ThreshAcc",
                 "-B", "1", "--out", str(tmp_path / "g.dot")]) == 2


def test_output_directories_created(sim, tmp_path):
    out = tmp_path / "nested" / "deeper" / "g.dot"
    assert main(["learn", "--traces", str(sim), "-B", "2", "--out", str(out)]) == 0
    assert load_dot(out).nodes == ("X0", "X1", "X2", "X3")
