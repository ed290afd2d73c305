from __future__ import annotations

import os

import pytest

from unroll_tuner.cli import load_config, main
from unroll_tuner.dataset import load_csv


def run_cli(*argv) -> int:
    return main(list(argv))


def read(path) -> str:
    with open(path) as fh:
        return fh.read()


def test_usage_error_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("label")          # missing required --programs
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_backend_exits_2(tmp_path, capsys):
    gen_dir = tmp_path / "progs"
    assert run_cli("gen", "--count", "1", "--seed", "1", "--out", str(gen_dir)) == 0
    code = run_cli("label", "--programs", str(gen_dir), "--backend", "cost",
                   "--out", str(tmp_path / "c.csv"))
    assert code == 0
    capsys.readouterr()
    # bad input dir is a pipeline error
    assert run_cli("label", "--programs", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "c.csv")) == 2


def test_gen_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("gen", "--count", "10", "--seed", "7", "--out", str(a)) == 0
    assert run_cli("gen", "--count", "10", "--seed", "7", "--out", str(b)) == 0
    files_a = sorted(os.listdir(a))
    assert files_a == sorted(os.listdir(b))
    assert len(files_a) == 100     # 10 programs x 10 schedules
    for name in files_a:
        assert read(a / name) == read(b / name)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "tuner.cfg"
    cfg.write_text("seed = 3\ncount = 2\ngen.schedules_per_program = 4\n")
    out = tmp_path / "gen"
    assert run_cli("gen", "--config", str(cfg), "--out", str(out)) == 0
    assert len(os.listdir(out)) == 8
    out2 = tmp_path / "gen2"
    assert run_cli("gen", "--config", str(cfg), "--count", "1", "--out", str(out2)) == 0
    assert len(os.listdir(out2)) == 4          # flag wins over file


def test_load_config_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("this is not a key value line\n")
    from unroll_tuner.errors import UnrollTunerError
    with pytest.raises(UnrollTunerError):
        load_config(str(bad))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen -> label -> train once; shared by the CLI behavior tests."""
    root = tmp_path_factory.mktemp("pipeline")
    progs = root / "progs"
    corpus = root / "corpus.csv"
    model = root / "model.json"
    assert run_cli("gen", "--count", "40", "--seed", "11", "--out", str(progs)) == 0
    assert run_cli("label", "--programs", str(progs), "--backend", "cost",
                   "--out", str(corpus)) == 0
    assert run_cli("train", "--data", str(corpus), "--out", str(model),
                   "--seed", "11", "--min-per-class", "2", "--max-epochs", "12") == 0
    return root, progs, corpus, model


def test_label_output_loads(pipeline):
    _, progs, corpus, _ = pipeline
    rows = load_csv(str(corpus))
    assert len(rows) == len(os.listdir(progs))
    assert all(row.timing is not None for row in rows)


def test_predict_prints_factor(pipeline, capsys):
    root, progs, corpus, model = pipeline
    sample = sorted(os.listdir(progs))[0]
    assert run_cli("predict", str(progs / sample), "--model", str(model)) == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith("unroll_factor=")
    assert int(out.split("=")[1]) in (0, 2, 4, 8, 16, 32, 64)


def test_baselines_table(pipeline, capsys):
    root, progs, corpus, model = pipeline
    assert run_cli("baselines", "--data", str(corpus), "--model", str(model),
                   "--seed", "11", "--min-per-class", "2") == 0
    out = capsys.readouterr().out
    assert "neural network" in out
    assert "knn" in out
    assert "decision tree" in out


def test_bench_cost_backend(pipeline, tmp_path, capsys):
    root, progs, corpus, model = pipeline
    report = tmp_path / "report.csv"
    assert run_cli("bench", "--model", str(model), "--backend", "cost",
                   "--sizes", "small:8,medium:16,large:32",
                   "--out", str(report)) == 0
    text = read(report)
    assert text.splitlines()[0] == \
        "case,size,schedule,predicted,optimal,predit_ms,optimal_ms,sans_ms,pc,sp"
    assert len(text.strip().splitlines()) == 16
    assert "MMxM" in capsys.readouterr().out


def test_label_parallel_jobs_deterministic(tmp_path):
    progs = tmp_path / "p"
    assert run_cli("gen", "--count", "6", "--seed", "3", "--out", str(progs)) == 0
    c1, c2 = tmp_path / "c1.csv", tmp_path / "c2.csv"
    assert run_cli("label", "--programs", str(progs), "--out", str(c1), "--jobs", "1") == 0
    assert run_cli("label", "--programs", str(progs), "--out", str(c2), "--jobs", "2") == 0
    assert read(c1) == read(c2)
