from __future__ import annotations

import warnings

import pytest

from unroll_tuner.backend import CostModelBackend, cost_model_evaluate
from unroll_tuner.dataset import (
    LabeledSample,
    balance_classes,
    label_sample,
    load_csv,
    save_csv,
    split_dataset,
)
from unroll_tuner.errors import AllClassesBelowMinimum, HeaderMismatch, MalformedRow, TooFewRows
from unroll_tuner.featurize import CSV_HEADER, extract_features
from unroll_tuner.generator import GenConfig, gen_program, gen_schedules
from unroll_tuner.schedule import UNROLL_FACTORS, new_schedule


class FixedBackend:
    """Test double returning scripted mean times per factor."""

    def __init__(self, timings):
        self.timings = timings

    def measure(self, sp, u, runs=1):
        from unroll_tuner.backend import ExecResult
        t = self.timings[u]
        return ExecResult(mean_ms=t, runs=1, per_run_ms=(t,))


def fv_of(label_seed: int = 0):
    cfg = GenConfig(seed=100 + label_seed, depth_range=(1, 2), extent_choices=(4, 8))
    return extract_features(gen_program(cfg, 0))


def sample(label: int, idx: int = 0) -> LabeledSample:
    return LabeledSample(features=fv_of(idx % 3), label=label)


def test_label_argmin(matmul4):
    timings = {0: 9.0, 2: 5.5, 4: 4.0, 8: 3.8, 16: 3.9, 32: 4.5, 64: 7.0}
    row = label_sample(new_schedule(matmul4), FixedBackend(timings))
    assert row.label == 8
    assert row.timing == timings


def test_label_tie_breaks_to_smallest(matmul4):
    row = label_sample(new_schedule(matmul4), FixedBackend({u: 1.0 for u in UNROLL_FACTORS}))
    assert row.label == 0


def test_label_matches_bruteforce_cost_argmin():
    cfg = GenConfig(seed=8)
    backend = CostModelBackend()
    for index in range(30):
        p = gen_program(cfg, index)
        for sp in gen_schedules(cfg, p)[:3]:
            row = label_sample(sp, backend)
            costs = {u: cost_model_evaluate(sp, u, backend.params).mean_ms
                     for u in UNROLL_FACTORS}
            assert row.label == min(UNROLL_FACTORS, key=lambda u: (costs[u], u))
            assert all(row.timing[row.label] <= row.timing[u] for u in UNROLL_FACTORS)


def test_label_error_carries_factor(matmul4):
    class Exploding:
        def measure(self, sp, u, runs=1):
            from unroll_tuner.errors import InvalidFactor
            raise InvalidFactor("boom")

    from unroll_tuner.errors import InvalidFactor
    with pytest.raises(InvalidFactor, match="factor 0"):
        label_sample(new_schedule(matmul4), Exploding())


def test_features_extracted_before_unroll(matmul4):
    row = label_sample(new_schedule(matmul4), CostModelBackend())
    assert row.features == extract_features(new_schedule(matmul4))


def test_balance_example_from_rule():
    rows = ([sample(0, i) for i in range(5000)]
            + [sample(2, i) for i in range(1200)]
            + [sample(4, i) for i in range(1200)]
            + [sample(8, i) for i in range(900)])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = balance_classes(rows, 1000, seed=3)
    counts = {}
    for row in out:
        counts[row.label] = counts.get(row.label, 0) + 1
    assert counts == {0: 1200, 2: 1200, 4: 1200}
    assert any("dropping classes" in str(w.message) for w in caught)


def test_balance_uniform_input_unchanged():
    rows = [sample(u, i) for u in (0, 2, 4) for i in range(50)]
    assert balance_classes(rows, 10, seed=1) == rows


def test_balance_idempotent():
    rows = ([sample(0, i) for i in range(80)] + [sample(2, i) for i in range(33)]
            + [sample(8, i) for i in range(57)])
    once = balance_classes(rows, 5, seed=9)
    assert balance_classes(once, 5, seed=9) == once


def test_balance_all_below_minimum():
    with pytest.raises(AllClassesBelowMinimum):
        balance_classes([sample(0), sample(2)], 10)


def test_split_60_20_20():
    rows = [sample(0, i) for i in range(100)]
    split = split_dataset(rows, seed=4)
    assert (len(split.train), len(split.valid), len(split.test)) == (60, 20, 20)


def test_split_deterministic_and_partition():
    rows = [sample(u, i) for i, u in enumerate([0, 2, 4, 8, 16, 32, 64] * 9)]
    a = split_dataset(rows, seed=11)
    b = split_dataset(rows, seed=11)
    assert (a.train, a.valid, a.test) == (b.train, b.valid, b.test)

    def key(row):
        return (tuple(row.features.to_list()), row.label)

    combined = sorted(map(key, a.train + a.valid + a.test))
    assert combined == sorted(map(key, rows))
    for n in range(10, 40):
        s = split_dataset(rows[:n % len(rows) + 10], seed=n)
        total = len(s.train) + len(s.valid) + len(s.test)
        assert total == len(rows[:n % len(rows) + 10])


def test_split_too_few_rows():
    with pytest.raises(TooFewRows):
        split_dataset([sample(0)] * 9, seed=1)


def test_csv_roundtrip(tmp_path):
    rows = [label_sample(new_schedule(gen_program(GenConfig(seed=2), i)), CostModelBackend())
            for i in range(12)]
    path = str(tmp_path / "corpus.csv")
    save_csv(rows, path)
    loaded = load_csv(path)
    assert [(r.features, r.label) for r in loaded] == [(r.features, r.label) for r in rows]
    assert all(loaded[i].timing == rows[i].timing for i in range(len(rows)))


def test_csv_bad_label_rejected(tmp_path):
    path = str(tmp_path / "bad.csv")
    rows = [sample(0)]
    save_csv(rows, path)
    lines = open(path).read().splitlines()
    parts = lines[1].split(",")
    parts[-1] = "5"
    with open(path, "w") as fh:
        fh.write(lines[0] + "\n" + ",".join(parts) + "\n")
    with pytest.raises(MalformedRow):
        load_csv(path)


def test_csv_header_mismatch(tmp_path):
    path = str(tmp_path / "hdr.csv")
    cols = CSV_HEADER.split(",")
    cols[0], cols[1] = cols[1], cols[0]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
    with pytest.raises(HeaderMismatch):
        load_csv(path)
