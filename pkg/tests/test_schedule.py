from __future__ import annotations

import warnings

import pytest

from conftest import F64, load, make_program
from unroll_tuner.errors import (
    FactorNotPowerOfTwo,
    FactorOutOfRange,
    InvalidFactor,
    UnknownLevel,
    UnrollTunerError,
)
from unroll_tuner.interp import interpret, outputs_equal
from unroll_tuner.ir import BinOp, BinOpKind, Constant
from unroll_tuner.rng import SplitMix64
from unroll_tuner.schedule import (
    Interchange,
    Parallelize,
    Split,
    Tile2,
    Tile3,
    Unroll,
    apply_transform,
    apply_unroll,
    merge_split,
    new_schedule,
    schedule_program,
    validate_schedule,
    validate_transforms,
)


def test_split_extent_100_factor_4(vecadd):
    sp = apply_transform(new_schedule(vecadd), Split(0, 4))
    assert [(it.name, it.extent) for it in sp.loops] == [("i0_o", 25), ("i0_i", 4)]
    # index rewritten as outer*factor + inner
    expr = sp.index_exprs["i0"]
    assert dict(expr.terms) == {"i0_o": 4, "i0_i": 1}
    assert expr.const == 0
    assert sp.guards == ()   # 4 divides 100


def test_split_non_divisible_emits_guard(vecadd):
    sp = apply_transform(new_schedule(vecadd), Split(0, 8))
    assert [it.extent for it in sp.loops] == [13, 8]   # ceil(100/8), 8
    assert len(sp.guards) == 1
    assert sp.guards[0].bound == 100
    assert interpret(sp).body_executions == 100


def test_split_errors(vecadd):
    sp = new_schedule(vecadd)
    with pytest.raises(UnknownLevel):
        apply_transform(sp, Split(3, 4))
    with pytest.raises(FactorNotPowerOfTwo):
        apply_transform(sp, Split(0, 6))
    with pytest.raises(FactorOutOfRange):
        apply_transform(sp, Split(0, 256))


def test_interchange_is_involution(matmul4):
    sp = new_schedule(matmul4)
    once = apply_transform(sp, Interchange(0, 2))
    twice = apply_transform(once, Interchange(0, 2))
    assert [it.name for it in twice.loops] == [it.name for it in sp.loops]


def test_tile2_visits_same_points():
    body = BinOp(BinOpKind.Add, load("a", "i0", "i1"), Constant(1.0, F64))
    p = make_program("t", [("i0", 8), ("i1", 8)], body, ("i0", "i1"), [("a", 2)])
    base = interpret(p, trace_stores=True)
    tiled = interpret(schedule_program(p, [Tile2(0, 1, 4, 4)]), trace_stores=True)
    assert sorted(base.store_trace) == sorted(tiled.store_trace)
    assert base.store_trace != tiled.store_trace   # block traversal reorders
    assert tiled.output == base.output


def test_tile2_loop_structure(matmul4):
    sp = schedule_program(matmul4, [Tile2(0, 1, 2, 2)])
    assert [it.name for it in sp.loops] == ["i0_o", "i1_o", "i0_i", "i1_i", "i2"]
    assert [it.extent for it in sp.loops] == [2, 2, 2, 2, 4]
    assert sp.tile_factors == {"i0_o": 2, "i0_i": 2, "i1_o": 2, "i1_i": 2}


def test_tile3_loop_structure(matmul4):
    sp = schedule_program(matmul4, [Tile3(0, 1, 2, 2, 2, 2)])
    assert [it.name for it in sp.loops] == \
        ["i0_o", "i1_o", "i2_o", "i0_i", "i1_i", "i2_i"]


def test_tile_levels_must_be_adjacent(matmul4):
    with pytest.raises(UnrollTunerError, match="adjacent"):
        schedule_program(matmul4, [Tile2(0, 2, 4, 4)])


def test_unroll_100_by_2(vecadd):
    sp = apply_unroll(new_schedule(vecadd), 2)
    assert sp.main_trips == 50
    assert sp.remainder_extent == 0
    assert sp.unroll == 2


def test_unroll_zero_is_identity(vecadd):
    sp = new_schedule(vecadd)
    assert apply_unroll(sp, 0) is sp


def test_unroll_100_by_8_has_remainder(vecadd):
    sp = apply_unroll(new_schedule(vecadd), 8)
    assert sp.main_trips == 12
    assert sp.remainder_extent == 4
    base = interpret(new_schedule(vecadd), trace_stores=True)
    unrolled = interpret(sp, trace_stores=True)
    assert unrolled.store_trace == base.store_trace


def test_unroll_invalid_factor(vecadd):
    with pytest.raises(InvalidFactor):
        apply_unroll(new_schedule(vecadd), 3)


def test_unroll_clamps_to_innermost_extent():
    p = make_program("small", [("i0", 4), ("i1", 5)], load("a", "i1"),
                     ("i0", "i1"), [("a", 1)])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sp = apply_unroll(new_schedule(p), 16)
    assert sp.unroll == 4
    assert sp.main_trips * sp.unroll + sp.remainder_extent == 5
    assert any("clamped" in str(w.message) for w in caught)


def test_unroll_arithmetic_identity(vecadd):
    for n in range(1, 64):
        p = make_program("n", [("i0", n)], load("a", "i0"), ("i0",), [("a", 1)])
        for u in (2, 4, 8, 16, 32, 64):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sp = apply_unroll(new_schedule(p), u)
            eff = max(sp.unroll, 1)
            assert sp.main_trips * eff + sp.remainder_extent == n


def test_at_most_one_unroll(vecadd):
    sp = apply_unroll(new_schedule(vecadd), 2)
    with pytest.raises(UnrollTunerError, match="one Unroll"):
        apply_unroll(sp, 4)


def test_transforms_rejected_after_unroll(vecadd):
    sp = apply_unroll(new_schedule(vecadd), 2)
    with pytest.raises(UnrollTunerError, match="unroll"):
        apply_transform(sp, Split(0, 4))


def test_validate_schedule_ok(matmul4):
    sp = schedule_program(matmul4, [Tile2(0, 1, 2, 2), Parallelize(0), Unroll(2)])
    report = validate_schedule(sp)
    assert report.ok, report.violations


def test_validate_transforms_bad_unroll_factor(matmul4):
    report = validate_transforms(matmul4, [Unroll(3)])
    assert any("FactorNotPowerOfTwo" in v for v in report.violations)


def test_validate_transforms_two_unrolls(matmul4):
    report = validate_transforms(matmul4, [Unroll(2), Unroll(4)])
    assert any("at most one Unroll" in v for v in report.violations)


def test_validate_transforms_bad_tile_factor(matmul4):
    report = validate_transforms(matmul4, [Tile2(0, 1, 3, 4)])
    assert any("FactorNotPowerOfTwo" in v for v in report.violations)


def test_merge_split_restores_original(vecadd):
    sp = new_schedule(vecadd)
    for factor in (4, 8):   # 8 does not divide 100: guard path
        split = apply_transform(sp, Split(0, factor))
        merged = merge_split(split, 0)
        assert merged.loops == sp.loops
        assert merged.index_exprs == sp.index_exprs
        assert merged.guards == ()


def test_transform_application_deterministic(matmul4):
    a = schedule_program(matmul4, [Tile2(0, 1, 2, 2), Interchange(0, 3)])
    b = schedule_program(matmul4, [Tile2(0, 1, 2, 2), Interchange(0, 3)])
    assert a == b


def test_semantic_preservation_random_schedules():
    """Interpreting a legally scheduled nest matches the base nest exactly."""
    from unroll_tuner.generator import GenConfig, gen_program, gen_schedules

    cfg = GenConfig(seed=5, depth_range=(1, 3), extent_choices=(2, 4, 8),
                    max_inputs=2, schedules_per_program=4)
    rng = SplitMix64(17)
    for index in range(25):
        p = gen_program(cfg, index)
        base = interpret(p)
        for sp in gen_schedules(cfg, p)[1:]:
            u = rng.choice((0, 2, 4, 8))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sp = apply_unroll(sp, u)
            scheduled = interpret(sp)
            tol = 1e-12 if p.dtype.is_float else 0.0
            assert outputs_equal(scheduled.output, base.output, p.dtype, tol)
