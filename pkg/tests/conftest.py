from __future__ import annotations

import pytest

from unroll_tuner.ir import (
    Access,
    AccessMode,
    BinOp,
    BinOpKind,
    BufferAccess,
    BufferDecl,
    DataType,
    Iterator,
    Program,
    subs,
)

F64 = DataType.Float64


def load(buffer: str, *dims, dtype=F64) -> Access:
    return Access(BufferAccess(buffer, dtype, subs(*dims), AccessMode.Load))


def make_program(name, iterators, body, out_dims, inputs, dtype=F64) -> Program:
    """Compact program builder: iterators as (name, extent) pairs."""
    its = tuple(Iterator(n, 0, e, k) for k, (n, e) in enumerate(iterators))
    return Program(
        name=name,
        iterators=its,
        body=body,
        output=BufferAccess("out", dtype, subs(*out_dims), AccessMode.Store),
        inputs=tuple(BufferDecl(n, r, dtype) for n, r in inputs),
        dtype=dtype,
    )


@pytest.fixture
def matmul4() -> Program:
    """4x4 matrix product in the accumulator idiom."""
    body = BinOp(
        BinOpKind.Add,
        load("out", "i0", "i1"),
        BinOp(BinOpKind.Mul, load("M1", "i0", "i2"), load("M2", "i2", "i1")),
    )
    return make_program(
        "matmul4",
        [("i0", 4), ("i1", 4), ("i2", 4)],
        body,
        ("i0", "i1"),
        [("M1", 2), ("M2", 2)],
    )


@pytest.fixture
def vecadd() -> Program:
    """1-d elementwise a + b, extent 100."""
    body = BinOp(BinOpKind.Add, load("a", "i0"), load("b", "i0"))
    return make_program("vecadd", [("i0", 100)], body, ("i0",), [("a", 1), ("b", 1)])


def chain_body(n_loads: int, buffer: str = "a"):
    """Left-leaning Add chain over n_loads loads of a 1-d buffer."""
    expr = load(buffer, "i0")
    for _ in range(n_loads - 1):
        expr = BinOp(BinOpKind.Add, expr, load(buffer, "i0"))
    return expr
