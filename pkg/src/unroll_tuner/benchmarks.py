"""The five evaluation kernels and their 3-size benchmark suite.

Kernels: matrix product (accumulator idiom), scaled matrix sum, RGB-to-gray
conversion, a 3-tap horizontal blur, and a CNN convolution layer.  Sizes
follow the small=256 / medium=1024 / large=2048 grid; the convolution
instead varies its batch size over {64, 32, 8} with C=4 input channels,
H=W=size/8 and 16 3x3 filters.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ir import (
    Access,
    AccessMode,
    BinOp,
    BinOpKind,
    BufferAccess,
    BufferDecl,
    Constant,
    DataType,
    Iterator,
    Program,
    Subscript,
    subs,
)
from .schedule import Interchange, Parallelize, Tile2, Transform

SIZE_CLASSES = {"small": 256, "medium": 1024, "large": 2048}
CONV_BATCH = {"small": 64, "medium": 32, "large": 8}

F64 = DataType.Float64


def _iters(*pairs) -> tuple[Iterator, ...]:
    return tuple(Iterator(name, 0, extent, k) for k, (name, extent) in enumerate(pairs))


def _load(buffer: str, *dims) -> Access:
    return Access(BufferAccess(buffer, F64, subs(*dims), AccessMode.Load))


def mmxm(msize: int) -> Program:
    """Square matrix product: out[i0,i1] accumulates M1[i0,i2]*M2[i2,i1]."""
    out = BufferAccess("mul", F64, subs("i0", "i1"), AccessMode.Store)
    body = BinOp(
        BinOpKind.Add,
        _load("mul", "i0", "i1"),
        BinOp(BinOpKind.Mul, _load("M1", "i0", "i2"), _load("M2", "i2", "i1")),
    )
    return Program(
        name="mmxm",
        iterators=_iters(("i0", msize), ("i1", msize), ("i2", msize)),
        body=body,
        output=out,
        inputs=(BufferDecl("M1", 2, F64), BufferDecl("M2", 2, F64)),
        dtype=F64,
    )


def smm(msize: int, alpha: float = 2.0, beta: float = 3.0) -> Program:
    """Scaled matrix sum alpha*M1 + beta*M2."""
    body = BinOp(
        BinOpKind.Add,
        BinOp(BinOpKind.Mul, Constant(alpha, F64), _load("M1", "i0", "i1")),
        BinOp(BinOpKind.Mul, Constant(beta, F64), _load("M2", "i0", "i1")),
    )
    return Program(
        name="smm",
        iterators=_iters(("i0", msize), ("i1", msize)),
        body=body,
        output=BufferAccess("add", F64, subs("i0", "i1"), AccessMode.Store),
        inputs=(BufferDecl("M1", 2, F64), BufferDecl("M2", 2, F64)),
        dtype=F64,
    )


def rgb_gray(isize: int) -> Program:
    """Weighted sum of the three color planes (standard luma weights)."""
    body = BinOp(
        BinOpKind.Add,
        BinOp(
            BinOpKind.Add,
            BinOp(BinOpKind.Mul, Constant(0.299, F64), _load("r_input", "x", "y")),
            BinOp(BinOpKind.Mul, Constant(0.587, F64), _load("g_input", "x", "y")),
        ),
        BinOp(BinOpKind.Mul, Constant(0.114, F64), _load("b_input", "x", "y")),
    )
    return Program(
        name="rgb_gray",
        iterators=_iters(("x", isize), ("y", isize)),
        body=body,
        output=BufferAccess("griser", F64, subs("x", "y"), AccessMode.Store),
        inputs=(
            BufferDecl("r_input", 2, F64),
            BufferDecl("g_input", 2, F64),
            BufferDecl("b_input", 2, F64),
        ),
        dtype=F64,
    )


def blur(isize: int) -> Program:
    """Horizontal 3-tap average over a 3-d image volume."""
    body = BinOp(
        BinOpKind.Div,
        BinOp(
            BinOpKind.Add,
            BinOp(
                BinOpKind.Add,
                _load("b_input", "x", "y", "c"),
                _load("b_input", ("x", 1), "y", "c"),
            ),
            _load("b_input", ("x", 2), "y", "c"),
        ),
        Constant(3.0, F64),
    )
    return Program(
        name="blur",
        iterators=_iters(("x", isize), ("y", isize), ("c", isize)),
        body=body,
        output=BufferAccess("blur_x", F64, subs("x", "y", "c"), AccessMode.Store),
        inputs=(BufferDecl("b_input", 3, F64),),
        dtype=F64,
    )


def conv_layer(batch: int, cin: int = 4, height: int = 32, width: int = 32,
               cout: int = 16, kh: int = 3, kw: int = 3) -> Program:
    """Direct convolution: out[n,z,y1,x1] += filter[z,kz,ky,kx]*in[n,kz,y1+ky,x1+kx]."""
    out = BufferAccess("conv", F64, subs("n", "z", "y1", "x1"), AccessMode.Store)
    body = BinOp(
        BinOpKind.Add,
        _load("conv", "n", "z", "y1", "x1"),
        BinOp(
            BinOpKind.Mul,
            _load("filter", "z", "kz", "ky", "kx"),
            Access(BufferAccess(
                "c_input", F64,
                (Subscript.of("n"), Subscript.of("kz"),
                 Subscript(("y1", "ky")), Subscript(("x1", "kx"))),
                AccessMode.Load,
            )),
        ),
    )
    return Program(
        name="conv_layer",
        iterators=_iters(("n", batch), ("z", cout), ("y1", height), ("x1", width),
                         ("kz", cin), ("ky", kh), ("kx", kw)),
        body=body,
        output=out,
        inputs=(BufferDecl("c_input", 4, F64), BufferDecl("filter", 4, F64)),
        dtype=F64,
    )


@dataclass(frozen=True)
class BenchmarkCase:
    name: str
    size_class: str            # small | medium | large
    program: Program
    transforms: tuple[Transform, ...]


def _mmxm_case(size_class: str, msize: int) -> BenchmarkCase:
    tiles = {"small": 16, "medium": 0, "large": 32}[size_class]
    transforms: tuple[Transform, ...] = (Parallelize(0),)
    if tiles:
        transforms = (Tile2(0, 1, tiles, tiles), Parallelize(0))
    return BenchmarkCase("MMxM", size_class, mmxm(msize), transforms)


def _smm_case(size_class: str, msize: int) -> BenchmarkCase:
    tiles = {"small": 0, "medium": 16, "large": 32}[size_class]
    transforms: tuple[Transform, ...] = ()
    if tiles:
        transforms = (Tile2(0, 1, tiles, tiles), Interchange(1, 2), Parallelize(0))
    return BenchmarkCase("SMM", size_class, smm(msize), transforms)


def _rgb_case(size_class: str, isize: int) -> BenchmarkCase:
    tiles = {"small": 0, "medium": 32, "large": 64}[size_class]
    transforms: tuple[Transform, ...] = (Parallelize(0),)
    if tiles:
        transforms = (Tile2(0, 1, tiles, tiles), Parallelize(0))
    return BenchmarkCase("RGB_gray", size_class, rgb_gray(isize), transforms)


def benchmark_suite(sizes: dict[str, int] | None = None) -> list[BenchmarkCase]:
    """All five kernels at the three size classes (15 instances)."""
    sizes = sizes or SIZE_CLASSES
    cases: list[BenchmarkCase] = []
    for size_class, size in sizes.items():
        cases.append(_mmxm_case(size_class, size))
        cases.append(_smm_case(size_class, size))
        cases.append(_rgb_case(size_class, size))
        cases.append(BenchmarkCase("Blur", size_class, blur(size), (Parallelize(0),)))
        cases.append(BenchmarkCase(
            "Conv_layer", size_class,
            conv_layer(CONV_BATCH.get(size_class, 8), height=size // 8, width=size // 8),
            (Parallelize(0),),
        ))
    return cases
