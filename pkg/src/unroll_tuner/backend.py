"""Execution-time evaluation f(program, unroll factor).

Two interchangeable backends:

* `CostModelBackend` — a deterministic synthetic model (the default for
  tests/CI): per-trip body cost, loop-control overhead shrinking with the
  unroll factor, and an instruction-cache penalty once the replicated body
  outgrows the modeled capacity.
* `NativeBackend` — emits a self-contained C kernel for the scheduled nest,
  compiles it with the configured toolchain and parses the timing output.

The emitted binary prints exactly one line `mean_ms=<float>` on stdout
(plus `checksum=<hex>` in debug builds) and one `run_ms=<float>` line per
timed repetition on stderr, so per-run samples can be recorded without
touching the stdout contract.
"""

from __future__ import annotations

import math
import os
import shutil
import statistics
import subprocess
import tempfile
import threading
import warnings
from dataclasses import dataclass, field

from .errors import (
    CompileError,
    DepthExceedsMax,
    InvalidFactor,
    RunTimeout,
    ToolchainMissing,
)
from .interp import (
    FILL_MODULUS,
    FILL_PRIMES,
    FILL_SHIFT,
    buffer_salt,
    buffer_shapes,
    row_major_strides,
)
from .ir import Access, BinOpKind, Constant, DataType, op_histogram
from .schedule import UNROLL_FACTORS, ScheduledProgram, apply_unroll

DEFAULT_RUNS = 30
DEFAULT_TIMEOUT_S = 60.0
DEFAULT_TOOLCHAIN = "cc"
# -O1 keeps codegen predictable; the compiler's own unroller is switched off
# so the measured effect is our transformation's, not the vendor's.
DEFAULT_FLAGS = ("-O1", "-fno-unroll-loops")
TOOLCHAIN_ENV_VAR = "UNROLL_TUNER_TOOLCHAIN"

_EXEC_LOCK = threading.Lock()   # timed kernel executions are serialized process-wide


@dataclass(frozen=True)
class ExecResult:
    mean_ms: float
    runs: int
    per_run_ms: tuple[float, ...]
    checksum: int | None = None   # only present for debug-mode kernels

    def __post_init__(self):
        if self.runs < 1 or len(self.per_run_ms) != self.runs:
            raise ValueError("runs must be >= 1 and match per_run_ms")
        if any(t <= 0.0 for t in self.per_run_ms):
            raise ValueError("all run times must be positive")
        if not math.isclose(self.mean_ms, statistics.fmean(self.per_run_ms),
                            rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError("mean_ms must be the arithmetic mean of per_run_ms")


@dataclass(frozen=True)
class CostModelParams:
    c_body: float = 1.0
    c_loop: float = 2.0
    c_icache: float = 0.01
    icache_capacity: int = 320
    parallel_divisor: float = 4.0

    def __post_init__(self):
        if min(self.c_body, self.c_loop, self.c_icache, self.parallel_divisor) <= 0:
            raise ValueError("cost model parameters must be strictly positive")
        if self.icache_capacity < 1:
            raise ValueError("icache_capacity must be >= 1")


def cost_model_evaluate(sp: ScheduledProgram, u: int,
                        params: CostModelParams | None = None) -> ExecResult:
    """Deterministic synthetic time for running `sp` unrolled by `u`.

    cost = T*ops*c_body + (T/u')*c_loop + T*c_icache*max(0, u'*ops - capacity)
    with u' = max(u, 1) and T the total innermost trip count of the current
    (padded) nest; divided by parallel_divisor when a level is parallelized.
    """
    if u not in UNROLL_FACTORS:
        raise InvalidFactor(f"unroll factor {u} not in {UNROLL_FACTORS}")
    params = params or CostModelParams()
    trips = math.prod(it.extent for it in sp.loops)
    ops = op_histogram(sp.base).total()
    u_eff = max(u, 1)
    cost = (
        trips * ops * params.c_body
        + (trips / u_eff) * params.c_loop
        + trips * params.c_icache * max(0, u_eff * ops - params.icache_capacity)
    )
    if sp.parallel_level is not None:
        cost /= params.parallel_divisor
    return ExecResult(mean_ms=cost, runs=1, per_run_ms=(cost,))


# --- kernel emission ----------------------------------------------------------

_C_TYPES = {
    DataType.Int32: "int32_t",
    DataType.Int64: "int64_t",
    DataType.Float32: "float",
    DataType.Float64: "double",
}


def _c_const(value) -> str:
    if isinstance(value, float):
        return f"((elem_t){value!r})"
    return f"((elem_t){value})"


def _dim_text(sp: ScheduledProgram, dim) -> str:
    parts = []
    const = dim.offset
    for it_name in dim.iterators:
        expr = sp.index_exprs[it_name]
        for name, coef in expr.terms:
            parts.append(name if coef == 1 else f"{coef}*{name}")
        const += expr.const
    if const != 0 or not parts:
        parts.append(str(const))
    return " + ".join(parts)


def _access_text(sp: ScheduledProgram, access, strides) -> str:
    st = strides[access.buffer]
    dims = []
    for d, dim in enumerate(access.index_iterators):
        idx = f"({_dim_text(sp, dim)})"
        dims.append(idx if st[d] == 1 else f"{idx}*{st[d]}")
    return f"buf_{access.buffer}[{' + '.join(dims)}]"


def _expr_text(sp: ScheduledProgram, node, strides) -> str:
    if isinstance(node, Constant):
        return _c_const(node.value)
    if isinstance(node, Access):
        return _access_text(sp, node.access, strides)
    op = {BinOpKind.Add: "+", BinOpKind.Sub: "-",
          BinOpKind.Mul: "*", BinOpKind.Div: "/"}[node.kind]
    return f"({_expr_text(sp, node.left, strides)} {op} {_expr_text(sp, node.right, strides)})"


def emit_kernel_source(sp: ScheduledProgram, runs: int = DEFAULT_RUNS,
                       debug: bool = False) -> str:
    """Self-contained C source for the scheduled nest plus a timing harness.

    The harness does one untimed warm-up and RUNS timed repetitions (RUNS is a
    macro so `native_measure` can override it at compile time).  Padded split
    iterations are masked by guards; the unrolled body is literally replicated
    with an epilogue loop for the remainder.
    """
    if sp.depth > 7:
        raise DepthExceedsMax(f"nest depth {sp.depth} exceeds 7")
    p = sp.base
    shapes = buffer_shapes(p)
    strides = {name: row_major_strides(shape) for name, shape in shapes.items()}
    sizes = {name: math.prod(shape) for name, shape in shapes.items()}
    out = p.output.buffer

    lines: list[str] = []
    emit = lines.append
    emit(f"/* generated kernel: {p.name} */")
    emit("#include <stdint.h>")
    emit("#include <stdio.h>")
    emit("#include <stdlib.h>")
    emit("#include <string.h>")
    emit("#include <time.h>")
    emit("")
    emit("#ifndef RUNS")
    emit(f"#define RUNS {runs}")
    emit("#endif")
    emit("")
    emit(f"typedef {_C_TYPES[p.dtype]} elem_t;")
    emit("")
    emit("static double now_ms(void) {")
    emit("    struct timespec ts;")
    emit("    clock_gettime(CLOCK_MONOTONIC, &ts);")
    emit("    return (double)ts.tv_sec * 1000.0 + (double)ts.tv_nsec / 1.0e6;")
    emit("}")
    emit("")
    for name, size in sizes.items():
        emit(f"static elem_t *buf_{name};")
    emit("")
    emit("static void alloc_and_fill(void) {")
    for name, size in sizes.items():
        emit(f"    buf_{name} = (elem_t *)malloc(sizeof(elem_t) * {size});")
        emit(f"    if (!buf_{name}) {{ fprintf(stderr, \"alloc failed\\n\"); exit(3); }}")
    for name, shape in shapes.items():
        if name == out:
            continue
        salt = buffer_salt(name)
        st = strides[name]
        indent = "    "
        for d, dim in enumerate(shape):
            emit(f"{indent}for (int64_t q{d} = 0; q{d} < {dim}; ++q{d})")
            indent += "    "
        fill_terms = [str(salt)] + [
            f"q{d}*{FILL_PRIMES[d % len(FILL_PRIMES)]}" for d in range(len(shape))
        ]
        flat = " + ".join(f"q{d}*{st[d]}" if st[d] != 1 else f"q{d}"
                          for d in range(len(shape)))
        emit(f"{indent}buf_{name}[{flat}] = "
             f"(elem_t)(({' + '.join(fill_terms)}) % {FILL_MODULUS} - {FILL_SHIFT});")
    emit("}")
    emit("")
    emit("static void reset_output(void) {")
    emit(f"    for (int64_t q = 0; q < {sizes[out]}; ++q) buf_{out}[q] = (elem_t)0;")
    emit("}")
    emit("")

    guard_terms = []
    for g in sp.guards:
        text = " + ".join(f"{coef}*{name}" if coef != 1 else name
                          for name, coef in g.expr.terms)
        if g.expr.const:
            text += f" + {g.expr.const}"
        guard_terms.append(f"({text} < {g.bound})")
    store = f"{_access_text(sp, p.output, strides)} = {_expr_text(sp, p.body, strides)};"
    body_stmt = f"if ({' && '.join(guard_terms)}) {store}" if guard_terms else store

    emit("static void kernel(void) {")
    emit("    reset_output();")
    indent = "    "
    inner = sp.loops[-1]
    for pos, it in enumerate(sp.loops[:-1] if sp.unroll else sp.loops):
        if sp.parallel_level == pos:
            emit(f"{indent}#pragma omp parallel for")
        emit(f"{indent}for (int64_t {it.name} = 0; {it.name} < {it.extent}; ++{it.name}) {{")
        indent += "    "
    if sp.unroll:
        u = sp.unroll
        main_end = sp.main_trips * u
        if sp.parallel_level == sp.depth - 1:
            emit(f"{indent}#pragma omp parallel for")
        emit(f"{indent}for (int64_t {inner.name}_blk = 0; {inner.name}_blk < {main_end}; "
             f"{inner.name}_blk += {u}) {{")
        for k in range(u):
            emit(f"{indent}    {{ const int64_t {inner.name} = {inner.name}_blk + {k}; "
                 f"{body_stmt} }}")
        emit(f"{indent}}}")
        emit(f"{indent}for (int64_t {inner.name} = {main_end}; "
             f"{inner.name} < {inner.extent}; ++{inner.name}) {{ {body_stmt} }}")
    else:
        emit(f"{indent}{body_stmt}")
    for pos in range(len(sp.loops[:-1] if sp.unroll else sp.loops)):
        indent = indent[:-4]
        emit(f"{indent}}}")
    emit("}")
    emit("")
    emit("static uint64_t out_checksum(void) {")
    emit("    uint64_t h = 0xCBF29CE484222325ULL;")
    emit(f"    for (int64_t q = 0; q < {sizes[out]}; ++q) {{")
    emit("        unsigned char bytes[sizeof(elem_t)];")
    emit(f"        memcpy(bytes, &buf_{out}[q], sizeof(elem_t));")
    emit("        for (size_t b = 0; b < sizeof(elem_t); ++b) {")
    emit("            h ^= (uint64_t)bytes[b];")
    emit("            h *= 0x100000001B3ULL;")
    emit("        }")
    emit("    }")
    emit("    return h;")
    emit("}")
    emit("")
    emit("int main(void) {")
    emit("    alloc_and_fill();")
    emit("    kernel();  /* warm-up, excluded from the mean */")
    emit("    double total = 0.0;")
    emit("    for (int r = 0; r < RUNS; ++r) {")
    emit("        double t0 = now_ms();")
    emit("        kernel();")
    emit("        double t1 = now_ms();")
    emit("        fprintf(stderr, \"run_ms=%.9f\\n\", t1 - t0);")
    emit("        total += t1 - t0;")
    emit("    }")
    emit("    volatile uint64_t sink = out_checksum();")
    emit("    printf(\"mean_ms=%.9f\\n\", total / RUNS);")
    if debug:
        emit("    printf(\"checksum=%016llx\\n\", (unsigned long long)sink);")
    else:
        emit("    (void)sink;")
    emit("    return 0;")
    emit("}")
    return "\n".join(lines) + "\n"


def _resolve_toolchain(toolchain: str | None) -> str:
    # the environment variable outranks configured commands
    return os.environ.get(TOOLCHAIN_ENV_VAR) or toolchain or DEFAULT_TOOLCHAIN


def native_measure(source: str, runs: int = DEFAULT_RUNS, *,
                   toolchain: str | None = None,
                   flags: tuple[str, ...] | None = None,
                   timeout: float = DEFAULT_TIMEOUT_S) -> ExecResult:
    """Compile and time an emitted kernel; returns the parsed measurements.

    Compilation failures are retried once (dropping -fopenmp on the retry if
    it was present, so parallel kernels degrade to serial rather than fail on
    toolchains without OpenMP).  Executions are serialized process-wide.
    """
    cmd = _resolve_toolchain(toolchain)
    if shutil.which(cmd) is None:
        raise ToolchainMissing(f"toolchain {cmd!r} not found on PATH")
    use_flags = list(flags if flags is not None else DEFAULT_FLAGS)
    if "#pragma omp" in source and "-fopenmp" not in use_flags and flags is None:
        use_flags.append("-fopenmp")

    with tempfile.TemporaryDirectory(prefix="unroll_tuner_") as tmp:
        src_path = os.path.join(tmp, "kernel.c")
        bin_path = os.path.join(tmp, "kernel")
        with open(src_path, "w") as fh:
            fh.write(source)

        def compile_with(fl: list[str]) -> subprocess.CompletedProcess:
            return subprocess.run(
                [cmd, *fl, f"-DRUNS={runs}", src_path, "-o", bin_path],
                capture_output=True, text=True, timeout=timeout,
            )

        proc = compile_with(use_flags)
        if proc.returncode != 0:
            retry_flags = [f for f in use_flags if f != "-fopenmp"]
            retry = compile_with(retry_flags)
            if retry.returncode != 0:
                raise CompileError(proc.stderr + "\n--- retry ---\n" + retry.stderr)

        with _EXEC_LOCK:
            try:
                run = subprocess.run([bin_path], capture_output=True, text=True,
                                     timeout=timeout)
            except subprocess.TimeoutExpired as exc:
                raise RunTimeout(f"kernel exceeded {timeout} s") from exc
        if run.returncode != 0:
            raise CompileError(f"kernel exited with {run.returncode}: {run.stderr}")

    mean = None
    checksum = None
    for line in run.stdout.splitlines():
        if line.startswith("mean_ms="):
            mean = float(line.split("=", 1)[1])
        elif line.startswith("checksum="):
            checksum = int(line.split("=", 1)[1], 16)
    per_run = [max(float(line.split("=", 1)[1]), 1e-9)
               for line in run.stderr.splitlines() if line.startswith("run_ms=")]
    if mean is None or len(per_run) != runs:
        raise CompileError(f"unexpected kernel output:\n{run.stdout}\n{run.stderr}")
    return ExecResult(mean_ms=statistics.fmean(per_run), runs=runs,
                      per_run_ms=tuple(per_run), checksum=checksum)


# --- backend objects ----------------------------------------------------------

class CostModelBackend:
    """Deterministic backend; safe for concurrent use."""

    name = "cost"

    def __init__(self, params: CostModelParams | None = None):
        self.params = params or CostModelParams()

    def measure(self, sp: ScheduledProgram, u: int, runs: int = 1) -> ExecResult:
        return cost_model_evaluate(sp, u, self.params)


@dataclass
class NativeBackend:
    """Compiles emitted kernels with the system toolchain and times them.

    `toolchain.cmd` / `toolchain.flags` config keys (or the
    UNROLL_TUNER_TOOLCHAIN environment variable) select the compiler.
    """

    toolchain: str | None = None
    flags: tuple[str, ...] | None = None
    timeout: float = DEFAULT_TIMEOUT_S
    name: str = field(default="native", init=False)

    def measure(self, sp: ScheduledProgram, u: int, runs: int = DEFAULT_RUNS) -> ExecResult:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")   # clamp warnings during sweeps
            unrolled = apply_unroll(sp, u)
        source = emit_kernel_source(unrolled, runs=runs)
        return native_measure(source, runs=runs, toolchain=self.toolchain,
                              flags=self.flags, timeout=self.timeout)
