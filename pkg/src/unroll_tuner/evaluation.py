"""Accuracy, prediction-cost / speedup metrics, and the benchmark harness.

PC = optimal_exec / predit_exec: 1.0 means the predicted factor ties the
exhaustive optimum.  SP = sans_exec / predit_exec: above 1.0 means unrolling
at the predicted factor beat the no-unroll baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EmptyTestSet, NonPositiveTime
from .featurize import extract_features
from .mlp import predict_class
from .schedule import UNROLL_FACTORS, schedule_program
from .textfmt import format_transform


def compute_metrics(predit: float, optimal: float, sans: float) -> tuple[float, float]:
    """(PC, SP) from the three measured times, exact ratios."""
    if min(predit, optimal, sans) <= 0.0:
        raise NonPositiveTime(f"times must be positive, got {(predit, optimal, sans)}")
    return optimal / predit, sans / predit


def accuracy(model, test_rows) -> float:
    """Fraction of rows whose predicted factor equals the label.

    `model` is either a trained MlpModel or any callable FeatureVector -> factor.
    """
    rows = list(test_rows)
    if not rows:
        raise EmptyTestSet("accuracy needs a non-empty test set")
    predict = model if callable(model) else (lambda fv: predict_class(model, fv))
    correct = sum(1 for row in rows if predict(row.features) == row.label)
    return correct / len(rows)


@dataclass(frozen=True)
class EvalReport:
    case: str
    size: str
    schedule: str
    predicted_factor: int
    optimal_factor: int
    predit_exec: float
    optimal_exec: float
    sans_exec: float
    pc: float
    sp: float


def _schedule_text(transforms) -> str:
    if not transforms:
        return "none"
    return "; ".join(format_transform(t) for t in transforms)


def run_benchmarks(model, backend, cases, runs: int = 1) -> list[EvalReport]:
    """Exhaustive sweep vs. model prediction for every benchmark case.

    `model` is a trained MlpModel or any callable FeatureVector -> factor.
    """
    predict = model if callable(model) else (lambda fv: predict_class(model, fv))
    reports = []
    for case in cases:
        sp = schedule_program(case.program, case.transforms)
        timing = {u: backend.measure(sp, u, runs).mean_ms for u in UNROLL_FACTORS}
        optimal = min(UNROLL_FACTORS, key=lambda u: (timing[u], u))
        predicted = predict(extract_features(sp))
        pc, speedup = compute_metrics(timing[predicted], timing[optimal], timing[0])
        reports.append(EvalReport(
            case=case.name,
            size=case.size_class,
            schedule=_schedule_text(case.transforms),
            predicted_factor=predicted,
            optimal_factor=optimal,
            predit_exec=timing[predicted],
            optimal_exec=timing[optimal],
            sans_exec=timing[0],
            pc=pc,
            sp=speedup,
        ))
    return reports


REPORT_HEADER = "case,size,schedule,predicted,optimal,predit_ms,optimal_ms,sans_ms,pc,sp"


def report_csv(reports: list[EvalReport]) -> str:
    lines = [REPORT_HEADER]
    for r in reports:
        lines.append(
            f"{r.case},{r.size},{r.schedule},{r.predicted_factor},{r.optimal_factor},"
            f"{r.predit_exec!r},{r.optimal_exec!r},{r.sans_exec!r},"
            f"{r.pc:.3f},{r.sp:.3f}"
        )
    return "\n".join(lines) + "\n"


def report_table(reports: list[EvalReport]) -> str:
    headers = ("case", "size", "schedule", "pred", "opt",
               "predit_ms", "optimal_ms", "sans_ms", "PC", "SP")
    rows = [
        (r.case, r.size, r.schedule, str(r.predicted_factor), str(r.optimal_factor),
         f"{r.predit_exec:.6g}", f"{r.optimal_exec:.6g}", f"{r.sans_exec:.6g}",
         f"{r.pc:.3f}", f"{r.sp:.3f}")
        for r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)
