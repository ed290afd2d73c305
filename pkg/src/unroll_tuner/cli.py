"""Command-line pipeline: gen -> label -> train -> predict / baselines / bench.

Every subcommand is deterministic for a fixed seed (native timing values
aside).  Option precedence is flags > config file > built-in defaults; the
config file is flat `key = value` lines with '#' comments.

Exit codes: 0 success, 1 usage error, 2 pipeline error.
"""

from __future__ import annotations

import argparse
import multiprocessing
import os
import sys
import warnings

from .backend import DEFAULT_RUNS, CostModelBackend, NativeBackend
from .baselines import KnnConfig, TreeConfig, accuracy_table, knn_predict, tree_fit, tree_predict
from .benchmarks import SIZE_CLASSES, benchmark_suite
from .dataset import balance_classes, label_sample, load_csv, save_csv, split_dataset
from .errors import UnrollTunerError
from .evaluation import accuracy, report_csv, report_table, run_benchmarks
from .featurize import ScalerMode, extract_features, fit_scaler
from .generator import ALLOWED_TRANSFORM_NAMES, GenConfig, gen_program, gen_schedules
from .ir import DataType, validate_program
from .mlp import TrainConfig, init_model, load_model, predict_class, save_model, train
from .schedule import UNROLL_FACTORS, Unroll, schedule_program, validate_schedule
from .textfmt import parse_program_text, program_to_text


def load_config(path: str) -> dict[str, str]:
    """Flat `key = value` file; '#' starts a comment."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UnrollTunerError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _pick(flag_value, config: dict[str, str], key: str, default, cast=str):
    if flag_value is not None:
        return flag_value
    if key in config:
        return cast(config[key])
    return default


class _Parser(argparse.ArgumentParser):
    def error(self, message):   # usage errors exit 1, synopsis on stderr
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _parse_classes(text: str) -> tuple[int, ...]:
    classes = tuple(int(v) for v in text.split(","))
    bad = [c for c in classes if c not in UNROLL_FACTORS]
    if bad or len(set(classes)) != len(classes) or 0 not in classes:
        raise UnrollTunerError(
            f"--classes must be distinct members of {UNROLL_FACTORS} including 0")
    return tuple(sorted(classes))


def _gen_config(args, config: dict[str, str]) -> GenConfig:
    seed = _pick(args.seed, config, "seed", 0, int)
    depth_min = int(config.get("gen.depth_min", 1))
    depth_max = int(config.get("gen.depth_max", 4))
    extents = tuple(int(v) for v in config.get("gen.extents", "16,32,64,128,256").split(","))
    dtypes = tuple(DataType.from_name(name.strip())
                   for name in config.get("gen.dtypes", "int32,int64,float32,float64").split(","))
    transforms = tuple(
        name.strip() for name in
        config.get("gen.transforms", ",".join(ALLOWED_TRANSFORM_NAMES)).split(",") if name.strip()
    )
    return GenConfig(
        seed=seed,
        depth_range=(depth_min, depth_max),
        extent_choices=extents,
        max_inputs=int(config.get("gen.max_inputs", 4)),
        dtype_choices=dtypes,
        schedules_per_program=int(config.get("gen.schedules_per_program", 10)),
        allowed_transforms=transforms,
    )


def _gen_worker(payload):
    cfg, index = payload
    p = gen_program(cfg, index)
    report = validate_program(p)
    if not report.ok:
        raise UnrollTunerError(f"generated program {index} invalid: {report.violations}")
    files = []
    for j, sp in enumerate(gen_schedules(cfg, p)):
        files.append((f"prog_{index:05d}_s{j:02d}.prog", program_to_text(p, sp.applied)))
    return files


def cmd_gen(args, config: dict[str, str]) -> int:
    cfg = _gen_config(args, config)
    count = _pick(args.count, config, "count", None, int)
    if count is None or count < 1:
        raise UnrollTunerError("gen needs --count >= 1")
    out_dir = _pick(args.out, config, "out", "corpus")
    os.makedirs(out_dir, exist_ok=True)
    jobs = max(1, _pick(args.jobs, config, "jobs", 1, int))
    payloads = [(cfg, index) for index in range(count)]
    if jobs > 1:
        with multiprocessing.Pool(jobs) as pool:
            batches = pool.map(_gen_worker, payloads)
    else:
        batches = [_gen_worker(pl) for pl in payloads]
    n_files = 0
    for files in batches:
        for filename, content in files:
            with open(os.path.join(out_dir, filename), "w") as fh:
                fh.write(content)
            n_files += 1
    print(f"wrote {n_files} scheduled programs to {out_dir}")
    return 0


def _label_worker(payload):
    text, runs, factors = payload
    program, transforms = parse_program_text(text)
    sp = schedule_program(program, transforms)
    report = validate_schedule(sp)
    if not report.ok:
        raise UnrollTunerError(f"invalid schedule for {program.name}: {report.violations}")
    return label_sample(sp, CostModelBackend(), runs=runs, factors=factors)


def cmd_label(args, config: dict[str, str]) -> int:
    backend_name = _pick(args.backend, config, "backend", "cost")
    factors = _parse_classes(_pick(args.classes, config, "classes",
                                   ",".join(str(u) for u in UNROLL_FACTORS)))
    in_dir = args.programs
    files = sorted(f for f in os.listdir(in_dir) if f.endswith(".prog"))
    if not files:
        raise UnrollTunerError(f"no .prog files under {in_dir}")
    texts = []
    for name in files:
        with open(os.path.join(in_dir, name)) as fh:
            texts.append(fh.read())

    if backend_name == "cost":
        runs = _pick(args.runs, config, "runs", 1, int)
        jobs = max(1, _pick(args.jobs, config, "jobs", 1, int))
        payloads = [(text, runs, factors) for text in texts]
        if jobs > 1:
            with multiprocessing.Pool(jobs) as pool:
                rows = pool.map(_label_worker, payloads)
        else:
            rows = [_label_worker(pl) for pl in payloads]
    elif backend_name == "native":
        runs = _pick(args.runs, config, "runs", DEFAULT_RUNS, int)
        backend = NativeBackend(
            toolchain=config.get("toolchain.cmd"),
            flags=tuple(config["toolchain.flags"].split()) if "toolchain.flags" in config else None,
        )
        rows = []   # timed executions must not overlap: jobs forced to 1
        for text in texts:
            program, transforms = parse_program_text(text)
            sp = schedule_program(program, transforms)
            rows.append(label_sample(sp, backend, runs=runs, factors=factors))
    else:
        raise UnrollTunerError(f"unknown backend {backend_name!r} (use cost|native)")

    out_path = _pick(args.out, config, "out", "corpus.csv")
    save_csv(rows, out_path)
    counts: dict[int, int] = {}
    for row in rows:
        counts[row.label] = counts.get(row.label, 0) + 1
    print(f"labeled {len(rows)} samples -> {out_path} "
          f"(label counts: {dict(sorted(counts.items()))})")
    return 0


def cmd_train(args, config: dict[str, str]) -> int:
    seed = _pick(args.seed, config, "seed", 0, int)
    classes = _parse_classes(_pick(args.classes, config, "classes",
                                   ",".join(str(u) for u in UNROLL_FACTORS)))
    rows = load_csv(args.data)
    min_per_class = _pick(args.min_per_class, config, "min_per_class", 5, int)
    rows = balance_classes(rows, min_per_class, seed=seed)
    split = split_dataset(rows, seed=seed)
    mode = ScalerMode(_pick(args.scaler, config, "scaler", "standardize"))
    scaler = fit_scaler([r.features.to_list() for r in split.train], mode)
    model = init_model(scaler.output_width, seed=seed, n_classes=len(classes))
    model.scaler = scaler
    model.classes = classes
    cfg = TrainConfig(seed=seed,
                      max_epochs=_pick(args.max_epochs, config, "max_epochs", 500, int))
    model, history = train(model, split, cfg)
    out_path = _pick(args.out, config, "out", "model.json")
    save_model(model, out_path)
    test_acc = accuracy(model, split.test) if split.test else float("nan")
    best = min(h["valid_loss"] for h in history)
    print(f"trained {len(history)} epochs (best valid loss {best:.4f}); "
          f"test accuracy {test_acc:.3f}; model -> {out_path}")
    return 0


def cmd_predict(args, config: dict[str, str]) -> int:
    with open(args.program_file) as fh:
        program, transforms = parse_program_text(fh.read())
    kept = [t for t in transforms if not isinstance(t, Unroll)]
    if len(kept) != len(transforms):
        warnings.warn("ignoring unroll directive in input; predicting a fresh factor")
    sp = schedule_program(program, kept)
    model = load_model(args.model)
    print(f"unroll_factor={predict_class(model, extract_features(sp))}")
    return 0


def cmd_baselines(args, config: dict[str, str]) -> int:
    seed = _pick(args.seed, config, "seed", 0, int)
    rows = load_csv(args.data)
    min_per_class = _pick(args.min_per_class, config, "min_per_class", 5, int)
    rows = balance_classes(rows, min_per_class, seed=seed)
    split = split_dataset(rows, seed=seed)
    mode = ScalerMode(_pick(args.scaler, config, "scaler", "standardize"))
    scaler = fit_scaler([r.features.to_list() for r in split.train], mode)

    x_train = scaler.transform_matrix([r.features.to_list() for r in split.train])
    y_train = [r.label for r in split.train]
    knn_cfg = KnnConfig(k=min(_pick(args.k, config, "k", 5, int), len(y_train)))
    tree = tree_fit(x_train, y_train,
                    TreeConfig(max_depth=_pick(args.max_depth, config, "max_depth", 12, int)))

    def knn(fv):
        return knn_predict(x_train, y_train, knn_cfg, scaler.transform(fv.to_list()))

    def by_tree(fv):
        return tree_predict(tree, scaler.transform(fv.to_list()))

    if args.model:
        model = load_model(args.model)
    else:
        model = init_model(scaler.output_width, seed=seed)
        model.scaler = scaler
        cfg = TrainConfig(seed=seed,
                          max_epochs=_pick(args.max_epochs, config, "max_epochs", 60, int))
        model, _ = train(model, split, cfg)
    entries = [
        ("neural network", accuracy(model, split.test)),
        ("knn", accuracy(knn, split.test)),
        ("decision tree", accuracy(by_tree, split.test)),
    ]
    print(accuracy_table(entries))
    return 0


def _parse_sizes(text: str) -> dict[str, int]:
    sizes = {}
    for part in text.split(","):
        name, _, value = part.partition(":")
        if name.strip() not in SIZE_CLASSES:
            raise UnrollTunerError(f"unknown size class {name.strip()!r}")
        sizes[name.strip()] = int(value)
    return sizes


def cmd_bench(args, config: dict[str, str]) -> int:
    model = load_model(args.model)
    backend_name = _pick(args.backend, config, "backend", "cost")
    if backend_name == "cost":
        backend = CostModelBackend()
        runs = _pick(args.runs, config, "runs", 1, int)
    elif backend_name == "native":
        backend = NativeBackend(
            toolchain=config.get("toolchain.cmd"),
            flags=tuple(config["toolchain.flags"].split()) if "toolchain.flags" in config else None,
        )
        runs = _pick(args.runs, config, "runs", DEFAULT_RUNS, int)
    else:
        raise UnrollTunerError(f"unknown backend {backend_name!r} (use cost|native)")
    sizes = _parse_sizes(args.sizes) if args.sizes else None
    reports = run_benchmarks(model, backend, benchmark_suite(sizes), runs=runs)
    out_path = _pick(args.out, config, "out", None)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(report_csv(reports))
    print(report_table(reports))
    return 0


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--jobs", type=int, default=None)
    sub.add_argument("--backend", choices=("cost", "native"), default=None)
    sub.add_argument("--config", default=None)
    sub.add_argument("--out", default=None)
    sub.add_argument("--runs", type=int, default=None,
                     help="timed repetitions per measurement (native default 30)")
    sub.add_argument("--classes", default=None,
                     help='factor class set, default "0,2,4,8,16,32,64"')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="unroll-tuner",
                     description="loop-unrolling factor autotuner")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("gen", parents=[], help="generate random programs + schedules")
    p.add_argument("--count", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = commands.add_parser("label", help="label programs by exhaustive timing over U")
    p.add_argument("--programs", required=True, help="directory of .prog files")
    _add_common(p)
    p.set_defaults(func=cmd_label)

    p = commands.add_parser("train", help="fit the MLP on a labeled corpus")
    p.add_argument("--data", required=True, help="corpus CSV")
    p.add_argument("--min-per-class", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--scaler", choices=("standardize", "normalize"), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("predict", help="predict the factor for one program file")
    p.add_argument("program_file")
    p.add_argument("--model", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = commands.add_parser("baselines", help="KNN / decision-tree / MLP accuracy table")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default=None, help="trained MLP (trains one when omitted)")
    p.add_argument("--min-per-class", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--scaler", choices=("standardize", "normalize"), default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_baselines)

    p = commands.add_parser("bench", help="run the benchmark suite end to end")
    p.add_argument("--model", required=True)
    p.add_argument("--sizes", default=None,
                   help='override sizes, e.g. "small:16,medium:32,large:64"')
    _add_common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config) if getattr(args, "config", None) else {}
        return args.func(args, config)
    except UnrollTunerError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
