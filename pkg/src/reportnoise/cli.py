"""Command-line entry point.

Subcommands::

    reportnoise synth      --preset ig-us --out runs/synth
    reportnoise analyze    --events runs/synth/events.jsonl --contents runs/synth/contents.csv --out runs/analyze
    reportnoise train-eval --features runs/analyze/features.csv --contents runs/synth/contents.csv --out runs/model
    reportnoise reproduce  --out runs/repro --seeds 10

Exit codes: 0 ok, 1 environment (unwritable output, missing input),
2 configuration, 3 input data, 4 model or reproduction targets.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__, gbdt, ingest, metrics, pipeline, stats
from .presets import DEFAULT_N_CONTENT, DEFAULT_PRESET, PRESETS, preset
from .synth import GeneratorConfig, InvalidConfig, format_calibration

EXIT_OK = 0
EXIT_ENV = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MODEL = 4

log = logging.getLogger("reportnoise")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="format of tabular summaries where both are available")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reportnoise", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic report stream")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=PRESETS, default=None)
    src.add_argument("--config", type=Path, help="generator config (JSON)")
    p.add_argument("--n-content", type=int, default=None, help="override the number of items")

    p = sub.add_parser("analyze", parents=[common], help="aggregate, clip, decompose, order")
    p.add_argument("--events", type=Path, required=True, help="report events (JSONL)")
    p.add_argument("--contents", type=Path, required=True, help="labelled contents (CSV)")
    p.add_argument("--window-days", type=int, default=90)
    p.add_argument("--window-start", type=int, default=None,
                   help="window start (unix seconds); default: earliest event")
    p.add_argument("--quantile", type=float, default=0.999)

    p = sub.add_parser("train-eval", parents=[common], help="train and evaluate the classifier")
    p.add_argument("--features", type=Path, required=True, help="feature CSV written by analyze")
    p.add_argument("--contents", type=Path, required=True)
    p.add_argument("--test-fraction", type=float, default=0.10)
    _add_hyperparams(p)

    p = sub.add_parser("reproduce", parents=[common], help="full calibrated run with target table")
    p.add_argument("--preset", choices=PRESETS, default=DEFAULT_PRESET)
    p.add_argument("--n-content", type=int, default=DEFAULT_N_CONTENT)
    p.add_argument("--seeds", type=int, default=1, help="sweep seeds seed..seed+N-1")
    _add_hyperparams(p)
    return parser


def _add_hyperparams(p: argparse.ArgumentParser) -> None:
    d = gbdt.Hyperparams()
    p.add_argument("--n-trees", type=int, default=d.n_trees)
    p.add_argument("--max-depth", type=int, default=d.max_depth)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--min-leaf", type=int, default=d.min_leaf)


def _hyperparams(args) -> gbdt.Hyperparams:
    hp = gbdt.Hyperparams(args.n_trees, args.max_depth, args.learning_rate, args.min_leaf)
    try:
        hp.validate()
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    return hp


def _require_file(path: Path) -> None:
    if not path.is_file():
        raise CliError(EXIT_ENV, f"input file not found: {path}")


# --------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    started = time.perf_counter()
    seed = 0 if args.seed is None else args.seed
    if args.config is not None:
        _require_file(args.config)
        config = GeneratorConfig.from_json(args.config.read_text())
        if args.seed is not None:
            config.seed = seed
        if args.n_content is not None:
            config.n_content = args.n_content
        targets = None
    else:
        name = args.preset or DEFAULT_PRESET
        n = DEFAULT_N_CONTENT if args.n_content is None else args.n_content
        config = preset(name, n_content=n, seed=seed)
        targets = pipeline.preset_targets(name) if n == DEFAULT_N_CONTENT else None
    config.validate()
    pipeline.ensure_writable(args.out)
    _, out = pipeline.synth_stage(config, targets)
    pipeline.commit(args.out, out, command="synth", config=config.to_dict(), seed=config.seed,
                    started=started)
    print(f"{config.name}: {out.summary['n_content']} items, {out.summary['n_events']} events")
    print(format_calibration(out.summary["calibration"]))
    return EXIT_OK


def cmd_analyze(args) -> int:
    started = time.perf_counter()
    if not 0.0 < args.quantile <= 1.0:
        raise CliError(EXIT_CONFIG, "--quantile must lie in (0, 1]")
    if args.window_days <= 0:
        raise CliError(EXIT_CONFIG, "--window-days must be positive")
    for path in (args.events, args.contents):
        _require_file(path)
    pipeline.ensure_writable(args.out)
    events = ingest.read_events(args.events)
    contents = ingest.read_contents(args.contents)
    result, out = pipeline.analyze_stage(
        events, contents, args.window_days, args.quantile, args.window_start, args.format
    )
    config = {"window_days": args.window_days, "window_start": result.window[0],
              "quantile": args.quantile, "format": args.format}
    pipeline.commit(args.out, out, command="analyze", config=config, seed=args.seed,
                    inputs={"events": args.events, "contents": args.contents}, started=started)
    d = result.decomposition
    print(f"n={d.n} inaccuracy={d.inaccuracy:.4f} false={d.false_noise:.4f} quasi={d.quasi_noise:.4f} "
          f"soft={d.soft_noise:.4f} hard={d.hard_noise:.4f}")
    print(f"clipped {len(result.clip.excluded)} item(s) above {result.clip.threshold} reports")
    for e in result.order.edges:
        print(f"  {e.greater.value} > {e.lesser.value}  p={e.p_value:.3g} ({e.strength.value})")
    return EXIT_OK


def cmd_train_eval(args) -> int:
    started = time.perf_counter()
    if not 0.0 < args.test_fraction < 1.0:
        raise CliError(EXIT_CONFIG, "--test-fraction must lie in (0, 1)")
    hp = _hyperparams(args)
    for path in (args.features, args.contents):
        _require_file(path)
    pipeline.ensure_writable(args.out)
    seed = 0 if args.seed is None else args.seed
    features = ingest.read_features(args.features)
    contents = ingest.read_contents(args.contents)
    result, out = pipeline.train_eval_stage(features, contents, seed, args.test_fraction, hp)
    config = {"test_fraction": args.test_fraction, "hyperparams": hp.__dict__}
    pipeline.commit(args.out, out, command="train-eval", config=config, seed=seed,
                    inputs={"features": args.features, "contents": args.contents}, started=started)
    r = result.report
    print(f"train={result.n_train} test={r.n_test} model={result.model.digest()[:16]}")
    print("F1: " + "  ".join(f"{c.value}={v:.3f}" for c, v in r.f1.items())
          + f"  macro={r.macro_f1:.3f} (majority baseline {r.baseline_macro_f1:.3f})")
    print("top features: " + ", ".join(r.top_features(4)))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    started = time.perf_counter()
    if args.seeds < 1:
        raise CliError(EXIT_CONFIG, "--seeds must be at least 1")
    hp = _hyperparams(args)
    # fail on the environment before spending any compute
    pipeline.ensure_writable(args.out)
    seed0 = 0 if args.seed is None else args.seed
    per_seed = []
    summary = pipeline.StageOutput()
    for seed in range(seed0, seed0 + args.seeds):
        run = pipeline.reproduce_seed(seed, args.preset, args.n_content, hp)
        seed_dir = args.out / f"seed-{seed:04d}"
        for stage, out in run.outputs.items():
            stage_dir = seed_dir / stage
            pipeline.ensure_writable(stage_dir)
            pipeline.commit(stage_dir, out, command=f"reproduce:{stage}",
                            config={"preset": args.preset, "n_content": args.n_content, "stage": stage},
                            seed=seed, started=started)
        summary.add(f"seed-{seed:04d}/targets.csv", pipeline.targets_csv(run.rows))
        per_seed.append(run.rows)
        if args.seeds > 1:
            fails = [r.name for r in run.rows if not r.ok]
            print(f"seed {seed}: {'all targets pass' if not fails else 'FAIL ' + ', '.join(fails)}")
    rows = per_seed[0] if args.seeds == 1 else pipeline.sweep_rows(per_seed)
    summary.add("targets.csv", pipeline.targets_csv(rows))
    pipeline.commit(args.out, summary, command="reproduce",
                    config={"preset": args.preset, "n_content": args.n_content, "seeds": args.seeds,
                            "hyperparams": hp.__dict__},
                    seed=seed0, started=started)
    print(pipeline.format_targets(rows))
    return EXIT_OK if all(r.ok for r in rows) else EXIT_MODEL


COMMANDS = {
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "train-eval": cmd_train_eval,
    "reproduce": cmd_reproduce,
}

_DATA_ERRORS = (
    ingest.IngestError, ingest.EmptyInput, ingest.InsufficientRecords, ingest.MissingMau,
    metrics.EmptySample, metrics.UnlabelledRecord,
    stats.InsufficientSample, stats.DegenerateVariance, stats.EmptySample, stats.CyclicOrder,
)
_MODEL_ERRORS = (gbdt.DegenerateTargets, gbdt.TooFewInstances, gbdt.EmptyTestSet, gbdt.ModelFormatError)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InvalidConfig as exc:
        print("error: invalid configuration", file=sys.stderr)
        for key, msg in sorted(exc.errors.items()):
            print(f"  {key}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except pipeline.OutputNotWritable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except _DATA_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _MODEL_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
