"""Composable pipeline stages behind the command-line tool.

Each stage is a pure function of its inputs that returns the bytes of every
file it would write. Nothing reaches disk until ``commit`` runs, so a failing
stage never leaves partial output behind.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from . import __version__, gbdt, ingest, metrics, stats
from .ingest import ContentRecord, FeatureVector, ReportEvent
from .presets import DEFAULT_PRESET, preset
from .synth import (
    CALIBRATION_TARGETS,
    GeneratorConfig,
    SynthDataset,
    calibration_report,
    generate,
)
from .taxonomy import AggregatedClass, TargetClass, aggregate_class

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def module_seed(seed: int, name: str) -> int:
    """Per-module seed: first 8 bytes (little endian) of sha256("{seed}:{name}")."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def canonical_digest(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def _text_bytes(writer: Callable, *args) -> bytes:
    buf = io.StringIO()
    writer(*args, buf)
    return buf.getvalue().encode()


# --------------------------------------------------------------------------
# output handling


class OutputNotWritable(OSError):
    pass


def ensure_writable(out_dir: Path) -> None:
    """Create ``out_dir`` if needed and prove it accepts files."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        fd, probe = tempfile.mkstemp(prefix=".probe-", dir=out_dir)
        os.close(fd)
        os.unlink(probe)
    except OSError as exc:
        raise OutputNotWritable(f"output directory {out_dir} is not writable: {exc}") from exc


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class StageOutput:
    files: dict[str, bytes] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def add(self, name: str, data: bytes) -> None:
        self.files[name] = data


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seed: int | None
    inputs: dict[str, str]
    outputs: list[str]
    version: str
    wall_time_s: float

    def to_json(self) -> bytes:
        return _json_bytes(asdict(self))


def commit(
    out_dir: Path,
    output: StageOutput,
    *,
    command: str,
    config: Mapping,
    seed: int | None,
    inputs: Mapping[str, str] | None = None,
    started: float,
) -> RunManifest:
    """Write every staged file atomically, then the manifest."""
    for name in sorted(output.files):
        atomic_write(out_dir / name, output.files[name])
    manifest = RunManifest(
        command=command,
        config_digest=canonical_digest(config),
        seed=seed,
        inputs={k: str(v) for k, v in (inputs or {}).items()},
        outputs=sorted(output.files),
        version=__version__,
        wall_time_s=round(time.perf_counter() - started, 3),
    )
    atomic_write(out_dir / MANIFEST, manifest.to_json())
    return manifest


# --------------------------------------------------------------------------
# synth


def synth_stage(config: GeneratorConfig, targets: Mapping | None = None) -> tuple[SynthDataset, StageOutput]:
    dataset = generate(config)
    rows = calibration_report(dataset, targets)
    out = StageOutput()
    out.add("events.jsonl", _text_bytes(ingest.write_events, dataset.events))
    out.add("contents.csv", _text_bytes(ingest.write_contents, dataset.contents))
    out.add("config.json", config.to_json().encode() + b"\n")
    out.add(
        "calibration.json",
        _json_bytes([{k: v for k, v in asdict(r).items()} | {"ok": r.ok} for r in rows]),
    )
    out.summary = {"calibration": rows, "n_events": len(dataset.events), "n_content": len(dataset.contents)}
    return dataset, out


def preset_targets(name: str) -> Mapping | None:
    return CALIBRATION_TARGETS if name == DEFAULT_PRESET else None


# --------------------------------------------------------------------------
# analyze


@dataclass
class AnalyzeResult:
    window: tuple[int, int]
    features: list[FeatureVector]  # kept after clipping
    clip: ingest.ClipResult
    decomposition: metrics.NoiseDecomposition
    distribution: metrics.ClassDistribution
    volumes: dict[AggregatedClass, list[int]]
    order: stats.PartialOrder
    stats_rows: list[dict]


def class_volumes(
    features: Iterable[FeatureVector], contents: Iterable[ContentRecord]
) -> dict[AggregatedClass, list[int]]:
    """Total report count per item, grouped by aggregated class (labelled items only)."""
    labels = {r.content_id: r.gcrc for r in contents if r.gcrc is not None}
    out: dict[AggregatedClass, list[int]] = {}
    for fv in features:
        g = labels.get(fv.content_id)
        if g is not None:
            out.setdefault(aggregate_class(g), []).append(fv.total)
    return {k: out[k] for k in AggregatedClass if k in out}


def _volume_tests(volumes: Mapping[AggregatedClass, Sequence[int]]) -> list[dict]:
    rows = []
    usable = {k: v for k, v in volumes.items() if len(v) >= 2}
    for (a, b), res in stats.pairwise_welch(usable).items():
        rows.append(dict(test="welch_greater", a=a.value, b=b.value,
                         statistic=res.statistic, df=res.df, p_value=res.p_value))
    keys = list(usable)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            res = stats.ks_two_sample(usable[a], usable[b])
            rows.append(dict(test="ks_two_sided", a=a.value, b=b.value,
                             statistic=res.statistic, df=None, p_value=res.p_value))
    for a in keys:
        try:
            res = stats.dagostino_pearson(usable[a])
        except (stats.SampleTooSmall, stats.DegenerateSample) as exc:
            log.info("normality test skipped for %s: %s", a.value, exc)
            continue
        rows.append(dict(test="dagostino_pearson", a=a.value, b="",
                         statistic=res.statistic, df=res.df, p_value=res.p_value))
    return rows


def _stats_csv(rows: list[dict]) -> bytes:
    lines = ["test,a,b,statistic,df,p_value"]
    for r in rows:
        df = "" if r["df"] is None else repr(float(r["df"]))
        lines.append(f"{r['test']},{r['a']},{r['b']},{float(r['statistic'])!r},{df},{float(r['p_value'])!r}")
    return ("\n".join(lines) + "\n").encode()


def _metrics_csv(d: metrics.NoiseDecomposition) -> bytes:
    items = d.as_dict() | {"inaccuracy": d.inaccuracy}
    lines = ["metric,value"] + [f"{k},{items[k]!r}" for k in sorted(items)]
    return ("\n".join(lines) + "\n").encode()


def analyze_stage(
    events: Sequence[ReportEvent],
    contents: Sequence[ContentRecord],
    window_days: int = 90,
    quantile: float = 0.999,
    window_start: int | None = None,
    fmt: str = "json",
) -> tuple[AnalyzeResult, StageOutput]:
    """aggregate -> clip -> decompose -> partial order."""
    if not events:
        raise ingest.EmptyInput("no report events")
    if not 0.0 < quantile <= 1.0:
        raise ValueError("quantile must lie in (0, 1]")
    events = ingest.dedupe_reports(events)
    start = min(e.timestamp for e in events) if window_start is None else int(window_start)
    window = (start, start + window_days * ingest.SECONDS_PER_DAY)
    vectors = ingest.aggregate_features(events, window, window_days=window_days)
    clip = ingest.clip_outliers(vectors.values(), quantile)
    log.info("clipping at q=%s: threshold %s, %d excluded", quantile, clip.threshold, len(clip.excluded))

    decomposition = metrics.decompose(contents)  # raises UnlabelledRecord
    distribution = metrics.distribution_table(contents)
    volumes = class_volumes(clip.kept, contents)
    order = stats.derive_partial_order({k: v for k, v in volumes.items() if len(v) >= 2})
    rows = _volume_tests(volumes)

    result = AnalyzeResult(window, list(clip.kept), clip, decomposition, distribution, volumes, order, rows)
    out = StageOutput()
    out.add("features.csv", _text_bytes(ingest.write_features, clip.kept))
    if fmt == "csv":
        out.add("metrics.csv", _metrics_csv(decomposition))
    else:
        out.add("metrics.json", _json_bytes(
            decomposition.as_dict() | {
                "inaccuracy": decomposition.inaccuracy,
                "n_events": len(events),
                "window": list(window),
            }
        ))
    out.add("distribution.csv", _text_bytes(result.distribution.write_csv))
    out.add("partial_order.dot", order.to_dot().encode())
    out.add("partial_order.csv", _text_bytes(order.write_csv))
    out.add("stats.csv", _stats_csv(rows))
    out.add("clipping.json", _json_bytes({
        "quantile": quantile,
        "threshold": clip.threshold,
        "n_kept": len(clip.kept),
        "n_excluded": len(clip.excluded),
        "excluded": [{"content_id": v.content_id, "total": v.total} for v in clip.excluded],
    }))
    out.summary = {"decomposition": decomposition, "n_excluded": len(clip.excluded)}
    return result, out


# --------------------------------------------------------------------------
# train / evaluate


@dataclass
class TrainEvalResult:
    model: gbdt.GbdtModel
    report: gbdt.EvalReport
    n_train: int
    test: list[gbdt.TrainingInstance]


def train_eval_stage(
    features: Sequence[FeatureVector],
    contents: Sequence[ContentRecord],
    seed: int,
    test_fraction: float = 0.10,
    hyperparams: gbdt.Hyperparams | None = None,
) -> tuple[TrainEvalResult, StageOutput]:
    instances = gbdt.build_instances(features, contents)
    if not instances:
        raise gbdt.TooFewInstances("no feature vector matches a labelled content record")
    if len({i.target for i in instances}) < 2:
        raise gbdt.DegenerateTargets(f"all instances have target {instances[0].target.value}")
    train, test = gbdt.split_train_test(instances, test_fraction, module_seed(seed, "split"))
    model = gbdt.train(train, hyperparams, module_seed(seed, "gbdt"))
    report = gbdt.evaluate(model, test, gbdt.majority_class(train))
    out = StageOutput()
    out.add("model.json", model.to_json().encode() + b"\n")
    summary = report.to_dict() | {"model_digest": model.digest(), "n_train": len(train)}
    out.add("eval.json", _json_bytes(summary))
    for key in report.pr_curves:
        out.add(report.pr_filename(*key), _text_bytes(report.write_pr_curve, key))
    out.summary = summary
    return TrainEvalResult(model, report, len(train), test), out


# --------------------------------------------------------------------------
# reproduction targets


@dataclass
class TargetRow:
    name: str
    expected: str
    achieved: float | str
    ok: bool


def _within(x: float, target: float, tol: float) -> bool:
    return abs(x - target) <= tol + 1e-12


def pr_identity_holds(report: gbdt.EvalReport, test: Sequence | None = None) -> bool:
    """Lowest-threshold point of every curve: recall 1 and precision equal to prevalence."""
    for (cls, country), pts in report.pr_curves.items():
        low = pts[0]
        if abs(low.recall - 1.0) > 1e-9:
            return False
        if test is not None:
            sub = [t for t in test if country == gbdt.ALL_COUNTRIES or t.country == country]
            prevalence = sum(t.target is cls for t in sub) / len(sub)
            if abs(low.precision - prevalence) > 1e-9:
                return False
    return True


def target_rows(analysis: AnalyzeResult, result: TrainEvalResult) -> list[TargetRow]:
    d = analysis.decomposition
    rows = [TargetRow("inaccuracy", "0.93 +/- 0.02", d.inaccuracy, _within(d.inaccuracy, 0.93, 0.02))]
    for name, t in (("false_noise", 0.35), ("quasi_noise", 0.20), ("soft_noise", 0.03), ("hard_noise", 0.34)):
        v = getattr(d, name)
        rows.append(TargetRow(name, f"{t:.2f} +/- 0.02", v, _within(v, t, 0.02)))
    n_exc = len(analysis.clip.excluded)
    rows.append(TargetRow("clipped_items_q0.999", "<= 4", float(n_exc), n_exc <= 4))
    po = analysis.order
    C, M, I = AggregatedClass.C, AggregatedClass.M, AggregatedClass.I
    rows.append(TargetRow("edge_C>M", "p <= 0.05", "yes" if po.has_edge(C, M, stats.Strength.Strong) else "no",
                          po.has_edge(C, M, stats.Strength.Strong)))
    rows.append(TargetRow("edge_C>I", "p <= 0.05", "yes" if po.has_edge(C, I, stats.Strength.Strong) else "no",
                          po.has_edge(C, I, stats.Strength.Strong)))
    mi = po.has_edge(M, I) or po.has_edge(I, M)
    rows.append(TargetRow("no_edge_M_I", "none at p <= 0.10", "edge" if mi else "none", not mi))
    f1c = result.report.f1[TargetClass.C]
    rows.append(TargetRow("f1_C", "in [0.45, 0.75]", f1c, 0.45 <= f1c <= 0.75))
    top = result.report.top_features(4)
    rows.append(TargetRow("false_news_top4", "in top-4 importances", ",".join(top), "false_news" in top))
    rows.append(TargetRow("macro_f1_vs_baseline", f">= {result.report.baseline_macro_f1:.3f}",
                          result.report.macro_f1, result.report.macro_f1 >= result.report.baseline_macro_f1))
    rows.append(TargetRow("pr_identity", "recall 1 at lowest threshold", "", pr_identity_holds(result.report, result.test)))
    return rows


def sweep_rows(per_seed: Sequence[Sequence[TargetRow]], min_share: float = 0.9) -> list[TargetRow]:
    """Collapse per-seed rows: a target passes when it holds in at least
    ``ceil(min_share * n_seeds)`` seeds."""
    n = len(per_seed)
    need = math.ceil(min_share * n - 1e-9)
    out = []
    for i, first in enumerate(per_seed[0]):
        passed = sum(rows[i].ok for rows in per_seed)
        out.append(TargetRow(first.name, f"{first.expected} in >= {need}/{n} seeds",
                             f"{passed}/{n}", passed >= need))
    return out


def format_targets(rows: Sequence[TargetRow]) -> str:
    lines = [f"{'target':<24} {'expected':<34} {'achieved':<36} result"]
    for r in rows:
        a = f"{r.achieved:.4f}" if isinstance(r.achieved, float) else str(r.achieved)
        lines.append(f"{r.name:<24} {r.expected:<34} {a:<36} {'PASS' if r.ok else 'FAIL'}")
    return "\n".join(lines)


def targets_csv(rows: Sequence[TargetRow]) -> bytes:
    lines = ["target,expected,achieved,result"]
    for r in rows:
        a = repr(r.achieved) if isinstance(r.achieved, float) else str(r.achieved)
        lines.append(",".join([r.name, f'"{r.expected}"', f'"{a}"', "PASS" if r.ok else "FAIL"]))
    return ("\n".join(lines) + "\n").encode()


@dataclass
class SeedRun:
    seed: int
    dataset: SynthDataset
    analysis: AnalyzeResult
    result: TrainEvalResult
    rows: list[TargetRow]
    outputs: dict[str, StageOutput]


def reproduce_seed(
    seed: int,
    preset_name: str = DEFAULT_PRESET,
    n_content: int | None = None,
    hyperparams: gbdt.Hyperparams | None = None,
) -> SeedRun:
    """synth -> analyze -> train-eval on one preset and seed, in memory."""
    kwargs = {} if n_content is None else {"n_content": n_content}
    config = preset(preset_name, seed=seed, **kwargs)
    dataset, synth_out = synth_stage(config, preset_targets(preset_name))
    analysis, analyze_out = analyze_stage(dataset.events, dataset.contents)
    result, te_out = train_eval_stage(analysis.features, dataset.contents, seed, hyperparams=hyperparams)
    rows = target_rows(analysis, result)
    return SeedRun(seed, dataset, analysis, result, rows,
                   {"synth": synth_out, "analyze": analyze_out, "train-eval": te_out})


__all__ = [
    "AnalyzeResult", "MANIFEST", "OutputNotWritable", "RunManifest", "SeedRun", "StageOutput",
    "TargetRow", "TrainEvalResult", "analyze_stage", "atomic_write", "canonical_digest",
    "class_volumes", "commit", "ensure_writable", "format_targets", "module_seed",
    "pr_identity_holds", "preset_targets", "reproduce_seed", "sweep_rows", "synth_stage",
    "target_rows", "targets_csv", "train_eval_stage",
]
