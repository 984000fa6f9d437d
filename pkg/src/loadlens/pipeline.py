"""Stage implementations behind the command line.

Each stage reads the artifacts of the stage before it from ``<out>/<stage>/``
and writes its own outputs atomically, together with the resolved config and
a provenance file of input and output hashes. Wall-clock timings go to
``<out>/timings.json`` only, so every other output is a pure function of the
dataset bytes, the config and the seed.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import synth
from .balance import BalanceConfig, BalanceMethod, TrainingSet, balance
from .cleaning import CleaningReport, clean_store, drop_subject_if_invalid
from .config import RunConfig
from .epoching import DEFAULT_WINDOWS, EpochStore, EpochWindow, Modality, cut_epochs, load_store, save_store
from .errors import ConfigInvalidError, IngestError, MissingArtifactError, MissingFileError
from .eval import (
    EvalReport,
    Split,
    SplitMode,
    TableRow,
    compute_metrics,
    cross_validate,
    make_labels,
    partitions,
    reference_deviation,
    results_table,
    stratified_split,
    task_spec,
)
from .explain import attributions_csv, model_output, rank_features, tree_shap
from .features import FeatureMatrix, build_feature_matrix
from .ingest import (
    Condition,
    Correctness,
    EventRecord,
    Load,
    SampleSeries,
    load_code_map,
    parse_eeg_interchange,
    parse_events,
    parse_participants,
    parse_pupil_stream,
    subject_files,
)
from .io import atomic_write_bytes, atomic_write_text, sha256_file
from .models import TreeEnsemble, fit_model, load_model, predict, save_model

log = logging.getLogger(__name__)

STAGES = ("ingest", "epoch", "clean", "features", "train", "eval", "explain", "report")


@dataclass
class StageResult:
    stage: str
    directory: Path
    outputs: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"stage": self.stage, "status": "ok", "dir": str(self.directory), "outputs": self.outputs, **self.summary}


class Workspace:
    """Paths of one run's output tree."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.data = Path(cfg.data) if cfg.data else self.out / "data"

    def dir(self, stage: str) -> Path:
        return self.out / stage

    def require(self, path: Path, producer: str) -> Path:
        if not path.exists():
            raise MissingArtifactError(f"{path} not found; run the '{producer}' stage first")
        return path

    def label(self, path: Path) -> str:
        """Input path relative to the data root or output tree, so manifests do not depend on where a run lives."""
        for base, tag in ((self.data, "data"), (self.out, "out")):
            try:
                return f"{tag}/{path.relative_to(base).as_posix()}"
            except ValueError:
                continue
        return str(path)

    def finish(self, stage: str, inputs: list[Path], outputs: list[Path], summary: dict, seconds: float) -> StageResult:
        d = self.dir(stage)
        config_text = self.cfg.to_yaml()
        atomic_write_text(d / "config.yaml", config_text)
        manifest = {
            "stage": stage,
            "seed": self.cfg.seed,
            "inputs": {self.label(p): sha256_file(p) for p in sorted(inputs)},
            "outputs": {p.name: sha256_file(p) for p in outputs},
        }
        atomic_write_text(d / "provenance.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        timings_path = self.out / "timings.json"
        timings = json.loads(timings_path.read_text()) if timings_path.exists() else {}
        timings[stage] = round(seconds, 4)
        atomic_write_text(timings_path, json.dumps(timings, indent=1, sort_keys=True) + "\n")
        atomic_write_text(self.out / "config.yaml", config_text)
        return StageResult(stage, d, [str(p) for p in outputs], summary)


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _windows(cfg: RunConfig):
    if not cfg.windows:
        return None
    table = {m: dict(w) for m, w in DEFAULT_WINDOWS.items()}
    try:
        for modality, per_load in cfg.windows.items():
            for load, (pre, post) in per_load.items():
                table[Modality(modality)][Load(int(load))] = EpochWindow(float(pre), float(post))
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigInvalidError(f"windows: {exc}") from None
    return table


# synth --------------------------------------------------------------------------------------------


def run_synth(cfg: RunConfig) -> StageResult:
    """Generate the synthetic dataset into the data root, replacing a previous synthetic one."""
    ws = Workspace(cfg)
    t = time.perf_counter()
    root = ws.data
    if root.exists() and any(root.iterdir()) and not (root / "synthetic_spec.json").exists():
        raise ConfigInvalidError(f"{root} holds a non-synthetic dataset; refusing to overwrite it")
    tmp = root.with_name(f".{root.name}.tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    summary = synth.generate(cfg.synthetic_spec(), tmp)
    if root.exists():
        shutil.rmtree(root)
    tmp.rename(root)
    ws.out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(ws.out / "config.yaml", cfg.to_yaml())
    totals = {k: sum(s[k] for s in summary["subjects"].values()) for k in ("n_events", "low_confidence", "spikes", "flatlines")}
    return StageResult("synth", root, [str(root)], {"subjects": len(summary["subjects"]), **totals,
                                                    "seconds": round(time.perf_counter() - t, 3)})


# ingest -------------------------------------------------------------------------------------------


def _save_series(series: SampleSeries, path: Path) -> None:
    ts = series.timestamps if series.timestamps is not None else np.full(len(series), np.nan)
    buf = io.BytesIO()
    np.save(buf, np.vstack([series.values, series.quality, ts]).astype("<f8"), allow_pickle=False)
    atomic_write_bytes(path.with_suffix(".npy"), buf.getvalue())
    meta = {"channel_id": series.channel_id, "sampling_rate_hz": series.sampling_rate_hz, "t0_s": series.t0_s,
            "has_timestamps": series.timestamps is not None, "n_samples": len(series)}
    atomic_write_text(path.with_suffix(".json"), _json(meta))


def _load_series(path: Path) -> SampleSeries:
    meta = json.loads(path.with_suffix(".json").read_text())
    arr = np.load(path.with_suffix(".npy"), allow_pickle=False)
    return SampleSeries(meta["channel_id"], meta["sampling_rate_hz"], meta["t0_s"], arr[0], arr[1],
                        timestamps=arr[2] if meta["has_timestamps"] else None)


_EVENT_HEADER = ["subject", "onset_s", "code", "condition", "load", "correctness"]


def _read_streams(files, modality: Modality, channels) -> list[SampleSeries]:
    if modality is Modality.PUPIL:
        return [parse_pupil_stream(files.pupil[eye], eye, 120.0) for eye in ("left", "right")]
    return parse_eeg_interchange(files.eeg_header, files.eeg_data, channels)


def run_ingest(cfg: RunConfig) -> StageResult:
    """Parse and validate every subject; keep parsed streams and a flat event table."""
    ws = Workspace(cfg)
    t = time.perf_counter()
    root = ws.data
    if not root.exists():
        raise MissingArtifactError(f"dataset root {root} not found; run 'synth' or pass --data")
    modality = Modality(cfg.modality)
    participants_path = root / "participants.tsv"
    if not participants_path.exists():
        raise MissingFileError("participants table not found", participants_path)
    participants = parse_participants(participants_path)
    code_map_path = cfg.code_map or (root / "code_map.json" if (root / "code_map.json").exists() else None)
    code_map = load_code_map(code_map_path)

    d = ws.dir("ingest")
    if d.exists():
        shutil.rmtree(d)
    streams = d / "streams"
    streams.mkdir(parents=True)
    inputs = [participants_path] + ([Path(code_map_path)] if code_map_path else [])
    rows, subjects, excluded, unmapped = [], [], {}, 0
    for rec in participants:
        sid = rec.subject_id
        files = subject_files(root, sid)
        missing = files.missing(modality.value)
        if missing:
            log.warning("%s: missing %s; subject excluded", sid, ", ".join(missing))
            excluded[sid] = missing
            continue
        parsed = parse_events(files.events, code_map)
        unmapped += len(parsed.unmapped)
        for series in _read_streams(files, modality, cfg.channels if modality is Modality.EEG else None):
            _save_series(series, streams / f"{sid}__{series.channel_id}")
        inputs.append(files.events)
        inputs += [files.pupil["left"], files.pupil["right"]] if modality is Modality.PUPIL else [files.eeg_header, files.eeg_data]
        for ev in parsed.events:
            rows.append([sid, repr(float(ev.onset_s)), ev.code, ev.condition.value, int(ev.load),
                         ev.correctness.value if ev.correctness else ""])
        subjects.append(sid)
    if not subjects:
        raise IngestError(f"no subject under {root} has a complete {modality.value} file set")
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(_EVENT_HEADER)
    w.writerows(rows)
    atomic_write_text(d / "events.tsv", buf.getvalue())
    meta = {"modality": modality.value, "subjects": subjects, "excluded": excluded, "unmapped_events": unmapped,
            "synthetic": (root / "synthetic_spec.json").exists()}
    atomic_write_text(d / "subjects.json", _json(meta))
    summary = {"subjects": len(subjects), "excluded": len(excluded), "events": len(rows), "unmapped_events": unmapped}
    return ws.finish("ingest", inputs, [d / "events.tsv", d / "subjects.json"], summary, time.perf_counter() - t)


def _read_events(path: Path) -> dict[str, list[EventRecord]]:
    out: dict[str, list[EventRecord]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        for r in reader:
            corr = Correctness(r["correctness"]) if r["correctness"] else None
            ev = EventRecord(float(r["onset_s"]), int(r["code"]), Condition(r["condition"]), Load(int(r["load"])), corr)
            out.setdefault(r["subject"], []).append(ev)
    return out


# epoch / clean -------------------------------------------------------------------------------------


def run_epoch(cfg: RunConfig) -> StageResult:
    ws = Workspace(cfg)
    t = time.perf_counter()
    src = ws.dir("ingest")
    meta_path = ws.require(src / "subjects.json", "ingest")
    events_path = ws.require(src / "events.tsv", "ingest")
    meta = json.loads(meta_path.read_text())
    if meta["modality"] != cfg.modality:
        raise ConfigInvalidError(f"ingest ran for {meta['modality']}, config asks for {cfg.modality}")
    modality = Modality(cfg.modality)
    events = _read_events(events_path)
    windows = _windows(cfg)
    store: EpochStore | None = None
    inputs = [meta_path, events_path]
    for sid in meta["subjects"]:
        paths = sorted((src / "streams").glob(f"{sid}__*.json"))
        series = [_load_series(p) for p in paths]
        inputs += [p.with_suffix(".npy") for p in paths]
        part = cut_epochs(series, events.get(sid, []), sid, modality, windows=windows)
        store = part if store is None else store.merge(part)
    d = ws.dir("epoch")
    save_store(store, d)
    summary = {"epochs": len(store), "target_len": store.target_len, "sampling_rate_hz": store.sampling_rate_hz}
    outs = [d / n for n in ("manifest.json", "values.f32", "quality.f32", "missing.bits", "padding.bits")]
    return ws.finish("epoch", inputs, outs, summary, time.perf_counter() - t)


def run_clean(cfg: RunConfig) -> StageResult:
    ws = Workspace(cfg)
    t = time.perf_counter()
    src = ws.dir("epoch")
    ws.require(src / "manifest.json", "epoch")
    meta_path = ws.require(ws.dir("ingest") / "subjects.json", "ingest")
    meta = json.loads(meta_path.read_text())
    store = load_store(src)
    cleaned, report = clean_store(store, cfg.cleaning_policy())
    known = set(meta["subjects"]) | set(meta["excluded"])
    for sid, missing in sorted(meta["excluded"].items()):
        cleaned, _ = drop_subject_if_invalid(cleaned, sid, missing, known_subjects=known, report=report)
    for sid in meta["subjects"]:
        cleaned, _ = drop_subject_if_invalid(cleaned, sid, known_subjects=known, report=report)
    d = ws.dir("clean")
    save_store(cleaned, d)
    report.write_tsv(d / "cleaning_report.tsv")
    report.write_subjects_tsv(d / "subjects_removed.tsv")
    outs = [d / n for n in ("manifest.json", "values.f32", "cleaning_report.tsv", "subjects_removed.tsv")]
    return ws.finish("clean", [src / "manifest.json", src / "values.f32", meta_path], outs, report.summary(),
                     time.perf_counter() - t)


# features -------------------------------------------------------------------------------------------


def run_features(cfg: RunConfig) -> StageResult:
    ws = Workspace(cfg)
    t = time.perf_counter()
    src = ws.dir("clean")
    ws.require(src / "manifest.json", "clean")
    store = load_store(src)
    matrix, info = build_feature_matrix(
        store, cfg.features.mode, cfg.features.merge, raw_points=cfg.features.raw_points, threads=cfg.threads
    )
    spec = task_spec(cfg.task)
    labels = np.array([-1 if (lab := spec.label(k.condition, k.load, k.correctness)) is None else lab
                       for k in matrix.keys], dtype=np.int64)
    matrix.labels = labels
    d = ws.dir("features")
    matrix.write_csv(d / "features.csv")
    atomic_write_text(d / "features.json", _json({**info, "task": spec.task.value, "class_names": list(spec.class_names),
                                                  "n_features": len(matrix.feature_names)}))
    summary = {"rows": info["rows"], "excluded": info["excluded"], "n_features": len(matrix.feature_names)}
    return ws.finish("features", [src / "manifest.json", src / "values.f32"], [d / "features.csv", d / "features.json"],
                     summary, time.perf_counter() - t)


def _labelled(ws: Workspace) -> tuple[FeatureMatrix, Path]:
    path = ws.require(ws.dir("features") / "features.csv", "features")
    matrix, dropped = make_labels(FeatureMatrix.read_csv(path), ws.cfg.task)
    if dropped:
        log.info("%d rows fall outside task %s", dropped, ws.cfg.task)
    return matrix, path


# train / eval -----------------------------------------------------------------------------------------


def _balance_config(cfg: RunConfig) -> BalanceConfig:
    return BalanceConfig(BalanceMethod(cfg.balance.method), cfg.balance.k_neighbors, cfg.balance.enn_neighbors, cfg.seed)


def run_train(cfg: RunConfig) -> StageResult:
    ws = Workspace(cfg)
    t = time.perf_counter()
    matrix, feat_path = _labelled(ws)
    split = stratified_split(matrix.labels, cfg.split.test_fraction, cfg.split.mode, cfg.seed, matrix.groups)
    train, _ = partitions(matrix, split)
    bal = balance(train, _balance_config(cfg))
    n_classes = len(matrix.class_names)
    model = fit_model(cfg.model.kind, bal.train.X, bal.train.y, n_classes, cfg.model.resolved_params(), cfg.seed, cfg.threads)
    d = ws.dir("train")
    save_model(model, d / "model.json")
    split_doc = {
        "mode": SplitMode(cfg.split.mode).value,
        "test_fraction": cfg.split.test_fraction,
        "seed": cfg.seed,
        "train_idx": split.train_idx.tolist(),
        "test_idx": split.test_idx.tolist(),
        "test_subjects": sorted(set(matrix.groups[split.test_idx].tolist())) if cfg.split.mode == "subject" else None,
    }
    atomic_write_text(d / "split.json", _json(split_doc))
    atomic_write_text(d / "balance.json", _json(bal.manifest))
    summary = {"model": cfg.model.kind, "n_train": len(split.train_idx), "n_test": len(split.test_idx),
               "n_train_balanced": len(bal.train.y), "classes": list(matrix.class_names)}
    return ws.finish("train", [feat_path], [d / "model.json", d / "split.json", d / "balance.json"], summary,
                     time.perf_counter() - t)


def _trained(ws: Workspace):
    d = ws.dir("train")
    model_path = ws.require(d / "model.json", "train")
    split_path = ws.require(d / "split.json", "train")
    doc = json.loads(split_path.read_text())
    split = Split(np.array(doc["train_idx"], dtype=np.int64), np.array(doc["test_idx"], dtype=np.int64))
    return load_model(model_path), split, [model_path, split_path]


def run_eval(cfg: RunConfig) -> StageResult:
    ws = Workspace(cfg)
    t = time.perf_counter()
    matrix, feat_path = _labelled(ws)
    model, split, inputs = _trained(ws)
    train, test = partitions(matrix, split)
    pred = predict(model, test.X)
    n_classes = len(matrix.class_names)
    report = compute_metrics(test.labels, pred.labels, n_classes, pred.scores, matrix.class_names)

    params = cfg.model.resolved_params()

    def fit_predict(tr: TrainingSet, X):
        m = fit_model(cfg.model.kind, tr.X, tr.y, n_classes, params, cfg.seed, 1)
        p = predict(m, X)
        return p.labels, p.scores

    balance_cfg = _balance_config(cfg)
    report.cv = cross_validate(
        matrix.take(split.train_idx), fit_predict, cfg.split.k, cfg.split.mode, cfg.seed,
        balance_cfg if balance_cfg.method is not BalanceMethod.NONE else None, cfg.threads,
    )
    report.extra = {"task": cfg.task, "modality": cfg.modality, "model": cfg.model.kind, "split": cfg.split.mode,
                    "n_train": len(split.train_idx), "n_test": len(split.test_idx)}
    ingest_meta = json.loads(ws.require(ws.dir("ingest") / "subjects.json", "ingest").read_text())
    if not ingest_meta.get("synthetic", False):
        ref = reference_deviation(cfg.modality, cfg.task, report.accuracy)
        if ref is not None:
            report.extra["reference_comparison"] = ref

    d = ws.dir("eval")
    atomic_write_text(d / "report.json", report.to_json())
    row = TableRow(cfg.model.kind, report.cv["accuracy"]["mean"], report.cv["accuracy"]["std"], report.accuracy,
                   report.weighted_f1, report.macro_f1)
    atomic_write_text(d / "table.txt", results_table([row], binary=n_classes == 2))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject", "condition", "load", "correctness", "trial", "true", "pred",
                *(f"score_{c}" for c in matrix.class_names)])
    for key, yt, yp, s in zip(test.keys, test.labels, pred.labels, pred.scores):
        w.writerow([key.subject, key.condition, key.load, key.correctness or "", key.trial, int(yt), int(yp),
                    *(repr(float(v)) for v in s)])
    atomic_write_text(d / "predictions.csv", buf.getvalue())
    summary = {"accuracy": report.accuracy, "macro_f1": report.macro_f1, "weighted_f1": report.weighted_f1,
               "cv_accuracy": report.cv["accuracy"]["mean"]}
    if "reference_comparison" in report.extra:
        summary["reference_comparison"] = report.extra["reference_comparison"]
    return ws.finish("eval", [feat_path, *inputs], [d / "report.json", d / "table.txt", d / "predictions.csv"], summary,
                     time.perf_counter() - t)


# explain / report -------------------------------------------------------------------------------------


def run_explain(cfg: RunConfig) -> StageResult:
    ws = Workspace(cfg)
    t = time.perf_counter()
    matrix, feat_path = _labelled(ws)
    model, split, inputs = _trained(ws)
    d = ws.dir("explain")
    if d.exists():
        shutil.rmtree(d)
    d.mkdir(parents=True)
    if not isinstance(model, TreeEnsemble):
        note = {"skipped": True, "reason": "exact attributions need a tree ensemble; the trained model is an SVM"}
        atomic_write_text(d / "skipped.json", _json(note))
        return ws.finish("explain", [feat_path, *inputs], [d / "skipped.json"], note, time.perf_counter() - t)
    _, test = partitions(matrix, split)
    attr = tree_shap(model, test.X, matrix.feature_names, matrix.class_names)
    gap = float(np.max(np.abs(attr.totals() - model_output(model, test.X)))) if len(test) else 0.0
    ranking = rank_features(attr, top_k=cfg.top_k)
    keys = [f"{k.subject}/{k.condition}/{k.load}/{k.trial}" for k in test.keys]
    atomic_write_text(d / "shap.csv", attributions_csv(attr, keys))
    atomic_write_text(d / "ranking.json", ranking.to_json())
    atomic_write_text(d / "attribution.json", _json({"space": attr.space, "base": attr.base.tolist(),
                                                     "class_names": list(attr.class_names), "additivity_gap": gap}))
    summary = {"space": attr.space, "additivity_gap": gap, "top_features": list(ranking.names)}
    return ws.finish("explain", [feat_path, *inputs], [d / "shap.csv", d / "ranking.json", d / "attribution.json"],
                     summary, time.perf_counter() - t)


def run_report(cfg: RunConfig) -> StageResult:
    from . import plotting

    ws = Workspace(cfg)
    t = time.perf_counter()
    report_path = ws.require(ws.dir("eval") / "report.json", "eval")
    table_path = ws.require(ws.dir("eval") / "table.txt", "eval")
    report = EvalReport.from_dict(json.loads(report_path.read_text()))
    d = ws.dir("report")
    if d.exists():
        shutil.rmtree(d)
    d.mkdir(parents=True)
    inputs, outs, notes = [report_path, table_path], [], []

    path = d / "confusion.svg"
    plotting.save_svg(plotting.confusion_figure(report.confusion, report.class_names), path)
    outs.append(path)

    ranking_path = ws.dir("explain") / "ranking.json"
    if ranking_path.exists():
        ranking = json.loads(ranking_path.read_text())["ranking"]
        path = d / "shap_top10.svg"
        fig = plotting.shap_bar_figure([r["name"] for r in ranking], [r["score"] for r in ranking],
                                       title=f"Top {len(ranking)} features by |SHAP|")
        plotting.save_svg(fig, path)
        outs.append(path)
        inputs.append(ranking_path)
    else:
        notes.append("SHAP chart skipped: no feature ranking (explain stage not run or model is not a tree ensemble)")

    if report.n_classes == 2 and report.roc_curve:
        path = d / "roc.svg"
        plotting.save_svg(plotting.roc_figure(report.roc_curve["fpr"], report.roc_curve["tpr"], report.roc_auc), path)
        outs.append(path)
    else:
        notes.append("ROC curve skipped: only drawn for binary tasks with per-class scores")

    lines = [table_path.read_text().rstrip("\n"), ""]
    lines.append(f"accuracy {report.accuracy:.4f}  macro F1 {report.macro_f1:.4f}  weighted F1 {report.weighted_f1:.4f}")
    if report.roc_auc is not None:
        lines.append(f"ROC-AUC {report.roc_auc:.4f}")
    ref = report.extra.get("reference_comparison")
    if ref:
        lines.append(f"reference accuracy {ref['reference']:.4f}, deviation {ref['deviation']:+.4f}"
                     f" ({'within' if ref['within_tolerance'] else 'outside'} ±0.05)")
    lines += [f"note: {n}" for n in notes]
    atomic_write_text(d / "summary.txt", "\n".join(lines) + "\n")
    outs.append(d / "summary.txt")
    return ws.finish("report", inputs, outs, {"figures": [p.name for p in outs if p.suffix == ".svg"], "notes": notes},
                     time.perf_counter() - t)


RUNNERS = {
    "ingest": run_ingest,
    "epoch": run_epoch,
    "clean": run_clean,
    "features": run_features,
    "train": run_train,
    "eval": run_eval,
    "explain": run_explain,
    "report": run_report,
}


def run_stage(stage: str, cfg: RunConfig) -> StageResult:
    if stage == "synth":
        return run_synth(cfg)
    return RUNNERS[stage](cfg)


def run_all(cfg: RunConfig) -> list[StageResult]:
    """Every stage in order, generating the synthetic dataset first when no data root is given."""
    results = []
    if cfg.data is None and not (Workspace(cfg).data / "participants.tsv").exists():
        results.append(run_synth(cfg))
    for stage in STAGES:
        results.append(RUNNERS[stage](cfg))
    return results
