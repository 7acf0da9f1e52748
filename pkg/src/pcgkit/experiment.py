"""End-to-end experiment pipeline: segmentation, cycle extraction, MFCC
features, recurrent classifiers plus classical baselines, recording-level
evaluation, and a pair of report files (text and JSON).

Runs are deterministic for a given config: every random stream is derived
from the master seed, recordings are processed in sorted id order, and the
reports contain no timestamps or environment-dependent values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines as bl
from .cycles import extract_cycles, write_segment_index
from .dataset import Label, load_manifest, load_recording, save_manifest, split_dataset
from .errors import DataError, UnsegmentableError
from .metrics import (Metrics, REFERENCE_BASELINE_SCORES,
                      REFERENCE_RNN_SCORES, compute_metrics,
                      format_metrics_row, format_reference_table)
from .mfcc import MfccConfig, FeatureMatrix, mfcc_for_segment, summary_vector, write_features
from .rnn import TrainSchedule, build_classifier, predict_recording, train, write_training_log
from .segmentation import segment_recording, write_state_intervals
from .synthetic import train_default_emission_model
from .textio import format_float, read_document, write_document

VALID_CYCLES = (2, 5, 8)
DEFAULT_ARCHITECTURES = ("lstm", "gru", "blstm", "bigru")


@dataclass
class ExperimentConfig:
    data_dir: str
    out_dir: str
    n_cycles: int = 5
    architectures: tuple = DEFAULT_ARCHITECTURES
    hidden_size: int = 64
    dense_size: int = 32
    seeds: int = 3
    master_seed: int = 0
    batch_size: int = 16
    max_epochs: int = 100
    initial_lr: float = 0.002
    include_baselines: bool = True

    def __post_init__(self):
        if self.n_cycles not in VALID_CYCLES:
            raise ValueError("n_cycles must be one of %r" % (VALID_CYCLES,))
        self.architectures = tuple(a.lower() for a in self.architectures)
        for arch in self.architectures:
            if arch not in DEFAULT_ARCHITECTURES:
                raise ValueError("unknown architecture %r" % (arch,))
        if self.seeds < 1:
            raise ValueError("seeds must be at least 1")

    def as_meta(self):
        return {
            "data_dir": self.data_dir,
            "out_dir": self.out_dir,
            "n_cycles": self.n_cycles,
            "architectures": ",".join(self.architectures),
            "hidden_size": self.hidden_size,
            "dense_size": self.dense_size,
            "seeds": self.seeds,
            "master_seed": self.master_seed,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "initial_lr": format_float(self.initial_lr),
            "include_baselines": int(self.include_baselines),
        }

    def save(self, path):
        write_document(path, "experiment-config", self.as_meta(), {})

    @classmethod
    def from_file(cls, path):
        meta, _ = read_document(path, "experiment-config")
        return cls(
            data_dir=meta["data_dir"],
            out_dir=meta["out_dir"],
            n_cycles=int(meta["n_cycles"]),
            architectures=tuple(meta["architectures"].split(",")),
            hidden_size=int(meta["hidden_size"]),
            dense_size=int(meta["dense_size"]),
            seeds=int(meta["seeds"]),
            master_seed=int(meta["master_seed"]),
            batch_size=int(meta["batch_size"]),
            max_epochs=int(meta["max_epochs"]),
            initial_lr=float(meta["initial_lr"]),
            include_baselines=bool(int(meta["include_baselines"])),
        )


@dataclass
class RecordingFeatures:
    recording_id: str
    label: Label
    matrices: list = field(default_factory=list)
    summaries: list = field(default_factory=list)


def _model_seed(master, arch_index, replica):
    return master * 10000 + arch_index * 100 + replica


def _prepare_split(entries, emission_model, n_cycles, cfg, out_dir,
                   segment_rows, feature_records):
    """Segment every recording of one split and compute per-segment MFCCs.
    Returns (per-recording features, ids that produced no usable segments)."""
    prepared = []
    empty_ids = []
    seg_dir = out_dir / "segmentation"
    seg_dir.mkdir(parents=True, exist_ok=True)
    for entry in entries:
        try:
            recording = load_recording(entry)
        except DataError as exc:
            raise DataError("stage load, recording %s: %s" % (entry.recording_id, exc))
        item = RecordingFeatures(entry.recording_id, entry.label)
        try:
            sequence = segment_recording(recording, emission_model)
        except UnsegmentableError:
            prepared.append(item)
            empty_ids.append(entry.recording_id)
            continue
        except DataError as exc:
            raise DataError("stage segment, recording %s: %s" % (entry.recording_id, exc))
        write_state_intervals(seg_dir / (entry.recording_id + ".csv"),
                              sequence.intervals())
        segments = extract_cycles(recording, sequence, n_cycles)
        if not segments:
            prepared.append(item)
            empty_ids.append(entry.recording_id)
            continue
        for segment in segments:
            segment.label = entry.label
            try:
                feats = mfcc_for_segment(segment, cfg)
            except DataError as exc:
                raise DataError("stage mfcc, recording %s: %s" % (entry.recording_id, exc))
            item.matrices.append(feats.values)
            item.summaries.append(summary_vector(feats.values))
            segment_rows.append(segment)
            feature_records.append(FeatureMatrix(segment.segment_id,
                                                 feats.values, entry.label))
        prepared.append(item)
    return prepared, empty_ids


def _flatten(prepared):
    matrices = []
    summaries = []
    labels = []
    for item in prepared:
        for m, s in zip(item.matrices, item.summaries):
            matrices.append(m)
            summaries.append(s)
            labels.append(item.label)
    return matrices, summaries, labels


def _write_predictions(path, rows, score_names):
    with open(path, "w") as fh:
        fh.write("recording_id,truth,predicted," + ",".join(score_names) + "\n")
        for row in rows:
            rid, truth, predicted, scores = row
            fh.write("%s,%d,%d,%s\n" % (
                rid, truth.value, predicted.value,
                ",".join(format_float(s) for s in scores)))


def read_predictions(path):
    """Rows of (recording_id, truth, predicted, scores) from a predictions
    CSV written by run_experiment."""
    rows = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("recording_id,"):
            raise DataError("not a predictions file: %s" % path)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            rows.append((parts[0], Label(int(parts[1])), Label(int(parts[2])),
                         [float(v) for v in parts[3:]]))
    return rows


def run_experiment(config):
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = load_manifest(config.data_dir)
    if not entries:
        raise DataError("no usable recordings in %s" % config.data_dir)
    split = split_dataset(entries, seed=config.master_seed)
    by_id = {e.recording_id: e for e in entries}
    split_train = [by_id[i] for i in split.train]
    split_val = [by_id[i] for i in split.validation]
    split_test = [by_id[i] for i in split.test]
    config.save(out_dir / "config.txt")
    save_manifest(out_dir / "split_train.csv", split_train)
    save_manifest(out_dir / "split_validation.csv", split_val)
    save_manifest(out_dir / "split_test.csv", split_test)

    emission_model = train_default_emission_model(seed=config.master_seed)
    emission_model.save(out_dir / "emission_model.txt")

    cfg = MfccConfig()
    segment_rows = []
    feature_records = []
    train_prep, train_empty = _prepare_split(
        split_train, emission_model, config.n_cycles, cfg, out_dir,
        segment_rows, feature_records)
    val_prep, val_empty = _prepare_split(
        split_val, emission_model, config.n_cycles, cfg, out_dir,
        segment_rows, feature_records)
    test_prep, test_empty = _prepare_split(
        split_test, emission_model, config.n_cycles, cfg, out_dir,
        segment_rows, feature_records)
    write_segment_index(out_dir / "segment_index.csv", segment_rows)
    write_features(out_dir / "features.bin", feature_records)

    train_mats, train_sums, train_labels = _flatten(train_prep)
    val_mats, val_sums, val_labels = _flatten(val_prep)
    if not train_mats:
        raise DataError("no training segments survived segmentation")
    if not val_mats:
        raise DataError("no validation segments survived segmentation")

    report = {
        "config": {k: str(v) for k, v in config.as_meta().items()},
        "dataset": {
            "train_recordings": len(split_train),
            "validation_recordings": len(split_val),
            "test_recordings": len(split_test),
            "train_segments": len(train_mats),
            "validation_segments": len(val_mats),
            "test_segments": int(sum(len(p.matrices) for p in test_prep)),
            "train_skipped": sorted(train_empty),
            "validation_skipped": sorted(val_empty),
        },
        "models": {},
        "histories": {},
        "unclassifiable": sorted(test_empty),
        "reference": {
            "baselines": {k: list(v) for k, v in REFERENCE_BASELINE_SCORES.items()},
            "rnn": {k: list(v) for k, v in REFERENCE_RNN_SCORES.items()},
        },
    }

    models_dir = out_dir / "models"
    models_dir.mkdir(exist_ok=True)

    if config.include_baselines:
        _run_baselines(config, out_dir, models_dir, train_sums, train_labels,
                       val_sums, val_labels, test_prep, report)

    for arch_index, arch in enumerate(config.architectures):
        ensemble = []
        histories = []
        for replica in range(config.seeds):
            seed = _model_seed(config.master_seed, arch_index, replica)
            model = build_classifier(arch, hidden_size=config.hidden_size,
                                     dense_size=config.dense_size, seed=seed)
            schedule = TrainSchedule(initial_lr=config.initial_lr,
                                     max_epochs=config.max_epochs,
                                     batch_size=config.batch_size, seed=seed)
            history = train(model, train_mats, train_labels, val_mats,
                            val_labels, schedule)
            tag = "%s_r%d" % (arch, replica)
            model.save(models_dir / (tag + ".txt"))
            write_training_log(out_dir / ("train_log_%s.txt" % tag), history)
            ensemble.append(model)
            histories.append([vars(h) for h in history])
        rows = []
        for item in test_prep:
            if not item.matrices:
                continue
            label, post = predict_recording(ensemble, item.matrices)
            rows.append((item.recording_id, item.label, label,
                         [post[0], post[1]]))
        _write_predictions(out_dir / ("predictions_%s.csv" % arch), rows,
                           ["post_normal", "post_abnormal"])
        metrics = compute_metrics([(r[2], r[1]) for r in rows])
        report["models"][arch] = metrics.as_dict()
        report["histories"][arch] = histories

    _write_report(out_dir, report)
    return report


def _run_baselines(config, out_dir, models_dir, train_sums, train_labels,
                   val_sums, val_labels, test_prep, report):
    train_x = np.asarray(train_sums)
    val_x = np.asarray(val_sums)
    mean = train_x.mean(axis=0)
    std = train_x.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    write_document(out_dir / "baseline_norm.txt", "feature-norm", {},
                   {"mean": mean, "std": std})
    ztrain = (train_x - mean) / std
    zval = (val_x - mean) / std

    lr_model = bl.train_logreg(ztrain, train_labels, zval, val_labels)
    rf_model = bl.train_random_forest(ztrain, train_labels,
                                      seed=config.master_seed)
    best_svm = None
    for kernel in bl.SVM_KERNELS:
        svm = bl.train_svm(ztrain, train_labels, zval, val_labels,
                           kernel=kernel, seed=config.master_seed)
        acc = float(np.mean(svm.predict_segments(zval) == bl.sign_labels(val_labels)))
        if best_svm is None or acc > best_svm[0]:
            best_svm = (acc, svm)
    svm_model = best_svm[1]

    named = [("lr", lr_model), ("svm", svm_model), ("rf", rf_model)]
    for name, model in named:
        bl.save_baseline(models_dir / ("baseline_%s.txt" % name), model)
        rows = []
        for item in test_prep:
            if not item.summaries:
                continue
            vectors = (np.asarray(item.summaries) - mean) / std
            label, score = bl.predict_baseline(model, vectors)
            rows.append((item.recording_id, item.label, label, [score]))
        _write_predictions(out_dir / ("predictions_%s.csv" % name), rows,
                           ["score"])
        metrics = compute_metrics([(r[2], r[1]) for r in rows])
        report["models"][name] = metrics.as_dict()
    report["svm_kernel"] = svm_model.kernel


def _write_report(out_dir, report):
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    lines = ["experiment report", ""]
    lines.append("configuration")
    for key in sorted(report["config"]):
        lines.append("  %s: %s" % (key, report["config"][key]))
    lines.append("")
    lines.append("dataset")
    for key in sorted(report["dataset"]):
        lines.append("  %s: %s" % (key, report["dataset"][key]))
    lines.append("")
    lines.append("%-10s %8s %8s %8s %8s" % ("model", "se", "sp", "acc", "macc"))
    for name in sorted(report["models"]):
        d = report["models"][name]
        m = Metrics(tp=d["tp"], fp=d["fp"], tn=d["tn"], fn=d["fn"],
                    sensitivity=d["sensitivity"], specificity=d["specificity"],
                    accuracy=d["accuracy"], macc=d["macc"])
        lines.append(format_metrics_row(name, m))
    lines.append("")
    if report["unclassifiable"]:
        lines.append("unclassifiable recordings: "
                     + ",".join(report["unclassifiable"]))
    else:
        lines.append("unclassifiable recordings: none")
    lines.append("")
    lines.append(format_reference_table())
    with open(out_dir / "report.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")


def sweep_cycles(config, cycles=VALID_CYCLES):
    """Run the experiment once per cycle count; results land in
    out_dir/cycles_<n> subdirectories."""
    reports = {}
    base_out = Path(config.out_dir)
    for n in cycles:
        sub = ExperimentConfig(
            data_dir=config.data_dir,
            out_dir=str(base_out / ("cycles_%d" % n)),
            n_cycles=n,
            architectures=config.architectures,
            hidden_size=config.hidden_size,
            dense_size=config.dense_size,
            seeds=config.seeds,
            master_seed=config.master_seed,
            batch_size=config.batch_size,
            max_epochs=config.max_epochs,
            initial_lr=config.initial_lr,
            include_baselines=config.include_baselines,
        )
        reports[n] = run_experiment(sub)
    return reports
