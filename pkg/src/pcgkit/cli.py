"""Command-line entry points.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors (unreadable,
malformed, or unsegmentable input). The optional PCGKIT_DATA_ROOT
environment variable supplies a default --data directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines as bl
from .cycles import extract_cycles
from .dataset import (CANONICAL_RATE, Label, SignalRecording, load_manifest,
                      load_recording, load_wav, resample, split_dataset)
from .errors import DataError
from .experiment import ExperimentConfig, run_experiment
from .metrics import compute_metrics, format_metrics_row
from .mfcc import FeatureMatrix, mfcc_for_segment, summary_vector, write_features
from .rnn import SequenceClassifier, TrainSchedule, build_classifier, predict_recording, train
from .segmentation import LrEmissionModel, segment_recording, write_state_intervals
from .synthetic import generate_dataset, train_default_emission_model
from .textio import document_kind, read_document


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write("%s: error: %s\n" % (self.prog, message))
        raise _UsageError(message)


def _data_dir(args):
    directory = getattr(args, "data", None) or os.environ.get("PCGKIT_DATA_ROOT")
    if not directory:
        raise _UsageError("no data directory: pass --data or set PCGKIT_DATA_ROOT")
    return directory


def _emission_model(args):
    path = getattr(args, "emission", None)
    if path:
        return LrEmissionModel.load(path)
    return train_default_emission_model(seed=0)


def _load_recording_file(path):
    samples, rate = load_wav(path)
    rec_id = Path(path).stem
    rec = SignalRecording(recording_id=rec_id, samples=samples, rate=rate)
    if rate != CANONICAL_RATE:
        resampled = resample(rec.samples, rate, CANONICAL_RATE)
        rec = SignalRecording(recording_id=rec_id,
                              samples=np.clip(resampled, -1.0, 1.0),
                              rate=CANONICAL_RATE)
    return rec


def _cmd_segment(args):
    model = _emission_model(args)
    recording = _load_recording_file(args.wav)
    sequence = segment_recording(recording, model)
    out = args.out or (args.wav + ".segments.csv")
    write_state_intervals(out, sequence.intervals())
    onsets = sequence.s1_onsets
    print("%s: %d full cycles detected, intervals written to %s"
          % (recording.recording_id, max(len(onsets) - 1, 0), out))
    return 0


def _segments_and_features(entries, emission, n_cycles):
    """(recording_id, label, matrices, summaries) per entry; empty lists are
    kept so callers can report unclassifiable recordings."""
    out = []
    for entry in entries:
        recording = load_recording(entry)
        try:
            sequence = segment_recording(recording, emission)
        except DataError:
            out.append((entry.recording_id, entry.label, [], []))
            continue
        segments = extract_cycles(recording, sequence, n_cycles)
        mats = []
        sums = []
        for segment in segments:
            segment.label = entry.label
            feats = mfcc_for_segment(segment)
            mats.append(feats.values)
            sums.append(summary_vector(feats.values))
        out.append((entry.recording_id, entry.label, mats, sums))
    return out


def _cmd_featurize(args):
    emission = _emission_model(args)
    entries = load_manifest(args.dir)
    if not entries:
        raise DataError("no usable recordings in %s" % args.dir)
    records = []
    skipped = []
    for rid, label, mats, _ in _segments_and_features(entries, emission, args.cycles):
        if not mats:
            skipped.append(rid)
        for k, values in enumerate(mats):
            records.append(FeatureMatrix("%s:%03d" % (rid, k), values, label))
    write_features(args.out, records)
    print("wrote %d segment feature matrices from %d recordings to %s"
          % (len(records), len(entries) - len(skipped), args.out))
    if skipped:
        print("skipped (unsegmentable or too short): %s" % ",".join(skipped))
    return 0


def _cmd_train(args):
    emission = _emission_model(args)
    entries = load_manifest(_data_dir(args))
    if not entries:
        raise DataError("no usable recordings")
    split = split_dataset(entries, seed=args.seed)
    train_items = _segments_and_features(split.train, emission, args.cycles)
    val_items = _segments_and_features(split.validation, emission, args.cycles)
    train_mats = [m for _, lab, mats, _ in train_items for m in mats]
    train_labels = [lab for _, lab, mats, _ in train_items for _m in mats]
    val_mats = [m for _, lab, mats, _ in val_items for m in mats]
    val_labels = [lab for _, lab, mats, _ in val_items for _m in mats]
    if not train_mats or not val_mats:
        raise DataError("not enough segmentable recordings to train")
    model = build_classifier(args.arch, hidden_size=args.hidden,
                             dense_size=args.dense, seed=args.seed)
    schedule = TrainSchedule(max_epochs=args.epochs, batch_size=args.batch,
                             seed=args.seed)
    history = train(model, train_mats, train_labels, val_mats, val_labels,
                    schedule)
    model.save(args.out)
    best = max(h.val_acc for h in history)
    print("trained %s for %d epochs, best validation accuracy %.4f, model "
          "written to %s" % (args.arch, len(history), best, args.out))
    return 0


def _load_any_model(path):
    kind = document_kind(path)
    if kind == "sequence-classifier":
        return "rnn", SequenceClassifier.load(path)
    if kind == "baseline-model":
        return "baseline", bl.load_baseline(path)
    raise DataError("%s: not a model file (kind %r)" % (path, kind))


def _baseline_norm(args):
    path = getattr(args, "norm", None)
    if not path:
        return None, None
    _, arrays = read_document(path, "feature-norm")
    return arrays["mean"], arrays["std"]


def _cmd_evaluate(args):
    model_type, model = _load_any_model(args.model)
    emission = _emission_model(args)
    entries = load_manifest(_data_dir(args))
    if not entries:
        raise DataError("no usable recordings")
    mean, std = _baseline_norm(args)
    pairs = []
    unclassifiable = []
    for rid, truth, mats, sums in _segments_and_features(entries, emission,
                                                         args.cycles):
        if not mats:
            unclassifiable.append(rid)
            continue
        if model_type == "rnn":
            label, _ = predict_recording([model], mats)
        else:
            vectors = np.asarray(sums)
            if mean is not None:
                vectors = (vectors - mean) / std
            label, _ = bl.predict_baseline(model, vectors)
        pairs.append((label, truth))
    if not pairs:
        raise DataError("no classifiable recordings")
    metrics = compute_metrics(pairs)
    print("%-10s %8s %8s %8s %8s" % ("model", "se", "sp", "acc", "macc"))
    print(format_metrics_row(model_type, metrics))
    if unclassifiable:
        print("unclassifiable: %s" % ",".join(unclassifiable))
    return 0


def _cmd_predict(args):
    model_type, model = _load_any_model(args.model)
    emission = _emission_model(args)
    recording = _load_recording_file(args.wav)
    sequence = segment_recording(recording, emission)
    segments = extract_cycles(recording, sequence, args.cycles)
    if not segments:
        raise DataError("%s: too few heart cycles for a %d-cycle segment"
                        % (recording.recording_id, args.cycles))
    mats = []
    sums = []
    for segment in segments:
        feats = mfcc_for_segment(segment)
        mats.append(feats.values)
        sums.append(summary_vector(feats.values))
    if model_type == "rnn":
        label, post = predict_recording([model], mats)
        print("%s: %s posterior_normal %.6f posterior_abnormal %.6f"
              % (recording.recording_id, label.name.lower(), post[0], post[1]))
    else:
        mean, std = _baseline_norm(args)
        vectors = np.asarray(sums)
        if mean is not None:
            vectors = (vectors - mean) / std
        label, score = bl.predict_baseline(model, vectors)
        print("%s: %s score %.6f" % (recording.recording_id,
                                     label.name.lower(), score))
    return 0


def _cmd_experiment(args):
    config = ExperimentConfig.from_file(args.config)
    if args.data:
        config.data_dir = args.data
    if args.out:
        config.out_dir = args.out
    report = run_experiment(config)
    print("experiment complete; report in %s" % config.out_dir)
    for name in sorted(report["models"]):
        print("  %s accuracy %.4f" % (name, report["models"][name]["accuracy"]))
    return 0


def _cmd_synth(args):
    entries = generate_dataset(args.out, args.n, seed=args.seed,
                               abnormal_fraction=args.abnormal_fraction,
                               duration_s=args.duration)
    n_abnormal = sum(1 for e in entries if e.label is Label.ABNORMAL)
    print("wrote %d synthetic recordings (%d abnormal) to %s"
          % (len(entries), n_abnormal, args.out))
    return 0


def build_parser():
    parser = _Parser(prog="pcgkit",
                     description="heart sound segmentation and classification")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("segment", help="segment one recording into heart sound states")
    p.add_argument("wav")
    p.add_argument("--out")
    p.add_argument("--emission", help="emission model file (default: built-in)")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("featurize", help="extract per-segment MFCC features for a dataset")
    p.add_argument("dir")
    p.add_argument("--out", default="features.bin")
    p.add_argument("--cycles", type=int, default=5)
    p.add_argument("--emission")
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("train", help="train one recurrent classifier")
    p.add_argument("--arch", required=True, choices=["lstm", "gru", "blstm", "bigru"])
    p.add_argument("--cycles", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data")
    p.add_argument("--out", default="model.txt")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--dense", type=int, default=32)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--emission")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a model file over a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data")
    p.add_argument("--cycles", type=int, default=5)
    p.add_argument("--emission")
    p.add_argument("--norm", help="feature normalization file for baseline models")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="classify one recording")
    p.add_argument("wav")
    p.add_argument("--model", required=True)
    p.add_argument("--cycles", type=int, default=5)
    p.add_argument("--emission")
    p.add_argument("--norm")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("experiment", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--abnormal-fraction", type=float, default=0.5)
    p.add_argument("--duration", type=float, default=11.0)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except _UsageError:
        return 1
    except DataError as exc:
        sys.stderr.write("data error: %s\n" % exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
