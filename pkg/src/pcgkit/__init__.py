"""Heart sound (phonocardiogram) segmentation and classification.

The pipeline: four spectral envelopes at 50 Hz feed a logistic-regression
hidden semi-Markov model that labels S1 / systole / S2 / diastole, heart
cycles are cut at S1 onsets into fixed-cycle segments, MFCCs are computed
per segment, and recurrent networks (or classical baselines) classify each
recording as normal or abnormal by averaging segment posteriors.
"""

from .dataset import (CANONICAL_RATE, Label, ManifestEntry, SignalRecording,
                      load_manifest, load_recording, load_wav, resample,
                      split_dataset, write_wav)
from .envelopes import ObservationSequence, build_observations
from .errors import DataError, UnsegmentableError
from .logistic import fit_logistic, sigmoid
from .segmentation import (DurationModel, HeartState, LrEmissionModel,
                           StateSequence, build_duration_model,
                           emission_likelihood, emission_loglik,
                           estimate_heart_rate, segment_recording,
                           train_emission_lr, viterbi_hsmm)
from .cycles import CycleSegment, extract_cycles
from .mfcc import (FeatureMatrix, MfccConfig, compute_mfcc, mel_filterbank,
                   mfcc_for_segment, read_features, summary_vector,
                   write_features)
from .rnn import (ARCHITECTURES, SequenceClassifier, TrainSchedule,
                  build_classifier, gradient_check, predict_recording, train)
from .baselines import (predict_baseline, train_logreg, train_random_forest,
                        train_svm)
from .metrics import Metrics, compute_metrics
from .experiment import ExperimentConfig, run_experiment, sweep_cycles
from .synthetic import generate_dataset, generate_recording, train_default_emission_model

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES",
    "CANONICAL_RATE",
    "CycleSegment",
    "DataError",
    "DurationModel",
    "ExperimentConfig",
    "FeatureMatrix",
    "HeartState",
    "Label",
    "LrEmissionModel",
    "ManifestEntry",
    "Metrics",
    "MfccConfig",
    "ObservationSequence",
    "SequenceClassifier",
    "SignalRecording",
    "StateSequence",
    "TrainSchedule",
    "UnsegmentableError",
    "build_classifier",
    "build_duration_model",
    "build_observations",
    "compute_metrics",
    "compute_mfcc",
    "emission_likelihood",
    "emission_loglik",
    "estimate_heart_rate",
    "extract_cycles",
    "fit_logistic",
    "generate_dataset",
    "generate_recording",
    "gradient_check",
    "load_manifest",
    "load_recording",
    "load_wav",
    "mel_filterbank",
    "mfcc_for_segment",
    "predict_baseline",
    "predict_recording",
    "read_features",
    "resample",
    "run_experiment",
    "segment_recording",
    "sigmoid",
    "split_dataset",
    "summary_vector",
    "sweep_cycles",
    "train",
    "train_default_emission_model",
    "train_emission_lr",
    "train_logreg",
    "train_random_forest",
    "train_svm",
    "viterbi_hsmm",
    "write_features",
    "write_wav",
]
