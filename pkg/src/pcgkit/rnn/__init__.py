"""From-scratch recurrent sequence classifiers (LSTM, GRU and their
bidirectional variants) with hand-derived backpropagation through time."""

from .cells import BidirectionalLayer, GruCell, LstmCell, UnidirectionalLayer
from .network import (ARCHITECTURES, SequenceClassifier, build_classifier,
                      predict_recording, softmax)
from .training import (EpochLog, TrainSchedule, evaluate_accuracy,
                       gradient_check, pooled_feature_stats, train,
                       write_training_log)

__all__ = [
    "ARCHITECTURES",
    "BidirectionalLayer",
    "EpochLog",
    "GruCell",
    "LstmCell",
    "SequenceClassifier",
    "TrainSchedule",
    "UnidirectionalLayer",
    "build_classifier",
    "evaluate_accuracy",
    "gradient_check",
    "pooled_feature_stats",
    "predict_recording",
    "softmax",
    "train",
    "write_training_log",
]
