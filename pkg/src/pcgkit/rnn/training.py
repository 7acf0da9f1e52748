"""Mini-batch training with Adam moments and plateau learning-rate halving.

Schedule semantics: after every epoch the validation accuracy is compared
with the best seen so far; five consecutive epochs without strict
improvement halve the learning rate, and training stops once the rate
falls below min_lr or the epoch cap is hit. The first epoch establishes
the baseline and counts as a non-improving epoch, so on a fully stagnant
run the halvings land after epochs 5, 10, 15, ... The returned model
carries the parameters of the best validation epoch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import Label

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
PLATEAU_PATIENCE = 5


@dataclass
class TrainSchedule:
    initial_lr: float = 0.002
    min_lr: float = 1e-5
    max_epochs: int = 100
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.min_lr < self.initial_lr:
            raise ValueError("min_lr must be below initial_lr")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_acc: float

    def format_line(self):
        return "epoch %3d lr %.8f train_loss %.6f train_acc %.4f val_acc %.4f" % (
            self.epoch, self.lr, self.train_loss, self.train_acc, self.val_acc)


def class_index(label):
    """Map a Label (or a raw -1/+1/0/1 int) onto class index 0=normal,
    1=abnormal."""
    if isinstance(label, Label):
        return 1 if label is Label.ABNORMAL else 0
    value = int(label)
    if value in (1,):
        return 1
    if value in (-1, 0):
        return 0
    raise ValueError("cannot interpret label %r" % (label,))


def _as_indices(labels):
    return np.array([class_index(v) for v in labels], dtype=int)


def pooled_feature_stats(feature_matrices):
    rows = np.concatenate([np.asarray(m, dtype=float) for m in feature_matrices])
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


def batch_accuracy(post, idx):
    pred = (post[:, 1] >= post[:, 0]).astype(int)
    return float(np.mean(pred == idx))


def evaluate_accuracy(model, segments, labels):
    """Segment-level accuracy with inference-mode batch norm."""
    idx = _as_indices(labels)
    _, post, _, _, _ = model._loss_forward(segments, idx, training=False)
    return batch_accuracy(post, idx)


def snapshot_state(model):
    return {name: arr.copy() for name, arr in model.state_arrays().items()}


def restore_state(model, snapshot):
    model.load_state_arrays({k: v.copy() for k, v in snapshot.items()})


class AdamState:
    def __init__(self, params):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1.0 - ADAM_BETA1 ** self.t
        c2 = 1.0 - ADAM_BETA2 ** self.t
        for key, p in params.items():
            g = grads[key]
            m = self.m[key]
            v = self.v[key]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def train(model, train_segments, train_labels, val_segments, val_labels,
          schedule=None):
    """Train in place; returns the per-epoch history. The model ends up
    holding the parameters (and running statistics) of the epoch with the
    best validation accuracy."""
    if schedule is None:
        schedule = TrainSchedule()
    if len(train_segments) == 0:
        raise ValueError("empty training set")
    if len(val_segments) == 0:
        raise ValueError("empty validation set")
    train_idx = _as_indices(train_labels)
    if len(set(train_idx.tolist())) < 2:
        raise ValueError("training set contains a single class")

    mean, std = pooled_feature_stats(train_segments)
    model.set_normalization(mean, std)

    rng = np.random.default_rng(schedule.seed)
    params = model.params()
    adam = AdamState(params)
    lr = schedule.initial_lr
    best_acc = None
    best_snapshot = snapshot_state(model)
    bad_epochs = 0
    history = []
    n = len(train_segments)

    for epoch in range(1, schedule.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        epoch_hits = 0.0
        for start in range(0, n, schedule.batch_size):
            take = order[start:start + schedule.batch_size]
            segs = [train_segments[i] for i in take]
            idx = train_idx[take]
            loss, grads, (mu, var), post = model._backward_full(segs, idx)
            model.update_running_stats(mu, var)
            adam.step(params, grads, lr)
            epoch_loss += loss * len(take)
            # train accuracy logged from each batch's pre-update forward
            epoch_hits += batch_accuracy(post, idx) * len(take)
        train_loss = epoch_loss / n
        train_acc = epoch_hits / n
        val_acc = evaluate_accuracy(model, val_segments, val_labels)

        improved = best_acc is not None and val_acc > best_acc
        if best_acc is None or val_acc > best_acc:
            best_acc = val_acc
            best_snapshot = snapshot_state(model)
        bad_epochs = 0 if improved else bad_epochs + 1

        history.append(EpochLog(epoch, lr, train_loss, train_acc, val_acc))

        if bad_epochs >= PLATEAU_PATIENCE:
            lr *= 0.5
            bad_epochs = 0
            if lr < schedule.min_lr:
                break

    restore_state(model, best_snapshot)
    model.epochs_run = len(history)
    return history


def write_training_log(path, history):
    with open(path, "w") as fh:
        for entry in history:
            fh.write(entry.format_line() + "\n")


def gradient_check(model, segments, labels, step=1e-5, skip_below=1e-8):
    """Largest relative disagreement between analytic gradients and central
    finite differences over every trainable scalar. Entries where both
    gradients are below skip_below count as zero error."""
    idx = _as_indices(labels)
    _, grads = model.backward_gradients(segments, idx)
    params = model.params()
    worst = 0.0
    for key, p in params.items():
        g = grads.get(key)
        if g is None:
            raise AssertionError("missing gradient for %s" % key)
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + step
            up, _ = model.loss_on_batch(segments, idx)
            flat[j] = keep - step
            down, _ = model.loss_on_batch(segments, idx)
            flat[j] = keep
            fd = (up - down) / (2.0 * step)
            ga = gflat[j]
            denom = max(abs(ga), abs(fd))
            if denom < skip_below:
                continue
            worst = max(worst, abs(ga - fd) / denom)
    return worst
