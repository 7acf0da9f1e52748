"""Sequence classifier: two recurrent layers, dense + batch-norm head,
softmax over two classes (index 0 normal, index 1 abnormal).

The recurrent core runs batched when every segment in a batch has the same
frame count and sample-by-sample otherwise; batch normalization always
couples the whole batch at the head. `loss_on_batch` and
`backward_gradients` are pure (running statistics untouched) so they can be
checked against finite differences; only the trainer updates running stats.
"""

from __future__ import annotations

import numpy as np

from ..dataset import Label
from ..textio import read_document, write_document
from .cells import BidirectionalLayer, GruCell, LstmCell, UnidirectionalLayer, glorot

ARCHITECTURES = ("lstm", "gru", "blstm", "bigru")
BN_EPS = 1e-5
BN_MOMENTUM = 0.99
N_CLASSES = 2


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _make_cell(kind, input_size, hidden, rng, prefix):
    if kind in ("lstm", "blstm"):
        return LstmCell(input_size, hidden, rng, prefix)
    return GruCell(input_size, hidden, rng, prefix)


class SequenceClassifier:
    """Two stacked recurrent layers feeding a dense/batch-norm/softmax head.

    Pass rng=None for an all-zero parameter set (useful as a fixed point in
    tests); otherwise weights are Glorot-uniform draws from the given
    generator.
    """

    def __init__(self, architecture, input_size=13, hidden_size=64,
                 dense_size=32, rng=None, mean_pool=False):
        architecture = architecture.lower()
        if architecture not in ARCHITECTURES:
            raise ValueError("unknown architecture %r" % (architecture,))
        self.architecture = architecture
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.dense_size = dense_size
        self.mean_pool = bool(mean_pool)
        bidirectional = architecture.startswith("b")
        self.layers = []
        feed = input_size
        for idx in (1, 2):
            if bidirectional:
                fwd = _make_cell(architecture, feed, hidden_size, rng,
                                 "l%d.fwd" % idx)
                bwd = _make_cell(architecture, feed, hidden_size, rng,
                                 "l%d.bwd" % idx)
                layer = BidirectionalLayer(fwd, bwd)
            else:
                layer = UnidirectionalLayer(
                    _make_cell(architecture, feed, hidden_size, rng,
                               "l%d" % idx))
            self.layers.append(layer)
            feed = layer.output_size
        self.readout_size = feed
        if rng is None:
            self.dense_w = np.zeros((feed, dense_size))
            self.out_w = np.zeros((dense_size, N_CLASSES))
        else:
            self.dense_w = glorot(rng, (feed, dense_size))
            self.out_w = glorot(rng, (dense_size, N_CLASSES))
        self.dense_b = np.zeros(dense_size)
        self.out_b = np.zeros(N_CLASSES)
        self.bn_gamma = np.ones(dense_size)
        self.bn_beta = np.zeros(dense_size)
        self.run_mean = np.zeros(dense_size)
        self.run_var = np.ones(dense_size)
        self.feature_mean = np.zeros(input_size)
        self.feature_std = np.ones(input_size)
        self.seed = -1
        self.epochs_run = 0

    # parameters

    def params(self):
        """Trainable tensors in a stable order (running stats excluded)."""
        out = {}
        for layer in self.layers:
            out.update(layer.params())
        out["dense.w"] = self.dense_w
        out["dense.b"] = self.dense_b
        out["bn.gamma"] = self.bn_gamma
        out["bn.beta"] = self.bn_beta
        out["out.w"] = self.out_w
        out["out.b"] = self.out_b
        return out

    def set_normalization(self, mean, std):
        self.feature_mean = np.asarray(mean, dtype=float).copy()
        self.feature_std = np.asarray(std, dtype=float).copy()

    def normalize(self, features):
        return (np.asarray(features, dtype=float) - self.feature_mean) / self.feature_std

    # forward paths

    def _recurrent_rows(self, inputs):
        """Run normalized (T, d) matrices through both layers.

        Returns readout rows (B, readout_size) and per-sample caches. A
        single batched pass is used when all lengths agree.
        """
        lengths = {m.shape[0] for m in inputs}
        if len(lengths) == 1:
            x = np.stack(inputs)
            caches = []
            h = x
            for layer in self.layers:
                h, cache = layer.forward(h)
                caches.append(cache)
            rows = h.mean(axis=1) if self.mean_pool else h[:, -1, :]
            return rows, [("batched", caches, h.shape)]
        rows = np.empty((len(inputs), self.readout_size))
        all_caches = []
        for i, m in enumerate(inputs):
            h = m[None, :, :]
            caches = []
            for layer in self.layers:
                h, cache = layer.forward(h)
                caches.append(cache)
            rows[i] = h[0].mean(axis=0) if self.mean_pool else h[0, -1, :]
            all_caches.append(("single", caches, h.shape))
        return rows, all_caches

    def _recurrent_backward(self, drows, run_caches, grads):
        def push(dh, caches):
            d = dh
            for layer, cache in zip(reversed(self.layers), reversed(caches)):
                d, layer_grads = layer.backward(d, cache)
                for key, g in layer_grads.items():
                    if key in grads:
                        grads[key] += g
                    else:
                        grads[key] = g

        if run_caches[0][0] == "batched":
            _, caches, shape = run_caches[0]
            B, T, H = shape
            dh = np.zeros(shape)
            if self.mean_pool:
                dh += drows[:, None, :] / T
            else:
                dh[:, -1, :] = drows
            push(dh, caches)
        else:
            for i, (_, caches, shape) in enumerate(run_caches):
                _, T, H = shape
                dh = np.zeros(shape)
                if self.mean_pool:
                    dh[0] = drows[i] / T
                else:
                    dh[0, -1, :] = drows[i]
                push(dh, caches)

    def _head_forward(self, rows, training):
        z = rows @ self.dense_w + self.dense_b
        if training:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
        else:
            mu = self.run_mean
            var = self.run_var
        xhat = (z - mu) / np.sqrt(var + BN_EPS)
        act = np.tanh(self.bn_gamma * xhat + self.bn_beta)
        logits = act @ self.out_w + self.out_b
        post = softmax(logits)
        cache = (rows, z, mu, var, xhat, act, post)
        return post, cache

    def _head_backward(self, dlogits, cache, grads):
        rows, z, mu, var, xhat, act, _ = cache
        B = rows.shape[0]
        grads["out.w"] = act.T @ dlogits
        grads["out.b"] = dlogits.sum(axis=0)
        dact = dlogits @ self.out_w.T
        dy = dact * (1.0 - act ** 2)
        grads["bn.gamma"] = (dy * xhat).sum(axis=0)
        grads["bn.beta"] = dy.sum(axis=0)
        dxhat = dy * self.bn_gamma
        inv = 1.0 / np.sqrt(var + BN_EPS)
        dz = (inv / B) * (B * dxhat - dxhat.sum(axis=0)
                          - xhat * (dxhat * xhat).sum(axis=0))
        grads["dense.w"] = rows.T @ dz
        grads["dense.b"] = dz.sum(axis=0)
        return dz @ self.dense_w.T

    # public API

    def forward_classify(self, features):
        """Posterior over (normal, abnormal) for one segment's feature
        matrix, using running batch-norm statistics."""
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[0] < 2:
            raise ValueError("need a (frames, coeffs) matrix with at least 2 frames")
        if features.shape[1] != self.input_size:
            raise ValueError("expected %d feature columns, got %d"
                             % (self.input_size, features.shape[1]))
        rows, _ = self._recurrent_rows([self.normalize(features)])
        post, _ = self._head_forward(rows, training=False)
        return post[0]

    def _loss_forward(self, segments, labels, training=True):
        if len(segments) == 0:
            raise ValueError("empty batch")
        if len(segments) != len(labels):
            raise ValueError("segment/label count mismatch")
        inputs = [self.normalize(s) for s in segments]
        rows, run_caches = self._recurrent_rows(inputs)
        post, head_cache = self._head_forward(rows, training=training)
        idx = np.asarray(labels, dtype=int)
        probs = post[np.arange(len(idx)), idx]
        loss = float(-np.mean(np.log(np.maximum(probs, 1e-300))))
        return loss, post, rows, run_caches, head_cache

    def loss_on_batch(self, segments, labels):
        """Mean cross-entropy over a batch, batch statistics in the head.
        Pure: no running-stat updates."""
        loss, post, _, _, _ = self._loss_forward(segments, labels)
        return loss, post

    def backward_gradients(self, segments, labels):
        """Exact gradients of the mean cross-entropy. Pure."""
        loss, grads, _, _ = self._backward_full(segments, labels)
        return loss, grads

    def _backward_full(self, segments, labels):
        loss, post, rows, run_caches, head_cache = self._loss_forward(
            segments, labels)
        B = len(segments)
        idx = np.asarray(labels, dtype=int)
        dlogits = post.copy()
        dlogits[np.arange(B), idx] -= 1.0
        dlogits /= B
        grads = {}
        drows = self._head_backward(dlogits, head_cache, grads)
        self._recurrent_backward(drows, run_caches, grads)
        mu, var = head_cache[2], head_cache[3]
        return loss, grads, (mu, var), post

    def update_running_stats(self, mu, var):
        self.run_mean = BN_MOMENTUM * self.run_mean + (1.0 - BN_MOMENTUM) * mu
        self.run_var = BN_MOMENTUM * self.run_var + (1.0 - BN_MOMENTUM) * var

    # persistence

    def state_arrays(self):
        arrays = dict(self.params())
        arrays["bn.run_mean"] = self.run_mean
        arrays["bn.run_var"] = self.run_var
        arrays["norm.mean"] = self.feature_mean
        arrays["norm.std"] = self.feature_std
        return arrays

    def load_state_arrays(self, arrays):
        params = self.params()
        for name, value in arrays.items():
            if name in params:
                target = params[name]
                if target.shape != value.shape:
                    raise ValueError("shape mismatch for %s" % name)
                target[...] = value
        self.run_mean = arrays["bn.run_mean"].copy()
        self.run_var = arrays["bn.run_var"].copy()
        self.feature_mean = arrays["norm.mean"].copy()
        self.feature_std = arrays["norm.std"].copy()

    def save(self, path):
        meta = {
            "architecture": self.architecture,
            "input_size": self.input_size,
            "hidden_size": self.hidden_size,
            "dense_size": self.dense_size,
            "mean_pool": int(self.mean_pool),
            "seed": self.seed,
            "epochs_run": self.epochs_run,
        }
        write_document(path, "sequence-classifier", meta, self.state_arrays())

    @classmethod
    def load(cls, path):
        meta, arrays = read_document(path, "sequence-classifier")
        model = cls(meta["architecture"], input_size=int(meta["input_size"]),
                    hidden_size=int(meta["hidden_size"]),
                    dense_size=int(meta["dense_size"]),
                    mean_pool=bool(int(meta["mean_pool"])))
        model.load_state_arrays(arrays)
        model.seed = int(meta["seed"])
        model.epochs_run = int(meta["epochs_run"])
        return model


def build_classifier(architecture, input_size=13, hidden_size=64,
                     dense_size=32, seed=0, mean_pool=False):
    rng = np.random.default_rng(seed)
    model = SequenceClassifier(architecture, input_size=input_size,
                               hidden_size=hidden_size, dense_size=dense_size,
                               rng=rng, mean_pool=mean_pool)
    model.seed = int(seed)
    return model


def predict_recording(models, feature_matrices):
    """Average forward_classify posteriors over all segments of a recording
    and all ensemble models. Ties go to abnormal; zero segments means the
    recording cannot be classified and (None, None) is returned."""
    if not models:
        raise ValueError("need at least one model")
    if not feature_matrices:
        return None, None
    posts = [model.forward_classify(f)
             for model in models for f in feature_matrices]
    post = np.mean(np.stack(posts), axis=0)
    label = Label.ABNORMAL if post[1] >= post[0] else Label.NORMAL
    return label, post
