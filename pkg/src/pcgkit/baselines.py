"""Classical classifiers over fixed-length segment summary vectors.

All trainers take raw vectors; any feature scaling is the caller's job so
that retraining on a subset never shifts a shared normalization. Labels are
+1 abnormal, -1 normal throughout. Every model exposes segment_scores plus
a decision threshold, and predict_baseline aggregates a recording by the
mean segment score with ties resolved to abnormal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Label
from .logistic import fit_logistic, sigmoid
from .textio import read_document, write_document

LOGREG_RIDGE_GRID = (1e-4, 1e-3, 1e-2, 1e-1)
SVM_C_GRID = (0.1, 1.0, 10.0)
SVM_GAMMA_GRID = (1.0 / 26.0, 0.1, 1.0)
SVM_KERNELS = ("linear", "polynomial", "rbf")
POLY_DEGREE = 3
POLY_COEF0 = 1.0
FOREST_TREES = 100
FOREST_DEPTH = 12
FOREST_FEATURES_PER_NODE = 5


def sign_labels(labels):
    out = np.empty(len(labels), dtype=int)
    for i, v in enumerate(labels):
        if isinstance(v, Label):
            out[i] = 1 if v is Label.ABNORMAL else -1
        else:
            value = int(v)
            if value not in (-1, 1):
                raise ValueError("labels must be +1/-1, got %r" % (v,))
            out[i] = value
    return out


def _require_two_classes(y):
    if len(np.unique(y)) < 2:
        raise ValueError("training data contains a single class")


def _accuracy(pred, y):
    return float(np.mean(pred == y))


# logistic regression

@dataclass
class LogregModel:
    weights: np.ndarray
    ridge: float
    converged: bool
    threshold: float = 0.5
    kind: str = "logreg"

    def segment_scores(self, vectors):
        vectors = np.asarray(vectors, dtype=float)
        return sigmoid(vectors @ self.weights[:-1] + self.weights[-1])

    def predict_segments(self, vectors):
        return np.where(self.segment_scores(vectors) >= self.threshold, 1, -1)


def train_logreg(train_x, train_y, val_x, val_y, ridges=LOGREG_RIDGE_GRID):
    """Ridge-penalized logistic regression; the penalty is picked on the
    validation split by plain accuracy."""
    train_x = np.asarray(train_x, dtype=float)
    val_x = np.asarray(val_x, dtype=float)
    y = sign_labels(train_y)
    yv = sign_labels(val_y)
    _require_two_classes(y)
    targets = (y > 0).astype(float)
    best = None
    for ridge in ridges:
        w, converged = fit_logistic(train_x, targets, ridge=ridge)
        model = LogregModel(weights=w, ridge=ridge, converged=converged)
        acc = _accuracy(model.predict_segments(val_x), yv)
        if best is None or acc > best[0]:
            best = (acc, model)
    return best[1]


# support vector machine

def kernel_matrix(kind, a, b, gamma=None, degree=POLY_DEGREE, coef0=POLY_COEF0):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if kind == "linear":
        return a @ b.T
    if kind == "polynomial":
        return (a @ b.T + coef0) ** degree
    if kind == "rbf":
        if gamma is None:
            raise ValueError("rbf kernel needs gamma")
        sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
              - 2.0 * (a @ b.T))
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError("unknown kernel %r" % (kind,))


def dual_objective(gram, y, alpha):
    """Soft-margin dual value for a candidate alpha (gram is the full
    training kernel matrix)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ gram @ ay)


def _smo_solve(gram, y, c, tol, rng, no_change_sweeps=3, max_sweeps=200):
    n = len(y)
    alpha = np.zeros(n)
    b = 0.0
    f = np.zeros(n)
    quiet = 0
    sweeps = 0
    while quiet < no_change_sweeps and sweeps < max_sweeps:
        sweeps += 1
        changed = 0
        for i in range(n):
            ei = f[i] + b - y[i]
            if not ((y[i] * ei < -tol and alpha[i] < c)
                    or (y[i] * ei > tol and alpha[i] > 0)):
                continue
            j = int(rng.integers(n - 1))
            if j >= i:
                j += 1
            ej = f[j] + b - y[j]
            ai_old, aj_old = alpha[i], alpha[j]
            if y[i] != y[j]:
                lo = max(0.0, aj_old - ai_old)
                hi = min(c, c + aj_old - ai_old)
            else:
                lo = max(0.0, ai_old + aj_old - c)
                hi = min(c, ai_old + aj_old)
            if lo >= hi:
                continue
            eta = 2.0 * gram[i, j] - gram[i, i] - gram[j, j]
            if eta >= 0:
                continue
            aj = aj_old - y[j] * (ei - ej) / eta
            aj = min(hi, max(lo, aj))
            if abs(aj - aj_old) < 1e-5:
                continue
            ai = ai_old + y[i] * y[j] * (aj_old - aj)
            di = y[i] * (ai - ai_old)
            dj = y[j] * (aj - aj_old)
            b1 = b - ei - di * gram[i, i] - dj * gram[i, j]
            b2 = b - ej - di * gram[i, j] - dj * gram[j, j]
            if 0.0 < ai < c:
                new_b = b1
            elif 0.0 < aj < c:
                new_b = b2
            else:
                new_b = 0.5 * (b1 + b2)
            alpha[i] = ai
            alpha[j] = aj
            f += di * gram[i] + dj * gram[j]
            b = new_b
            changed += 1
        quiet = quiet + 1 if changed == 0 else 0
    converged = quiet >= no_change_sweeps
    return alpha, b, converged


@dataclass
class SvmModel:
    kernel: str
    c: float
    gamma: float
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    intercept: float
    converged: bool
    threshold: float = 0.0
    kind: str = "svm"

    def segment_scores(self, vectors):
        k = kernel_matrix(self.kernel, np.asarray(vectors, dtype=float),
                          self.support_vectors, gamma=self.gamma)
        return k @ self.dual_coef + self.intercept

    def predict_segments(self, vectors):
        return np.where(self.segment_scores(vectors) >= self.threshold, 1, -1)


def fit_svm(train_x, train_y, kernel, c, gamma=None, tol=1e-3, seed=0):
    """One SMO solve at fixed hyperparameters."""
    if kernel not in SVM_KERNELS:
        raise ValueError("unknown kernel %r" % (kernel,))
    x = np.asarray(train_x, dtype=float)
    y = sign_labels(train_y).astype(float)
    _require_two_classes(y)
    gram = kernel_matrix(kernel, x, x, gamma=gamma)
    rng = np.random.default_rng(seed)
    alpha, b, converged = _smo_solve(gram, y, c, tol, rng)
    keep = alpha > 1e-8
    if not np.any(keep):
        # degenerate but legal: everything classified by the bias alone
        keep = np.zeros(len(y), dtype=bool)
        keep[0] = True
    return SvmModel(kernel=kernel, c=c, gamma=-1.0 if gamma is None else gamma,
                    support_vectors=x[keep].copy(),
                    dual_coef=(alpha * y)[keep].copy(),
                    intercept=b, converged=converged)


def train_svm(train_x, train_y, val_x, val_y, kernel="rbf", tol=1e-3, seed=0):
    """Grid-searched soft-margin SVM; C (and gamma for the RBF kernel) are
    picked on the validation split."""
    yv = sign_labels(val_y)
    gammas = SVM_GAMMA_GRID if kernel == "rbf" else (None,)
    best = None
    for c in SVM_C_GRID:
        for gamma in gammas:
            model = fit_svm(train_x, train_y, kernel, c, gamma=gamma,
                            tol=tol, seed=seed)
            acc = _accuracy(model.predict_segments(val_x), yv)
            if best is None or acc > best[0]:
                best = (acc, model)
    return best[1]


# random forest

class DecisionTree:
    """Binary CART tree on array storage. feature[i] < 0 marks a leaf whose
    class lives in klass[i]; internal nodes route x[feature] <= threshold to
    left[i], else right[i]."""

    def __init__(self, max_depth=FOREST_DEPTH,
                 features_per_node=FOREST_FEATURES_PER_NODE):
        self.max_depth = max_depth
        self.features_per_node = features_per_node
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.klass = []

    def _add_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.klass.append(1)
        return len(self.feature) - 1

    def _leaf_class(self, y):
        ones = int(np.sum(y))
        zeros = len(y) - ones
        return 1 if ones >= zeros else 0

    def _best_split(self, x, y, rng):
        n_features = x.shape[1]
        n_pick = min(self.features_per_node, n_features)
        candidates = rng.choice(n_features, size=n_pick, replace=False)
        n = len(y)
        best = None
        for f in candidates:
            values = x[:, f]
            order = np.argsort(values, kind="stable")
            sv = values[order]
            sy = y[order]
            distinct = np.nonzero(sv[1:] > sv[:-1])[0] + 1
            if len(distinct) == 0:
                continue
            ones = np.cumsum(sy)
            total_ones = ones[-1]
            ln = distinct.astype(float)
            l1 = ones[distinct - 1].astype(float)
            rn = n - ln
            r1 = total_ones - l1
            pl = l1 / ln
            pr = r1 / rn
            score = (ln * 2.0 * pl * (1.0 - pl) + rn * 2.0 * pr * (1.0 - pr)) / n
            k = int(np.argmin(score))
            cand = (float(score[k]), int(f),
                    0.5 * (sv[distinct[k] - 1] + sv[distinct[k]]))
            if best is None or cand[0] < best[0]:
                best = cand
        return best

    def fit(self, x, y, rng):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=int)
        self._grow(x, y, rng, depth=0)
        self.feature = np.asarray(self.feature, dtype=int)
        self.threshold = np.asarray(self.threshold, dtype=float)
        self.left = np.asarray(self.left, dtype=int)
        self.right = np.asarray(self.right, dtype=int)
        self.klass = np.asarray(self.klass, dtype=int)
        return self

    def _grow(self, x, y, rng, depth):
        node = self._add_node()
        if (depth >= self.max_depth or len(y) < 2
                or len(np.unique(y)) == 1):
            self.klass[node] = self._leaf_class(y)
            return node
        split = self._best_split(x, y, rng)
        if split is None:
            self.klass[node] = self._leaf_class(y)
            return node
        _, f, thr = split
        mask = x[:, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self._grow(x[mask], y[mask], rng, depth + 1)
        self.right[node] = self._grow(x[~mask], y[~mask], rng, depth + 1)
        return node

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        node = np.zeros(len(x), dtype=int)
        for _ in range(self.max_depth + 1):
            feat = self.feature[node]
            active = feat >= 0
            if not np.any(active):
                break
            idx = np.nonzero(active)[0]
            go_left = x[idx, feat[active]] <= self.threshold[node[active]]
            node[idx] = np.where(go_left, self.left[node[active]],
                                 self.right[node[active]])
        return self.klass[node]


@dataclass
class ForestModel:
    trees: list = field(default_factory=list)
    oob_score: float = -1.0
    threshold: float = 0.5
    kind: str = "forest"

    def tree_votes(self, vectors):
        return np.stack([tree.predict(vectors) for tree in self.trees])

    def segment_scores(self, vectors):
        return self.tree_votes(vectors).mean(axis=0)

    def predict_segments(self, vectors):
        return np.where(self.segment_scores(vectors) >= self.threshold, 1, -1)


def train_random_forest(train_x, train_y, n_trees=FOREST_TREES,
                        max_depth=FOREST_DEPTH,
                        features_per_node=FOREST_FEATURES_PER_NODE, seed=0):
    x = np.asarray(train_x, dtype=float)
    y = sign_labels(train_y)
    _require_two_classes(y)
    y01 = (y > 0).astype(int)
    n = len(y01)
    children = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    in_bag = np.zeros((n_trees, n), dtype=bool)
    for t in range(n_trees):
        rng = np.random.default_rng(children[t])
        picks = rng.integers(0, n, size=n)
        in_bag[t, picks] = True
        tree = DecisionTree(max_depth=max_depth,
                            features_per_node=features_per_node)
        tree.fit(x[picks], y01[picks], rng)
        trees.append(tree)
    model = ForestModel(trees=trees)
    votes = model.tree_votes(x)
    hits = 0
    covered = 0
    for i in range(n):
        out = ~in_bag[:, i]
        if not np.any(out):
            continue
        covered += 1
        pred = 1 if votes[out, i].mean() >= 0.5 else 0
        hits += int(pred == y01[i])
    model.oob_score = hits / covered if covered else -1.0
    return model


# shared prediction and persistence

def predict_baseline(model, vectors):
    """Recording-level decision: mean of the per-segment scores against the
    model's threshold, ties to abnormal. Returns (None, None) when the
    recording produced no segments."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.size == 0:
        return None, None
    score = float(np.mean(model.segment_scores(vectors)))
    label = Label.ABNORMAL if score >= model.threshold else Label.NORMAL
    return label, score


def save_baseline(path, model):
    if model.kind == "logreg":
        meta = {"model": "logreg", "ridge": model.ridge,
                "converged": int(model.converged)}
        arrays = {"weights": model.weights}
    elif model.kind == "svm":
        meta = {"model": "svm", "kernel": model.kernel, "c": model.c,
                "gamma": model.gamma, "converged": int(model.converged)}
        arrays = {"support_vectors": model.support_vectors,
                  "dual_coef": model.dual_coef,
                  "intercept": np.array([model.intercept])}
    elif model.kind == "forest":
        meta = {"model": "forest", "n_trees": len(model.trees),
                "oob_score": model.oob_score}
        arrays = {}
        for t, tree in enumerate(model.trees):
            prefix = "tree%03d." % t
            arrays[prefix + "feature"] = tree.feature.astype(float)
            arrays[prefix + "threshold"] = tree.threshold
            arrays[prefix + "left"] = tree.left.astype(float)
            arrays[prefix + "right"] = tree.right.astype(float)
            arrays[prefix + "klass"] = tree.klass.astype(float)
    else:
        raise ValueError("unknown model kind %r" % (model.kind,))
    write_document(path, "baseline-model", meta, arrays)


def load_baseline(path):
    meta, arrays = read_document(path, "baseline-model")
    model_type = meta["model"]
    if model_type == "logreg":
        return LogregModel(weights=arrays["weights"],
                           ridge=float(meta["ridge"]),
                           converged=bool(int(meta["converged"])))
    if model_type == "svm":
        gamma = float(meta["gamma"])
        return SvmModel(kernel=meta["kernel"], c=float(meta["c"]),
                        gamma=gamma,
                        support_vectors=np.atleast_2d(arrays["support_vectors"]),
                        dual_coef=np.atleast_1d(arrays["dual_coef"]),
                        intercept=float(arrays["intercept"][0]),
                        converged=bool(int(meta["converged"])))
    if model_type == "forest":
        trees = []
        for t in range(int(meta["n_trees"])):
            prefix = "tree%03d." % t
            tree = DecisionTree()
            tree.feature = arrays[prefix + "feature"].astype(int)
            tree.threshold = np.atleast_1d(arrays[prefix + "threshold"])
            tree.left = arrays[prefix + "left"].astype(int)
            tree.right = arrays[prefix + "right"].astype(int)
            tree.klass = arrays[prefix + "klass"].astype(int)
            trees.append(tree)
        return ForestModel(trees=trees, oob_score=float(meta["oob_score"]))
    raise ValueError("unknown model type %r" % (model_type,))
