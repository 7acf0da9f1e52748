"""Heart-sound segmentation with a logistic-regression-emission HSMM.

The four heart states cycle in fixed order S1 -> systole -> S2 -> diastole.
Per-state one-vs-all logistic regressions turn envelope observations into
posteriors; Bayes' rule converts them to emission likelihoods

    b_j(O_t) = P(state j | O_t) * p(O_t) / P(state j)

with p(O_t) a single multivariate Gaussian over all training observations.
State durations are discretized Gaussians whose means follow the estimated
heart rate, and decoding maximizes the summed emission and duration
log-densities with an explicit-duration Viterbi pass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .envelopes import OBSERVATION_RATE, build_observations
from .errors import DataError, UnsegmentableError
from .logistic import fit_logistic, log_sigmoid, sigmoid
from . import textio

log = logging.getLogger(__name__)

N_STATES = 4
STATE_NAMES = ("S1", "systole", "S2", "diastole")
NEXT_STATE = (1, 2, 3, 0)
PREV_STATE = (3, 0, 1, 2)

S1_MEAN_S = 0.122
S2_MEAN_S = 0.092
DURATION_STD_FRACTION = 0.25
MAX_DURATION_STDS = 3.5

HR_MIN_LAG_S = 0.24
HR_MAX_LAG_S = 2.0
HR_NOISE_FLOOR = 0.15
SYSTOLE_MIN_LAG_S = 0.15
MIN_ONSET_GAP_STEPS = 12


class HeartState(IntEnum):
    S1 = 0
    SYSTOLE = 1
    S2 = 2
    DIASTOLE = 3


@dataclass
class HeartRateEstimate:
    bpm: float
    systole_fraction: float

    def __iter__(self):
        # unpacks as (bpm, systole_fraction)
        yield self.bpm
        yield self.systole_fraction


@dataclass
class LrEmissionModel:
    """One-vs-all logistic emissions plus the shared observation Gaussian."""

    weights: np.ndarray        # 4 x 5, last column is the bias
    prior: np.ndarray          # 4
    gauss_mean: np.ndarray     # 4
    gauss_cov: np.ndarray      # 4 x 4
    feature_mean: np.ndarray   # 4
    feature_std: np.ndarray    # 4
    converged: np.ndarray      # 4 bools, per-state IRLS convergence
    obs_rate: int = OBSERVATION_RATE

    def normalize(self, values):
        return (np.asarray(values, dtype=np.float64) - self.feature_mean) / self.feature_std

    def save(self, path):
        meta = {"obs_rate": self.obs_rate,
                "states": ",".join(STATE_NAMES),
                "converged": ",".join(str(int(c)) for c in self.converged)}
        arrays = {"weights": self.weights, "prior": self.prior,
                  "gauss_mean": self.gauss_mean, "gauss_cov": self.gauss_cov,
                  "feature_mean": self.feature_mean, "feature_std": self.feature_std}
        textio.write_document(path, "emission-model", meta, arrays)

    @classmethod
    def load(cls, path):
        meta, arrays = textio.read_document(path, "emission-model")
        converged = np.array([bool(int(tok)) for tok in meta["converged"].split(",")])
        return cls(arrays["weights"], arrays["prior"], arrays["gauss_mean"],
                   arrays["gauss_cov"], arrays["feature_mean"], arrays["feature_std"],
                   converged, int(meta["obs_rate"]))


@dataclass
class DurationModel:
    """Per-state duration Gaussians in observation steps, one shared cap."""

    mean: np.ndarray
    std: np.ndarray
    max_duration: int
    obs_rate: int = OBSERVATION_RATE

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if np.any(self.mean <= 0) or np.any(self.std <= 0):
            raise DataError("duration means and stds must be positive")
        if self.max_duration < np.max(self.mean + 3.0 * self.std):
            raise DataError("max_duration must cover mean + 3 std for every state")

    def log_pmf(self):
        """4 x max_duration table: discretized Gaussians normalized on [1, D]."""
        d = np.arange(1, self.max_duration + 1, dtype=np.float64)
        z = (d[None, :] - self.mean[:, None]) / self.std[:, None]
        logphi = -0.5 * z ** 2
        m = logphi.max(axis=1, keepdims=True)
        lognorm = m + np.log(np.exp(logphi - m).sum(axis=1, keepdims=True))
        return logphi - lognorm


@dataclass
class StateSequence:
    """Decoded state indices at the observation rate."""

    states: np.ndarray
    obs_rate: int = OBSERVATION_RATE
    recording_id: str = ""
    score: float = 0.0
    s1_onsets: np.ndarray = field(init=False)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        if self.states.ndim != 1 or self.states.size == 0:
            raise DataError("state sequence must be a non-empty vector")
        if self.states.min() < 0 or self.states.max() >= N_STATES:
            raise DataError("state indices out of range")
        prev = self.states[:-1]
        nxt = self.states[1:]
        legal = (nxt == prev) | (nxt == np.array(NEXT_STATE)[prev])
        if not np.all(legal):
            raise DataError("state sequence violates the cyclic order")
        onsets = np.flatnonzero((nxt == HeartState.S1) & (prev != HeartState.S1)) + 1
        if onsets.size >= 2 and np.diff(onsets).min() < MIN_ONSET_GAP_STEPS:
            raise UnsegmentableError("S1 onsets closer than %d steps" % MIN_ONSET_GAP_STEPS)
        self.s1_onsets = onsets

    def __len__(self):
        return self.states.size

    def intervals(self):
        """Contiguous runs as (start_seconds, end_seconds, state_name)."""
        out = []
        start = 0
        for t in range(1, self.states.size + 1):
            if t == self.states.size or self.states[t] != self.states[start]:
                out.append((start / self.obs_rate, t / self.obs_rate,
                            STATE_NAMES[self.states[start]]))
                start = t
        return out

    def onset_samples(self, audio_rate):
        """S1 onsets mapped to audio sample indices (nearest step)."""
        return np.round(self.s1_onsets * (audio_rate / self.obs_rate)).astype(np.int64)

    def states_at_rate(self, audio_rate, n_samples):
        """Upsample state indices to the audio rate by nearest-step mapping."""
        idx = np.round(np.arange(n_samples) * (self.obs_rate / audio_rate)).astype(np.int64)
        return self.states[np.clip(idx, 0, self.states.size - 1)]


def train_emission_lr(observations, state_labels, ridge=1e-4):
    """Fit the one-vs-all logistic emissions from labeled observations.

    observations: list of ObservationSequence; state_labels: matching list of
    integer state vectors. Rows are pooled, normalized with the pooled mean
    and std, and each state is fit against the rest by IRLS. The shared
    observation density is a single Gaussian over all pooled rows with a
    1e-6 ridge on the covariance.
    """
    if hasattr(observations, "values") or (
            isinstance(observations, np.ndarray) and observations.ndim == 2):
        observations = [observations]
        state_labels = [state_labels]
    if len(observations) != len(state_labels) or len(observations) == 0:
        raise DataError("need matching non-empty observation and label lists")
    X = np.vstack([obs.values if hasattr(obs, "values")
                   else np.asarray(obs, dtype=np.float64)
                   for obs in observations])
    y = np.concatenate([np.asarray(l, dtype=np.int64) for l in state_labels])
    if X.shape[0] != y.shape[0]:
        raise DataError("observation rows and labels disagree")
    counts = np.bincount(y, minlength=N_STATES)
    if np.any(counts == 0):
        missing = STATE_NAMES[int(np.argmin(counts))]
        raise DataError("no training examples for state %s" % missing)
    feature_mean = X.mean(axis=0)
    feature_std = X.std(axis=0)
    feature_std = np.where(feature_std > 1e-12, feature_std, 1.0)
    Xn = (X - feature_mean) / feature_std
    weights = np.zeros((N_STATES, X.shape[1] + 1))
    converged = np.zeros(N_STATES, dtype=bool)
    for j in range(N_STATES):
        weights[j], converged[j] = fit_logistic(Xn, (y == j).astype(np.float64), ridge)
        if not converged[j]:
            log.warning("IRLS did not converge for state %s", STATE_NAMES[j])
    gauss_mean = Xn.mean(axis=0)
    gauss_cov = np.cov(Xn, rowvar=False, ddof=0) + 1e-6 * np.eye(X.shape[1])
    prior = counts / counts.sum()
    rate = (observations[0].rate if hasattr(observations[0], "rate")
            else OBSERVATION_RATE)
    return LrEmissionModel(weights, prior, gauss_mean, gauss_cov,
                           feature_mean, feature_std, converged, rate)


def _gaussian_loglik(model, rows):
    dev = rows - model.gauss_mean
    chol = np.linalg.cholesky(model.gauss_cov)
    solved = np.linalg.solve(chol, dev.T)
    quad = (solved ** 2).sum(axis=0)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    k = rows.shape[1]
    return -0.5 * (k * np.log(2.0 * np.pi) + logdet + quad)


def emission_loglik(model, obs):
    """T x 4 matrix of log b_j(O_t), computed entirely in log space."""
    values = obs.values if hasattr(obs, "values") else np.asarray(obs, dtype=np.float64)
    rows = model.normalize(values)
    aug = np.column_stack([rows, np.ones(rows.shape[0])])
    logsig = log_sigmoid(aug @ model.weights.T)
    logpdf = _gaussian_loglik(model, rows)
    return logsig + logpdf[:, None] - np.log(model.prior)[None, :]


def emission_likelihood(model, row):
    """Emission likelihoods b_j for one observation row (linear scale)."""
    row = np.asarray(row, dtype=np.float64).reshape(1, -1)
    return np.exp(emission_loglik(model, row)[0])


def estimate_heart_rate(obs):
    """Heart rate and systolic fraction from envelope autocorrelation.

    The homomorphic-envelope column is autocorrelated; the highest local
    peak at lags of 0.24-2.0 s gives the cycle length, and the strongest
    lag between 0.15 s and half a cycle gives the S1-to-S2 interval. The
    systolic fraction is clamped to [0.2, 0.5].
    """
    rate = obs.rate
    env = obs.values[:, 0]
    n = env.size
    if n < 3 * rate:
        raise DataError("need at least 3 s of observations to estimate heart rate")
    acf = np.correlate(env, env, mode="full")[n - 1:]
    if acf[0] <= 0:
        raise UnsegmentableError("flat envelope, no autocorrelation")
    acf = acf / acf[0]
    lo = int(round(HR_MIN_LAG_S * rate))
    hi = min(int(round(HR_MAX_LAG_S * rate)), n - 2)
    if hi <= lo:
        raise UnsegmentableError("recording too short for the heart-rate lag window")
    lags = np.arange(lo, hi + 1)
    window = acf[lo:hi + 1]
    is_peak = (window >= acf[lags - 1]) & (window >= acf[lags + 1])
    candidates = np.flatnonzero(is_peak & (window > HR_NOISE_FLOOR))
    if candidates.size == 0:
        raise UnsegmentableError("no autocorrelation peak above the noise floor")
    cycle_lag = lags[candidates[np.argmax(window[candidates])]]
    bpm = 60.0 * rate / cycle_lag
    sys_lo = int(round(SYSTOLE_MIN_LAG_S * rate))
    sys_hi = cycle_lag // 2
    if sys_hi > sys_lo:
        sys_lag = sys_lo + int(np.argmax(acf[sys_lo:sys_hi + 1]))
        fraction = sys_lag / cycle_lag
    else:
        fraction = 0.35
    fraction = float(np.clip(fraction, 0.2, 0.5))
    return HeartRateEstimate(float(bpm), fraction)


def build_duration_model(bpm, systole_fraction, obs_rate=OBSERVATION_RATE):
    """Map heart rate to per-state duration Gaussians in observation steps.

    S1 and S2 keep fixed physiological means; systole is the systolic
    fraction of the cycle minus S1 and diastole is the remainder. Stds are
    25% of each mean and the shared duration cap is the largest
    mean + 3.5 std, rounded up.
    """
    cycle = 60.0 / bpm * obs_rate
    s1 = S1_MEAN_S * obs_rate
    s2 = S2_MEAN_S * obs_rate
    systole = systole_fraction * cycle - s1
    diastole = cycle - systole_fraction * cycle - s2
    if systole <= 0:
        raise UnsegmentableError("systole duration non-positive at %.0f bpm" % bpm)
    if diastole <= 0:
        raise UnsegmentableError("diastole duration non-positive at %.0f bpm" % bpm)
    mean = np.array([s1, systole, s2, diastole])
    std = DURATION_STD_FRACTION * mean
    max_duration = int(np.ceil(np.max(mean + MAX_DURATION_STDS * std)))
    return DurationModel(mean, std, max_duration, obs_rate)


def viterbi_hsmm(log_emissions, durations):
    """Explicit-duration Viterbi decode over the cyclic four-state chain.

    Maximizes the sum of per-step emission log-likelihoods plus per-segment
    duration log-densities. The decode starts in the state with the highest
    initial emission; the final segment may be partial and carries no
    duration term (but still respects the duration cap). Score ties prefer
    shorter durations, compared from the final segment backwards.

    Returns (states, score). Complexity is O(T * states * max_duration).
    """
    emissions = np.asarray(log_emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[1] != N_STATES:
        raise DataError("emissions must be T x %d" % N_STATES)
    if np.isnan(emissions).any():
        raise DataError("emissions contain NaN")
    T = emissions.shape[0]
    if T < int(np.ceil(durations.mean.sum())):
        raise UnsegmentableError("fewer observations than one mean heart cycle")
    if np.isneginf(emissions).all(axis=1).any():
        raise UnsegmentableError("an observation step has no admissible state")
    # -inf emissions would turn prefix-sum differences into NaN
    emissions = np.where(np.isneginf(emissions), -1e30, emissions)
    logdur = durations.log_pmf()
    D = durations.max_duration
    j0 = int(np.argmax(emissions[0]))
    cum = np.vstack([np.zeros(N_STATES), np.cumsum(emissions, axis=0)])
    delta = np.full((T + 1, N_STATES), -np.inf)
    best_d = np.zeros((T + 1, N_STATES), dtype=np.int64)
    neg_inf = -np.inf
    for t in range(1, T + 1):
        ds = np.arange(1, min(D, t) + 1)
        starts = t - ds
        for j in range(N_STATES):
            prev = delta[starts, PREV_STATE[j]]
            if starts[-1] == 0:
                prev = prev.copy()
                prev[-1] = 0.0 if j == j0 else neg_inf
            cand = prev + (cum[t, j] - cum[starts, j]) + logdur[j, ds - 1]
            k = int(np.argmax(cand))
            delta[t, j] = cand[k]
            best_d[t, j] = ds[k]
    # final partial segment: no duration term
    final_score = neg_inf
    final_j = final_d = -1
    ds = np.arange(1, min(D, T) + 1)
    starts = T - ds
    for j in range(N_STATES):
        prev = delta[starts, PREV_STATE[j]]
        if starts[-1] == 0:
            prev = prev.copy()
            prev[-1] = 0.0 if j == j0 else neg_inf
        cand = prev + (cum[T, j] - cum[starts, j])
        k = int(np.argmax(cand))
        if cand[k] > final_score:
            final_score = cand[k]
            final_j, final_d = j, int(ds[k])
    if not np.isfinite(final_score) or final_score < -1e29:
        raise UnsegmentableError("no admissible state path")
    states = np.empty(T, dtype=np.int64)
    t, j, d = T, final_j, final_d
    states[t - d:t] = j
    t -= d
    while t > 0:
        j = PREV_STATE[j]
        d = int(best_d[t, j])
        states[t - d:t] = j
        t -= d
    return states, float(final_score)


def segment_recording(rec, model):
    """Full segmentation: envelopes, heart rate, durations, Viterbi decode."""
    obs = build_observations(rec, model.obs_rate)
    estimate = estimate_heart_rate(obs)
    durations = build_duration_model(estimate.bpm, estimate.systole_fraction,
                                     model.obs_rate)
    states, score = viterbi_hsmm(emission_loglik(model, obs), durations)
    return StateSequence(states, model.obs_rate, rec.recording_id, score)


def write_state_intervals(path, intervals):
    """Write (start_seconds, end_seconds, state_name) lines."""
    with open(path, "w") as fh:
        for start, end, name in intervals:
            fh.write("%.6f,%.6f,%s\n" % (start, end, name))


def read_state_intervals(path):
    intervals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            start_str, end_str, name = line.split(",")
            if name not in STATE_NAMES:
                raise DataError("%s:%d: unknown state %r" % (path, lineno, name))
            intervals.append((float(start_str), float(end_str), name))
    return intervals


def states_from_intervals(intervals, n_steps, obs_rate=OBSERVATION_RATE):
    """Rasterize labeled intervals to per-step state indices.

    Step t is labeled by the interval containing its center (t + 0.5) / rate;
    steps past the last interval keep the last state.
    """
    if not intervals:
        raise DataError("no intervals to rasterize")
    name_to_idx = {name: i for i, name in enumerate(STATE_NAMES)}
    starts = np.array([iv[0] for iv in intervals])
    codes = np.array([name_to_idx[iv[2]] for iv in intervals])
    centers = (np.arange(n_steps) + 0.5) / obs_rate
    idx = np.clip(np.searchsorted(starts, centers, side="right") - 1, 0, len(intervals) - 1)
    return codes[idx]
