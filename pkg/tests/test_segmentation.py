"""Emission model, heart-rate estimation, duration model, and the decoder."""

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from pcgkit.dataset import SignalRecording
from pcgkit.envelopes import OBSERVATION_RATE, ObservationSequence
from pcgkit.errors import DataError, UnsegmentableError
from pcgkit.logistic import sigmoid
from pcgkit.segmentation import (DurationModel, HeartState, LrEmissionModel,
                                 N_STATES, NEXT_STATE, StateSequence,
                                 build_duration_model, emission_likelihood,
                                 emission_loglik, estimate_heart_rate,
                                 read_state_intervals, segment_recording,
                                 states_from_intervals, train_emission_lr,
                                 viterbi_hsmm, write_state_intervals)
from pcgkit.synthetic import generate_recording


def test_state_cycle_is_a_four_cycle():
    for j in range(N_STATES):
        k = j
        for _ in range(N_STATES):
            k = NEXT_STATE[k]
        assert k == j
    assert NEXT_STATE[HeartState.S1] == HeartState.SYSTOLE
    assert NEXT_STATE[HeartState.DIASTOLE] == HeartState.S1


# emission model


def _quadrant_fixture(rng, n_per_state=100):
    centers = np.array([[2.0, 2.0], [-2.0, 2.0], [-2.0, -2.0], [2.0, -2.0]])
    rows = []
    labels = []
    for j in range(N_STATES):
        block = np.column_stack([
            centers[j] + 0.3 * rng.standard_normal((n_per_state, 2)),
            0.1 * rng.standard_normal((n_per_state, 2)),
        ])
        rows.append(block)
        labels.append(np.full(n_per_state, j))
    return np.vstack(rows), np.concatenate(labels)


def test_emission_lr_separates_quadrants(rng):
    rows, labels = _quadrant_fixture(rng)
    model = train_emission_lr(rows, labels)
    aug = np.column_stack([model.normalize(rows), np.ones(rows.shape[0])])
    scores = sigmoid(aug @ model.weights.T)
    assert np.array_equal(np.argmax(scores, axis=1), labels)


def test_emission_lr_prior_and_covariance_invariants(rng):
    rows, labels = _quadrant_fixture(rng, n_per_state=60)
    model = train_emission_lr(rows, labels)
    assert np.all(model.prior > 0)
    assert abs(model.prior.sum() - 1.0) < 1e-9
    assert np.abs(model.gauss_cov - model.gauss_cov.T).max() < 1e-12
    np.linalg.cholesky(model.gauss_cov)


def test_emission_lr_uninformative_features_recover_priors():
    rows = np.tile(np.array([0.3, -0.2, 1.0, 0.5]), (200, 1))
    labels = np.repeat([0, 1, 2, 3], [20, 60, 40, 80])
    model = train_emission_lr(rows, labels)
    assert np.abs(model.weights[:, :4]).max() < 1e-8
    lr_out = sigmoid(model.weights[:, 4])
    assert np.abs(lr_out - model.prior).max() < 1e-4


def test_emission_lr_missing_state_is_error(rng):
    rows = rng.standard_normal((30, 4))
    labels = np.zeros(30, dtype=int)
    with pytest.raises(DataError):
        train_emission_lr(rows, labels)


def _random_emission_model(rng):
    a = rng.standard_normal((4, 4))
    cov = a @ a.T + 0.5 * np.eye(4)
    prior = rng.uniform(0.5, 2.0, 4)
    prior = prior / prior.sum()
    return LrEmissionModel(
        weights=rng.standard_normal((4, 5)),
        prior=prior,
        gauss_mean=rng.standard_normal(4),
        gauss_cov=cov,
        feature_mean=rng.standard_normal(4),
        feature_std=rng.uniform(0.5, 2.0, 4),
        converged=np.ones(4, dtype=bool),
    )


def test_emission_likelihood_matches_composed_oracle(rng):
    for _ in range(25):
        model = _random_emission_model(rng)
        row = rng.standard_normal(4) * 2.0
        xhat = (row - model.feature_mean) / model.feature_std
        pdf = multivariate_normal(model.gauss_mean, model.gauss_cov).pdf(xhat)
        expected = np.array([
            sigmoid(model.weights[j, :4] @ xhat + model.weights[j, 4]) * pdf
            / model.prior[j] for j in range(4)])
        got = emission_likelihood(model, row)
        assert np.abs(got - expected).max() / np.abs(expected).max() < 1e-10


def test_emission_uniform_symmetry():
    model = LrEmissionModel(
        weights=np.tile(np.array([0.3, -0.4, 0.1, 0.2, 0.05]), (4, 1)),
        prior=np.full(4, 0.25),
        gauss_mean=np.zeros(4),
        gauss_cov=np.eye(4),
        feature_mean=np.zeros(4),
        feature_std=np.ones(4),
        converged=np.ones(4, dtype=bool),
    )
    b = emission_likelihood(model, np.array([0.5, -0.2, 0.1, 0.9]))
    assert np.abs(b - b[0]).max() < 1e-15


def test_emission_log_matches_linear(rng):
    model = _random_emission_model(rng)
    values = rng.standard_normal((50, 4))
    log_b = emission_loglik(model, values)
    xhat = (values - model.feature_mean) / model.feature_std
    aug = np.column_stack([xhat, np.ones(50)])
    pdf = multivariate_normal(model.gauss_mean, model.gauss_cov).pdf(xhat)
    linear = sigmoid(aug @ model.weights.T) * pdf[:, None] / model.prior[None, :]
    mask = linear > 1e-250
    rel = np.abs(np.exp(log_b)[mask] - linear[mask]) / linear[mask]
    assert rel.max() < 1e-9


def test_emission_model_save_load_round_trip(tmp_path, emission_model):
    path = str(tmp_path / "emission.txt")
    emission_model.save(path)
    loaded = LrEmissionModel.load(path)
    for name in ("weights", "prior", "gauss_mean", "gauss_cov",
                 "feature_mean", "feature_std"):
        assert np.array_equal(getattr(loaded, name), getattr(emission_model, name))
    assert np.array_equal(loaded.converged, emission_model.converged)
    assert loaded.obs_rate == emission_model.obs_rate


# heart rate


def _bump_train(n_steps, period, offsets_and_heights, width=2.0):
    t = np.arange(n_steps, dtype=float)
    env = np.zeros(n_steps)
    for offset, height in offsets_and_heights:
        k = np.arange(-1, n_steps // period + 2)
        for start in k * period + offset:
            env += height * np.exp(-0.5 * ((t - start) / width) ** 2)
    return env


def _obs_from_envelope(env):
    values = np.column_stack([env, env, env, env])
    return ObservationSequence(values)


def test_heart_rate_one_hertz_periodicity():
    env = _bump_train(500, 50, [(0, 1.0), (17, 0.6)])
    bpm, fraction = estimate_heart_rate(_obs_from_envelope(env))
    assert abs(bpm - 60.0) <= 1.0
    assert 0.30 <= fraction <= 0.38


def test_heart_rate_half_hertz_periodicity():
    env = _bump_train(1500, 100, [(0, 1.0), (30, 0.6)])
    bpm, _ = estimate_heart_rate(_obs_from_envelope(env))
    assert abs(bpm - 30.0) <= 1.0


def test_heart_rate_white_noise_unsegmentable():
    rng = np.random.default_rng(12)
    env = rng.standard_normal(1500)
    with pytest.raises(UnsegmentableError):
        estimate_heart_rate(_obs_from_envelope(env))


def test_heart_rate_needs_three_seconds():
    env = _bump_train(149, 50, [(0, 1.0)])
    with pytest.raises(DataError):
        estimate_heart_rate(_obs_from_envelope(env))


# duration model


def test_duration_arithmetic_at_sixty_bpm():
    model = build_duration_model(60.0, 0.35)
    assert abs(model.mean.sum() - 50.0) < 1e-9
    assert round(model.mean[0]) == 6       # S1: 122 ms at 50 Hz
    assert round(model.mean[2]) == 5       # S2: 92 ms at 50 Hz
    assert np.all(model.mean > 0)
    assert np.array_equal(model.std, 0.25 * model.mean)
    assert model.max_duration >= np.max(model.mean + 3.5 * model.std)
    assert model.max_duration == int(np.ceil(np.max(model.mean + 3.5 * model.std)))


def test_duration_cycle_halves_when_rate_doubles():
    slow = build_duration_model(60.0, 0.35)
    fast = build_duration_model(120.0, 0.35)
    assert abs(fast.mean.sum() - slow.mean.sum() / 2.0) < 1e-9


def test_duration_degenerate_systole_is_error():
    with pytest.raises(UnsegmentableError):
        build_duration_model(250.0, 0.2)


def test_duration_model_validation():
    with pytest.raises(DataError):
        DurationModel(np.array([1.0, -1.0, 1.0, 1.0]), np.ones(4), 10)
    with pytest.raises(DataError):
        DurationModel(np.full(4, 5.0), np.full(4, 2.0), 10)  # needs >= 11


def test_duration_log_pmf_normalized_and_peaked():
    model = DurationModel(np.array([6.0, 15.0, 5.0, 20.0]),
                          np.array([1.5, 3.75, 1.25, 5.0]), 38)
    pmf = np.exp(model.log_pmf())
    assert pmf.shape == (4, 38)
    assert np.abs(pmf.sum(axis=1) - 1.0).max() < 1e-12
    assert np.array_equal(np.argmax(pmf, axis=1) + 1, [6, 15, 5, 20])


# viterbi


def _oracle_decode(emissions, durations):
    """Exhaustive enumeration mirroring the decoder's scoring and tie key."""
    em = np.where(np.isneginf(emissions), -1e30, emissions)
    T = em.shape[0]
    D = durations.max_duration
    logdur = durations.log_pmf()
    j0 = int(np.argmax(em[0]))
    cum = np.vstack([np.zeros(N_STATES), np.cumsum(em, axis=0)])
    best = [None]

    def walk(t, j, score, durs):
        for d in range(1, min(D, T - t) + 1):
            seg = cum[t + d, j] - cum[t, j]
            if t + d == T:
                key = (-(score + seg), j, tuple(reversed(durs + [d])))
                if best[0] is None or key < best[0][0]:
                    best[0] = (key, durs + [d])
            else:
                walk(t + d, NEXT_STATE[j], (score + seg) + logdur[j, d - 1],
                     durs + [d])

    def _states_for(start, n_runs):
        out = []
        j = start
        for _ in range(n_runs):
            out.append(j)
            j = NEXT_STATE[j]
        return out

    walk(0, j0, 0.0, [])
    key, durs = best[0]
    states = np.concatenate([
        np.full(d, j, dtype=np.int64)
        for d, j in zip(durs, _states_for(j0, len(durs)))])
    return states, -key[0]


def _tiny_duration_model(rng):
    mean = rng.uniform(0.7, 0.95, 4)
    return DurationModel(mean, 0.25 * mean, 4)


def test_viterbi_matches_brute_force_sample():
    rng = np.random.default_rng(99)
    for _ in range(40):
        T = int(rng.integers(4, 13))
        emissions = rng.standard_normal((T, N_STATES))
        durations = _tiny_duration_model(rng)
        states, score = viterbi_hsmm(emissions, durations)
        exp_states, exp_score = _oracle_decode(emissions, durations)
        assert np.array_equal(states, exp_states)
        assert score == exp_score


def test_viterbi_recovers_planted_path():
    rng = np.random.default_rng(4)
    mean = np.array([3.0, 5.0, 3.0, 6.0])
    durations = DurationModel(mean, 0.25 * mean, 12)
    for _ in range(10):
        T = 40
        j = int(rng.integers(0, 4))
        planted = np.empty(T, dtype=np.int64)
        t = 0
        while t < T:
            d = int(rng.integers(2, 8))
            planted[t:t + d] = j
            t += d
            j = NEXT_STATE[j]
        emissions = rng.standard_normal((T, N_STATES))
        emissions[np.arange(T), planted] += 50.0
        states, _ = viterbi_hsmm(emissions, durations)
        assert np.array_equal(states, planted)


def test_viterbi_uniform_emissions_sit_at_duration_modes():
    # sharp duration pmfs and a tight cap so the duration-free final
    # segment cannot absorb a whole state
    durations = DurationModel(np.array([6.0, 15.0, 5.0, 20.0]), np.full(4, 0.5), 22)
    states, _ = viterbi_hsmm(np.zeros((52, N_STATES)), durations)
    runs = []
    start = 0
    for t in range(1, 53):
        if t == 52 or states[t] != states[start]:
            runs.append((int(states[start]), t - start))
            start = t
    assert runs == [(0, 6), (1, 15), (2, 5), (3, 20), (0, 6)]


def test_viterbi_beats_random_legal_paths():
    rng = np.random.default_rng(17)
    mean = np.array([3.0, 5.0, 3.0, 6.0])
    durations = DurationModel(mean, 0.25 * mean, 12)
    T = 60
    emissions = rng.standard_normal((T, N_STATES))
    _, score = viterbi_hsmm(emissions, durations)
    logdur = durations.log_pmf()
    cum = np.vstack([np.zeros(N_STATES), np.cumsum(emissions, axis=0)])
    j0 = int(np.argmax(emissions[0]))
    for _ in range(1000):
        t, j, total = 0, j0, 0.0
        while True:
            d = int(rng.integers(1, 13))
            if t + d >= T:
                total = total + (cum[T, j] - cum[t, j])
                break
            total = (total + (cum[t + d, j] - cum[t, j])) + logdur[j, d - 1]
            t += d
            j = NEXT_STATE[j]
        assert score >= total


def test_viterbi_decode_is_cyclic(rng):
    for _ in range(25):
        bpm = float(rng.uniform(50, 110))
        durations = build_duration_model(bpm, float(rng.uniform(0.25, 0.45)))
        T = int(rng.integers(durations.mean.sum() + 1, 120))
        states, _ = viterbi_hsmm(rng.standard_normal((T, N_STATES)), durations)
        legal = (states[1:] == states[:-1]) | (
            states[1:] == np.asarray(NEXT_STATE)[states[:-1]])
        assert legal.all()


def test_viterbi_guards():
    durations = build_duration_model(60.0, 0.35)
    with pytest.raises(UnsegmentableError):
        viterbi_hsmm(np.zeros((30, N_STATES)), durations)  # under one cycle
    with pytest.raises(DataError):
        viterbi_hsmm(np.full((60, N_STATES), np.nan), durations)
    emissions = np.zeros((60, N_STATES))
    emissions[5] = -np.inf
    with pytest.raises(UnsegmentableError):
        viterbi_hsmm(emissions, durations)


# decoded sequence container


def _states_from_runs(runs):
    return np.concatenate([np.full(d, j, dtype=np.int64) for j, d in runs])


def test_state_sequence_invariants():
    good = _states_from_runs([(0, 6), (1, 14), (2, 5), (3, 25), (0, 6)])
    seq = StateSequence(good)
    assert np.array_equal(seq.s1_onsets, [50])
    with pytest.raises(DataError):
        StateSequence(_states_from_runs([(0, 6), (2, 10)]))  # skips systole
    with pytest.raises(UnsegmentableError):
        StateSequence(_states_from_runs(
            [(3, 2), (0, 2), (1, 2), (2, 2), (3, 2), (0, 2)]))  # onsets 8 apart


def test_state_sequence_onset_mapping():
    seq = StateSequence(_states_from_runs([(3, 10), (0, 6), (1, 14), (2, 5), (3, 25)]))
    assert np.array_equal(seq.s1_onsets, [10])
    assert np.array_equal(seq.onset_samples(1000), [200])
    up = seq.states_at_rate(1000, 1200)
    assert up.size == 1200
    assert up[0] == 3 and up[205] == 0


# full segmentation pipeline


def test_segment_two_cycle_recording(emission_model):
    syn = generate_recording("twocycle", abnormal=False, duration_s=3.15,
                             rate=1000, seed=21, bpm=38.0, systole_fraction=0.35,
                             noise_level=0.02, start_phase=0.0)
    seq = segment_recording(syn.recording, emission_model)
    names = [name for _, _, name in seq.intervals()]
    assert names.count("S1") == 2
    assert names.count("S2") == 2


def test_segment_thirty_seconds_at_sixty_bpm(emission_model):
    syn = generate_recording("thirty", abnormal=False, duration_s=30.0,
                             rate=1000, seed=33, bpm=60.0, start_phase=0.0)
    seq = segment_recording(syn.recording, emission_model)
    assert abs(len(seq.s1_onsets) - 30) <= 1


def test_segment_short_recording_is_error(emission_model):
    rec = SignalRecording("short", np.sin(np.arange(2500) * 0.3) * 0.5, 1000)
    with pytest.raises(DataError):
        segment_recording(rec, emission_model)


# interval files


def test_state_interval_round_trip(tmp_path):
    path = str(tmp_path / "intervals.csv")
    intervals = [(0.0, 0.12, "S1"), (0.12, 0.4, "systole"),
                 (0.4, 0.5, "S2"), (0.5, 1.0, "diastole")]
    write_state_intervals(path, intervals)
    loaded = read_state_intervals(path)
    assert loaded == intervals
    with open(path, "a") as fh:
        fh.write("1.0,2.0,unknown\n")
    with pytest.raises(DataError):
        read_state_intervals(path)


def test_states_from_intervals_rasterization():
    intervals = [(0.0, 0.1, "S1"), (0.1, 0.3, "systole"),
                 (0.3, 0.4, "S2"), (0.4, 1.0, "diastole")]
    states = states_from_intervals(intervals, 50)
    runs = np.flatnonzero(np.diff(states)) + 1
    assert np.array_equal(runs, [5, 15, 20])
    assert states[0] == 0 and states[-1] == 3
