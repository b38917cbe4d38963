import numpy as np
import pytest

from psi_pareto.algorithms import (RunSetup, run_ape, run_oracle, run_profile, run_psips, run_uniform,
                                   uniform_error_trace)
from psi_pareto.instance import Instance, load_covboost, rotation_instance, two_answer_bai, unstructured
from psi_pareto.oracle import characteristic_time
from psi_pareto.pareto import pareto_set

from conftest import brute_pareto


@pytest.fixture(scope="module")
def rotation():
    return rotation_instance()


@pytest.fixture(scope="module")
def rotation_weights(rotation):
    return characteristic_time(rotation).w_star


def test_uniform_counts_balanced(rotation):
    for horizon in range(rotation.K, 60, 7):
        rec = run_uniform(rotation, 0.01, max_rounds=horizon, seed=horizon)
        assert rec.counts.max() - rec.counts.min() <= 1
        assert rec.counts.sum() == rec.tau


def test_psips_near_deterministic(rotation):
    quiet = rotation.with_sigma(1e-6 * np.eye(2))
    for seed in range(5):
        rec = run_psips(quiet, 0.1, seed=seed)
        assert rec.stopped and rec.correct
        assert rec.tau <= quiet.K + 20


def test_records_reproducible(rotation):
    for fn in (lambda s: run_psips(rotation, 0.1, seed=s), lambda s: run_uniform(rotation, 0.1, seed=s),
               lambda s: run_ape(rotation, 0.1, seed=s)):
        a, b = fn(3), fn(3)
        assert (a.tau, a.recommended, a.correct, a.avg_m_t_delta, a.fallback_count) == \
               (b.tau, b.recommended, b.correct, b.avg_m_t_delta, b.fallback_count)
        assert np.array_equal(a.counts, b.counts)
        assert a.avg_m_t == b.avg_m_t or (np.isnan(a.avg_m_t) and np.isnan(b.avg_m_t))


def test_record_invariants(rotation):
    truth = brute_pareto(rotation.answer_means)
    for seed in range(5):
        for rec in (run_psips(rotation, 0.1, seed=seed), run_uniform(rotation, 0.1, seed=seed)):
            assert rec.tau >= rotation.K
            assert rec.correct == (rec.recommended.indices == truth)
            assert rec.pareto_size == len(rec.recommended)


def test_oracle_pull_frequencies(rotation, rotation_weights):
    hard = rotation.with_sigma(100 * rotation.sigma)
    rec = run_oracle(hard, 1e-3, max_rounds=10 ** 4, seed=1, weights=rotation_weights)
    assert not rec.stopped and rec.tau == 10 ** 4
    freq = rec.counts / rec.counts.sum()
    assert np.all(np.abs(freq - rotation_weights) <= 0.03)
    se = np.sqrt(rotation_weights * (1 - rotation_weights) / rec.tau)
    assert np.all(np.abs(freq - rotation_weights) <= 4 * se + rotation.K / rec.tau)


def test_oracle_two_answer_split():
    bai = two_answer_bai(0.05, 1.0)
    w = characteristic_time(bai).w_star
    assert np.allclose(w, 0.5, rtol=0.02)
    rec = run_oracle(bai, 1e-3, max_rounds=4000, seed=2, weights=w)
    assert abs(rec.counts[0] / rec.counts.sum() - 0.5) <= 0.03


def test_ape_vanishing_noise(rotation):
    quiet = rotation.with_sigma(1e-12 * np.eye(2))
    rec = run_ape(quiet, 0.01, seed=0)
    assert rec.stopped and rec.correct and rec.tau == quiet.K


def test_ape_rejects_structured():
    A = np.array([[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]])
    inst = Instance(A, np.array([[0.0, 1.0], [1.0, 0.0]]), np.eye(2))
    with pytest.raises(ValueError):
        run_ape(inst, 0.1)


def test_zero_gap_rejected():
    inst = unstructured(np.array([[0.0, 1.0], [0.0, 1.0], [-1.0, -1.0]]), np.eye(2))
    with pytest.raises(ValueError):
        RunSetup(inst, 0.1).check_identifiable()


def test_delta_validated(rotation):
    with pytest.raises(ValueError):
        run_psips(rotation, 1.0)


def test_profile_trace_shape(rotation):
    trace = run_profile(rotation, 0.1, 120, seed=4)
    assert len(trace) == 120
    assert [row["t"] for row in trace] == sorted(row["t"] for row in trace)
    for row in trace:
        assert {"t", "m_t", "m_t_delta", "error", "fallback", "glr"} <= set(row)
        assert row["error"] in (0, 1) and row["m_t_delta"] >= 1 and row["glr"] >= 0


def test_profile_error_vanishes_on_separated_instance():
    inst = unstructured(np.array([[0.0, 2.0], [2.0, 0.0], [-1.0, -1.0]]), 0.25 * np.eye(2))
    for seed in range(10):
        trace = run_profile(inst, 0.1, 300, seed=seed, with_glr=False)
        assert all(row["error"] == 0 for row in trace[-100:])


def test_uniform_error_trace_length():
    errors = uniform_error_trace(load_covboost(), 50, seed=0)
    assert len(errors) == 50 and set(errors) <= {0, 1}


def test_uniform_ps_stopping_error_rate():
    bai = two_answer_bai(1.0, 1.0)
    delta = 0.1
    errors = sum(not run_uniform(bai, delta, seed=s).correct for s in range(500))
    assert errors / 500 <= delta


@pytest.mark.slow
def test_uniform_glr_stopping_correct(rotation):
    recs = [run_uniform(rotation, 0.1, stopping="glr", seed=s) for s in range(10)]
    assert all(r.stopped and r.stopping == "glr" for r in recs)
    assert sum(r.correct for r in recs) >= 9


def _mean_tau(fn, runs):
    return float(np.mean([fn(s).tau for s in range(runs)]))


@pytest.mark.slow
def test_uniform_slower_than_psips(rotation):
    psips = _mean_tau(lambda s: run_psips(rotation, 0.01, seed=s), 100)
    uniform = _mean_tau(lambda s: run_uniform(rotation, 0.01, seed=s), 100)
    assert uniform >= psips


@pytest.mark.slow
def test_oracle_close_to_psips(rotation, rotation_weights):
    psips = _mean_tau(lambda s: run_psips(rotation, 0.01, seed=s), 100)
    oracle = _mean_tau(lambda s: run_oracle(rotation, 0.01, seed=s, weights=rotation_weights), 100)
    assert 0.5 <= oracle / psips <= 2.0


@pytest.mark.slow
def test_smaller_delta_takes_longer(rotation):
    loose = _mean_tau(lambda s: run_psips(rotation, 0.01, seed=s), 100)
    tight = _mean_tau(lambda s: run_psips(rotation, 0.001, seed=s), 100)
    assert tight > loose


@pytest.mark.slow
def test_ape_covboost_error_rate():
    cov = load_covboost()
    recs = [run_ape(cov, 0.01, seed=s) for s in range(100)]
    assert all(r.stopped for r in recs)
    assert sum(not r.correct for r in recs) / 100 <= 0.01


def test_lemma2_with_ball_warns():
    inst = Instance(np.array([[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]]), np.array([[1.0, 0.0], [0.0, 1.0]]),
                    np.eye(2), theta_ball=5.0)
    with pytest.warns(RuntimeWarning, match="lemma2"):
        RunSetup(inst, 0.1, "lemma2")
