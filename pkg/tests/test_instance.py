import json
import math

import numpy as np
import pytest

from psi_pareto.instance import (COVBOOST_ARMS, COVBOOST_MEANS, Instance, InstanceError, MissingDataError,
                                 correlated_sigma, draw_observation, gen_random_instance, instance_from_dict,
                                 instance_to_dict, load_covboost, load_instance, load_noc, mean_of,
                                 rotation_instance, save_instance, two_answer_bai, unstructured)
from psi_pareto.pareto import gaps


def test_mean_of_identity_features():
    inst = unstructured([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]], np.eye(2))
    assert np.array_equal(mean_of(inst, 0), [1.0, 0.0])


def test_mean_of_noc_first_row():
    inst = Instance(np.eye(4), np.array(load_noc().theta), np.eye(2))
    assert np.allclose(mean_of(inst, 0), [-3.08665453, -3.35487744], atol=0, rtol=0)


def test_mean_of_matches_dense_product(rng):
    A = rng.standard_normal((6, 3))
    theta = rng.standard_normal((3, 2))
    inst = Instance(A, theta, np.eye(2))
    for i in range(6):
        expected = np.array([sum(theta[k, c] * A[i, k] for k in range(3)) for c in range(2)])
        assert np.allclose(mean_of(inst, i), expected, atol=1e-12)


def test_mean_of_out_of_range():
    with pytest.raises(IndexError):
        mean_of(rotation_instance(), 7)


def test_vanishing_noise_observation(rng):
    inst = unstructured([[1.0, 1.0], [0.0, 0.0]], 1e-12 * np.eye(2))
    assert np.allclose(draw_observation(inst, 0, rng), [1.0, 1.0], atol=1e-4)


def test_gaussian_sample_covariance(rng):
    inst = unstructured([[0.0, 0.0], [1.0, 1.0]], 0.5 * np.eye(2))
    X = np.array([draw_observation(inst, 0, rng) for _ in range(20000)])
    assert np.allclose(np.cov(X.T), 0.5 * np.eye(2), atol=5e-2)


def test_gaussian_standardized_residuals(rng):
    sigma = correlated_sigma(0.6)
    inst = unstructured([[0.3, -0.2], [1.0, 1.0]], sigma)
    n = 100000
    X = np.array([draw_observation(inst, 0, rng) for _ in range(n)])
    L = np.linalg.cholesky(sigma)
    Y = np.linalg.solve(L, (X - [0.3, -0.2]).T).T
    se = 1.0 / math.sqrt(n)
    assert np.all(np.abs(Y.mean(0)) < 4 * se)
    cov = np.cov(Y.T)
    assert np.all(np.abs(cov - np.eye(2)) < 4 * math.sqrt(2.0) * se)


def test_bernoulli_marginals(rng):
    inst = unstructured([[0.2, 0.9], [0.5, 0.5]], 0.25 * np.eye(2), noise="bernoulli")
    X = np.array([draw_observation(inst, 0, rng) for _ in range(100000)])
    assert set(np.unique(X)) <= {0.0, 1.0}
    assert np.allclose(X.mean(0), [0.2, 0.9], atol=0.01)


def test_bernoulli_means_outside_unit_interval():
    with pytest.raises(InstanceError):
        unstructured([[1.2, 0.5], [0.1, 0.1]], np.eye(2), noise="bernoulli")


def test_sigma_must_be_spd():
    with pytest.raises(InstanceError):
        unstructured([[0.0], [1.0]], [[-1.0]])
    with pytest.raises(InstanceError):
        unstructured([[0.0, 0.0], [1.0, 1.0]], [[1.0, 0.2], [0.1, 1.0]])


def test_theta_ball_violation():
    with pytest.raises(InstanceError):
        Instance(np.eye(2), [[3.0, 0.0], [4.0, 0.0]], np.eye(2), theta_ball=4.0)


def test_rotation_second_arm():
    means = rotation_instance().answer_means
    c, s = math.cos(math.pi / 5), math.sin(math.pi / 5)
    assert np.allclose(means[0], [1.0, 1.0])
    assert np.allclose(means[1], [c - s, s + c], atol=1e-12)
    assert np.allclose(means[1], [0.2212, 1.3968], atol=1e-4)


def test_gaussian_cube_support(rng):
    inst = gen_random_instance("gaussian_cube", 8, 3, rng)
    assert np.all(np.abs(inst.answer_means) <= 1.0)
    assert np.allclose(inst.sigma, 0.5 * np.eye(3))


def test_bernoulli_box_complexity_cap(rng):
    for _ in range(5):
        inst = gen_random_instance("bernoulli_box", 5, 2, rng, complexity_cap=500.0)
        assert gaps(inst.answer_means).H <= 500.0
        assert inst.noise == "bernoulli"
        assert np.all((inst.answer_means >= 0.2) & (inst.answer_means <= 0.9))


def test_unattainable_cap(rng):
    with pytest.raises(InstanceError):
        gen_random_instance("gaussian_cube", 5, 2, rng, complexity_cap=1e-9)


def test_generator_deterministic():
    a = gen_random_instance("gaussian_cube", 5, 2, np.random.default_rng(3))
    b = gen_random_instance("gaussian_cube", 5, 2, np.random.default_rng(3))
    assert np.array_equal(a.answer_means, b.answer_means)
    assert np.array_equal(a.sigma, b.sigma)


def test_covboost_table():
    inst = load_covboost()
    assert inst.K == 20 and inst.d == 3 and inst.unstructured
    i = COVBOOST_ARMS.index("BNT/BNT m1273")
    assert np.array_equal(inst.answer_means[i], [10.43, 7.61, 4.72])
    assert np.array_equal(np.diag(inst.sigma), [0.70, 0.83, 1.54])
    for row, strings in zip(inst.answer_means, COVBOOST_MEANS):
        assert [f"{v:.2f}" for v in row] == list(strings)


def test_covboost_pareto_size():
    assert len(load_covboost().pareto_set()) == 2


def test_noc_theta_row():
    assert np.array_equal(load_noc().theta[3], [-7.90670356, -4.44360318])


def test_noc_stub_reports_missing_features():
    with pytest.raises(MissingDataError):
        load_noc().A


def test_noc_feature_file_validation(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3\n")
    with pytest.raises(InstanceError):
        load_noc(bad)
    short = tmp_path / "short.csv"
    short.write_text("0.1,0.2,0.3,0.4\n" * 10)
    with pytest.raises(InstanceError):
        load_noc(short)


def test_noc_with_features(tmp_path, rng):
    path = tmp_path / "noc.csv"
    feats = rng.uniform(0, 1, size=(259, 4))
    path.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in feats) + "\n")
    inst = load_noc(path)
    assert inst.h == 4 and inst.d == 2 and inst.K == 259
    assert np.allclose(inst.answer_means, feats @ np.array(load_noc().theta))


def test_json_round_trip(tmp_path):
    inst = Instance(np.array([[1.0, 0.5], [0.2, 1.0], [0.3, 0.3]]), [[0.1, -0.4], [1.0 / 3.0, 2.0]],
                    correlated_sigma(-0.3), Z=np.array([[1.0, 0.0], [0.0, 1.0]]), theta_ball=5.0)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    for field in ("A", "theta", "sigma", "Z"):
        assert np.array_equal(getattr(back, field), getattr(inst, field))
    assert back.theta_ball == 5.0
    second = tmp_path / "again.json"
    save_instance(back, second)
    assert path.read_text() == second.read_text()
    assert set(json.loads(path.read_text())) >= {"K", "d", "h", "A", "Z", "theta", "sigma", "noise", "theta_ball"}


def test_dict_dimension_mismatch():
    doc = instance_to_dict(two_answer_bai())
    doc["K"] = 3
    with pytest.raises(InstanceError):
        instance_from_dict(doc)
