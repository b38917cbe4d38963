import math

import numpy as np
import pytest
from scipy.special import lambertw

from psi_pareto.calibration import (Calibration, beta_structured, beta_threshold, beta_unstructured, budget_M,
                                    inflation_c, lambert_wbar, mills_ratio, mvn_orthant_lower_bound, r_small,
                                    zeta)

# reference values from a 30-digit mpmath evaluation of erfc(x/sqrt 2)/2 / phi(x)
MILLS_REFERENCE = {
    -3.0: 225.33489622034912, 0.0: 1.2533141373155003, 1.0: 0.65567954241879847,
    2.146: 0.39949767309420656, 5.0: 0.19280810471531576, 20.0: 0.049875925981836784,
    40.0: 0.024984404205720571,
}


@pytest.mark.parametrize("x, expected", sorted(MILLS_REFERENCE.items()))
def test_mills_reference(x, expected):
    assert mills_ratio(x) == pytest.approx(expected, rel=1e-12)


def test_mills_at_zero():
    assert mills_ratio(0.0) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-15)


def test_mills_lower_bound_at_one():
    assert mills_ratio(1.0) >= 2 / (1 + math.sqrt(5))
    assert 2 / (1 + math.sqrt(5)) == pytest.approx(0.618034, abs=1e-6)


def test_mills_far_left_tail():
    x = -9.0
    assert mills_ratio(x) == pytest.approx(math.exp(40.5) * math.sqrt(2 * math.pi), rel=1e-12)


def test_mills_decreasing_and_bounded():
    grid = np.linspace(-8, 40, 2001)
    vals = np.array([mills_ratio(x) for x in grid])
    assert np.all(np.diff(vals) < 0)
    pos = grid >= 0
    assert np.all(vals[pos] >= 2 / (grid[pos] + np.sqrt(grid[pos] ** 2 + 4)))


def test_mills_log_convex(rng):
    for _ in range(1000):
        p = int(rng.integers(2, 6))
        xs = rng.uniform(-3, 10, p)
        lhs = p * math.log(mills_ratio(xs.mean()))
        rhs = sum(math.log(mills_ratio(x)) for x in xs)
        assert lhs <= rhs + 1e-12


def test_r_small_values():
    assert r_small(1 - 1e-15, 3) == pytest.approx(2 ** -3, rel=1e-6)
    # composition of the mpmath Mills reference
    assert r_small(0.01, 2) == pytest.approx(0.02540148921959578, rel=1e-12)
    assert r_small(0.1, 1) == pytest.approx(0.15937844653401469, rel=1e-12)


def test_r_small_monotone_in_delta():
    for n in (1, 2, 5):
        vals = [r_small(d, n) for d in np.geomspace(1e-10, 0.99, 60)]
        assert np.all(np.diff(vals) > 0)


def test_r_small_argument_checks():
    with pytest.raises(ValueError):
        r_small(1.0, 1)
    with pytest.raises(ValueError):
        r_small(0.1, 0)


def test_wbar_values():
    assert lambert_wbar(1.0) == 1.0
    w5 = lambert_wbar(5.0)
    assert 6.6094 <= w5 <= 7.0567
    assert w5 == pytest.approx(-lambertw(-math.exp(-5.0), k=-1).real, rel=1e-13)


def test_wbar_residuals(rng):
    for x in rng.uniform(1, 100, 1000):
        w = lambert_wbar(x)
        assert abs(w - math.log(w) - x) <= 1e-12


def test_wbar_bounds_grid():
    for x in np.geomspace(1.01, 1e3, 400):
        w = lambert_wbar(x)
        assert x + math.log(x) - 1e-12 <= w <= x + math.log(x) + min(0.5, 1 / math.sqrt(x)) + 1e-12


def test_wbar_domain():
    with pytest.raises(ValueError):
        lambert_wbar(0.5)


def test_zeta_values():
    assert zeta(2.0) == pytest.approx(math.pi ** 2 / 6, rel=1e-15)
    assert zeta(4.0) == pytest.approx(math.pi ** 4 / 90, rel=1e-12)
    with pytest.raises(ValueError):
        zeta(1.0)


def test_beta_unstructured_composition():
    # independent re-evaluation through scipy's Lambert W
    t, delta, K, d, s = 500.0, 0.05, 4, 2, 2.0
    arg = (2 / (d * K)) * math.log(math.exp(K * s) * zeta(s) ** K / delta) \
        + (2 * s / d) * math.log(1 + d / (2 * s) * math.log(t / K)) + 1
    expected = d * K / 2 * (-lambertw(-math.exp(-arg), k=-1).real)
    assert beta_unstructured(t, delta, K, d, s) == pytest.approx(expected, rel=1e-12)
    K, d = 1, 1
    arg = 2 * math.log(math.exp(s) * zeta(s) / delta) + 2 * s * math.log(1 + math.log(t) / (2 * s)) + 1
    assert beta_unstructured(t, delta, K, d, s) == pytest.approx(
        0.5 * (-lambertw(-math.exp(-arg), k=-1).real), rel=1e-12)


def test_beta_unstructured_monotone():
    ts = np.geomspace(5, 1e7, 50)
    assert np.all(np.diff([beta_unstructured(t, 0.1, 5, 2) for t in ts]) > 0)
    ds = np.geomspace(1e-12, 0.5, 50)
    assert np.all(np.diff([beta_unstructured(1e3, d, 5, 2) for d in ds]) < 0)


def test_beta_unstructured_log_delta_slope():
    for d1, d2 in [(1e-4, 1e-8), (1e-10, 1e-20), (1e-30, 1e-60)]:
        gap = beta_unstructured(1e3, d2, 3, 2) - beta_unstructured(1e3, d1, 3, 2)
        assert gap == pytest.approx(math.log(d1 / d2), rel=0.25)


def test_beta_structured_at_zero():
    d, radius, lam_min, delta = 2, 10.0, 0.5, 0.01
    val = beta_structured(0, delta, d, 4, 1.3, radius, lam_min, 1.0)
    assert math.sqrt(val) == pytest.approx(math.sqrt(math.log(1 / delta)) + math.sqrt(d * radius ** 2 / (2 * lam_min)))


def test_beta_structured_needs_ball():
    with pytest.raises(ValueError):
        beta_structured(10, 0.1, 2, 4, 1.0, None, 1.0, 1.0)


def test_beta_threshold_dispatch():
    cal = Calibration.from_sigma("heuristic", 0.5 * np.eye(2), 5)
    assert beta_threshold(100, 0.1, cal) == beta_unstructured(100, 0.1, 5, 2)
    cal = Calibration.from_sigma("heuristic", np.eye(2), 20, h=4, structured=True, arm_norm=1.5, theta_radius=10.0)
    assert beta_threshold(100, 0.1, cal) == beta_structured(100, 0.1, 2, 4, 1.5, 10.0, 1.0, 1.0)


def test_setting_detection():
    assert Calibration.from_sigma("lemma2", np.diag([1.0, 2.0]), 3).setting == "unstructured_diag"
    assert Calibration.from_sigma("lemma2", np.array([[1, .3], [.3, 1]]), 3).setting == "unstructured_corr"
    assert Calibration.from_sigma("lemma2", np.eye(1), 3, structured=True).setting == "bai_structured"


def test_heuristic_budget_value():
    cal = Calibration.from_sigma("heuristic", np.eye(2), 5)
    assert budget_M(100, 0.01, 2, cal) == 922


def test_lemma2_budget_increasing_in_t():
    cal = Calibration.from_sigma("lemma2", 0.5 * np.eye(2), 5)
    vals = [budget_M(t, 0.1, 2, cal) for t in range(1, 2000, 37)]
    assert np.all(np.diff(vals) >= 0) and vals[-1] > vals[0]


def test_lemma2_budget_formula():
    cal = Calibration.from_sigma("lemma2", 0.5 * np.eye(2), 5)
    t, delta, p = 250, 0.05, 2
    q = min(r_small(delta, 2), r_small(delta, 2 + p))
    assert budget_M(t, delta, p, cal) == math.ceil(math.log(2 * t ** 2 * zeta(2) / delta) / (delta * q))


def test_correlated_q_reduces_to_diagonal():
    from psi_pareto.calibration import _q_lemma2
    sigma = 0.7 * np.eye(3)
    diag = Calibration.from_sigma("lemma2", sigma, 4)
    forced = Calibration(kind="lemma2", setting="unstructured_corr", K=4, d=3, h=4, sigma_bar=diag.sigma_bar,
                         d_sigma=diag.d_sigma, det_factor=diag.det_factor)
    assert diag.d_sigma == pytest.approx(3.0, rel=1e-12)
    assert diag.det_factor == pytest.approx(1.0, rel=1e-12)
    for p in (1, 2, 3):
        for delta in (0.1, 0.01, 1e-5):
            assert _q_lemma2(delta, p, forced) == pytest.approx(_q_lemma2(delta, p, diag), rel=1e-10)


def test_heuristic_inflation():
    cal = Calibration.from_sigma("heuristic", np.eye(2), 5)
    assert inflation_c(100, 0.01, cal) == pytest.approx(1 + math.log(math.log(100)) / math.log(100))
    assert inflation_c(100, 0.01, cal) == pytest.approx(1.33163, abs=1e-5)
    assert inflation_c(1, 0.01, cal) == inflation_c(3, 0.01, cal)


def test_lemma2_inflation_definition():
    cal = Calibration.from_sigma("lemma2", 0.5 * np.eye(2), 5)
    for t in (5, 100, 10 ** 4):
        assert inflation_c(t, 0.01, cal) * math.log(100) == pytest.approx(cal.beta(t, 0.005), rel=1e-14)


def test_lemma2_inflation_at_least_one_small_delta():
    cal = Calibration.from_sigma("lemma2", 0.5 * np.eye(2), 5)
    for delta in np.geomspace(1e-2, 1e-8, 7):
        assert inflation_c(100, delta, cal) >= 1.0


def test_lemma2_ratio_surrogate():
    """c log M / log(1/delta) at delta=1e-6, t=1e3 for the Lemma-2 family."""
    cal = Calibration.from_sigma("lemma2", np.eye(1), 2)
    delta = 1e-6
    ratio = inflation_c(1e3, delta, cal) * math.log(budget_M(1e3, delta, 1, cal)) / math.log(1 / delta)
    assert ratio <= 1.2


def test_lemma2_ratio_decreases_towards_one():
    cal = Calibration.from_sigma("lemma2", 0.5 * np.eye(2), 5)
    ratios = []
    for delta in (1e-6, 1e-12, 1e-30, 1e-100, 1e-250):
        ratios.append(inflation_c(1e3, delta, cal) * math.log(budget_M(1e3, delta, 2, cal)) / math.log(1 / delta))
    assert np.all(np.diff(ratios) < 0)
    assert 1.0 < ratios[-1] < 1.2


def test_orthant_bound_tight_in_one_dimension():
    for x in (0.0, 0.7, 3.0):
        exact = 0.5 * math.erfc(x / math.sqrt(2))
        assert mvn_orthant_lower_bound(np.eye(1), [x]) == pytest.approx(exact, rel=1e-12)
    # only the norm of x enters, so negative thresholds give a valid but loose bound
    assert mvn_orthant_lower_bound(np.eye(1), [-1.0]) <= 0.5 * math.erfc(-1 / math.sqrt(2))


def _orthant_mc(sigma, x, rng, n=10 ** 6):
    L = np.linalg.cholesky(sigma)
    X = rng.standard_normal((n, len(x))) @ L.T
    hit = np.all(X >= x, axis=1)
    p = hit.mean()
    return p, math.sqrt(max(p * (1 - p), 1e-300) / n)


def test_orthant_bound_independent(rng):
    p, se = _orthant_mc(np.eye(2), np.array([1.0, 1.0]), rng)
    assert p == pytest.approx(0.025171489600055118, abs=4 * se)
    assert mvn_orthant_lower_bound(np.eye(2), [1.0, 1.0]) <= p + 4 * se


def test_orthant_bound_equicorrelated(rng):
    sigma = np.array([[1.0, 0.5], [0.5, 1.0]])
    p, se = _orthant_mc(sigma, np.zeros(2), rng)
    assert p == pytest.approx(1 / 4 + math.asin(0.5) / (2 * math.pi), abs=4 * se)
    assert mvn_orthant_lower_bound(sigma, np.zeros(2)) <= p + 4 * se


def test_orthant_bound_random_cases(rng):
    for _ in range(100):
        d = int(rng.integers(1, 4))
        B = rng.standard_normal((d, d))
        sigma = B @ B.T + 0.3 * np.eye(d)
        x = rng.uniform(-1.0, 1.5, d)
        p, se = _orthant_mc(sigma, x, rng)
        assert mvn_orthant_lower_bound(sigma, x) <= p + 4 * se + 1e-12
