import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from starnoma.power import (
    InfeasibleClusterError,
    check_feasibility,
    cluster_objective,
    fallback_power,
    min_power_coefficients,
    optimal_power,
    rate_to_sinr,
    slot_rates,
)
from starnoma.rates import DecodingOrder, rate_report

GRID_STEP = 1e-3


def grid_best(gamma, r):
    """Best feasible sum rate over a simplex grid; independent of the closed form."""
    gamma = np.asarray(gamma, dtype=float)
    floors = np.log2(1 + np.asarray(r))
    n = int(round(1 / GRID_STEP))
    best = -np.inf
    if len(gamma) == 2:
        a = np.arange(n + 1) / n
        pts = np.stack([a, 1 - a], axis=1)
    else:
        i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        keep = i + j <= n
        a, b = i[keep] / n, j[keep] / n
        pts = np.stack([a, b, 1 - a - b], axis=1)
    after = np.cumsum(pts[:, ::-1], axis=1)[:, ::-1] - pts
    rates = np.log2(1 + gamma * pts / (gamma * after + 1))
    ok = np.all(rates >= floors - 1e-12, axis=1)
    if ok.any():
        best = rates[ok].sum(axis=1).max()
    return best


def test_min_power_examples():
    assert min_power_coefficients([1.0], [1.0]).tolist() == [1.0]
    assert np.allclose(min_power_coefficients([10.0, 10.0], [1.0, 1.0]), [0.2, 0.1])
    assert np.all(min_power_coefficients([3.0, 5.0, 8.0], [0.0, 0.0, 0.0]) == 0)


def test_min_power_hits_floor_exactly(rng):
    gamma = np.sort(rng.uniform(1, 100, 3))
    r = rng.uniform(0.1, 1.0, 3)
    rho = min_power_coefficients(gamma, r)
    after = np.cumsum(rho[::-1])[::-1] - rho
    assert np.allclose(gamma * rho / (gamma * after + 1), r, rtol=1e-12)


def test_min_power_rejects_bad_gain():
    with pytest.raises(ValueError):
        min_power_coefficients([0.0, 1.0], [1.0, 1.0])


def test_feasibility_examples():
    f = check_feasibility([2.0, 3.0], [0.0, 0.0])
    assert f.feasible and f.load == 0.0
    f = check_feasibility([1.0, 2.0], [1.0, 1.0])
    assert not f.feasible and f.load == pytest.approx(2.0)
    f = check_feasibility([10.0, 10.0], [1.0, 1.0])
    assert f.feasible and f.load == pytest.approx(0.3) and f.margin == pytest.approx(0.7)


def test_optimal_power_examples():
    assert optimal_power([4.0], [1.0]).rho.tolist() == [1.0]
    pa = optimal_power([10.0, 10.0], [1.0, 1.0])
    assert np.allclose(pa.rho, [0.55, 0.45], atol=1e-12)
    rates = slot_rates(pa.rho, [10.0, 10.0])
    assert rates[0] == pytest.approx(1.0, abs=1e-12)
    assert rates[1] == pytest.approx(np.log2(5.5), abs=1e-12)
    with pytest.raises(InfeasibleClusterError):
        optimal_power([1.0, 2.0], [1.0, 1.0])


def test_cluster_objective_examples():
    pa = optimal_power([10.0, 10.0], [1.0, 1.0])
    assert cluster_objective(pa.rho, [10.0, 10.0], [1.0, 1.0]) == pytest.approx(1 + np.log2(5.5), abs=1e-12)
    pa = optimal_power([2.0, 7.0, 9.0], [0.0, 0.0, 0.0])
    assert np.allclose(pa.rho, [0, 0, 1])
    assert cluster_objective(pa.rho, [2.0, 7.0, 9.0]) == pytest.approx(np.log2(10.0))


def test_cluster_objective_matches_rate_report(rng):
    gamma = np.sort(rng.uniform(5, 50, 3))
    pa = optimal_power(gamma, rate_to_sinr(0.1))
    # single-antenna channels with |h|^2 = gamma and unit noise reproduce the gains
    h = np.sqrt(gamma)[:, None].astype(complex)
    rep = rate_report(h, np.ones((1, 1)), pa.rho, DecodingOrder([[0, 1, 2]]), 1.0)
    assert cluster_objective(pa.rho, gamma) == pytest.approx(rep.total, abs=1e-12)


def test_fallback_on_simplex():
    rho = fallback_power([1.0, 2.0], [1.0, 1.0])
    assert rho.sum() == pytest.approx(1.0) and np.all(rho >= 0)
    assert fallback_power([1.0, 2.0], [0.0, 0.0]).tolist() == [0.0, 1.0]


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(0.01, 1e3), min_size=1, max_size=5),
    st.lists(st.floats(0.0, 3.0), min_size=5, max_size=5),
)
def test_load_equals_min_power_sum(gamma, r):
    gamma = np.sort(gamma)
    r = np.asarray(r[: len(gamma)])
    f = check_feasibility(gamma, r)
    total = min_power_coefficients(gamma, r).sum()
    assert f.load == pytest.approx(total, rel=1e-12, abs=1e-12)
    assert f.feasible == (total <= 1.0)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0.5, 1e3), min_size=1, max_size=4), st.floats(0.0, 1.0))
def test_optimal_power_structure(gamma, r_bits):
    gamma = np.sort(gamma)
    r = rate_to_sinr(r_bits)
    f = check_feasibility(gamma, r)
    if not f.feasible:
        with pytest.raises(InfeasibleClusterError):
            optimal_power(gamma, r)
        return
    rho = optimal_power(gamma, r).rho
    assert rho.sum() == pytest.approx(1.0, abs=1e-15)
    rmin = min_power_coefficients(gamma, np.full(len(gamma), r))
    assert np.all(rho >= rmin - 1e-12)
    rates = slot_rates(rho, gamma)
    assert np.allclose(rates[:-1], r_bits, atol=1e-9)
    assert rates[-1] >= r_bits - 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_closed_form_beats_grid(seed):
    rng = np.random.default_rng(seed)
    k = 2 + seed % 2
    r = np.full(k, rate_to_sinr(0.1))
    gamma = np.sort(10 ** rng.uniform(0, 3, k))
    rho = optimal_power(gamma, r).rho
    assert cluster_objective(rho, gamma) >= grid_best(gamma, r) - 1e-3
