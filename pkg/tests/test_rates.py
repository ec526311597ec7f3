import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from starnoma.power import optimal_power, rate_to_sinr
from starnoma.rates import (
    DecodingOrder,
    combined_gain_order,
    decoding_order,
    equivalent_gain,
    equivalent_gains,
    rate_report,
    sinr_cross,
    sinr_self,
    sum_rate,
    verify_sic,
)

NOISE = 1.0


def scalar_instance(q_own):
    """Single-cluster instance with 1-antenna channels so that |h w|^2 = q_own[u]."""
    h = np.sqrt(np.asarray(q_own, dtype=float))[:, None].astype(complex)
    return h, np.ones((1, 1), dtype=complex)


def sinr_by_hand(h, w, rho, slots, c, k, noise, listener=None):
    """Scalar loop evaluation of the SIC SINR, independent of the library."""
    u = slots[c][k]
    v = u if listener is None else listener
    own = abs(np.dot(h[v], w[c])) ** 2
    intra = sum(rho[slots[c][n]] for n in range(k + 1, len(slots[c])))
    inter = sum(abs(np.dot(h[v], w[j])) ** 2 for j in range(len(w)) if j != c)
    return own * rho[u] / (own * intra + inter + noise)


def random_instance(rng, sizes=(2, 3), n=3):
    K = sum(sizes)
    cluster = np.repeat(np.arange(len(sizes)), sizes)
    h = rng.standard_normal((K, n)) + 1j * rng.standard_normal((K, n))
    w = rng.standard_normal((len(sizes), n)) + 1j * rng.standard_normal((len(sizes), n))
    rho = np.zeros(K)
    for c in range(len(sizes)):
        rho[cluster == c] = rng.dirichlet(np.ones(sizes[c]))
    return h, w, rho, cluster


def test_single_user_unit_sinr():
    h, w = scalar_instance([1.0])
    order = DecodingOrder([[0]])
    assert sinr_self(h, w, [1.0], order, 0, 0, 1.0) == pytest.approx(1.0)
    rep = rate_report(h, w, [1.0], order, 1.0)
    assert rep.rates[0] == pytest.approx(1.0)
    assert sum_rate(rep) == pytest.approx(1.0)


def test_cross_sinr_worked_example():
    # second-decoded user has |h w|^2 = 2 sigma^2, coefficients (0.8, 0.2)
    h, w = scalar_instance([0.5, 2.0])
    order = DecodingOrder([[0, 1]])
    s = sinr_cross(h, w, [0.8, 0.2], order, 0, 1, 0, 1.0)
    assert s == pytest.approx(2 * 0.8 / (2 * 0.2 + 1), rel=1e-12)
    assert s == pytest.approx(1.142857142857, rel=1e-9)


def test_cross_equals_self_on_equal_channels():
    h, w = scalar_instance([3.0, 3.0])
    order = DecodingOrder([[0, 1]])
    assert sinr_cross(h, w, [0.6, 0.4], order, 0, 1, 0, 1.0) == sinr_self(h, w, [0.6, 0.4], order, 0, 0, 1.0)


def test_cross_zero_power_and_index_errors():
    h, w = scalar_instance([1.0, 2.0])
    order = DecodingOrder([[0, 1]])
    assert sinr_cross(h, w, [0.0, 1.0], order, 0, 1, 0, 1.0) == 0.0
    with pytest.raises(ValueError):
        sinr_cross(h, w, [0.5, 0.5], order, 0, 0, 1, 1.0)
    with pytest.raises(ValueError):
        sinr_self(h, w, [0.5, 0.5], order, 0, 0, 0.0)


def test_last_slot_has_no_intra_interference():
    h, w = scalar_instance([1.0, 4.0])
    order = DecodingOrder([[0, 1]])
    assert sinr_self(h, w, [0.3, 0.7], order, 0, 1, 1.0) == pytest.approx(4.0 * 0.7)


def test_sinr_against_scalar_loop(rng):
    h, w, rho, cluster = random_instance(rng)
    order = DecodingOrder.identity(cluster)
    rep = rate_report(h, w, rho, order, 0.7)
    for c, slots in enumerate(order.slots):
        for k, u in enumerate(slots):
            ref = sinr_by_hand(h, w, rho, order.slots, c, k, 0.7)
            assert rep.sinr[u] == pytest.approx(ref, rel=1e-12)
            assert sinr_self(h, w, rho, order, c, k, 0.7) == pytest.approx(ref, rel=1e-12)
            for j in range(k + 1, len(slots)):
                cross = sinr_by_hand(h, w, rho, order.slots, c, k, 0.7, listener=slots[j])
                assert rep.cross[(c, j, k)] == pytest.approx(np.log2(1 + cross), rel=1e-12)


def test_equivalent_gain(rng):
    h, w, _, cluster = random_instance(rng)
    g = equivalent_gains(h, w, cluster, 0.3)
    for u in range(len(cluster)):
        c = cluster[u]
        own = abs(h[u] @ w[c]) ** 2
        inter = sum(abs(h[u] @ w[j]) ** 2 for j in range(len(w)) if j != c)
        assert g[u] == pytest.approx(own / (inter + 0.3), rel=1e-12)
        assert equivalent_gain(h, w, u, cluster, 0.3) == pytest.approx(g[u], rel=1e-12)
    # single cluster: no interference term
    g1 = equivalent_gains(h[:2], w[:1], np.zeros(2, int), 0.3)
    assert np.allclose(g1, np.abs(h[:2] @ w[0]) ** 2 / 0.3)


def test_equivalent_gain_homogeneity(rng):
    h, w, _, cluster = random_instance(rng)
    g = equivalent_gains(h, w, cluster, 0.3)
    w2 = w.copy()
    w2[0] *= 3.0
    g2 = equivalent_gains(h, w2, cluster, 0.3)
    # only cluster 0 with no interference change is exactly |alpha|^2; check own gain scaling
    own = np.abs(np.einsum("un,un->u", h, w[cluster])) ** 2
    own2 = np.abs(np.einsum("un,un->u", h, w2[cluster])) ** 2
    assert np.allclose(own2[cluster == 0], 9 * own[cluster == 0])
    assert np.all(g2[cluster == 0] > g[cluster == 0])


def test_decoding_order_examples():
    assert decoding_order([4.0], [0]).to_list() == [[0]]
    assert decoding_order([5.0, 2.0], [0, 0]).to_list() == [[1, 0]]
    assert decoding_order([1.0, 1.0, 1.0], [0, 0, 0]).to_list() == [[0, 1, 2]]
    assert decoding_order([3.0, 1.0, 2.0, 0.5], [0, 1, 0, 1]).to_list() == [[2, 0], [3, 1]]


def test_combined_gain_order_matches_gamma_for_one_cluster(rng):
    h = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    w = rng.standard_normal((1, 3)) + 1j * rng.standard_normal((1, 3))
    cluster = np.zeros(4, int)
    assert combined_gain_order(h, w, cluster) == decoding_order(equivalent_gains(h, w, cluster, 1.0), cluster)


def test_sic_violation_on_reversed_order():
    h, w = scalar_instance([100.0, 1.0])
    bad = DecodingOrder([[0, 1]])  # strong user decoded first
    rep = rate_report(h, w, [0.3, 0.7], bad, 1.0)
    assert verify_sic(rep, bad) == [(0, 1, 0)]
    good = decoding_order([100.0, 1.0], [0, 0])
    assert verify_sic(rate_report(h, w, [0.7, 0.3], good, 1.0), good) == []


def test_sic_single_user_vacuous():
    h, w = scalar_instance([2.0])
    order = DecodingOrder([[0]])
    assert verify_sic(rate_report(h, w, [1.0], order, 1.0), order) == []


def test_sum_rate_zero_and_worked_instance():
    h, w = scalar_instance([1.0, 1.0])
    rep = rate_report(h, w, [0.0, 0.0], DecodingOrder([[0, 1]]), 1.0)
    assert sum_rate(rep) == 0.0
    # gains (10, 10) and unit floors: optimal split gives 1 + log2(5.5)
    rho = optimal_power([10.0, 10.0], rate_to_sinr([1.0, 1.0])).rho
    h, w = scalar_instance([10.0, 10.0])
    rep = rate_report(h, w, rho, DecodingOrder([[0, 1]]), 1.0)
    assert sum_rate(rep) == pytest.approx(1 + np.log2(5.5), abs=1e-12)
    assert sum_rate(rep) == pytest.approx(3.4594, abs=1e-4)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.integers(1, 3))
def test_gamma_order_satisfies_sic_for_any_split(seed, k, c):
    rng = np.random.default_rng(seed)
    h, w, rho, cluster = random_instance(rng, sizes=(k,) * c)
    gains = equivalent_gains(h, w, cluster, 0.5)
    order = decoding_order(gains, cluster)
    assert verify_sic(rate_report(h, w, rho, order, 0.5), order) == []


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_order_ignores_power_split(seed):
    rng = np.random.default_rng(seed)
    h, w, rho, cluster = random_instance(rng)
    gains = equivalent_gains(h, w, cluster, 0.5)
    a = decoding_order(gains, cluster)
    _, _, rho2, _ = random_instance(rng)
    rep1 = rate_report(h, w, rho, a, 0.5)
    rep2 = rate_report(h, w, rho2, a, 0.5)
    assert verify_sic(rep1, a) == [] and verify_sic(rep2, a) == []


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=6), st.integers(0, 5), st.floats(0, 10))
def test_sum_rate_monotone_in_sinr(sinr, idx, bump):
    from starnoma.rates import RateReport

    sinr = np.asarray(sinr)
    more = sinr.copy()
    more[idx % len(sinr)] += bump
    assert sum_rate(RateReport(more, np.log2(1 + more))) >= sum_rate(RateReport(sinr, np.log2(1 + sinr)))
