import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2dmarket import (
    PricingPolicy,
    ProactiveAllocation,
    overlap_indicators,
    payment,
    payments,
    proactive_best_response,
    optimal_selling_price,
    validate_scenario,
)
from d2dmarket.response import market_terms
from d2dmarket.scenario import random_scenario

from conftest import single


def pair(alpha=1.0, p_seller=1.0, p_buyer=0.8, omega=1.0, size=100.0):
    return validate_scenario(
        {
            "sizes": [size],
            "freshness": [alpha],
            "users": [{"interests": [p_seller]}, {"interests": [p_buyer]}],
            "connectivity": omega,
            "beta": 0.75,
            "price_cap": 1.0,
        }
    )


def alloc(x, prices):
    return ProactiveAllocation(np.array(x, dtype=float), np.array(prices, dtype=float))


class TestPayment:
    def test_disconnected_full_cache(self):
        s = single(alpha=0.9)
        pol = PricingPolicy(0.9, 1.0, 0.0)
        # 0.9 * 100 off-peak plus refreshing the stale 10 units at peak.
        assert payment(s, pol, alloc([[100]], [1.0]), 0) == pytest.approx(100.0)

    def test_no_cache_buys_everything_at_peak(self):
        s = single(alpha=0.9)
        pol = PricingPolicy(0.9, 1.0, 0.0)
        assert payment(s, pol, alloc([[0]], [1.0]), 0) == pytest.approx(100.0)

    def test_buyer_pays_seller_for_fresh_part_and_carrier_for_the_rest(self):
        s = pair(alpha=0.9, p_buyer=0.95)
        pol = PricingPolicy(0.5, 1.0, 0.0)
        a = alloc([[100], [0]], [0.5, 1.0])
        t = market_terms(s, pol, a)
        assert t.peer_volume[1, 0] * 0.5 == pytest.approx(42.75)
        refresh = 1.0 * (100 - 90) * 0.95
        assert payment(s, pol, a, 1) == pytest.approx(42.75 + refresh)
        # Seller: off-peak download, own refresh, minus the resale income.
        assert payment(s, pol, a, 0) == pytest.approx(50 + 10 - 42.75)

    def test_commission_reduces_resale_income_only(self):
        s = pair(alpha=0.9, p_buyer=0.95)
        a = alloc([[100], [0]], [0.5, 1.0])
        free = payments(s, PricingPolicy(0.5, 1.0, 0.0), a)
        taxed = payments(s, PricingPolicy(0.5, 1.0, 0.4), a)
        assert taxed[1] == pytest.approx(free[1])
        assert taxed[0] - free[0] == pytest.approx(0.4 * 42.75)

    def test_partial_connectivity_mixes_peer_and_isolated_cases(self):
        s = pair(alpha=0.9, p_buyer=0.95, omega=0.5)
        pol = PricingPolicy(0.5, 1.0, 0.0)
        a = alloc([[100], [0]], [0.5, 1.0])
        connected = 42.75 + 9.5
        isolated = 95.0
        assert payment(s, pol, a, 1) == pytest.approx(0.5 * connected + 0.5 * isolated)

    def test_bad_index(self):
        s = single()
        with pytest.raises(IndexError):
            payment(s, PricingPolicy.flat(1.0), alloc([[0]], [1.0]), 1)


def test_overlap_indicators():
    chi = overlap_indicators(alloc([[100, 0], [0, 0]], [1, 1]))
    assert chi[0, 1].tolist() == [0, 1]
    assert chi[1, 0].tolist() == [1, 1]
    assert chi[0, 0].tolist() == [0, 0]


class TestProactiveResponse:
    def test_caches_above_threshold(self):
        s = single(alpha=0.9)
        pol = PricingPolicy(0.5, 1.0, 0.0)
        assert proactive_best_response(s, pol, alloc([[0]], [1]), 0).tolist() == [100]

    def test_skips_below_threshold(self):
        s = single(alpha=0.3)
        pol = PricingPolicy(0.5, 1.0, 0.0)
        assert proactive_best_response(s, pol, alloc([[0]], [1]), 0).tolist() == [0]

    def test_threshold_is_inclusive(self):
        s = single(alpha=0.5)
        pol = PricingPolicy(0.5, 1.0, 0.0)
        assert proactive_best_response(s, pol, alloc([[0]], [1]), 0).tolist() == [100]

    def test_buyer_tie_against_seller_price(self):
        s = pair(p_buyer=0.8)
        pol = PricingPolicy(0.5, 1.0, 0.0)
        at_tie = alloc([[100], [0]], [0.625, 1.0])
        assert proactive_best_response(s, pol, at_tie, 1).tolist() == [100]
        assert proactive_best_response(s, pol, at_tie, 1, wait_on_tie=True).tolist() == [0]
        cheaper = alloc([[100], [0]], [0.624, 1.0])
        assert proactive_best_response(s, pol, cheaper, 1).tolist() == [0]


class TestSellingPrice:
    @pytest.mark.parametrize(
        "omega, y_o, expected",
        [(1.0, 0.5, 0.625), (0.5, 0.5, 0.25), (1.0, 1.0, 1.0)],
    )
    def test_price_keeps_the_buyer_waiting(self, omega, y_o, expected):
        s = pair(p_buyer=0.8, omega=omega)
        pol = PricingPolicy(y_o, 1.0, 0.0)
        a = alloc([[100], [0]], [1.0, 1.0])
        y = optimal_selling_price(s, pol, a, 0, [0])
        assert y == pytest.approx(expected)
        sold = a.with_user(0, price=y)
        assert proactive_best_response(s, pol, sold, 1, wait_on_tie=True).tolist() == [0]

    def test_price_sweep_cannot_beat_the_optimum(self):
        s = pair(p_buyer=0.8, omega=0.7)
        pol = PricingPolicy(0.5, 1.0, 0.2)
        a = alloc([[100], [0]], [1.0, 1.0])
        y_star = optimal_selling_price(s, pol, a, 0, [0])

        def seller_payment(y):
            trial = a.with_user(0, price=y)
            x_b = proactive_best_response(s, pol, trial, 1, wait_on_tie=True)
            return payment(s, pol, trial.with_user(1, x_row=x_b), 0)

        best = seller_payment(y_star)
        assert all(best <= seller_payment(y) + 1e-9 for y in np.linspace(0, 1, 1001))

    def test_empty_cached_set_is_rejected(self):
        s = pair()
        with pytest.raises(ValueError, match="empty"):
            optimal_selling_price(s, PricingPolicy(0.5, 1.0, 0.0), alloc([[0], [0]], [1, 1]), 0)

    def test_no_reachable_buyer_defaults_to_peak_price(self):
        s = pair(omega=0.0)
        pol = PricingPolicy(0.5, 1.0, 0.0)
        assert optimal_selling_price(s, pol, alloc([[100], [0]], [1, 1]), 0, [0]) == 1.0


def _random_profile(s, rng):
    x = np.where(rng.random((s.n_users, s.n_contents)) < 0.5, s.sizes, 0.0)
    return alloc(x, rng.uniform(0, 1, s.n_users))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_raising_offpeak_price_never_adds_downloads(seed, a, b):
    rng = np.random.default_rng(seed)
    s = random_scenario(rng, 3, 4)
    lo, hi = sorted((a, b))
    prof = _random_profile(s, rng)
    for j in range(s.n_users):
        x_lo = proactive_best_response(s, PricingPolicy(lo, 1.0, 0.3), prof, j)
        x_hi = proactive_best_response(s, PricingPolicy(hi, 1.0, 0.3), prof, j)
        assert np.all(x_hi <= x_lo)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_more_interest_never_removes_downloads(seed, bump):
    rng = np.random.default_rng(seed)
    s = random_scenario(rng, 1, 4)  # single user: own interest moves only its own choice
    pol = PricingPolicy(float(rng.uniform()), 1.0, 0.0)
    prof = _random_profile(s, rng)
    keen = s.replace(interests=np.minimum(1.0, s.interests + bump))
    assert np.all(
        proactive_best_response(keen, pol, prof, 0) >= proactive_best_response(s, pol, prof, 0)
    )
