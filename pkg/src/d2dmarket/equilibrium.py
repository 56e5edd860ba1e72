"""Follower subgame, backward induction and the flat-pricing baseline."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .carrier import CostEstimate, ProfitBreakdown, expected_cost, optimize_pricing, profit
from .response import (
    ProactiveAllocation,
    market_terms,
    payments,
    proactive_best_response,
    seller_best_response,
)
from .scenario import PricingPolicy, Scenario

__all__ = [
    "NonConvergenceError",
    "Trade",
    "MarketOutcome",
    "EquilibriumReport",
    "subgame_equilibrium",
    "baseline",
    "solve_stackelberg",
    "relative_gain",
]

CostFn = Callable[[ProactiveAllocation], CostEstimate]


class NonConvergenceError(RuntimeError):
    """Best-response iteration hit its cap; ``trace`` holds every visited profile."""

    def __init__(self, message: str, trace: list[ProactiveAllocation]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class Trade:
    seller: int
    buyer: int
    content: int
    volume: float  # expected fresh volume delivered
    price: float


@dataclass(frozen=True, eq=False)
class MarketOutcome:
    policy: PricingPolicy
    alloc: ProactiveAllocation
    payments: np.ndarray
    trade_ledger: tuple[Trade, ...]
    cost: CostEstimate
    profit: ProfitBreakdown
    iterations: int = 0  # sweeps that changed the profile

    @property
    def offpeak_load(self) -> float:
        return self.cost.offpeak_load

    @property
    def peak_load(self) -> float:
        return self.cost.peak_load


def relative_gain(delta: float, reference: float) -> float:
    """``100 * delta / reference``; 0 when both vanish, nan for a zero reference."""
    scale = 1e-12 * max(1.0, abs(reference))
    if abs(delta) <= scale:
        return 0.0
    if abs(reference) <= scale:
        return float("nan")
    return 100.0 * delta / reference


@dataclass(frozen=True, eq=False)
class EquilibriumReport:
    mode: str
    policy: PricingPolicy
    optimized: MarketOutcome
    baseline: MarketOutcome
    savings_gain: np.ndarray = field(init=False)
    profit_gain: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "savings_gain", self.baseline.payments - self.optimized.payments)
        object.__setattr__(
            self, "profit_gain", self.optimized.profit.profit - self.baseline.profit.profit
        )

    @property
    def savings_gain_pct(self) -> np.ndarray:
        return np.array(
            [relative_gain(d, b) for d, b in zip(self.savings_gain, self.baseline.payments)]
        )

    @property
    def profit_gain_pct(self) -> float:
        return relative_gain(self.profit_gain, self.baseline.profit.profit)

    @property
    def is_winwin(self) -> bool:
        """Strict win-win: every user saves and the carrier gains."""
        scale = 1e-9 * max(1.0, float(np.max(np.abs(self.baseline.payments), initial=0.0)))
        return bool(np.all(self.savings_gain > scale) and self.profit_gain > scale)


def _ledger(s: Scenario, pol: PricingPolicy, alloc: ProactiveAllocation) -> tuple[Trade, ...]:
    t = market_terms(s, pol, alloc)
    trades = []
    for b, m in zip(*np.nonzero(t.peer_volume > 0)):
        trades.append(
            Trade(int(t.seller[m]), int(b), int(m), float(t.peer_volume[b, m]), float(t.peer_price[m]))
        )
    return tuple(trades)


def evaluate_outcome(
    s: Scenario,
    pol: PricingPolicy,
    alloc: ProactiveAllocation,
    *,
    iterations: int = 0,
    cost_fn: CostFn | None = None,
    **cost_options,
) -> MarketOutcome:
    cost = cost_fn(alloc) if cost_fn is not None else expected_cost(s, alloc, **cost_options)
    return MarketOutcome(
        policy=pol,
        alloc=alloc,
        payments=payments(s, pol, alloc),
        trade_ledger=_ledger(s, pol, alloc),
        cost=cost,
        profit=profit(s, pol, alloc, cost),
        iterations=iterations,
    )


def subgame_equilibrium(
    s: Scenario,
    pol: PricingPolicy,
    *,
    start: ProactiveAllocation | None = None,
    max_iter: int = 100,
    cost_fn: CostFn | None = None,
    **cost_options,
) -> MarketOutcome:
    """Users' equilibrium for a fixed carrier policy.

    Each content's seller is its most interested user.  Users update in turn:
    a seller first re-announces its price (anticipating how buyers and itself
    download at that price), then every user best-responds with its
    downloads, waiting for a seller when indifferent.  Iteration stops when a
    full sweep changes nothing; hitting ``max_iter`` raises
    :class:`NonConvergenceError`.
    """
    alloc = start if start is not None else ProactiveAllocation.empty(s, pol)
    # A seller's price depends only on the policy, not on the current profile.
    prices = {int(u): seller_best_response(s, pol, int(u))[0] for u in set(s.pis.top_user)}
    trace = [alloc]
    for it in range(1, max_iter + 1):
        previous = alloc
        for j in range(s.n_users):
            price = prices.get(j, pol.y_p)
            alloc = alloc.with_user(j, price=price)
            alloc = alloc.with_user(j, x_row=proactive_best_response(s, pol, alloc, j, wait_on_tie=True))
        trace.append(alloc)
        if np.array_equal(alloc.x, previous.x) and np.allclose(
            alloc.selling_prices, previous.selling_prices, rtol=0, atol=1e-12
        ):
            # The final sweep only confirms the fixed point.
            return evaluate_outcome(s, pol, alloc, iterations=it - 1, cost_fn=cost_fn, **cost_options)
    raise NonConvergenceError(
        f"best responses did not settle within {max_iter} sweeps for {pol}", trace
    )


def baseline(s: Scenario, **cost_options) -> MarketOutcome:
    """Flat price at the cap all day, no caching and no trading."""
    pol = PricingPolicy.flat(s.price_cap)
    return evaluate_outcome(s, pol, ProactiveAllocation.empty(s, pol), **cost_options)


def solve_stackelberg(
    s: Scenario,
    mode: str = "disconnected",
    *,
    gamma_grid=None,
    method: str = "auto",
    samples: int = 100_000,
    seed: int | None = 0,
    max_iter: int = 100,
) -> EquilibriumReport:
    """Carrier optimum by backward induction, compared with the baseline."""
    pol, outcome = optimize_pricing(
        s, mode, gamma_grid, method=method, samples=samples, seed=seed, max_iter=max_iter
    )
    scen = s.disconnected() if mode == "disconnected" else s
    base = baseline(scen, method=method, samples=samples, seed=seed)
    return EquilibriumReport(mode=mode, policy=pol, optimized=outcome, baseline=base)
