"""End-user side: expected payments, proactive downloads and resale prices.

Trading structure
-----------------
Every content has exactly one potential seller, its most interested user
(``Scenario.pis.top_user``).  A buyer connected to that seller buys the
fresh part of whatever the seller holds beyond the buyer's own cache and
completes the rest from the carrier; an isolated buyer refreshes and
completes its own cache from the carrier.  Mixing the two cases with the
connectivity probability gives each buyer a proper expectation, so a buyer
is never billed twice for the same content.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .scenario import PricingPolicy, Scenario, ScenarioError

__all__ = [
    "ProactiveAllocation",
    "MarketTerms",
    "market_terms",
    "overlap_indicators",
    "payment",
    "payments",
    "caching_gain",
    "proactive_best_response",
    "buyer_indifference_prices",
    "closed_form_selling_price",
    "optimal_selling_price",
    "seller_best_response",
]

_REL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ProactiveAllocation:
    """Off-peak downloads ``x[j, m]`` and per-user resale prices."""

    x: np.ndarray
    selling_prices: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y_s = np.array(self.selling_prices, dtype=float)
        if x.ndim != 2 or y_s.shape != (x.shape[0],):
            raise ScenarioError(
                f"allocation shapes mismatch: x {x.shape}, selling prices {y_s.shape}"
            )
        x.setflags(write=False)
        y_s.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "selling_prices", y_s)

    @classmethod
    def empty(cls, s: Scenario, pol: PricingPolicy) -> "ProactiveAllocation":
        return cls(np.zeros((s.n_users, s.n_contents)), np.full(s.n_users, pol.y_p))

    def with_user(self, j: int, x_row=None, price=None) -> "ProactiveAllocation":
        x = self.x.copy()
        y_s = self.selling_prices.copy()
        if x_row is not None:
            x[j] = x_row
        if price is not None:
            y_s[j] = price
        return ProactiveAllocation(x, y_s)

    def check(self, s: Scenario, pol: PricingPolicy) -> None:
        if self.x.shape != (s.n_users, s.n_contents):
            raise ScenarioError(
                f"x has shape {self.x.shape}, expected {(s.n_users, s.n_contents)}"
            )
        tol = 1e-9 * s.sizes
        if np.any(self.x < -tol) or np.any(self.x > s.sizes + tol):
            raise ScenarioError("x must lie in [0, S_m] for every content")
        if np.any(self.selling_prices < 0) or np.any(
            self.selling_prices > pol.y_p * (1 + 1e-12)
        ):
            raise ScenarioError("selling prices must lie in [0, y_p]")


def overlap_indicators(alloc: ProactiveAllocation) -> np.ndarray:
    """``chi[i, j, m] = 1`` when ``x[i, m] <= x[j, m]`` (zero on ``i == j``)."""
    x = alloc.x
    chi = (x[:, np.newaxis, :] <= x[np.newaxis, :, :]).astype(int)
    idx = np.arange(x.shape[0])
    chi[idx, idx, :] = 0
    return chi


@dataclass(frozen=True, eq=False)
class MarketTerms:
    """Per-user, per-content expected volumes behind every payment.

    ``peer_volume[j, m]`` is the expected fresh volume user ``j`` buys from the
    seller of ``m``; ``peak_volume[j, m]`` the expected volume it downloads from
    the carrier at peak time.
    """

    offpeak_volume: np.ndarray  # (N,) including the baseline off-peak load
    peak_volume: np.ndarray  # (N, M)
    peer_volume: np.ndarray  # (N, M)
    peer_price: np.ndarray  # (M,) price charged by the seller of each content
    seller: np.ndarray  # (M,)
    purchase: np.ndarray  # (N,) money paid to peers
    resale: np.ndarray  # (N,) money received from peers before commission


def market_terms(s: Scenario, pol: PricingPolicy, alloc: ProactiveAllocation) -> MarketTerms:
    x = alloc.x
    n, m = x.shape
    seller = s.pis.top_user
    cols = np.arange(m)
    x_seller = x[seller, cols]
    is_buyer = np.arange(n)[:, np.newaxis] != seller[np.newaxis, :]
    w = np.where(is_buyer, s.omega[seller[np.newaxis, :], np.arange(n)[:, np.newaxis]], 0.0)
    alpha = s.freshness
    p = s.interests
    fresh = alpha * np.maximum(x_seller - x, 0.0)
    peer_volume = w * fresh * p
    own = s.sizes - alpha * x
    with_peer = s.sizes - alpha * np.maximum(x, x_seller)
    peak_volume = p * (w * with_peer + (1.0 - w) * own)
    peer_price = alloc.selling_prices[seller]
    purchase = (peer_volume * peer_price).sum(axis=1)
    sold_value = (peer_volume * peer_price).sum(axis=0)  # per content
    resale = np.bincount(seller, weights=sold_value, minlength=n)
    return MarketTerms(
        offpeak_volume=s.offpeak_loads + x.sum(axis=1),
        peak_volume=peak_volume,
        peer_volume=peer_volume,
        peer_price=peer_price,
        seller=seller,
        purchase=purchase,
        resale=resale,
    )


def payments(s: Scenario, pol: PricingPolicy, alloc: ProactiveAllocation) -> np.ndarray:
    """Expected payment of every user (vector form of :func:`payment`)."""
    t = market_terms(s, pol, alloc)
    return (
        pol.y_o * t.offpeak_volume
        + t.purchase
        + pol.y_p * t.peak_volume.sum(axis=1)
        - (1.0 - pol.gamma) * t.resale
    )


def payment(s: Scenario, pol: PricingPolicy, alloc: ProactiveAllocation, j: int) -> float:
    """Expected payment of user ``j``.

    Off-peak purchases, peer purchases, peak refresh/completion (connected and
    isolated cases) and minus the resale income net of the carrier's commission.
    With no connectivity this is ``y_o (L_o + sum x) + y_p sum (S - alpha x) p``.
    """
    if not 0 <= j < s.n_users:
        raise IndexError(f"user index {j} out of range for {s.n_users} users")
    return float(payments(s, pol, alloc)[j])


def caching_gain(
    s: Scenario, pol: PricingPolicy, alloc: ProactiveAllocation, j: int
) -> np.ndarray:
    """Payment change of user ``j`` from caching each content fully versus not at all.

    Payments are separable across contents for fixed opponents, so entry ``m``
    is ``payment(x[j, m] = S_m) - payment(x[j, m] = 0)``.
    """
    m = s.n_contents
    full = alloc.with_user(j, x_row=s.sizes)
    none = alloc.with_user(j, x_row=np.zeros(m))
    return _content_payment(s, pol, full, j) - _content_payment(s, pol, none, j)


def _content_payment(
    s: Scenario, pol: PricingPolicy, alloc: ProactiveAllocation, j: int
) -> np.ndarray:
    # Per-content split of payment(); the off-peak load term is constant.
    t = market_terms(s, pol, alloc)
    x = alloc.x
    per = pol.y_o * x[j] + t.peer_volume[j] * t.peer_price + pol.y_p * t.peak_volume[j]
    own_sales = np.where(t.seller == j, (t.peer_volume * t.peer_price).sum(axis=0), 0.0)
    return per - (1.0 - pol.gamma) * own_sales


def _tie_tol(s: Scenario, pol: PricingPolicy) -> np.ndarray:
    return _REL_TOL * s.sizes * (pol.y_o + pol.y_p + 1.0)


def proactive_best_response(
    s: Scenario,
    pol: PricingPolicy,
    alloc: ProactiveAllocation,
    j: int,
    *,
    wait_on_tie: bool = False,
) -> np.ndarray:
    """Payment-minimising downloads of user ``j`` with everyone else fixed.

    Payment is piecewise linear and concave in each ``x[j, m]`` so the optimum
    sits at 0 or ``S_m``.  At exact indifference the user caches, unless
    ``wait_on_tie`` is set and the indifference is against buying from a
    connected seller, in which case the user waits for the seller.
    """
    gain = caching_gain(s, pol, alloc, j)
    tol = _tie_tol(s, pol)
    cache = gain < tol
    if wait_on_tie:
        seller = s.pis.top_user
        x_seller = alloc.x[seller, np.arange(s.n_contents)]
        peer_option = (seller != j) & (s.omega[seller, j] > 0) & (x_seller > 0)
        tie = np.abs(gain) <= tol
        cache &= ~(tie & peer_option)
    return np.where(cache, s.sizes, 0.0)


def buyer_indifference_prices(
    s: Scenario, pol: PricingPolicy, seller: int, contents: Iterable[int]
) -> np.ndarray:
    """Unclipped resale prices at which each (buyer, content) pair is indifferent.

    A buyer with product ``pi`` waits for a full-cache seller exactly when
    ``pi * (omega y_s + (1 - omega) y_p) <= y_o``; solving for ``y_s`` gives
    ``(y_o - y_p (1 - omega) pi) / (omega pi)``.  Pairs with no link or no
    interest are skipped.
    """
    pi = s.pis.pi
    prices = []
    for m in contents:
        for b in range(s.n_users):
            w = s.omega[seller, b]
            if b == seller or w <= 0 or pi[b, m] <= 0:
                continue
            prices.append((pol.y_o - pol.y_p * (1.0 - w) * pi[b, m]) / (w * pi[b, m]))
    return np.array(prices)


def closed_form_selling_price(
    s: Scenario, pol: PricingPolicy, seller: int, contents: Iterable[int]
) -> float:
    """Largest price keeping every reachable buyer of ``contents`` waiting.

    With a single buyer link ``omega`` this is
    ``(y_o - y_p (1 - omega) pi_q) / (omega pi_q)`` where ``pi_q`` is the
    buyer's largest product over the cached contents, clipped to ``[0, y_p]``.
    With no reachable buyer the price defaults to ``y_p``.
    """
    prices = buyer_indifference_prices(s, pol, seller, contents)
    if prices.size == 0:
        return pol.y_p
    return float(np.clip(prices.min(), 0.0, pol.y_p))


def _sales_revenue(
    s: Scenario, pol: PricingPolicy, alloc: ProactiveAllocation, seller: int,
    contents: list[int], price: float,
) -> float:
    # Buyers re-respond to the price; the seller's holdings stay fixed.
    trial = alloc.with_user(seller, price=price)
    x = trial.x.copy()
    for b in range(s.n_users):
        if b == seller:
            continue
        row = proactive_best_response(s, pol, trial, b, wait_on_tie=True)
        x[b, contents] = row[contents]
    t = market_terms(s, pol, ProactiveAllocation(x, trial.selling_prices))
    return float((t.peer_volume[:, contents] * price).sum())


def _pick_price(candidates: np.ndarray, values: np.ndarray, preferred: float, higher_is_better: bool) -> float:
    best = values.max() if higher_is_better else values.min()
    scale = max(1.0, abs(best))
    if higher_is_better:
        tied = candidates[values >= best - 1e-12 * scale]
    else:
        tied = candidates[values <= best + 1e-12 * scale]
    if np.any(np.abs(tied - preferred) <= 1e-12):
        return float(preferred)
    return float(tied.max())


def optimal_selling_price(
    s: Scenario,
    pol: PricingPolicy,
    alloc: ProactiveAllocation,
    seller: int,
    cached: Iterable[int] | None = None,
) -> float:
    """Resale price minimising the seller's payment for a fixed cached set.

    Buyers respond to the announced price (waiting at exact indifference).
    Revenue is piecewise linear in the price with drops exactly at the
    buyers' indifference prices, so the optimum over ``[0, y_p]`` is one of
    those prices or ``y_p``; all of them are evaluated.  Among equally good
    prices the closed-form price (every buyer kept waiting) is preferred.

    ``cached`` defaults to the contents the seller holds and sells.
    """
    top = s.pis.top_user
    if cached is None:
        cached = [m for m in range(s.n_contents) if top[m] == seller and alloc.x[seller, m] > 0]
    cached = sorted(int(m) for m in cached)
    if not cached:
        raise ValueError(f"user {seller} has an empty cached set")
    not_owned = [m for m in cached if top[m] != seller]
    if not_owned:
        raise ValueError(f"user {seller} is not the seller of contents {not_owned}")
    x_row = alloc.x[seller].copy()
    x_row[cached] = np.maximum(x_row[cached], s.sizes[cached])
    alloc = alloc.with_user(seller, x_row=x_row)
    preferred = closed_form_selling_price(s, pol, seller, cached)
    raw = buyer_indifference_prices(s, pol, seller, cached)
    if raw.size == 0:
        return pol.y_p
    candidates = np.unique(np.concatenate([np.clip(raw, 0.0, pol.y_p), [pol.y_p, preferred]]))
    revenue = np.array(
        [_sales_revenue(s, pol, alloc, seller, cached, y) for y in candidates]
    )
    return _pick_price(candidates, revenue, preferred, higher_is_better=True)


def _content_stage(
    s: Scenario, pol: PricingPolicy, seller: int, m: int, price: float
) -> tuple[bool, np.ndarray]:
    """Download equilibrium on content ``m`` for an announced resale price.

    Returns whether the seller caches and which buyers cache.  The
    equilibrium is unique: if the seller caches, buyers respond to the price;
    otherwise they face carrier prices only.
    """
    pi = s.pis.pi[:, m]
    size = s.sizes[m]
    tol = _REL_TOL * size * (pol.y_o + pol.y_p + 1.0)
    n = s.n_users
    buyers = np.array([b for b in range(n) if b != seller], dtype=int)
    w = s.omega[seller, buyers]
    # Seller caches: a buyer caches unless waiting is at least as cheap.
    gain_b = size * (pol.y_o - pi[buyers] * (w * price + (1.0 - w) * pol.y_p))
    buyer_caches = np.where(w > 0, gain_b < -tol, gain_b <= tol)
    waiting = ~buyer_caches
    resale = price * (1.0 - pol.gamma) * np.sum(w[waiting] * pi[buyers][waiting])
    seller_gain = size * (pol.y_o - pol.y_p * pi[seller] - resale)
    if seller_gain <= tol:
        return True, buyer_caches
    gain_alone = size * (pol.y_o - pol.y_p * pi[buyers])
    return False, gain_alone <= tol


def seller_best_response(
    s: Scenario, pol: PricingPolicy, seller: int
) -> tuple[float, np.ndarray]:
    """Price and downloads of ``seller`` on its own contents.

    The seller announces a price anticipating the download equilibrium it
    induces on every content it is the top user of.  Returns the price and
    the seller's download row restricted to those contents (others zero).
    """
    top = s.pis.top_user
    owned = [m for m in range(s.n_contents) if top[m] == seller]
    x_row = np.zeros(s.n_contents)
    if not owned:
        return pol.y_p, x_row
    raw = buyer_indifference_prices(s, pol, seller, owned)
    if raw.size == 0:
        for m in owned:
            caches, _ = _content_stage(s, pol, seller, m, pol.y_p)
            x_row[m] = s.sizes[m] if caches else 0.0
        return pol.y_p, x_row
    candidates = np.unique(np.concatenate([np.clip(raw, 0.0, pol.y_p), [pol.y_p]]))
    pi = s.pis.pi
    costs = np.empty(candidates.size)
    rows = []
    for k, y in enumerate(candidates):
        row = np.zeros(s.n_contents)
        cost = 0.0
        for m in owned:
            caches, buyer_caches = _content_stage(s, pol, seller, m, y)
            size = s.sizes[m]
            if caches:
                row[m] = size
                buyers = [b for b in range(s.n_users) if b != seller]
                w = s.omega[seller, buyers]
                sold = np.sum(w[~buyer_caches] * pi[buyers, m][~buyer_caches])
                cost += size * (pol.y_o + pol.y_p * (s.interests[seller, m] - pi[seller, m]))
                cost -= y * (1.0 - pol.gamma) * size * sold
            else:
                cost += pol.y_p * size * s.interests[seller, m]
        costs[k] = cost
        rows.append(row)
    best = costs.min()
    tied = np.flatnonzero(costs <= best + 1e-12 * max(1.0, abs(best)))
    # Prefer the tied price that keeps all its buyers waiting (closed form).
    choice = tied[-1]
    for k in tied[::-1]:
        cached = [m for m in owned if rows[k][m] > 0]
        if cached and abs(closed_form_selling_price(s, pol, seller, cached) - candidates[k]) <= 1e-12:
            choice = k
            break
    return float(candidates[choice]), rows[choice]
