"""Carrier side: expected service cost, profit accounting and price search."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .response import ProactiveAllocation, market_terms
from .scenario import PricingPolicy, Scenario

__all__ = [
    "CostEstimate",
    "ProfitBreakdown",
    "EXACT_INDICATOR_LIMIT",
    "MAX_EXACT_INDICATORS",
    "expected_cost",
    "peak_load_model",
    "profit",
    "default_gamma_grid",
    "pricing_candidates",
    "resale_breakpoints",
    "optimize_pricing",
]

# Exact enumeration is used automatically up to this many random indicators.
EXACT_INDICATOR_LIMIT = 22
# log2 of the largest joint realization count exact enumeration accepts.
MAX_EXACT_INDICATORS = 28


@dataclass(frozen=True)
class CostEstimate:
    value: float
    method: str  # "exact" or "monte-carlo"
    samples: int = 0
    stderr: float = 0.0
    offpeak_load: float = 0.0
    peak_load: float = 0.0  # expected


@dataclass(frozen=True)
class ProfitBreakdown:
    revenue_offpeak: float
    revenue_peak: float
    revenue_commission: float
    cost: float
    profit: float

    @property
    def revenue(self) -> float:
        return self.revenue_offpeak + self.revenue_peak + self.revenue_commission


@dataclass(frozen=True)
class _Unit:
    # One independent random block of the peak load: ``link`` is the
    # probability that the block uses ``connected`` volumes, ``p`` the request
    # probabilities of its contents.
    p: np.ndarray
    isolated: np.ndarray
    connected: np.ndarray
    link: float


@dataclass(frozen=True)
class PeakLoadModel:
    offpeak: float
    constant: float
    units: tuple[_Unit, ...]

    @property
    def n_indicators(self) -> int:
        count = 0
        for u in self.units:
            count += int(np.sum((u.p > 0) & (u.p < 1)))
            count += int(0 < u.link < 1)
        return count

    @property
    def expected_peak(self) -> float:
        total = self.constant
        for u in self.units:
            total += float(np.dot(u.p, u.link * u.connected + (1 - u.link) * u.isolated))
        return total


def peak_load_model(s: Scenario, alloc: ProactiveAllocation) -> PeakLoadModel:
    """Decompose the random peak load into independent blocks.

    Requests are independent Bernoulli draws and each (seller, buyer) link is
    one Bernoulli draw shared by all contents that buyer could get from that
    seller, so the blocks are: one per such link, plus single requests.
    """
    x = alloc.x
    seller = s.pis.top_user
    alpha, sizes, p = s.freshness, s.sizes, s.interests
    constant = 0.0
    units: list[_Unit] = []
    for j in range(s.n_users):
        own = sizes - alpha * x[j]
        linked: dict[int, list[int]] = {}
        for m in range(s.n_contents):
            i = seller[m]
            w = s.omega[i, j] if i != j else 0.0
            if w > 0 and x[i, m] > x[j, m] and p[j, m] > 0:
                linked.setdefault(int(i), []).append(m)
                continue
            if p[j, m] == 1:
                constant += own[m]
            elif p[j, m] > 0:
                units.append(_Unit(p[j, [m]], own[[m]], own[[m]], 0.0))
        for i, ms in linked.items():
            with_peer = sizes[ms] - alpha[ms] * np.maximum(x[j, ms], x[i, ms])
            units.append(_Unit(p[j, ms], own[ms], with_peer, float(s.omega[i, j])))
    offpeak = float(s.offpeak_loads.sum() + x.sum())
    return PeakLoadModel(offpeak, constant, tuple(units))


def _unit_distribution(u: _Unit) -> tuple[np.ndarray, np.ndarray]:
    values, probs = [], []
    k = u.p.size
    for bits in itertools.product((0, 1), repeat=k):
        req = np.array(bits, dtype=float)
        pr = float(np.prod(np.where(req > 0, u.p, 1 - u.p)))
        if pr == 0:
            continue
        for linked, pl in ((1, u.link), (0, 1 - u.link)):
            if pl == 0:
                continue
            vol = u.connected if linked else u.isolated
            values.append(float(req @ vol))
            probs.append(pr * pl)
    return np.array(values), np.array(probs)


def _merge(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keys = np.round(values, 9)
    uniq, inverse = np.unique(keys, return_inverse=True)
    return uniq, np.bincount(inverse, weights=probs)


def _exact_expectation(model: PeakLoadModel) -> float:
    values = np.array([model.constant])
    probs = np.array([1.0])
    for u in model.units:
        uv, up = _unit_distribution(u)
        values = (values[:, None] + uv[None, :]).ravel()
        probs = (probs[:, None] * up[None, :]).ravel()
        values, probs = _merge(values, probs)
    return float(np.dot(probs, np.maximum(model.offpeak, values)))


def _mc_expectation(
    model: PeakLoadModel, samples: int, seed: int | np.random.SeedSequence | None,
    chunk: int = 50_000,
) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        peak = np.full(n, model.constant)
        for u in model.units:
            req = rng.random((n, u.p.size)) < u.p
            if u.link <= 0:
                peak += req @ u.isolated
            elif u.link >= 1:
                peak += req @ u.connected
            else:
                link = rng.random(n) < u.link
                peak += np.where(link, req @ u.connected, req @ u.isolated)
        vals = np.maximum(model.offpeak, peak)
        total += vals.sum()
        total_sq += np.dot(vals, vals)
        done += n
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    stderr = np.sqrt(var / max(samples - 1, 1))
    return float(mean), float(stderr)


def expected_cost(
    s: Scenario,
    alloc: ProactiveAllocation,
    method: str = "auto",
    *,
    samples: int = 100_000,
    seed: int | np.random.SeedSequence | None = 0,
) -> CostEstimate:
    """Carrier cost ``beta * E[max(off-peak load, peak load)]``.

    ``method`` is ``"exact"``, ``"mc"`` or ``"auto"``; auto enumerates exactly
    when the instance has at most ``EXACT_INDICATOR_LIMIT`` non-degenerate
    random indicators and falls back to seeded Monte Carlo otherwise.
    """
    model = peak_load_model(s, alloc)
    n_ind = model.n_indicators
    if method == "auto":
        method = "exact" if n_ind <= EXACT_INDICATOR_LIMIT else "mc"
    if method == "exact":
        if n_ind > MAX_EXACT_INDICATORS:
            raise ValueError(
                f"exact cost needs 2^{n_ind} realizations (limit 2^{MAX_EXACT_INDICATORS})"
            )
        value = s.beta * _exact_expectation(model)
        return CostEstimate(value, "exact", 0, 0.0, model.offpeak, model.expected_peak)
    if method in ("mc", "monte-carlo"):
        if samples < 2:
            raise ValueError("monte-carlo cost needs at least 2 samples")
        if n_ind == 0:
            value = s.beta * max(model.offpeak, model.constant)
            return CostEstimate(value, "monte-carlo", samples, 0.0, model.offpeak, model.expected_peak)
        mean, se = _mc_expectation(model, samples, seed)
        return CostEstimate(
            s.beta * mean, "monte-carlo", samples, s.beta * se, model.offpeak, model.expected_peak
        )
    raise ValueError(f"unknown cost method {method!r}")


def profit(
    s: Scenario,
    pol: PricingPolicy,
    alloc: ProactiveAllocation,
    cost: CostEstimate | None = None,
    **cost_options,
) -> ProfitBreakdown:
    """Carrier profit: all user payments (commission included) minus cost."""
    t = market_terms(s, pol, alloc)
    if cost is None:
        cost = expected_cost(s, alloc, **cost_options)
    rev_off = pol.y_o * float(t.offpeak_volume.sum())
    rev_peak = pol.y_p * float(t.peak_volume.sum())
    rev_comm = pol.gamma * float(t.purchase.sum())
    return ProfitBreakdown(
        revenue_offpeak=rev_off,
        revenue_peak=rev_peak,
        revenue_commission=rev_comm,
        cost=cost.value,
        profit=rev_off + rev_peak + rev_comm - cost.value,
    )


def default_gamma_grid(size: int = 101) -> np.ndarray:
    if size < 1:
        raise ValueError("gamma grid needs at least one point")
    if size == 1:
        return np.array([0.0])
    return np.linspace(0.0, 1.0, size)


def pricing_candidates(s: Scenario, mode: str) -> np.ndarray:
    """Off-peak price levels ``price_cap * pi_k`` the carrier chooses from."""
    if mode == "disconnected":
        levels = s.pis.sorted_disconnected
    elif mode == "connected":
        levels = s.pis.sorted_connected
    else:
        raise ValueError(f"mode must be 'disconnected' or 'connected', got {mode!r}")
    return s.price_cap * levels


def resale_breakpoints(s: Scenario, gamma: float) -> np.ndarray:
    """Off-peak prices where a seller's caching decision flips because of resale.

    A seller of content ``m`` caches while
    ``y_o <= y_p pi_u + (1 - gamma) y_s sum_W omega pi_b`` over the buyers
    ``W`` that wait for it.  Two price regimes are covered: ``y_s`` clipped to
    ``y_p`` (with ``W`` any prefix of the buyers ordered by interest) and
    ``y_s`` equal to some buyer's indifference price, itself affine in ``y_o``
    (with every reachable buyer waiting).
    """
    y_p = s.price_cap
    pi = s.pis.pi
    top = s.pis.top_user
    points = []
    for m in range(s.n_contents):
        u = int(top[m])
        buyers = [b for b in range(s.n_users) if b != u and s.omega[u, b] > 0 and pi[b, m] > 0]
        if not buyers:
            continue
        weights = sorted((pi[b, m], s.omega[u, b] * pi[b, m]) for b in buyers)
        acc = 0.0
        for _, wp in weights:
            acc += wp
            points.append(y_p * (pi[u, m] + (1 - gamma) * acc))
        c = (1 - gamma) * acc
        owned = [k for k in range(s.n_contents) if top[k] == u]
        for k in owned:
            for q in range(s.n_users):
                w = s.omega[u, q]
                if q == u or w <= 0 or pi[q, k] <= 0:
                    continue
                # y_s = a * y_o + b0 for binding buyer q on content k.
                a = 1.0 / (w * pi[q, k])
                b0 = -y_p * (1 - w) / w
                denom = 1 - c * a
                if abs(denom) > 1e-12:
                    points.append((y_p * pi[u, m] + c * b0) / denom)
    pts = np.array(points, dtype=float)
    return pts[(pts > 0) & (pts < y_p)]


def _connected_levels(s: Scenario, gamma: float) -> np.ndarray:
    # Every user's own threshold plus the resale-driven seller thresholds.
    own = s.price_cap * s.pis.sorted_disconnected
    extra = [y for y in resale_breakpoints(s, gamma) if np.all(np.abs(own - y) > 1e-12)]
    return np.unique(np.concatenate([own, extra]))[::-1]


def optimize_pricing(
    s: Scenario,
    mode: str = "disconnected",
    gamma_grid: Sequence[float] | None = None,
    *,
    method: str = "auto",
    samples: int = 100_000,
    seed: int | None = 0,
    max_iter: int = 100,
):
    """Search the carrier's candidate policies and return the best outcome.

    The peak price is the cap; the commission ranges over ``gamma_grid`` (101
    points by default).  The off-peak price ranges over
    :func:`pricing_candidates` for disconnected users.  With trading, a
    seller's resale income moves its caching threshold off those levels, so
    connected mode also tries every user's own threshold and the
    :func:`resale_breakpoints` of the current commission.  Each candidate is scored on the users' download equilibrium.
    Ties go to the larger off-peak price, then the larger commission.  In
    disconnected mode connectivity is zeroed and, as no trade can happen, the
    commission is reported as the largest grid value.

    Returns ``(policy, outcome)`` where ``outcome`` is a
    :class:`~d2dmarket.equilibrium.MarketOutcome`.
    """
    from .equilibrium import subgame_equilibrium

    grid = default_gamma_grid() if gamma_grid is None else np.asarray(gamma_grid, dtype=float)
    if mode == "disconnected":
        s = s.disconnected()
        grid = grid[-1:] if grid.size else np.array([0.0])
    base_levels = pricing_candidates(s, mode)
    cost_cache: dict[bytes, CostEstimate] = {}

    def cost_of(alloc: ProactiveAllocation) -> CostEstimate:
        key = alloc.x.tobytes()
        if key not in cost_cache:
            cost_cache[key] = expected_cost(s, alloc, method, samples=samples, seed=seed)
        return cost_cache[key]

    best = None
    for gamma in grid:
        levels = base_levels if mode == "disconnected" else _connected_levels(s, gamma)
        for y_o in levels:
            pol = PricingPolicy(float(y_o), s.price_cap, float(gamma))
            out = subgame_equilibrium(s, pol, max_iter=max_iter, cost_fn=cost_of)
            if best is None or _better(out.profit.profit, pol, best[1].profit.profit, best[0]):
                best = (pol, out)
    return best


def _better(value: float, pol: PricingPolicy, best_value: float, best_pol: PricingPolicy) -> bool:
    tol = 1e-9 * max(1.0, abs(value), abs(best_value))
    if value > best_value + tol:
        return True
    if value < best_value - tol:
        return False
    return (pol.y_o, pol.gamma) > (best_pol.y_o, best_pol.gamma)
