"""Closed-form win-win conditions and region formulas, plus their audits.

The closed forms treat loads through their expectations (no ``E[max]``
correction) and, for connected users, price each seller at
``price_cap * (own lowest cached product) / (largest buyer product)`` without
clipping to the peak price.  They are therefore an independent analytical
route, not a re-statement of the numerical solver.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import Scenario, random_scenario

__all__ = [
    "WinWinVerdict",
    "RegionMembership",
    "NestingAudit",
    "winwin_disconnected",
    "winwin_connected",
    "region_membership",
    "region_count",
    "solver_verdict",
    "nesting_audit",
]


@dataclass(frozen=True)
class WinWinVerdict:
    condition_holds: bool
    lhs: float
    rhs: float
    margin: float
    solver_agrees: bool | None = None

    @property
    def boundary(self) -> bool:
        return self.margin == 0.0


def _verdict(lhs: float, rhs: float) -> WinWinVerdict:
    margin = lhs - rhs
    if abs(margin) <= 1e-12 * max(1.0, abs(lhs), abs(rhs)):
        margin = 0.0
    return WinWinVerdict(bool(margin > 0), float(lhs), float(rhs), float(margin))


def _global_top(s: Scenario) -> tuple[int, int]:
    j, m = np.unravel_index(np.argmax(s.pis.ordering), s.pis.ordering.shape)
    return int(j), int(m)


def winwin_disconnected(s: Scenario) -> WinWinVerdict:
    """Win-win test for users that cannot trade.

    Holds when ``beta * sum S p`` exceeds
    ``beta (S_1 + sum L_o) + cap (1 - pi_1) sum L_o`` where ``pi_1`` is the
    largest freshness-popularity product and ``S_1`` its content size.
    """
    j, m = _global_top(s)
    pi1 = s.pis.pi[j, m]
    loads = s.offpeak_loads.sum()
    lhs = s.beta * float(np.sum(s.sizes * s.interests))
    rhs = s.beta * (s.sizes[m] + loads) + s.price_cap * (1 - pi1) * loads
    return _verdict(lhs, rhs)


def _trade_term(s: Scenario) -> float:
    m = int(s.pis.content_order[0])
    top = int(s.pis.top_user[m])
    others = np.delete(s.pis.pi[:, m], top)
    if others.size == 0 or others.max() <= 0:
        return 0.0
    ratio = s.pis.pi[top, m] / others.max()
    return s.price_cap * s.sizes[m] * (1 - ratio) * float(others.sum())


def winwin_connected(s: Scenario) -> WinWinVerdict:
    """Win-win test for trading users.

    Same as :func:`winwin_disconnected` plus
    ``cap S_1 (1 - pi_1 / max_j pi_1^(j)) sum_j pi_1^(j)`` over the users other
    than the top user of the leading content; the term is never positive.
    """
    base = winwin_disconnected(s)
    return _verdict(base.lhs, base.rhs + _trade_term(s))


@dataclass(frozen=True, eq=False)
class RegionMembership:
    k: int
    mode: str
    member: bool
    savings: np.ndarray
    profit_gain: float
    load_case: int = 0  # 1 or 2 for the split first disconnected region, else 0


def region_count(s: Scenario, mode: str) -> int:
    """Number of off-peak price levels (``k`` runs from 0 to this minus one)."""
    levels = s.pis.sorted_disconnected if mode == "disconnected" else s.pis.sorted_connected
    return levels.size


def _strictly_positive(savings: np.ndarray, gain: float, scale: float) -> bool:
    tol = 1e-12 * max(1.0, scale)
    return bool(np.all(savings > tol) and gain > tol)


def _disconnected_region(s: Scenario, k: int, level: float, mode: str) -> RegionMembership:
    pi = s.pis.pi
    cap, beta = s.price_cap, s.beta
    L = s.offpeak_loads
    cached = pi >= level - 1e-12
    S = np.broadcast_to(s.sizes, pi.shape)
    demand = float(np.sum(S * s.interests))
    volume = float(np.sum(S * cached))
    fresh = float(np.sum(S * pi * cached))
    surplus = np.sum(S * (pi - level) * cached, axis=1)
    savings = cap * (1 - level) * L + cap * surplus
    tail = cap * (1 - level) * L.sum() + cap * surplus.sum()
    load_case = 0
    if k == 1 and demand > L.sum() + volume + fresh:
        # Peak load still dominates after the first content is cached.
        load_case = 2
        gain = beta * fresh - tail
    else:
        load_case = 1 if k == 1 else 0
        gain = beta * demand - beta * (volume + L.sum()) - tail
    scale = max(demand, float(np.max(savings, initial=0.0)))
    return RegionMembership(k, mode, _strictly_positive(savings, gain, scale), savings, float(gain), load_case)


def _connected_region(s: Scenario, k: int, level: float, gamma: float) -> RegionMembership:
    pi = s.pis.pi
    cap, beta = s.price_cap, s.beta
    L = s.offpeak_loads
    n, m_count = pi.shape
    top = s.pis.top_user
    cmax = s.pis.content_max
    cached = np.flatnonzero(cmax >= level - 1e-12)
    demand = float(np.sum(s.sizes * s.interests))
    price = np.full(n, cap)
    trade_loss = 0.0
    for u in range(n):
        own = [m for m in cached if top[m] == u]
        if not own:
            continue
        buyers = [b for b in range(n) if b != u]
        buyer_pi = pi[np.ix_(buyers, own)] if buyers else np.zeros((0, len(own)))
        q = float(buyer_pi.max()) if buyer_pi.size else 0.0
        if q <= 0:
            continue
        ratio = float(pi[u, own].min()) / q
        price[u] = cap * ratio
        trade_loss += cap * (1 - ratio) * float(np.sum(s.sizes[own] * buyer_pi))
    savings = cap * (1 - level) * L
    gain = beta * demand - beta * (float(s.sizes[cached].sum()) + L.sum())
    gain -= cap * (1 - level) * L.sum() + trade_loss
    for m in cached:
        u = top[m]
        own_surplus = cap * s.sizes[m] * (pi[u, m] - level)
        savings[u] += own_surplus
        gain -= own_surplus
        for b in range(n):
            if b == u:
                continue
            bought = s.sizes[m] * pi[b, m]
            savings[b] += (cap - price[u]) * bought
            savings[u] += price[u] * (1 - gamma) * bought
    scale = max(demand, float(np.max(np.abs(savings), initial=0.0)))
    return RegionMembership(k, "connected", _strictly_positive(savings, gain, scale), savings, float(gain))


def region_membership(s: Scenario, k: int, mode: str = "disconnected", gamma: float = 0.0) -> RegionMembership:
    """Closed-form savings and profit gain for off-peak price ``cap * pi_k``.

    ``member`` is true when every saving and the profit gain are strictly
    positive.  ``k = 0`` is flat pricing (never a member).  The first
    disconnected level distinguishes whether the off-peak or the peak load
    dominates after caching.  In connected mode with ``gamma == 1`` nobody
    waits for a seller and the disconnected formulas apply at the same price.
    """
    if mode not in ("disconnected", "connected"):
        raise ValueError(f"unknown mode {mode!r}")
    count = region_count(s, mode)
    if not 0 <= k < count:
        raise ValueError(f"k = {k} outside 0..{count - 1} for mode {mode}")
    levels = s.pis.sorted_disconnected if mode == "disconnected" else s.pis.sorted_connected
    level = float(levels[k])
    if k == 0:
        return RegionMembership(0, mode, False, np.zeros(s.n_users), 0.0)
    if mode == "disconnected":
        return _disconnected_region(s, k, level, mode)
    if gamma >= 1:
        # Index into the disconnected levels at the same price.
        kd = int(np.argmin(np.abs(s.pis.sorted_disconnected - level)))
        r = _disconnected_region(s, kd, level, mode)
        return RegionMembership(k, mode, r.member, r.savings, r.profit_gain, r.load_case)
    return _connected_region(s, k, level, gamma)


def solver_verdict(s: Scenario, mode: str, **solver_options) -> WinWinVerdict:
    """Closed-form verdict annotated with whether the full solver agrees."""
    from .equilibrium import solve_stackelberg

    verdict = winwin_disconnected(s) if mode == "disconnected" else winwin_connected(s)
    report = solve_stackelberg(s, mode, **solver_options)
    return WinWinVerdict(
        verdict.condition_holds, verdict.lhs, verdict.rhs, verdict.margin,
        solver_agrees=report.is_winwin == verdict.condition_holds,
    )


@dataclass
class NestingAudit:
    mode: str
    samples: int = 0
    nesting_violations: list = field(default_factory=list)
    union_violations: list = field(default_factory=list)
    inclusion_violations: list = field(default_factory=list)
    strict_inclusions: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.nesting_violations or self.union_violations or self.inclusion_violations)


def nesting_audit(
    mode: str = "disconnected",
    samples: int = 1000,
    seed: int = 0,
    *,
    max_users: int = 3,
    max_contents: int = 3,
    scenarios=None,
) -> NestingAudit:
    """Check region nesting, the union collapse and closed-form region inclusion.

    Over a random sample (or the given ``scenarios``) records, as
    counterexample scenarios: levels ``k`` whose region is not contained in
    level ``k - 1``'s; instances in some region but not the first; and
    instances meeting the disconnected condition but not the connected one.
    Instances meeting only the connected condition are kept as examples of a
    strict inclusion.
    """
    if scenarios is None:
        rng = np.random.default_rng(seed)
        scenarios = (random_scenario(rng, max_users, max_contents) for _ in range(samples))
    audit = NestingAudit(mode)
    for s in scenarios:
        audit.samples += 1
        members = [region_membership(s, k, mode).member for k in range(1, region_count(s, mode))]
        for k in range(1, len(members)):
            if members[k] and not members[k - 1]:
                audit.nesting_violations.append((s, k + 1))
        if members and any(members) and not members[0]:
            audit.union_violations.append(s)
        d, c = winwin_disconnected(s), winwin_connected(s)
        if d.condition_holds and not c.condition_holds:
            audit.inclusion_violations.append(s)
        elif c.condition_holds and not d.condition_holds:
            audit.strict_inclusions.append(s)
    return audit
