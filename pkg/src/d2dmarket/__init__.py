"""Carrier pricing game with proactive caching and peer-to-peer content resale."""
from .carrier import (
    CostEstimate,
    ProfitBreakdown,
    default_gamma_grid,
    expected_cost,
    optimize_pricing,
    pricing_candidates,
    profit,
)
from .equilibrium import (
    EquilibriumReport,
    MarketOutcome,
    NonConvergenceError,
    Trade,
    baseline,
    relative_gain,
    solve_stackelberg,
    subgame_equilibrium,
)
from .response import (
    ProactiveAllocation,
    optimal_selling_price,
    overlap_indicators,
    payment,
    payments,
    proactive_best_response,
    seller_best_response,
)
from .scenario import (
    ConnectivityMatrix,
    ContentCatalog,
    PiStructure,
    PricingPolicy,
    Scenario,
    ScenarioError,
    UserProfile,
    load_scenario,
    pi_structure,
    random_scenario,
    validate_scenario,
)
from .winwin import (
    NestingAudit,
    RegionMembership,
    WinWinVerdict,
    nesting_audit,
    region_count,
    region_membership,
    solver_verdict,
    winwin_connected,
    winwin_disconnected,
)

__version__ = "0.1.0"
