"""Parameter sweeps over interest, population size and connectivity."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .equilibrium import EquilibriumReport, NonConvergenceError, solve_stackelberg
from .scenario import (
    ConnectivityMatrix,
    Scenario,
    ScenarioError,
    UserProfile,
    read_document,
    validate_scenario,
)

__all__ = [
    "AXES",
    "CSV_HEADER",
    "SweepSpec",
    "SweepRow",
    "sweep_spec_from_document",
    "load_sweep_spec",
    "axis_values",
    "scenario_at",
    "row_from_report",
    "run_sweep",
    "format_csv",
    "write_csv",
    "with_overrides",
]

AXES = ("interest", "population", "connectivity")
MODES = ("disconnected", "connected")
METHODS = ("auto", "exact", "mc")

CSV_HEADER = (
    "axis_value",
    "profit_gain_pct",
    "saving_gain_pct_mean",
    "saving_gain_pct_per_user",
    "offpeak_load",
    "peak_load",
    "baseline_offpeak_load",
    "baseline_peak_load",
    "y_o_star",
    "gamma_star",
    "winwin",
    "converged",
)


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: an axis, its range and the solver settings.

    ``population`` holds the population-axis options: ``generator`` is
    ``"clone"`` (copies of the template's first user) or ``"increasing"``
    (user ``n`` gets interest ``min(1, p_base + n * delta)`` for every
    content), and ``connectivity`` is the scalar link probability between
    generated users.
    """

    axis: str
    start: float
    stop: float
    steps: int
    scenario: Scenario
    mode: str = "disconnected"
    seed: int = 0
    mc_samples: int = 100_000
    gamma_grid_size: int = 101
    method: str = "auto"
    population: Mapping[str, Any] = field(
        default_factory=lambda: {"generator": "clone", "p_base": 0.5, "delta": 0.05, "connectivity": 0.0}
    )

    def __post_init__(self):
        if self.axis not in AXES:
            raise ScenarioError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.mode not in MODES:
            raise ScenarioError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.method not in METHODS:
            raise ScenarioError(f"method must be one of {METHODS}, got {self.method!r}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ScenarioError(f"range.steps = {self.steps!r} must be an integer >= 2")
        if self.mc_samples < 2:
            raise ScenarioError("mc_samples must be >= 2")
        if self.gamma_grid_size < 1:
            raise ScenarioError("gamma_grid_size must be >= 1")
        lo, hi = sorted((self.start, self.stop))
        if self.axis in ("interest", "connectivity") and not (0 <= lo and hi <= 1):
            raise ScenarioError(f"{self.axis} range [{self.start}, {self.stop}] must lie in [0, 1]")
        if self.axis == "population":
            if lo < 1:
                raise ScenarioError("population range must start at 1 or more users")
            gen = self.population.get("generator", "clone")
            if gen not in ("clone", "increasing"):
                raise ScenarioError(f"population.generator must be 'clone' or 'increasing', got {gen!r}")
            link = float(self.population.get("connectivity", 0.0))
            if not 0 <= link <= 1:
                raise ScenarioError("population.connectivity must lie in [0, 1]")


def sweep_spec_from_document(doc: Mapping[str, Any], base_dir: Path | None = None) -> SweepSpec:
    """Build a :class:`SweepSpec` from a parsed sweep document.

    The scenario is given inline under ``scenario`` or by path under
    ``scenario_file`` (relative to ``base_dir``).
    """
    if "axis" not in doc or "range" not in doc:
        raise ScenarioError("sweep document needs 'axis' and 'range'")
    rng = doc["range"]
    if not isinstance(rng, Mapping) or not {"start", "stop", "steps"} <= set(rng):
        raise ScenarioError("range needs start, stop and steps")
    if "scenario" in doc:
        scenario = validate_scenario(doc["scenario"])
    elif "scenario_file" in doc:
        path = Path(doc["scenario_file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        scenario = validate_scenario(read_document(path))
    else:
        raise ScenarioError("sweep document needs 'scenario' or 'scenario_file'")
    population = {"generator": "clone", "p_base": 0.5, "delta": 0.05, "connectivity": 0.0}
    population.update(doc.get("population", {}) or {})
    try:
        return SweepSpec(
            axis=str(doc["axis"]),
            start=float(rng["start"]),
            stop=float(rng["stop"]),
            steps=int(rng["steps"]),
            scenario=scenario,
            mode=str(doc.get("mode", "disconnected")),
            seed=int(doc.get("seed", 0)),
            mc_samples=int(doc.get("mc_samples", 100_000)),
            gamma_grid_size=int(doc.get("gamma_grid_size", 101)),
            method=str(doc.get("method", "auto")),
            population=population,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"invalid sweep field: {exc}") from None


def load_sweep_spec(path: str | Path) -> SweepSpec:
    path = Path(path)
    return sweep_spec_from_document(read_document(path), base_dir=path.parent)


def axis_values(spec: SweepSpec) -> np.ndarray:
    values = np.linspace(spec.start, spec.stop, spec.steps)
    if spec.axis == "population":
        # Whole user counts, duplicates dropped, order kept.
        return np.array(list(dict.fromkeys(int(v) for v in np.rint(values))), dtype=float)
    return values


def scenario_at(spec: SweepSpec, value: float) -> Scenario:
    """The template scenario with the sweep axis set to ``value``."""
    s = spec.scenario
    if spec.axis == "interest":
        return s.replace(interests=np.full((s.n_users, s.n_contents), float(value)))
    if spec.axis == "connectivity":
        return s.replace(omega=float(value))
    n = int(round(value))
    opts = spec.population
    if opts.get("generator", "clone") == "clone":
        template = s.users[0]
        users = tuple(UserProfile(template.interests, template.offpeak_load) for _ in range(n))
    else:
        base, delta = float(opts.get("p_base", 0.5)), float(opts.get("delta", 0.05))
        load = s.users[0].offpeak_load
        users = tuple(
            UserProfile(np.full(s.n_contents, min(1.0, base + k * delta)), load) for k in range(n)
        )
    link = ConnectivityMatrix.uniform(n, float(opts.get("connectivity", 0.0)))
    return s.replace(users=users, connectivity=link)


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    profit_gain_pct: float
    saving_gain_pct: tuple[float, ...]
    offpeak_load: float
    peak_load: float
    baseline_offpeak_load: float
    baseline_peak_load: float
    y_o_star: float
    gamma_star: float
    winwin: bool
    converged: bool = True

    @property
    def saving_gain_pct_mean(self) -> float:
        vals = [v for v in self.saving_gain_pct if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan

    @classmethod
    def failed(cls, value: float) -> "SweepRow":
        nan = math.nan
        return cls(value, nan, (), nan, nan, nan, nan, nan, nan, False, converged=False)


def row_from_report(value: float, report: EquilibriumReport) -> SweepRow:
    opt, base = report.optimized, report.baseline
    return SweepRow(
        axis_value=float(value),
        profit_gain_pct=float(report.profit_gain_pct),
        saving_gain_pct=tuple(float(v) for v in report.savings_gain_pct),
        offpeak_load=opt.offpeak_load,
        peak_load=opt.peak_load,
        baseline_offpeak_load=base.offpeak_load,
        baseline_peak_load=base.peak_load,
        y_o_star=report.policy.y_o,
        gamma_star=report.policy.gamma,
        winwin=report.is_winwin,
    )


def run_sweep(spec: SweepSpec, *, max_iter: int = 100) -> list[SweepRow]:
    """Solve the game at every axis point; rows come back in axis order.

    Each point gets its own Monte Carlo stream spawned from ``spec.seed``.
    A point whose follower iteration does not settle yields a row with
    ``converged=False`` and the sweep carries on.
    """
    values = axis_values(spec)
    seeds = np.random.SeedSequence(spec.seed).spawn(len(values))
    grid = np.linspace(0.0, 1.0, spec.gamma_grid_size) if spec.gamma_grid_size > 1 else np.array([0.0])
    rows = []
    for value, seed in zip(values, seeds):
        scen = scenario_at(spec, value)
        try:
            report = solve_stackelberg(
                scen, spec.mode, gamma_grid=grid, method=spec.method,
                samples=spec.mc_samples, seed=seed, max_iter=max_iter,
            )
        except NonConvergenceError:
            rows.append(SweepRow.failed(float(value)))
            continue
        rows.append(row_from_report(value, report))
    return rows


def _fmt(v: float) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if math.isnan(v):
        return "nan"
    text = f"{v:.10g}"
    return "0" if text == "-0" else text


def _csv_record(row: SweepRow) -> list[str]:
    return [
        _fmt(row.axis_value),
        _fmt(row.profit_gain_pct),
        _fmt(row.saving_gain_pct_mean),
        ";".join(_fmt(v) for v in row.saving_gain_pct),
        _fmt(row.offpeak_load),
        _fmt(row.peak_load),
        _fmt(row.baseline_offpeak_load),
        _fmt(row.baseline_peak_load),
        _fmt(row.y_o_star),
        _fmt(row.gamma_star),
        _fmt(row.winwin),
        _fmt(row.converged),
    ]


def format_csv(rows: Sequence[SweepRow]) -> str:
    if not rows:
        raise ValueError("no rows to emit")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(_csv_record(r) for r in rows)
    return buf.getvalue()


def write_csv(rows: Sequence[SweepRow], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(format_csv(rows))
    return path


def with_overrides(spec: SweepSpec, **overrides) -> SweepSpec:
    """Copy of ``spec`` with the non-``None`` overrides applied (re-validated)."""
    return replace(spec, **{k: v for k, v in overrides.items() if v is not None})
