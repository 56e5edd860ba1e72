"""Render sweep rows as a gains panel and a load-share panel (PNG files)."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import SweepRow  # noqa: E402

__all__ = ["plot_gains", "plot_loads", "render_panels"]


def _shares(off: np.ndarray, peak: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    total = off + peak
    with np.errstate(invalid="ignore", divide="ignore"):
        return 100 * off / total, 100 * peak / total


def plot_gains(rows: Sequence[SweepRow], path: Path, axis_label: str) -> Path:
    x = np.array([r.axis_value for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, [r.profit_gain_pct for r in rows], "o-", label="carrier profit gain")
    n_users = max((len(r.saving_gain_pct) for r in rows), default=0)
    for j in range(n_users):
        y = [r.saving_gain_pct[j] if j < len(r.saving_gain_pct) else np.nan for r in rows]
        ax.plot(x, y, "s--", label=f"user {j} saving gain")
        if n_users > 4:
            # Larger populations: one representative curve plus the mean.
            ax.plot(x, [r.saving_gain_pct_mean for r in rows], "^:", label="mean saving gain")
            break
    ax.set_xlabel(axis_label)
    ax.set_ylabel("gain (%)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_loads(rows: Sequence[SweepRow], path: Path, axis_label: str) -> Path:
    x = np.arange(len(rows))
    off, peak = _shares(
        np.array([r.offpeak_load for r in rows]), np.array([r.peak_load for r in rows])
    )
    b_off, b_peak = _shares(
        np.array([r.baseline_offpeak_load for r in rows]),
        np.array([r.baseline_peak_load for r in rows]),
    )
    width = 0.4
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - width / 2, b_peak, width, label="baseline peak", color="tab:red", alpha=0.5)
    ax.bar(x - width / 2, b_off, width, bottom=b_peak, label="baseline off-peak", color="tab:blue", alpha=0.5)
    ax.bar(x + width / 2, peak, width, label="priced peak", color="tab:red")
    ax.bar(x + width / 2, off, width, bottom=peak, label="priced off-peak", color="tab:blue")
    ax.set_xticks(x, [f"{r.axis_value:g}" for r in rows])
    ax.set_xlabel(axis_label)
    ax.set_ylabel("share of total load (%)")
    ax.set_ylim(0, 100)
    ax.legend(fontsize="small", ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_panels(rows: Sequence[SweepRow], out: str | Path, axis_label: str) -> list[Path]:
    """Write ``<stem>_gains.png`` and ``<stem>_loads.png`` next to ``out``."""
    if not rows:
        raise ValueError("no rows to plot")
    out = Path(out)
    base = out.with_suffix("")
    return [
        plot_gains(rows, base.with_name(base.name + "_gains.png"), axis_label),
        plot_loads(rows, base.with_name(base.name + "_loads.png"), axis_label),
    ]
