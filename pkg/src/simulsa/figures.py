"""Figure rendering for reports: BLEU sweep curves and truncation diagnostics.

Uses the Agg backend throughout; figures go straight to files next to the
delimited output they illustrate.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .corpus import SweepRow
from .domain import TruncationFamily, TruncationPolicy
from .truncation import density


def render_sweep_figure(rows: Sequence[SweepRow], out_path: Union[str, Path]) -> Path:
    """BLEU vs chunk size, one line per (m, rollback); offline rows dotted."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    groups: dict[tuple[int, int], list[SweepRow]] = {}
    for row in rows:
        groups.setdefault((row.m, row.rollback), []).append(row)
    for (m, b), cells in sorted(groups.items()):
        finite = sorted((c for c in cells if not math.isinf(c.chunk_ms)), key=lambda c: c.chunk_ms)
        if finite:
            ax.plot(
                [c.chunk_ms for c in finite],
                [c.bleu for c in finite],
                marker="o",
                label=f"m={m}, b={b}",
            )
        for cell in cells:
            if math.isinf(cell.chunk_ms):
                ax.axhline(cell.bleu, linestyle=":", linewidth=0.8, color="gray")
    ax.set_xlabel("chunk size k (ms)")
    ax.set_ylabel("BLEU")
    ax.set_title("Streaming BLEU by chunk size and rollback")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_truncation_figure(
    policy: TruncationPolicy,
    points_ms: Sequence[int],
    out_path: Union[str, Path],
    duration_ms: Optional[int] = None,
) -> Path:
    """Histogram of sampled cut points with the analytic density overlaid."""
    out_path = Path(out_path)
    points = np.asarray(points_ms, dtype=float)
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    if points.size:
        ax.hist(points, bins=60, density=True, alpha=0.55, label="sampled points")
    if policy.family is TruncationFamily.BETA_DECAY_GRID:
        step = policy.grid_step_ms
        grid = np.arange(policy.l_ms, policy.r_ms + 1, step, dtype=float)
        mass = [density(policy, g, duration_ms) for g in grid]
        # plot the pmf as density over each step-wide bucket for comparability
        ax.step(grid, [m / step for m in mass], where="post", color="crimson", label="analytic mass / step")
    else:
        hi = duration_ms if (
            policy.family is TruncationFamily.BETA_DECAY_FULLSPAN and duration_ms is not None
        ) else policy.r_ms
        lo = 1 if policy.family is TruncationFamily.BETA_DECAY_FULLSPAN else policy.l_ms
        xs = np.linspace(lo, hi, 512)
        ax.plot(xs, [density(policy, x, duration_ms) for x in xs], color="crimson", label="analytic density")
    ax.set_xlabel("truncation point s' (ms)")
    ax.set_ylabel("density (per ms)")
    ax.set_title(f"Truncation distribution: {policy.family.value}")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
