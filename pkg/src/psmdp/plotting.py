"""Static SVG figures: schedule fronts and sweep trends."""

from __future__ import annotations

from collections import defaultdict
from os import PathLike
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .pareto import ScheduleFront  # noqa: E402

plt.rcParams["svg.hashsalt"] = "psmdp"
LEGEND_LIMIT = 12


def _save(fig, path: str | PathLike) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_fronts(fronts: Sequence[ScheduleFront], path: str | PathLike, title: str | None = None) -> None:
    """Realizable staircases (solid) and optimistic polylines (dashed), one colour per schedule."""
    fig, ax = plt.subplots(figsize=(7, 5))
    cmap = plt.get_cmap("tab20" if len(fronts) > 10 else "tab10")
    for i, front in enumerate(fronts):
        fr = front.at(0)
        colour = cmap(i % cmap.N)
        real = [p for _, p in fr.realizable]
        xs, ys = [], []
        for j, p in enumerate(real):
            if j:
                xs.append(p.exec)
                ys.append(real[j - 1].checkin)
            xs.append(p.exec)
            ys.append(p.checkin)
        ax.plot(xs, ys, "-o", color=colour, ms=3, lw=1, label=front.key)
        ax.plot([v.exec for v in fr.optimistic], [v.checkin for v in fr.optimistic],
                "--", color=colour, lw=1, marker="x", ms=3)
    ax.set_xlabel("Execution cost")
    ax.set_ylabel("Check-in cost")
    if title:
        ax.set_title(title)
    if len(fronts) <= LEGEND_LIMIT:
        ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    _save(fig, path)


def plot_sweep(rows: Sequence[dict], path: str | PathLike) -> None:
    """Quality and runtime against margin, one line per (distributions, alphas, length)."""
    groups: dict[tuple, list[dict]] = defaultdict(list)
    truth = {}
    for r in rows:
        if r["margin"] is None:
            truth[(r["alphas"], r["length"])] = r
        else:
            groups[(r["distributions"], r["alphas"], r["length"])].append(r)
    fig, (ax_q, ax_t) = plt.subplots(1, 2, figsize=(10, 4))
    for key in sorted(groups):
        g = sorted(groups[key], key=lambda r: r["margin"])
        label = f"{key[0]} a=[{key[1]}] n={key[2]}"
        ax_q.plot([r["margin"] for r in g], [r["quality"] for r in g], "-o", ms=3, label=label)
        ax_t.plot([r["margin"] for r in g], [r["runtime_s"] for r in g], "-o", ms=3, label=label)
    for (alphas, length), r in sorted(truth.items()):
        ax_t.axhline(r["runtime_s"], ls=":", color="grey", lw=1)
    ax_q.set_xlabel("Margin")
    ax_q.set_ylabel("Quality")
    ax_t.set_xlabel("Margin")
    ax_t.set_ylabel("Runtime (s)")
    ax_q.legend(fontsize=6, frameon=False)
    fig.tight_layout()
    _save(fig, path)
