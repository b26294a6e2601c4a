"""Figure rendering for trajectories and training curves.

Report paths write these PNGs next to the delimited output; everything here
draws from the same data the CSVs carry.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Circle, Ellipse

from .corridor import EnvConfig
from .signals import Signal

AGENT_COLORS = ("tab:orange", "tab:blue")


def _draw_arena(ax, cfg: EnvConfig):
    for ob in cfg.obstacles:
        vals, vecs = np.linalg.eigh(ob.cov)
        angle = float(np.degrees(np.arctan2(vecs[1, 0], vecs[0, 0])))
        for k, alpha in ((1, 0.8), (2, 0.35)):
            ax.add_patch(Ellipse(ob.mu, 2 * k * np.sqrt(vals[0]), 2 * k * np.sqrt(vals[1]),
                                 angle=angle, color="black", alpha=alpha, zorder=1))
    for i in range(2):
        ax.plot(*cfg.corridor.targets[i], marker="x", color=AGENT_COLORS[i],
                markersize=10, mew=2, zorder=3)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def plot_trajectories(cfg: EnvConfig, trajectories, path, title=None) -> None:
    """Overlay corridor rollouts; `trajectories` is a list of state Signals
    (absolute coordinates)."""
    fig, ax = plt.subplots(figsize=(5, 5))
    _draw_arena(ax, cfg)
    for x in trajectories:
        data = x.data if isinstance(x, Signal) else np.asarray(x)
        for i in range(2):
            p = data[:, 4 * i: 4 * i + 2]
            ax.plot(p[:, 0], p[:, 1], color=AGENT_COLORS[i], lw=1.2, alpha=0.8, zorder=2)
            ax.add_patch(Circle(p[0], cfg.radius, fill=False,
                                color=AGENT_COLORS[i], lw=1.0, zorder=3))
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_training_curves(metrics_by_label: dict, path, title=None) -> None:
    """Episodic improvement (dotted) and best-so-far (solid) per run."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, rows in metrics_by_label.items():
        episodes = [r["episode"] for r in rows]
        imp = [r["improvement_pct"] for r in rows]
        best = [r["best_so_far"] for r in rows]
        line, = ax.plot(episodes, best, lw=1.8, label=f"{label} (best so far)")
        ax.plot(episodes, imp, ls=":", lw=0.8, alpha=0.6, color=line.get_color())
    ax.set_xlabel("episode")
    ax.set_ylabel("improvement over base controller [%]")
    ax.axhline(0.0, color="gray", lw=0.6)
    ax.legend(loc="lower right", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
