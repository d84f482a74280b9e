"""SVG figure emission for bootstrap distributions and fit comparisons."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import naming
from .stackinf import BootstrapDistribution

matplotlib.rcParams["svg.hashsalt"] = "placefx"

APPROACH_LABEL = {
    naming.AUTHORITATIVE: "Authoritative",
    naming.MLLM: "MLLM",
    naming.SEGMENTATION: "Segmentation",
}


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def violin_figure(
    dists: Mapping[str, BootstrapDistribution], outcome: str, path: str | Path
) -> None:
    """Violin per approach and spec; labels are bootstrap means, red bars
    the percentile 95% intervals."""
    specs = list(dists)
    fig, axes = plt.subplots(
        1, len(specs), figsize=(5.0 * len(specs), 4.0), squeeze=False, sharey=True
    )
    for ax, spec in zip(axes[0], specs):
        dist = dists[spec]
        data = [dist.draws[:, i] for i in range(len(dist.approaches))]
        positions = np.arange(1, len(data) + 1)
        ax.violinplot(data, positions=positions, showextrema=False)
        for pos, series in zip(positions, data):
            lo, hi = np.percentile(series, (2.5, 97.5))
            mean = series.mean()
            ax.vlines(pos, lo, hi, color="red", lw=2.5)
            ax.annotate(
                f"{mean:.2f}",
                (pos, hi),
                textcoords="offset points",
                xytext=(0, 6),
                ha="center",
                fontsize=9,
            )
        ax.axhline(0.0, color="grey", lw=0.8, ls="--")
        ax.set_xticks(positions)
        ax.set_xticklabels([APPROACH_LABEL[a] for a in dist.approaches], fontsize=9)
        ax.set_title(f"{outcome} | {spec}")
        ax.set_ylabel("treatment effect (SD units)")
    fig.tight_layout()
    _save(fig, path)


def r2_interval_figure(ladder, path: str | Path) -> None:
    """Dot-and-interval chart of adjusted R2 per outcome and predictor set."""
    outcomes = list(dict.fromkeys(ladder["outcome"]))
    specs = list(dict.fromkeys(ladder["spec"]))
    fig, axes = plt.subplots(
        1, len(outcomes), figsize=(4.2 * len(outcomes), 3.8), squeeze=False, sharey=True
    )
    for ax, outcome in zip(axes[0], outcomes):
        block = ladder[ladder["outcome"] == outcome].set_index("spec")
        ys = np.arange(len(specs))[::-1]
        for y, spec in zip(ys, specs):
            row = block.loc[spec]
            ax.hlines(y, row["ci_low"], row["ci_high"], color="steelblue", lw=2)
            ax.plot(row["adj_r2"], y, "o", color="steelblue")
        ax.set_yticks(ys)
        ax.set_yticklabels(specs, fontsize=8)
        ax.set_xlabel("adjusted R2")
        ax.set_title(outcome)
        ax.set_xlim(0, 1)
    fig.tight_layout()
    _save(fig, path)


def parity_figure(grid, outcome: str, path: str | Path) -> None:
    """MLLM vs segmentation pseudo-R2 per quantile with the 45-degree line."""
    sub = grid[grid["outcome"] == outcome]
    mllm = sub[sub["approach"] == naming.MLLM].set_index("tau")
    seg = sub[sub["approach"] == naming.SEGMENTATION].set_index("tau")
    taus = sorted(set(mllm.index) & set(seg.index))
    fig, ax = plt.subplots(figsize=(4.4, 4.4))
    lim = 1.0
    ax.plot([0, lim], [0, lim], color="grey", lw=0.8, ls="--")
    for tau in taus:
        x = seg.loc[tau]
        y = mllm.loc[tau]
        ax.errorbar(
            x["pseudo_r2"],
            y["pseudo_r2"],
            xerr=[[x["pseudo_r2"] - x["ci_low"]], [x["ci_high"] - x["pseudo_r2"]]],
            yerr=[[y["pseudo_r2"] - y["ci_low"]], [y["ci_high"] - y["pseudo_r2"]]],
            fmt="o",
            capsize=2,
            ms=4,
        )
        ax.annotate(f"{tau:g}", (x["pseudo_r2"], y["pseudo_r2"]),
                    textcoords="offset points", xytext=(5, 3), fontsize=8)
    ax.set_xlabel("segmentation pseudo-R2")
    ax.set_ylabel("MLLM pseudo-R2")
    ax.set_xlim(0, lim)
    ax.set_ylim(0, lim)
    ax.set_title(outcome)
    fig.tight_layout()
    _save(fig, path)
