"""Figure rendering for experiment reports.

One panel per (dataset, policy, metric): models on the x axis, scores on the
y axis, marker shape encoding the split method and color encoding the number
of input steps.  A dashed gray line marks the uniformly random baseline where
one exists.  Files are written next to the delimited report output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_MARKERS = ["o", "s", "^", "D", "v", "P", "X"]
_CMAP = matplotlib.colormaps["tab10"]


def _safe(name) -> str:
    return str(name).replace("/", "-").replace(" ", "_")


def render_report_figures(report: dict, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [c for c in report["cells"] if c.get("error") is None and c["value"] is not None]
    if not cells:
        return []
    panels: dict[tuple, list[dict]] = {}
    for c in cells:
        panels.setdefault((c["dataset"], c["policy"], c["metric"]), []).append(c)

    splits = sorted({c["split"] for c in cells})
    n_is = sorted({c["n_i"] for c in cells})
    marker_of = {s: _MARKERS[i % len(_MARKERS)] for i, s in enumerate(splits)}
    color_of = {n: _CMAP(i % 10) for i, n in enumerate(n_is)}

    written = []
    for (dataset, policy, metric), group in sorted(panels.items()):
        models = sorted({c["model"] for c in group})
        x_of = {m: i for i, m in enumerate(models)}
        fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(models), 3.2))
        baselines = [c["baseline"] for c in group if c["baseline"] is not None]
        if baselines:
            ax.axhline(sum(baselines) / len(baselines), color="gray",
                       linestyle="--", linewidth=1.0, label="random")
        seen_labels = set()
        for c in group:
            label = f"{c['split']}, n_i={c['n_i']}"
            ax.plot(x_of[c["model"]], c["value"], linestyle="none",
                    marker=marker_of[c["split"]], color=color_of[c["n_i"]],
                    markersize=7, alpha=0.85,
                    label=None if label in seen_labels else label)
            seen_labels.add(label)
        ax.set_xticks(range(len(models)))
        ax.set_xticklabels(models, rotation=20, ha="right")
        ax.set_ylabel(metric)
        ax.set_title(f"{dataset} / {policy}")
        ax.legend(fontsize=7, loc="best")
        fig.tight_layout()
        path = out_dir / f"{_safe(dataset)}__{_safe(policy)}__{_safe(metric)}.png"
        fig.savefig(path, dpi=120, metadata={"Software": "gapbench"})
        plt.close(fig)
        written.append(path)
    return written
