"""SVG summary charts from a results CSV."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import read_results_csv  # noqa: E402

METRICS = (("angle_degrees", "angle to mean direction (degrees)", "angle"),
           ("disagreement_rate", "disagreement rate", "disagreement"))


def _series(rows, xfield, metric):
    """``{estimator: (xs, means, stderrs)}`` over finite values."""
    groups: dict = {}
    for r in rows:
        v = getattr(r, metric)
        if not math.isnan(v):
            groups.setdefault(r.estimator, {}).setdefault(getattr(r, xfield), []).append(v)
    out = {}
    for est, by_x in sorted(groups.items()):
        xs = sorted(by_x)
        vals = [np.asarray(by_x[x]) for x in xs]
        means = np.array([v.mean() for v in vals])
        ses = np.array([v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0 for v in vals])
        out[est] = (np.asarray(xs, dtype=float), means, ses)
    return out


def axis_scales(experiment: str) -> tuple[str, str]:
    """``(xscale, yscale)``: log-log for rate sweeps, log n otherwise, linear scale axis."""
    if experiment == "scale_sweep":
        return "linear", "linear"
    if experiment == "rate_sweep":
        return "log", "log"
    return "log", "linear"


def emit_plots(results_csv, out_dir) -> list[Path]:
    """Write one chart per metric, one line per estimator, shaded +-1 stderr over replicates.

    Scale sweeps are plotted against the heterogeneity scale, everything else
    against ``n``; see :func:`axis_scales`. Nothing is written if the CSV is
    empty or malformed.
    """
    rows = read_results_csv(results_csv)
    experiment = rows[0].experiment
    xfield = "scale" if experiment == "scale_sweep" else "n"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric, ylabel, stem in METRICS:
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        for est, (xs, means, ses) in _series(rows, xfield, metric).items():
            (line,) = ax.plot(xs, means, marker="o", label=est)
            ax.fill_between(xs, means - ses, means + ses, color=line.get_color(), alpha=0.2, linewidth=0)
        xscale, yscale = axis_scales(experiment)
        ax.set_xscale(xscale)
        ax.set_yscale(yscale)
        ax.set_xlabel("heterogeneity scale" if xfield == "scale" else "n (training pairs)")
        ax.set_ylabel(ylabel)
        ax.set_title(f"{experiment}: {stem} (bands: +-1 stderr)")
        ax.legend()
        fig.tight_layout()
        path = out_dir / f"{stem}_vs_{xfield}.svg"
        fig.savefig(path, format="svg")
        plt.close(fig)
        written.append(path)
    return written
