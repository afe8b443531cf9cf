"""Report figures rendered to files (headless Agg backend).

Plotting lives here and only here: the analysis layer returns plain
data containers, the CLI report paths hand them to these helpers to
render PNGs next to the delimited output. Nothing in this module is
needed for reduction or analysis itself.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np

__all__ = ["sweep_figure", "mc_figure"]


def sweep_figure(result, path, entry=(0, 0)):
    """Magnitude and relative-error panels for one sweep comparison.

    Plots |H[entry]| of the full system and every model over frequency,
    with the per-record relative error below. Returns ``path``.
    """
    i, j = entry
    fig, (top, bottom) = plt.subplots(
        2, 1, figsize=(7.0, 6.0), sharex=True,
        gridspec_kw={"height_ratios": [2, 1]})
    freqs = result.freqs_hz
    top.loglog(freqs, np.abs(result.h_full[:, i, j]), "k-", lw=2.0,
               label="full")
    for label, stack in zip(result.model_labels, result.h_models):
        top.loglog(freqs, np.abs(stack[:, i, j]), "--", lw=1.4, label=label)
    top.set_ylabel(f"|H{i + 1}{j + 1}|")
    top.legend(loc="best", fontsize=8)
    top.grid(True, which="both", alpha=0.3)

    for slot, label in enumerate(result.model_labels):
        err = np.maximum(result.per_record_errors[:, slot], 1e-300)
        bottom.loglog(freqs, err, lw=1.2, label=label)
    bottom.set_xlabel("frequency [Hz]")
    bottom.set_ylabel("max rel. error")
    bottom.grid(True, which="both", alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": "parmor"})
    plt.close(fig)
    return path


def mc_figure(result, path):
    """Histogram of worst-pole relative errors over the Monte Carlo run."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    edges = result.histogram_edges
    ax.bar(edges[:-1], result.histogram_counts,
           width=np.diff(edges), align="edge", edgecolor="black", alpha=0.8)
    ax.set_xlabel("max relative pole error per sample")
    ax.set_ylabel("samples")
    kept = result.rel_errors.shape[0]
    ax.set_title(f"{kept} samples kept, {result.skipped} skipped; "
                 f"max {result.max_rel_error:.3g}, "
                 f"mean {result.mean_rel_error:.3g}", fontsize=10)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": "parmor"})
    plt.close(fig)
    return path
