"""Figure helpers for the report path. Everything renders to files (Agg backend)."""

import contextlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 11,
    "axes.labelsize": 12,
    "axes.titlesize": 12,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.8,
    "legend.frameon": False,
    "savefig.dpi": 120,
    "svg.hashsalt": "collabsod",
}


@contextlib.contextmanager
def report_style():
    with plt.rc_context(STYLE):
        yield


def _save(fig, path):
    # fixed metadata keeps re-renders byte-stable for PNG
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_pr_curve(curve, path, label="model", title="Precision-recall"):
    curve = np.asarray(curve)
    with report_style():
        fig, ax = plt.subplots(figsize=(4.5, 4.0))
        ax.plot(curve[:, 1], curve[:, 0], label=label)
        ax.set_xlim(0, 1.0)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_title(title)
        ax.legend(loc="lower left")
        return _save(fig, path)


def plot_loss_history(history, path):
    """history: list of per-epoch dicts with edge/coarse/depth/final/total keys."""
    epochs = np.arange(1, len(history) + 1)
    with report_style():
        fig, ax = plt.subplots(figsize=(5.5, 3.6))
        for key in ("total", "final", "coarse", "edge", "depth"):
            values = [h[key] for h in history]
            if any(values):
                ax.plot(epochs, values, label=key, lw=2.4 if key == "total" else 1.4)
        ax.set_yscale("log")
        ax.set_xlabel("Epoch")
        ax.set_ylabel("Loss")
        ax.legend(ncol=2, fontsize=9)
        return _save(fig, path)

