"""Report figures, rendered straight to files with the Agg backend."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.linewidth": 0.8,
    "savefig.dpi": 120,
}

# PNG metadata pinned so reruns write identical bytes
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def plot_reports(reports, path):
    """Accuracy per encoder with 3-SE bars and the chance level."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 3))
        labels = [f"{r.encoder}\n{r.features}".strip() for r in reports]
        acc = [r.accuracy for r in reports]
        err = [3 * r.se for r in reports]
        x = np.arange(len(reports))
        ax.bar(x, acc, yerr=err, color="0.6", edgecolor="k", capsize=3)
        for i, r in enumerate(reports):
            ax.hlines(r.chance, i - 0.4, i + 0.4, colors="r", linestyles="--")
        ax.set_xticks(x, labels)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("balanced test accuracy")
        return _save(fig, path)


def plot_memory(curves, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 3))
        for c in curves:
            ax.errorbar(c.lags, c.accuracies, yerr=c.se, marker="o", ms=3, capsize=2, label=c.encoder)
        if curves:
            ax.axhline(curves[0].chance, color="r", ls="--", lw=0.8, label="chance")
        ax.set_xlabel("lag before readout (steps)")
        ax.set_ylabel("balanced test accuracy")
        ax.set_ylim(0, 1.05)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_spectrum(eigenvalues, path):
    lam = np.asarray(eigenvalues)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 3))
        k = np.arange(lam.size)
        ax.plot(k, lam.real, "o-", ms=2, label="Re")
        ax.plot(k, lam.imag, "s-", ms=2, label="Im")
        ax.axhline(0, color="0.5", lw=0.5)
        ax.set_xlabel("Fourier mode k")
        ax.set_ylabel("eigenvalue")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_spacetime(values, path, dt=1.0, xlabel="unit", title=None):
    """Space-time image of a (time x space) array."""
    v = np.asarray(values)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 3))
        lim = float(np.abs(v).max()) or 1.0
        im = ax.imshow(v, aspect="auto", origin="lower", cmap="RdBu_r", vmin=-lim, vmax=lim,
                       extent=(0, v.shape[1], 0, v.shape[0] * dt))
        fig.colorbar(im, ax=ax)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("time (ms)")
        if title:
            ax.set_title(title)
        return _save(fig, path)
