"""Matplotlib figures written as byte-stable SVG files."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from ._util import atomic_write_bytes  # noqa: E402

_RC = {"svg.hashsalt": "churnforge", "svg.fonttype": "none", "font.size": 9}


def _save(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def roc_figure(curves: dict, path, title: str = "ROC") -> None:
    """``curves`` maps a legend label to a RocCurve."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        for label, c in curves.items():
            ax.plot(c.fpr, c.tpr, lw=1.2, label=f"{label} (AUC {c.auc:.3f})")
        ax.plot([0, 1], [0, 1], ls=":", color="grey", lw=0.8)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.set_title(title)
        ax.legend(loc="lower right", fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def importance_figure(ranking: list[tuple[str, float, float]], path, top: int = 20) -> None:
    rows = ranking[:top][::-1]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 0.25 * max(len(rows), 4) + 1))
        ax.barh([r[0] for r in rows], [r[2] for r in rows], color="#4472c4")
        ax.set_xlabel("Share of total gain")
        ax.set_title("Feature importance")
        fig.tight_layout()
        _save(fig, path)


def sweep_figure(series: dict[str, list[tuple[int, float]]], path) -> None:
    """AUC against window length, one line per feature family."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name, pts in series.items():
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
        ax.set_xlabel("Window (months before baseline)")
        ax.set_ylabel("AUC")
        ax.set_title("Window sweep")
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, path)
