"""Optional figures for the command-line reports.

matplotlib is imported on first use with the Agg backend, so the rest of
the package never depends on it.  Install with the ``plot`` extra.
"""

from __future__ import annotations

import numpy as np

_plt = None


def _pyplot():
    global _plt
    if _plt is None:
        try:
            import matplotlib
        except ImportError as exc:
            raise RuntimeError("figures need matplotlib: pip install gridfreq[plot]") from exc
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        _plt = plt
    return _plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    _pyplot().close(fig)
    return path


def plot_sweep(results, path, xlabel: str, logx: bool = False):
    """Max error and RMSE (mHz) against the sweep variable."""
    plt = _pyplot()
    finite = [r for r in results if np.isfinite(r.x)]
    x = np.array([r.x for r in finite])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(x, [r.max_error * 1e3 for r in finite], "o-", label="max error")
    ax.plot(x, [r.rmse * 1e3 for r in finite], "s-", label="RMSE")
    for r in finite:
        if getattr(r, "marker", False):
            ax.axvline(r.x, color="k", ls="--", lw=0.8)
    if logx:
        ax.set_xscale("log")
    if all(r.rmse > 0 for r in finite):
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("error (mHz)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_comparison(result: dict, path):
    """Difference histogram (uHz bins) and its amplitude spectrum."""
    plt = _pyplot()
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    edges = result["hist_edges"] * 1e6
    a1.bar(edges[:-1], result["hist_counts"], width=np.diff(edges), align="edge")
    a1.set_xlabel("difference (uHz)")
    a1.set_ylabel("count")
    f, amp = result["freqs"], result["amplitude"]
    a2.plot(f[1:], amp[1:] * 1e6, lw=0.6)
    if np.any(amp[1:] > 0):
        a2.set_yscale("log")
    a2.set_xlabel("frequency (Hz)")
    a2.set_ylabel("amplitude (uHz)")
    return _save(fig, path)


def plot_series(seconds, values_mhz, path, label: str = ""):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 3))
    t = (np.asarray(seconds) - seconds[0]) / 3600.0
    ax.plot(t, values_mhz, lw=0.6, label=label)
    ax.set_xlabel("hours since start")
    ax.set_ylabel("deviation (mHz)")
    if label:
        ax.legend()
    return _save(fig, path)
