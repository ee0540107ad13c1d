"""Static SVG figures (matplotlib, Agg backend).

SVG output is made reproducible by fixing the hash salt and dropping the
date stamp.  Each plotted series gets the element id ``series-<i>``.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_gap_overlay", "plot_run_report", "plot_trajectory", "save_svg"]

_RC = {"svg.hashsalt": "tikhoprox", "svg.fonttype": "path", "font.size": 9}


def save_svg(fig, path):
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _positive(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    return x[keep], y[keep]


def _loglog(ax, series, xlabel, ylabel, title=None):
    for i, (label, x, y) in enumerate(series):
        x, y = _positive(x, y)
        (line,) = ax.loglog(x, y, label=label, lw=1.2)
        line.set_gid(f"series-{i}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="major", lw=0.3)
    if series:
        ax.legend(frameon=False)


def plot_gap_overlay(path, series, xlabel="k", ylabel="f(x_k) - min f"):
    """One log-log panel with a gap curve per (label, k, gap) triple."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    _loglog(ax, series, xlabel, ylabel)
    fig.tight_layout()
    save_svg(fig, path)


def plot_run_report(path, columns, title=None):
    """Gap, squared distance to x* and subgradient residual against k."""
    k = columns["k"]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.5))
    panels = [
        ("gap", "f(x_k) - min f"),
        ("dist_xstar", "|x_k - x*|^2"),
        ("subgrad_res", "|z_k|"),
    ]
    for ax, (col, lab) in zip(axes, panels):
        y = columns[col] ** 2 if col == "dist_xstar" else columns[col]
        _loglog(ax, [(col, k, y)], "k", lab)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    save_svg(fig, path)


def plot_trajectory(path, columns, title=None):
    """Gap, distance to the viscosity curve and gradient norm against t."""
    t = columns["t"]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.5))
    panels = [("gap", "f(x(t)) - min f"), ("dist_y", "|x(t) - y(t)|"), ("grad_norm", "|grad f(x(t))|")]
    for ax, (col, lab) in zip(axes, panels):
        _loglog(ax, [(col, t, columns[col])], "t", lab)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    save_svg(fig, path)
