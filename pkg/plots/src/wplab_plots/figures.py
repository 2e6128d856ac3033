"""The four figure kinds, rendered deterministically from CSV artifacts.

All statistics live in the primary component; a slope shown here is the
verbatim fits.csv string, never recomputed.  Rendering is pinned (Agg, fixed
fonts and sizes, fixed PNG metadata) so the same artifacts produce the same
bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .schema import (SchemaError, load_breakdown, load_fits,
                     load_interaction, load_series)

KINDS = ("convergence", "breakdown", "interaction", "decoupling")

_RC = {
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "figure.figsize": (6.0, 4.5),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
}
_METADATA = {"Software": "wplab-plots"}


@dataclass(frozen=True)
class FigureSpec:
    input_dir: str
    kind: str
    output: str
    annotate: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; "
                              f"known: {KINDS}")


def _slope_label(fits: dict, key: str, field: str) -> str | None:
    entry = fits.get(key)
    if entry is None:
        return None
    return entry.raw[field]


def _convergence(spec: FigureSpec, ax) -> None:
    series = load_series(spec.input_dir)
    fits = load_fits(spec.input_dir)
    eps = [s.eps for s in series]
    for column, marker, color in (("w_Heps1", "o", "tab:blue"),
                                  ("theta_L2", "s", "tab:red")):
        sups = [s.sup(column) for s in series]
        if all(math.isnan(v) for v in sups):
            continue
        label = column
        if spec.annotate:
            raw = _slope_label(fits, column, "order")
            if raw is not None:
                label += f"  (order {raw})"
        ax.loglog(eps, sups, marker=marker, color=color, label=label)
    ax.set_xlabel("eps")
    ax.set_ylabel("sup over t of the norm")
    ax.set_title("packet-approximation error vs eps")
    ax.invert_xaxis()
    ax.legend(loc="best")


def _decoupling(spec: FigureSpec, ax) -> None:
    series = load_series(spec.input_dir)
    fits = load_fits(spec.input_dir)
    eps = [s.eps for s in series]
    sups = [s.sup("minus_mass") for s in series]
    label = "minus_mass"
    if spec.annotate:
        raw = _slope_label(fits, "minus_mass", "order")
        if raw is not None:
            label += f"  (order {raw})"
    ax.loglog(eps, sups, marker="o", color="tab:green", label=label)
    ax.set_xlabel("eps")
    ax.set_ylabel("sup over t of the opposite-mode mass")
    ax.set_title("adiabatic decoupling vs eps")
    ax.invert_xaxis()
    ax.legend(loc="best")


def _breakdown(spec: FigureSpec, ax) -> None:
    rows = load_breakdown(spec.input_dir)
    fits = load_fits(spec.input_dir)
    reached = [(e, t) for e, t in rows if t is not None]
    if not reached:
        ax.text(0.5, 0.5, "no breakdown before t_max",
                ha="center", va="center", transform=ax.transAxes,
                fontsize=14, bbox=dict(boxstyle="round", fc="lightyellow"))
        ax.set_xlabel("log log (1/eps)")
        ax.set_ylabel("crossing time t*")
        ax.set_title("residual-threshold crossing time")
        return
    x = [math.log(math.log(1.0 / e)) for e, _ in reached]
    y = [t for _, t in reached]
    label = "t*"
    if spec.annotate:
        raw = _slope_label(fits, "t_star_vs_loglog", "slope")
        if raw is not None:
            label += f"  (slope {raw})"
    ax.plot(x, y, marker="o", color="tab:purple", label=label)
    ax.set_xlabel("log log (1/eps)")
    ax.set_ylabel("crossing time t*")
    ax.set_title("residual-threshold crossing time")
    ax.legend(loc="best")


def _interaction(spec: FigureSpec, ax) -> None:
    rows = load_interaction(spec.input_dir)
    fits = load_fits(spec.input_dir)
    eps = [e for e, _, _ in rows]
    meas = [m for _, m, _ in rows]
    gamma = rows[0][2] if rows else float("nan")
    label = "interval measure"
    if spec.annotate:
        raw = _slope_label(fits, "interaction_measure", "order")
        if raw is not None:
            label += f"  (order {raw})"
    positive = [(e, m) for e, m in zip(eps, meas) if m > 0]
    if positive:
        ax.loglog([e for e, _ in positive], [m for _, m in positive],
                  marker="o", color="tab:orange", label=label)
        ax.loglog(eps, [e ** gamma for e in eps], linestyle="--",
                  color="gray", label="eps^gamma reference")
    ax.set_xlabel("eps")
    ax.set_ylabel("measure of the interaction set")
    ax.set_title(f"interaction interval vs eps (gamma = {gamma:g})")
    ax.invert_xaxis()
    ax.legend(loc="best")


_RENDERERS = {
    "convergence": _convergence,
    "breakdown": _breakdown,
    "interaction": _interaction,
    "decoupling": _decoupling,
}


def build_figure(spec: FigureSpec):
    """Build (but do not save) the figure; the test suite inspects it."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        try:
            _RENDERERS[spec.kind](spec, ax)
        except Exception:
            plt.close(fig)
            raise
        fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> str:
    """Render the figure to spec.output; returns the output path."""
    fig = build_figure(spec)
    try:
        fig.savefig(spec.output, format="png", metadata=dict(_METADATA))
    finally:
        plt.close(fig)
    return spec.output
