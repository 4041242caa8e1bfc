"""Figure construction: one deterministic image per spec.

Every builder draws the estimate and confidence-interval columns of its
input CSV exactly as stored; interval whiskers are vertical segments
from the lo column to the hi column.  The only computation done here is
presentation (histogram binning of raw trace weights, bar placement).
"""

import json
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from . import io  # noqa: E402
from .io import load_experiment_table, load_trace_table  # noqa: E402

UNIFORM_LABEL = "uniform density 2 on [0, 1/2]"

# fixed look so re-rendering is byte-stable under one toolchain
_RC = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "figure.figsize": (6.4, 4.2),
    "font.family": "DejaVu Sans",
    "font.size": 10.0,
    "axes.titlesize": 11.0,
    "axes.labelsize": 10.0,
    "legend.fontsize": 9.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


class SpecError(ValueError):
    """Unusable figure spec."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple
    output: str
    title: Optional[str] = None


def load_spec(path: str) -> FigureSpec:
    """Parse a spec JSON file; input paths resolve against its folder."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SpecError(f"{path}: top level must be an object")
    unknown = set(raw) - {"kind", "inputs", "output", "title"}
    if unknown:
        raise SpecError(f"{path}: unknown spec keys {sorted(unknown)}")
    for key in ("kind", "inputs", "output"):
        if key not in raw:
            raise SpecError(f"{path}: missing required key '{key}'")
    kind = raw["kind"]
    if kind not in KINDS:
        raise SpecError(
            f"{path}: unknown figure kind {kind!r}; known kinds: "
            f"{', '.join(sorted(KINDS))}")
    inputs = raw["inputs"]
    if not isinstance(inputs, list) or not inputs or \
            not all(isinstance(p, str) for p in inputs):
        raise SpecError(f"{path}: 'inputs' must be a non-empty path list")
    base = os.path.dirname(os.path.abspath(path))
    resolved = tuple(p if os.path.isabs(p) else os.path.join(base, p)
                     for p in inputs)
    title = raw.get("title")
    if title is not None and not isinstance(title, str):
        raise SpecError(f"{path}: 'title' must be a string")
    return FigureSpec(kind=kind, inputs=resolved, output=raw["output"],
                      title=title)


def _whiskers(ax, x, lo, hi, color):
    ax.vlines(x, lo, hi, color=color, linewidth=1.2)


def _series_by_k(rows):
    out = {}
    for row in rows:
        out.setdefault(row["k"], []).append(row)
    for k in out:
        out[k].sort(key=lambda r: r["n"])
    return out


def _curve_figure(rows, value, lo, hi, ylabel, title, logy=True):
    fig, ax = plt.subplots()
    for i, (k, series) in enumerate(sorted(_series_by_k(rows).items())):
        x = [r["n"] for r in series]
        y = [r[value] for r in series]
        color = f"C{i}"
        ax.plot(x, y, marker="o", color=color, label=f"k = {k}")
        _whiskers(ax, x, [r[lo] for r in series], [r[hi] for r in series],
                  color)
    ax.set_xscale("log", base=2)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("scale n")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    return fig


def _build_radius_ratio(spec: FigureSpec):
    rows = load_experiment_table(spec.inputs[0], "# pondlab.pond_radii.v1")
    return _curve_figure(
        rows, "ratio", "ratio_lo", "ratio_hi",
        "tail frequency over scaled one-arm benchmark",
        spec.title or "pond radius tails, benchmark-normalized")


def _build_defect_ratio(spec: FigureSpec):
    rows = load_experiment_table(spec.inputs[0], "# pondlab.defect_scaling.v1")
    return _curve_figure(
        rows, "s", "s_lo", "s_hi",
        "defect reach over scaled one-arm benchmark",
        spec.title or "defect-path reach, benchmark-normalized")


def _build_critical_product(spec: FigureSpec):
    rows = load_experiment_table(spec.inputs[0], "# pondlab.kesten.v1")
    rows = sorted(rows, key=lambda r: r["n"])
    fig, ax = plt.subplots()
    x = [r["n"] for r in rows]
    ax.plot(x, [r["kappa"] for r in rows], marker="s", color="C0",
            label="product estimate")
    _whiskers(ax, x, [r["kappa_lo"] for r in rows],
              [r["kappa_hi"] for r in rows], "C0")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("scale n")
    ax.set_ylabel("threshold excess x n^2 x four-arm frequency")
    ax.set_title(spec.title or "near-critical product across scales")
    ax.legend()
    return fig


def _build_weight_histogram(spec: FigureSpec):
    rows = load_trace_table(spec.inputs[0])
    taus = np.array([r["tau"] for r in rows], dtype=float)
    fig, ax = plt.subplots()
    top = max(0.55, float(taus.max()) + 0.01)
    bins = np.linspace(0.0, top, 23)
    ax.hist(taus, bins=bins, density=True, color="C0", alpha=0.65,
            edgecolor="white", label=f"invaded weights ({len(taus)} steps)")
    ax.plot([0.0, 0.5], [2.0, 2.0], color="C3", linewidth=2.0,
            label=UNIFORM_LABEL)
    ax.set_xlabel("bond weight")
    ax.set_ylabel("density")
    ax.set_title(spec.title or "invaded-weight distribution")
    ax.legend()
    return fig


def _build_disconnect_contrast(spec: FigureSpec):
    groups = []
    for path in spec.inputs:
        for row in load_experiment_table(path, "# pondlab.disconnect.v1"):
            groups.append(row)
    fig, ax = plt.subplots()
    width = 0.35
    xs = np.arange(len(groups))
    for off, prefix, color, label in (
            (-width / 2, "ipc", "C0", "invaded run"),
            (width / 2, "iic", "C1", "conditioned measure")):
        ax.bar(xs + off, [g[f"{prefix}_p"] for g in groups], width,
               color=color, label=label)
        _whiskers(ax, xs + off, [g[f"{prefix}_lo"] for g in groups],
                  [g[f"{prefix}_hi"] for g in groups], "black")
    ax.set_xticks(xs)
    ax.set_xticklabels([f"Ann({g['m']}, {g['n']})" for g in groups])
    ax.set_ylabel("frequency of a disconnector-free annulus")
    ax.set_title(spec.title or "disconnection contrast by growth law")
    ax.legend()
    return fig


KINDS: dict = {
    "radius_ratio_curve": _build_radius_ratio,
    "defect_ratio_curve": _build_defect_ratio,
    "critical_product_curve": _build_critical_product,
    "weight_histogram": _build_weight_histogram,
    "disconnect_contrast": _build_disconnect_contrast,
}


def build_figure(spec: FigureSpec):
    """The matplotlib figure for a spec, without touching disk output."""
    for path in spec.inputs:
        if not os.path.exists(path):
            raise SpecError(f"input CSV does not exist: {path}")
    with plt.rc_context(_RC):
        return KINDS[spec.kind](spec)


def render(spec: FigureSpec) -> str:
    """Write the figure to spec.output (PNG) and return that path."""
    if not spec.output.endswith(".png"):
        raise SpecError(
            f"output must be a .png path, got {spec.output!r}")
    fig = build_figure(spec)
    try:
        meta = {"Software":
                f"pondplots (matplotlib {matplotlib.__version__}, "
                f"numpy {np.__version__})"}
        with plt.rc_context(_RC):
            fig.savefig(spec.output, metadata=meta)
    finally:
        plt.close(fig)
    return spec.output
