"""Render riesz-lab scan outputs (CSV + verdict JSON) as figures.

Figures never recompute physics: fitted slopes, reference exponents, and
verdict numbers are read from the scan's own files and only displayed.
Output is byte-deterministic: fixed style, fixed ids, no timestamps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("rate", "timeseries", "histogram", "scaling")

REQUIRED_COLUMNS = {
    "rate": ["N", "value"],
    "timeseries": ["t", "fN", "shifted", "A1"],
    "histogram": ["N", "ratio"],
    "scaling": ["N", "eps", "amplitude", "curve"],
}

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "riesz-figures",
}


class SchemaError(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    inputs: list[str]
    output: str
    verdict: str | None = None
    expected_slope: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")


def read_scan_csv(path: str) -> dict[str, np.ndarray]:
    """Parse a scan CSV (optional leading `# ...` schema comment row)."""
    lines = Path(path).read_text().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if lines and lines[0].startswith("#"):
        lines = lines[1:]
    if not lines:
        raise SchemaError(f"{path}: empty file, no header row")
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    if any(len(r) != len(header) for r in rows):
        raise SchemaError(f"{path}: ragged rows do not match the header")
    out: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        col = [r[j] for r in rows]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def _require(data: dict, kind: str, path: str):
    for col in REQUIRED_COLUMNS[kind]:
        if col not in data:
            raise SchemaError(f"{path}: missing column {col!r} required by {kind} figures")


def _load_verdict(spec: FigureSpec) -> dict:
    if spec.verdict is None:
        return {}
    return json.loads(Path(spec.verdict).read_text())


def render(spec: FigureSpec) -> str:
    """Render the figure and return the output path."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if spec.kind == "rate":
            _render_rate(spec, ax)
        elif spec.kind == "timeseries":
            _render_timeseries(spec, ax)
        elif spec.kind == "histogram":
            _render_histogram(spec, ax)
        else:
            _render_scaling(spec, ax)
        fig.tight_layout()
        _save(fig, spec.output)
        plt.close(fig)
    return spec.output


def _save(fig, output: str):
    if output.endswith(".svg"):
        fig.savefig(output, metadata={"Date": None})
    else:
        fig.savefig(output)


def _render_rate(spec: FigureSpec, ax):
    data = read_scan_csv(spec.inputs[0])
    _require(data, "rate", spec.inputs[0])
    verdict = _load_verdict(spec)
    n = data["N"]
    val = np.abs(data["value"])
    ax.loglog(n, val, "o", color="#1f5fa8", label="measured")
    slope = verdict.get("slope")
    intercept = verdict.get("intercept")
    if slope is not None and intercept is not None:
        ax.loglog(n, np.exp(intercept) * n**slope, "-", color="#1f5fa8",
                  label=f"fit slope={slope:.2f}")
    expected = spec.expected_slope
    if expected is None:
        expected = verdict.get("expected_slope")
    if expected is not None:
        anchor = val[0] * 1.5
        ax.loglog(n, anchor * (n / n[0]) ** expected, "--", color="#777777",
                  label=f"reference slope {expected:.2f}")
    if slope is not None:
        ax.set_title(f"minimal-energy scaling: slope={slope:.2f}")
    ax.set_xlabel("N")
    ax.set_ylabel("|shifted modulated energy|")
    ax.legend()


def _render_timeseries(spec: FigureSpec, ax):
    data = read_scan_csv(spec.inputs[0])
    _require(data, "timeseries", spec.inputs[0])
    t = data["t"]
    ax.plot(t, data["fN"], label="fN", color="#1f5fa8")
    ax.plot(t, data["shifted"], label="shifted", color="#2e8b57")
    ax.plot(t, data["A1"], label="A1", color="#b5541c")
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.set_title("modulated energy along the flow")
    ax.legend()


def _render_histogram(spec: FigureSpec, ax):
    data = read_scan_csv(spec.inputs[0])
    _require(data, "histogram", spec.inputs[0])
    ratios = data["ratio"]
    if ratios.dtype.kind != "f":
        raise SchemaError(f"{spec.inputs[0]}: column 'ratio' is not numeric")
    finite = ratios[np.isfinite(ratios)]
    if finite.size == 0:
        raise SchemaError(f"{spec.inputs[0]}: no finite ratios to plot")
    ax.hist(finite, bins=48, color="#1f5fa8", alpha=0.85)
    ax.set_xlabel("|A1| / rhs")
    ax.set_ylabel("count")
    verdict = _load_verdict(spec)
    title = "commutator ratio distribution"
    if "max_ratio_by_n" in verdict:
        worst = max(float(v) for v in verdict["max_ratio_by_n"].values())
        title += f" (max={worst:.2f})"
    ax.set_title(title)


def _render_scaling(spec: FigureSpec, ax):
    data = read_scan_csv(spec.inputs[0])
    _require(data, "scaling", spec.inputs[0])
    curves = data["curve"].astype(int)
    labels = {1: "eps = N^(-1/2)", 2: "eps N = 1"}
    colors = {1: "#1f5fa8", 2: "#b5541c"}
    for cid in sorted(set(curves.tolist())):
        mask = curves == cid
        ax.loglog(data["N"][mask], data["amplitude"][mask], "o-",
                  color=colors.get(cid, "#444444"), label=labels.get(cid, f"curve {cid}"))
    ax.set_xlabel("N")
    ax.set_ylabel("sup current amplitude")
    ax.set_title("supercritical current amplitude")
    ax.legend()
