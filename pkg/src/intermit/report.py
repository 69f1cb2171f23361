"""Requirement checks, confidence intervals and report files."""
from __future__ import annotations

import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dist as D
from . import ir
from .errors import LabelNotOnAnyPath, NonTerminatingProgram
from .intermittent import EnergyConfig, analyze_path, slice_path

SCHEMA = "etap-report/1"
LEVELS = (0.95, 0.90, 0.80)
CSV_POINTS = 1024


@dataclass(frozen=True)
class RequirementReport:
    requirement: object
    probability: float
    threshold: float
    meets: bool
    intervals: dict  # confidence level -> (lo_ms, hi_ms)
    mean_ms: float
    std_ms: float
    completion: float = 1.0

    def to_json(self):
        r = self.requirement
        if isinstance(r, ir.Expires):
            req = {"kind": "expires", "scope": r.scope, "bound_s": r.bound_s}
        elif isinstance(r, ir.Reachability):
            req = {"kind": "reach", "from": r.from_label, "to": r.to_label, "bound_s": r.bound_s}
        else:
            req = {"kind": "bound", "bound_s": getattr(r, "bound_s", None)}
        return {
            "requirement": req,
            "probability": self.probability,
            "threshold": self.threshold,
            "meets": self.meets,
            "mean_ms": self.mean_ms,
            "std_ms": self.std_ms,
            "completion_probability": self.completion,
            "intervals_ms": {f"{c:.2f}": list(v) for c, v in self.intervals.items()},
        }


def central_intervals(d: D.Dist, levels=LEVELS) -> dict:
    """Central quantile intervals in ms for each confidence level."""
    out = {}
    for c in levels:
        a = (1.0 - c) / 2.0
        out[c] = (float(d.quantile(a)) / 1e3, float(d.quantile(1.0 - a)) / 1e3)
    return out


def evaluate_requirement(d: D.Dist, r, threshold: float | None = None,
                         completion: float = 1.0) -> RequirementReport:
    """Probability that the time ``d`` (µs) stays within the requirement's bound.

    ``threshold`` overrides the requirement's own confidence threshold.  When
    ``d`` is conditional on the run completing, ``completion`` is the
    probability that it does; runs that never complete miss every bound.
    Intervals and moments describe the completing runs.
    """
    thr = r.threshold if threshold is None else float(threshold)
    p = float(min(max(completion * d.cdf(r.bound_s * 1e6), 0.0), 1.0))
    return RequirementReport(r, p, thr, p >= thr, central_intervals(d),
                             d.mean() / 1e3, d.std() / 1e3, completion)


# ---------------------------------------------------------------------------
# requirement time distributions


def _first_after(blocks, label, start):
    for i in range(start, len(blocks)):
        if blocks[i] == label:
            return i
    return None


def _piece_of(label: str, bid: str) -> bool:
    """True when ``bid`` is a piece split off ``label`` (``label_s1``, ``label_cp2``...)."""
    return re.fullmatch(re.escape(label) + r"(_(s|cp)\d+)+", bid) is not None


def requirement_slices(paths, r) -> list:
    """``(path, start, stop)`` slices measuring the requirement on each path.

    ``expires(label)`` runs from function entry through the first execution
    of the labelled block; ``reach(A, B)`` from entering A to entering the
    next B.  Paths that never hit the labels are skipped.
    """
    out = []
    for p in paths:
        ids = p.block_ids
        if isinstance(r, ir.Expires):
            i = _first_after(ids, r.scope, 0)
            if i is not None:
                # a split block completes with its last piece
                while i + 1 < len(ids) and _piece_of(r.scope, ids[i + 1]):
                    i += 1
                out.append((p, 0, i + 1))
        else:
            a = _first_after(ids, r.from_label, 0)
            if a is None:
                continue
            b = _first_after(ids, r.to_label, a + 1)
            if b is not None:
                out.append((p, a, b))
    return out


def requirement_time(paths, r, cfg: EnergyConfig | None = None, prob_floor: float = 1e-9,
                     consolidate: bool = False) -> tuple[D.Dist, float]:
    """Time distribution of a label-scoped requirement, mixed over the paths
    that contain it (weights renormalized over those paths), and the
    probability that the measured stretch completes.

    Under intermittent power each slice is analyzed as a path of its own,
    starting from a fresh initial energy budget.
    """
    slices = requirement_slices(paths, r)
    total = sum(p.probability for p, _, _ in slices)
    if not slices or total <= 0:
        names = r.scope if isinstance(r, ir.Expires) else f"{r.from_label} -> {r.to_label}"
        raise LabelNotOnAnyPath(f"no explored path reaches {names}")
    comps, done = [], 0.0
    for p, a, b in slices:
        sub = slice_path(p, a, b)
        w = p.probability / total
        if cfg is None:
            comps.append((w, sub.timing))
            done += w
            continue
        o = analyze_path(sub, cfg, prob_floor, consolidate)
        if o.time is not None:
            w_live = w * (1.0 - o.nonterminating_mass)
            comps.append((w_live, o.time))
            done += w_live
    if done <= 0:
        raise NonTerminatingProgram()
    return D.mixture([(w / done, t) for w, t in comps]), min(done, 1.0)


# ---------------------------------------------------------------------------
# serialization


def _fmt(x):
    """Round floats to 9 significant digits; non-finite values become strings."""
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.9g}")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {str(k): _fmt(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_fmt(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_fmt(v) for v in x.tolist()]
    return str(x)


def dumps(obj) -> str:
    return json.dumps(_fmt(obj), indent=2, sort_keys=True) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def curve(d: D.Dist, mass: float = 1.0, points: int = CSV_POINTS):
    """``(x, pdf, cdf)`` at evenly spaced points over the support of ``d``.

    ``mass`` scales the distribution when part of the probability was pruned
    or truncated.  The density is the finite-difference slope of the CDF.
    """
    lo, hi = d.span()
    if not hi > lo:
        lo, hi = lo - 0.5, hi + 0.5
    x = np.linspace(lo, hi, points)
    c = np.maximum.accumulate(np.clip(np.asarray(d.cdf(x), dtype=float), 0.0, 1.0)) * mass
    pdf = np.gradient(c, x)
    return x, np.clip(pdf, 0.0, None), c


def curve_csv(d: D.Dist, mass: float = 1.0) -> str:
    x, pdf, c = curve(d, mass)
    lines = ["x_us,pdf,cdf"]
    lines += [f"{a:.9g},{b:.9g},{v:.9g}" for a, b, v in zip(x, pdf, c)]
    return "\n".join(lines) + "\n"


def gnuplot_script(csv_names: list[str], title: str = "execution time") -> str:
    plots_pdf = ", ".join(f"'{n}' using ($1/1000):($2*1000) with lines title '{Path(n).stem}'" for n in csv_names)
    plots_cdf = ", ".join(f"'{n}' using ($1/1000):3 with lines title '{Path(n).stem}'" for n in csv_names)
    return "\n".join([
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 1200,480",
        f"set output '{_slug(title)}.png'",
        "set multiplot layout 1,2",
        "set xlabel 'time (ms)'",
        f"set title '{title} (PDF)'",
        f"plot {plots_pdf}",
        f"set title '{title} (CDF)'",
        "set yrange [0:1.05]",
        f"plot {plots_cdf}",
        "unset multiplot",
        "",
    ])


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "result"


@dataclass
class AnalysisResult:
    """Everything one report cell needs."""

    name: str
    timing: D.Dist
    requirements: list = field(default_factory=list)  # of RequirementReport
    warnings: list = field(default_factory=list)  # strings
    truncated_mass: float = 0.0
    metadata: dict = field(default_factory=dict)
    nonterminating_mass: float = 0.0

    @property
    def explored_mass(self) -> float:
        """Probability covered by ``timing``: neither cut off nor stuck."""
        return max(0.0, (1.0 - self.truncated_mass) * (1.0 - self.nonterminating_mass))

    def to_json(self):
        d = self.timing
        return {
            "name": self.name,
            "mean_ms": d.mean() / 1e3,
            "std_ms": d.std() / 1e3,
            "intervals_ms": {f"{c:.2f}": list(v) for c, v in central_intervals(d).items()},
            "requirements": [r.to_json() for r in self.requirements],
            "warnings": list(self.warnings),
            "truncated_mass": self.truncated_mass,
            "nonterminating_mass": self.nonterminating_mass,
            "metadata": self.metadata,
            "csv": _slug(self.name) + ".csv",
        }


def render_outputs(results, gnuplot: bool = False) -> dict:
    """File name -> contents for a set of results (nothing is written)."""
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    names = [_slug(r.name) for r in results]
    if len(set(names)) != len(names):
        raise ValueError(f"result names collide after sanitizing: {names}")
    files = {"report.json": dumps({"schema": SCHEMA, "results": [r.to_json() for r in results]})}
    for r, n in zip(results, names):
        files[n + ".csv"] = curve_csv(r.timing, r.explored_mass)
    if gnuplot:
        files["report.gp"] = gnuplot_script([n + ".csv" for n in names])
    return files


def emit_outputs(results, destination, gnuplot: bool = False) -> list[Path]:
    """Write the report JSON, one CSV per result and optionally a gnuplot script.

    Contents are rendered before anything touches the disk, and each file is
    replaced atomically.
    """
    files = render_outputs(results, gnuplot)
    dest = Path(destination)
    written = []
    for name, text in files.items():
        _write_atomic(dest / name, text)
        written.append(dest / name)
    return written


def sweep_table(cells) -> tuple[str, dict]:
    """CSV text and JSON object summarizing sweep cells.

    ``cells`` holds dicts with keys program, capacitor, probability, meets,
    mean_ms and std_ms.
    """
    cells = list(cells)
    if not cells:
        raise ValueError("empty sweep")
    cols = ["program", "capacitor", "e_max_nj", "bound_s", "probability", "threshold", "meets",
            "mean_ms", "std_ms", "nonterminating"]
    lines = [",".join(cols)]
    for c in cells:
        row = []
        for k in cols:
            v = c.get(k, "")
            if isinstance(v, bool):
                row.append("true" if v else "false")
            elif isinstance(v, float):
                row.append(f"{v:.9g}")
            else:
                row.append(str(v))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n", {"schema": SCHEMA, "sweep": cells}


def write_sweep(cells, destination) -> list[Path]:
    csv_text, obj = sweep_table(cells)
    dest = Path(destination)
    _write_atomic(dest / "sweep.csv", csv_text)
    _write_atomic(dest / "sweep.json", dumps(obj))
    return [dest / "sweep.csv", dest / "sweep.json"]


def to_dot(fn: ir.Function, paths) -> str:
    """Graphviz rendering of a CFG annotated with block visit probabilities."""
    total = sum(p.probability for p in paths) or 1.0
    visit = {bid: 0.0 for bid in fn.blocks}
    for p in paths:
        for bid in set(p.block_ids):
            visit[bid] += p.probability / total
    lines = [f'digraph "{fn.name}" {{', "  node [shape=box];"]
    for bid, b in fn.blocks.items():
        cp = " (cp)" if b.has_checkpoint else ""
        lines.append(f'  "{bid}" [label="{bid}{cp}\\np={visit[bid]:.3g}"];')
        for s in ir.successors(b.terminator):
            lines.append(f'  "{bid}" -> "{s}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
