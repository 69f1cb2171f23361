import json

import numpy as np
import pytest

from intermit import IntermittentTimingAnalyzer
from intermit import dist as D
from intermit import ir
from intermit.errors import LabelNotOnAnyPath
from intermit.report import (
    AnalysisResult,
    central_intervals,
    curve,
    emit_outputs,
    evaluate_requirement,
    render_outputs,
    requirement_time,
    sweep_table,
    to_dot,
)

from corpus import FIG5


def test_uniform_requirement_probability():
    r = ir.Expires("main", 0.040, 0.8)
    rep = evaluate_requirement(D.Uniform(0, 100e3), r)
    assert rep.probability == pytest.approx(0.4)
    assert rep.meets is False


def test_meets_threshold():
    # Normal quantile placing 0.838 of the mass below the bound
    d = D.Normal(100e3, 10e3)
    bound_us = d.quantile(0.838)
    rep = evaluate_requirement(d, ir.Expires("main", bound_us / 1e6, 0.8))
    assert rep.probability == pytest.approx(0.838)
    assert rep.meets is True


def test_threshold_override_and_completion():
    r = ir.Expires("main", 0.040, 0.8)
    rep = evaluate_requirement(D.Uniform(0, 100e3), r, threshold=0.3, completion=0.5)
    assert rep.probability == pytest.approx(0.2)
    assert rep.threshold == 0.3 and rep.meets is False


def test_constant_intervals():
    for lo, hi in central_intervals(D.Constant(10e3)).values():
        assert (lo, hi) == (10.0, 10.0)


def test_intervals_nest():
    iv = central_intervals(D.Normal(50e3, 5e3))
    assert iv[0.95][0] < iv[0.9][0] < iv[0.8][0] < iv[0.8][1] < iv[0.9][1] < iv[0.95][1]


def test_curve_is_monotone_and_ends_at_mass():
    x, pdf, cdf = curve(D.Normal(0, 1), mass=0.9)
    assert np.all(np.diff(cdf) >= 0)
    assert cdf[-1] == pytest.approx(0.9, abs=1e-6)
    assert np.all(pdf >= -1e-12)
    assert len(x) == len(pdf) == len(cdf)


def result(name="main"):
    return AnalysisResult(name, D.Normal(1000, 50), [evaluate_requirement(
        D.Normal(1000, 50), ir.Expires("main", 0.001))], ["a warning"])


def test_emit_one_result(tmp_path):
    written = emit_outputs([result()], tmp_path)
    assert sorted(p.name for p in written) == ["main.csv", "report.json"]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["results"][0]["csv"] == "main.csv"
    assert report["results"][0]["requirements"][0]["meets"] is False
    lines = (tmp_path / "main.csv").read_text().splitlines()
    assert lines[0] == "x_us,pdf,cdf"


def test_emit_nine_cells(tmp_path):
    cells = [result(f"p{i}__c{j}") for i in range(3) for j in range(3)]
    written = emit_outputs(cells, tmp_path, gnuplot=True)
    assert len([p for p in written if p.suffix == ".csv"]) == 9
    assert "report.gp" in {p.name for p in written}


def test_empty_results_write_nothing(tmp_path):
    with pytest.raises(ValueError):
        emit_outputs([], tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_name_collision_rejected():
    with pytest.raises(ValueError):
        render_outputs([result("a b"), result("a_b")])


def test_sweep_table_shape():
    cells = [{"program": "p", "capacitor": c, "probability": 0.5, "meets": False} for c in "xyz"]
    text, obj = sweep_table(cells)
    assert len(text.splitlines()) == 4
    assert len(obj["sweep"]) == 3
    with pytest.raises(ValueError):
        sweep_table([])


def test_requirement_on_missing_label():
    est = IntermittentTimingAnalyzer().fit(FIG5)
    with pytest.raises(LabelNotOnAnyPath):
        requirement_time(est.paths_.target, ir.Reachability("a", "zz", 1.0))


def test_reach_requirement_is_slice():
    est = IntermittentTimingAnalyzer().fit(FIG5)
    d, done = requirement_time(est.paths_.target, ir.Reachability("b", "e", 1.0))
    assert done == 1.0
    # from entering b to entering e excludes a and e on every path
    full = est.timing_.mean()
    head = est.cost_table_[("classify", "a")].timing.mean()
    tail_blocks = [k for k in est.cost_table_ if k[1].startswith("e")]
    tail = sum(est.cost_table_[k].timing.mean() for k in tail_blocks)
    cp = est.cost_model_.checkpoint.timing.mean()
    assert d.mean() == pytest.approx(full - head - tail - cp, rel=1e-9)


def test_dot_output():
    est = IntermittentTimingAnalyzer().fit(FIG5)
    dot = to_dot(est.program_.function("classify"), est.paths_.target)
    assert dot.startswith("digraph") and "->" in dot
