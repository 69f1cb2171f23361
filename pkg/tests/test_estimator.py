import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from intermit import IntermittentTimingAnalyzer
from intermit import dist as D
from intermit import ir
from intermit.errors import LabelNotOnAnyPath, UnresolvedReference

from corpus import FIG5, PROGRAMS, TAU, light_checkpoint_model


def test_params_round_trip():
    est = IntermittentTimingAnalyzer(max_loop=8, threshold=0.9)
    params = est.get_params()
    assert params["max_loop"] == 8 and params["threshold"] == 0.9
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(prob_floor=1e-6)
    assert est.prob_floor == 1e-6


def test_unfitted_queries_raise():
    with pytest.raises(NotFittedError):
        IntermittentTimingAnalyzer().predict_proba([1.0])


def test_invalid_params_rejected_at_fit():
    with pytest.raises(ValueError):
        IntermittentTimingAnalyzer(grid_len=3).fit(PROGRAMS["straight"])
    with pytest.raises(ValueError):
        IntermittentTimingAnalyzer(max_loop=1.5).fit(PROGRAMS["straight"])
    with pytest.raises(UnresolvedReference):
        IntermittentTimingAnalyzer(function="nope").fit(PROGRAMS["straight"])


def test_accepts_program_object_and_text():
    prog = ir.parse_program(FIG5)
    a = IntermittentTimingAnalyzer().fit(prog)
    b = IntermittentTimingAnalyzer().fit(FIG5)
    assert a.function_ == "classify"
    assert D.kolmogorov_distance(a.timing_, b.timing_) == 0.0


def test_continuous_fit():
    est = IntermittentTimingAnalyzer().fit(FIG5)
    assert est.energy_config_ is None and est.intermittent_ is None
    assert len(est.paths_.target) == 3
    q = est.quantile(0.5)
    assert est.cdf(q) == pytest.approx(0.5, abs=1e-6)
    p = est.predict_proba([0.0, q, 1e12])
    np.testing.assert_allclose(p, [0.0, 0.5, 1.0], atol=1e-6)
    x = est.sample(1000, random_state=0)
    assert x.shape == (1000,)
    np.testing.assert_array_equal(x, est.sample(1000, random_state=0))


def test_intermittent_fit_and_report():
    m = light_checkpoint_model()
    cont = IntermittentTimingAnalyzer(cost_model=m).fit(FIG5)
    e = max(p.energy.mean() for p in cont.paths_.target)
    cfg = {"e_max_nj": 0.8 * e, "tau_harvest": D.to_json(TAU)}
    est = IntermittentTimingAnalyzer(cost_model=m, energy=cfg).fit(FIG5)
    assert est.timing_.mean() > cont.timing_.mean()
    assert est.nonterminating_mass_ == 0.0
    rep = est.report()
    assert rep["metadata"]["mode"] == "intermittent"
    assert len(rep["metadata"]["path_failure_probability"]) == 3


def test_requirements_evaluated_on_fit():
    src = "require expires(main, 0.01, 0.5)\nrequire reach(a, c, 0.005)\n" + PROGRAMS["straight"]
    est = IntermittentTimingAnalyzer().fit(src)
    assert len(est.requirements_) == 2
    full, part = est.requirements_
    assert full.probability == pytest.approx(est.predict_proba([10_000.0])[0])
    assert part.mean_ms < full.mean_ms
    with pytest.raises(LabelNotOnAnyPath):
        est.evaluate(ir.Reachability("a", "zzz", 1.0))


def test_threshold_override():
    src = "require expires(main, 1.0, 0.999)\n" + PROGRAMS["straight"]
    est = IntermittentTimingAnalyzer(threshold=0.5).fit(src)
    assert est.requirements_[0].threshold == 0.5
