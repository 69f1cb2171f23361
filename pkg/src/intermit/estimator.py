"""scikit-learn style front end tying the analysis stages together."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import dist as D
from . import ir
from .costmodel import build_cost_table, split_program_outliers
from .errors import LabelNotOnAnyPath
from .explore import explore_program, function_time_continuous
from .intermittent import NonTerminating, analyze_function, check_callees
from .report import AnalysisResult, evaluate_requirement, requirement_time
from .validation import (
    check_cost_model,
    check_energy_config,
    check_grid_len,
    check_limits,
    check_program,
)


def _kind(w) -> str:
    name = type(w).__name__
    return "LoopTruncated" if name == "TruncationWarning" else name


class IntermittentTimingAnalyzer(BaseEstimator):
    """Execution-time distribution of a program, on continuous or harvested power.

    ``fit`` takes a program (ETIR text, file path or :class:`ir.Program`) and
    computes ``timing_``, the distribution of the target function's total
    execution time in µs.  With ``energy=None`` the device never loses power.

    Parameters
    ----------
    cost_model : CostModel, dict, JSON text, path or None
        Instruction costs; None selects the bundled MSP430FR5994 profile.
    energy : EnergyConfig, dict, JSON text, path or None
        Capacitor window and recharge time for intermittent analysis.
    function : str or None
        Function to analyze; defaults to the program's entry function.
    max_loop, prob_floor : exploration limits.
    grid_len : maximum grid size for numerical convolution.
    consolidate : merge surviving branches per region (faster, approximate).
    split_outliers : split blocks whose mean energy is an outlier.
    threshold : confidence threshold overriding the program's requirements.
    """

    def __init__(self, cost_model=None, energy=None, function=None, max_loop=32,
                 prob_floor=1e-9, grid_len=4096, consolidate=False, split_outliers=True,
                 threshold=None):
        self.cost_model = cost_model
        self.energy = energy
        self.function = function
        self.max_loop = max_loop
        self.prob_floor = prob_floor
        self.grid_len = grid_len
        self.consolidate = consolidate
        self.split_outliers = split_outliers
        self.threshold = threshold

    def fit(self, X, y=None):
        program = check_program(X)
        model = check_cost_model(self.cost_model)
        cfg = check_energy_config(self.energy, model)
        limits = check_limits(self.max_loop, self.prob_floor)
        grid_len = check_grid_len(self.grid_len)
        target = self.function or program.entry_function
        program.function(target)  # fail early on unknown names

        with D.grid_options(max_len=grid_len):
            prog = ir.normalize_checkpoints(program)
            table = build_cost_table(prog, model)
            diagnostics = []
            if self.split_outliers:
                prog, table, diagnostics = split_program_outliers(prog, table, model)
            pp = explore_program(prog, model, table, limits, target)
            found = list(pp.target.warnings) + list(diagnostics)
            continuous = function_time_continuous(pp.target)
            dropped = stuck = 0.0
            if cfg is None:
                timing = continuous
                self.intermittent_ = None
                self.nonterminating_ = []
            else:
                check_callees(pp)
                res = analyze_function(pp.target, cfg, limits.prob_floor, self.consolidate)
                found += res.warnings
                timing = res.function_time
                dropped = res.dropped_mass
                stuck = res.nonterminating_mass
                self.intermittent_ = res
                self.nonterminating_ = [w for w in res.warnings if isinstance(w, NonTerminating)]
            self.cost_model_ = model
            self.energy_config_ = cfg
            self.program_ = prog
            self.function_ = target
            self.cost_table_ = table
            self.paths_ = pp
            self.continuous_timing_ = continuous
            self.timing_ = timing
            self.diagnostics_ = diagnostics
            self.warnings_ = [str(w) for w in found]
            self.warning_kinds_ = [_kind(w) for w in found]
            self.dropped_mass_ = dropped
            self.nonterminating_mass_ = stuck
            self.requirements_ = [self.evaluate(r) for r in prog.requirements]
        return self

    # -- requirements -------------------------------------------------------

    def requirement_distribution(self, r) -> D.Dist:
        """Time distribution (µs) the requirement ``r`` is checked against,
        conditional on the measured stretch completing."""
        return self._requirement(r)[0]

    def _requirement(self, r):
        check_is_fitted(self, "timing_")
        pp = self.paths_
        if isinstance(r, ir.Expires) and r.scope in self.program_.functions:
            if r.scope == self.function_:
                return self.timing_, 1.0 - self.nonterminating_mass_
            if r.scope not in pp.callees:
                raise LabelNotOnAnyPath(f"function {r.scope} is not called from {self.function_}")
            return self._scoped(pp.callees[r.scope].paths, r, whole=True)
        labels = [r.scope] if isinstance(r, ir.Expires) else [r.from_label, r.to_label]
        target_fn = self.program_.function(self.function_)
        if all(lbl in target_fn.blocks for lbl in labels):
            return self._scoped(pp.target, r)
        for summary in pp.callees.values():
            fn = self.program_.function(summary.name)
            if all(lbl in fn.blocks for lbl in labels):
                return self._scoped(summary.paths, r)
        raise LabelNotOnAnyPath(f"labels {labels} are not in one explored function")

    def _scoped(self, paths, r, whole=False):
        cfg = self.energy_config_
        if whole:
            if cfg is None:
                return function_time_continuous(paths), 1.0
            res = analyze_function(paths, cfg, self.prob_floor, self.consolidate)
            return res.function_time, 1.0 - res.nonterminating_mass
        return requirement_time(paths, r, cfg, self.prob_floor, self.consolidate)

    def evaluate(self, r):
        """:class:`report.RequirementReport` for requirement ``r``."""
        d, completion = self._requirement(r)
        return evaluate_requirement(d, r, self.threshold, completion)

    # -- queries ------------------------------------------------------------

    def predict_proba(self, bounds_us):
        """P(the function completes within bound) for each bound in µs."""
        check_is_fitted(self, "timing_")
        c = self.timing_.cdf(np.asarray(bounds_us, dtype=float))
        return np.clip((1.0 - self.nonterminating_mass_) * np.asarray(c), 0.0, 1.0)

    def cdf(self, x):
        """CDF of the completion time of runs that complete."""
        check_is_fitted(self, "timing_")
        return self.timing_.cdf(x)

    def quantile(self, p):
        check_is_fitted(self, "timing_")
        return self.timing_.quantile(p)

    def sample(self, n, random_state=None):
        check_is_fitted(self, "timing_")
        return self.timing_.sample(np.random.default_rng(random_state), n)

    @property
    def truncated_mass_(self) -> float:
        check_is_fitted(self, "timing_")
        return float(self.paths_.target.pruned_mass + self.paths_.target.truncated_mass)

    def result(self, name=None) -> AnalysisResult:
        """Report cell for :func:`report.emit_outputs`."""
        check_is_fitted(self, "timing_")
        meta = {
            "function": self.function_,
            "mode": "continuous" if self.energy_config_ is None else "intermittent",
            "paths": len(self.paths_.target),
            "pruned_mass": self.paths_.target.pruned_mass,
            "truncated_mass": self.paths_.target.truncated_mass,
            "dropped_mass": self.dropped_mass_,
            "nonterminating_mass": self.nonterminating_mass_,
            "cost_model": self.cost_model_.name,
        }
        if self.energy_config_ is not None:
            meta["energy"] = self.energy_config_.to_json()
            meta["path_failure_probability"] = [o.failure_probability for o in self.intermittent_.per_path]
        return AnalysisResult(name or self.function_, self.timing_, list(self.requirements_),
                              list(self.warnings_), self.truncated_mass_, meta,
                              self.nonterminating_mass_)

    def report(self) -> dict:
        return self.result().to_json()
