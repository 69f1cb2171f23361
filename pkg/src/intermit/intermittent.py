"""Timing of failure-free paths re-executed under intermittent power.

A path is cut into regions at its checkpoints.  Walking the regions in
order, every block may exhaust the capacitor; a failure costs the partial
attempt, a recharge to ``E_max``, the recovery routine and a full replay of
the region.  At most one failure per region is modelled.

Capacitor energy is tracked lazily: a state is a weighted set of parts
``base - drawn`` conditioned on ``base - drawn >= E_min``, where ``base`` is
the energy available when the state was created (initial budget or a fresh
recharge) and ``drawn`` the energy spent since.  Failure probabilities are
then differences of survival probabilities,
``P(base - drawn - cum_k >= E_min)``, which keeps them exact when the costs
have closed forms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

from . import dist as D
from .costmodel import CostModel, CostPair, ZERO_COST
from .errors import ConfigError, DistError, EmptyPathSet, NonTerminatingProgram, UnsupportedProgram
from .explore import PathRecord


def capacitor_energy(capacitance_f: float, volts: float) -> float:
    """Stored energy ``C V^2 / 2`` in nJ."""
    if capacitance_f <= 0:
        raise ConfigError("capacitance must be positive")
    if volts < 0:
        raise ConfigError("voltage must be nonnegative")
    return 0.5 * capacitance_f * volts * volts * 1e9


@dataclass(frozen=True)
class EnergyConfig:
    """Capacitor window (nJ), recharge time (µs) and checkpoint/recovery costs."""

    e_min: float
    e_max: float
    tau_harvest: D.Dist
    checkpoint: CostPair = ZERO_COST
    recovery: CostPair = ZERO_COST
    initial_energy: D.Dist | None = None

    def __post_init__(self):
        if not (0.0 <= self.e_min < self.e_max) or not math.isfinite(self.e_max):
            raise ConfigError(f"need 0 <= e_min < e_max, got {self.e_min}, {self.e_max}")
        if self.tau_harvest.mean() < 0:
            raise ConfigError("tau_harvest must be nonnegative")
        if self.initial_energy is None:
            object.__setattr__(self, "initial_energy", D.Uniform(self.e_min, self.e_max))

    def to_json(self):
        return {
            "e_min_nj": self.e_min,
            "e_max_nj": self.e_max,
            "tau_harvest": D.to_json(self.tau_harvest),
            "checkpoint": self.checkpoint.to_json(),
            "recovery": self.recovery.to_json(),
            "initial_energy": D.to_json(self.initial_energy),
        }


def _cost_pair(obj, where):
    try:
        return CostPair(D.from_json(obj["timing"]), D.from_json(obj["energy"]))
    except (KeyError, TypeError, DistError) as exc:
        raise ConfigError(f"{where}: needs 'timing' and 'energy' distributions ({exc})") from None


def load_energy_config(source, cost_model: CostModel | None = None) -> EnergyConfig:
    """Energy configuration from JSON text, a dict or a file path.

    Thresholds come from ``e_min_nj``/``e_max_nj`` or from ``capacitance_f``
    with ``v_on`` (full) and ``v_off`` (brown-out) voltages.  Checkpoint and
    recovery costs default to the cost model's, then to zero.
    """
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        source = Path(source).read_text(encoding="utf-8")
    if isinstance(source, (str, bytes)):
        try:
            obj = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"energy config is not valid JSON: {exc}") from None
    else:
        obj = source
    if not isinstance(obj, dict):
        raise ConfigError("energy config must be a JSON object")
    if "capacitance_f" in obj:
        c = float(obj["capacitance_f"])
        try:
            e_max = capacitor_energy(c, float(obj["v_on"]))
            e_min = capacitor_energy(c, float(obj.get("v_off", 0.0)))
        except KeyError:
            raise ConfigError("capacitance_f needs v_on (and optionally v_off)") from None
    else:
        try:
            e_min, e_max = float(obj.get("e_min_nj", 0.0)), float(obj["e_max_nj"])
        except KeyError:
            raise ConfigError("energy config needs e_max_nj or capacitance_f/v_on") from None
    if "tau_harvest" not in obj:
        raise ConfigError("energy config needs a tau_harvest distribution")
    try:
        tau = D.from_json(obj["tau_harvest"])
    except DistError as exc:
        raise ConfigError(f"tau_harvest: {exc}") from None
    model_cp = cost_model.checkpoint if cost_model else ZERO_COST
    model_rec = cost_model.recovery if cost_model else ZERO_COST
    cp = _cost_pair(obj["checkpoint"], "checkpoint") if "checkpoint" in obj else model_cp
    rec = _cost_pair(obj["recovery"], "recovery") if "recovery" in obj else model_rec
    init = D.from_json(obj["initial_energy"]) if "initial_energy" in obj else None
    return EnergyConfig(e_min, e_max, tau, cp, rec, init)


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Region:
    """Blocks ``start:stop`` of a path; ``leading_checkpoint`` is ``start``
    when the region opens with a checkpoint."""

    start: int
    stop: int
    blocks: tuple
    leading_checkpoint: int | None


def segment_regions(p: PathRecord) -> list[Region]:
    cuts = [i for i in p.checkpoint_positions if 0 < i < len(p.blocks)]
    bounds = [0] + cuts + [len(p.blocks)]
    cps = set(p.checkpoint_positions)
    return [Region(a, b, tuple(bid for _, bid in p.blocks[a:b]), a if a in cps else None)
            for a, b in zip(bounds, bounds[1:])]


# ---------------------------------------------------------------------------
# energy bookkeeping


def _fail_prob(base: D.Dist, drawn: D.Dist, e_min: float) -> float:
    """P(base - drawn < e_min)."""
    x = D.convolve(base, D.negate(drawn))
    return float(min(max(x.cdf_left(e_min), 0.0), 1.0))


def failure_probability(energy_now: D.Dist, block_energy: D.Dist, e_min: float) -> float:
    """Probability that spending ``block_energy`` leaves less than ``e_min``."""
    return _fail_prob(energy_now, block_energy, e_min)


@dataclass(frozen=True)
class EnergyPart:
    weight: float
    base: D.Dist
    drawn: D.Dist
    survival: float  # P(base - drawn >= e_min)


@dataclass(frozen=True)
class EnergyState:
    """Mixture of conditioned parts; see the module docstring."""

    parts: tuple
    e_min: float

    @classmethod
    def fresh(cls, energy: D.Dist, e_min: float) -> "EnergyState":
        s0 = 1.0 - _fail_prob(energy, D.ZERO, e_min)
        return cls((EnergyPart(1.0, energy, D.ZERO, s0),), e_min)

    def dist(self) -> D.Dist:
        """Materialized distribution of the energy currently stored."""
        comps = []
        for part in self.parts:
            x = D.convolve(part.base, D.negate(part.drawn))
            p, c = D.restrict(x, self.e_min, math.inf, lo_closed=True)
            comps.append((part.weight, c if c is not None else D.Constant(self.e_min)))
        total = sum(w for w, _ in comps)
        return D.mixture([(w / total, c) for w, c in comps])


def _merge_parts(weighted) -> tuple:
    """Sum weights of identical (base, drawn) parts; normalize."""
    acc: dict = {}
    order = []
    for w, part in weighted:
        if w <= 0:
            continue
        key = (part.base, part.drawn)
        try:
            hash(key)
        except TypeError:
            key = (id(part.base), id(part.drawn))
        if key in acc:
            acc[key] = (acc[key][0] + w, part)
        else:
            acc[key] = (w, part)
            order.append(key)
    total = sum(acc[k][0] for k in order)
    if total <= 0:
        return ()
    return tuple(replace(acc[k][1], weight=acc[k][0] / total) for k in order)


def _case_probs(state: EnergyState, cum_energy: list):
    """Per-block first-failure probabilities and the surviving parts.

    ``cum_energy[k]`` is the energy of the region's first ``k+1`` blocks.
    Failure probabilities are differences of small CDF values rather than
    of survival probabilities near one, which keeps them accurate when
    failures are rare.
    """
    K = len(cum_energy)
    fail = [0.0] * K
    survivors = []
    for part in state.parts:
        s0 = part.survival
        if s0 <= 1e-12:
            # this part is (numerically) unreachable; let it pass unchanged
            survivors.append((part.weight, replace(part, drawn=D.convolve(part.drawn, cum_energy[-1]))))
            continue
        f_prev = 1.0 - s0
        p_sum = 0.0
        for k, cum in enumerate(cum_energy):
            drawn = D.convolve(part.drawn, cum)
            f = max(_fail_prob(part.base, drawn, state.e_min), f_prev)
            p = min((f - f_prev) / s0, 1.0 - p_sum)
            fail[k] += part.weight * p
            p_sum += p
            f_prev = f
        survivors.append((part.weight * (1.0 - p_sum), EnergyPart(1.0, part.base, drawn, 1.0 - f_prev)))
    return fail, survivors


# ---------------------------------------------------------------------------
# region analysis


@dataclass(frozen=True)
class NonTerminating:
    path: tuple
    region: int
    probability: float

    def __str__(self):
        return (f"region {self.region} of path {' -> '.join(self.path)} cannot complete "
                f"on a full capacitor with probability {self.probability:.6g}")


@dataclass(frozen=True)
class FailureCase:
    """One power failure inside a region: the failed attempt runs blocks
    ``0..failed_at`` of the region, then recharge, recovery and a full replay."""

    failed_at: int
    probability: float
    attempt: tuple
    replay: tuple
    time: D.Dist

    @property
    def trace(self) -> str:
        marks = list(self.attempt[:-1]) + [self.attempt[-1] + "!"]
        return " -> ".join(marks + list(self.replay))


@dataclass(frozen=True)
class Branch:
    weight: float
    time: D.Dist
    energy: EnergyState


@dataclass(frozen=True)
class RegionState:
    branches: tuple

    @classmethod
    def initial(cls, cfg: EnergyConfig) -> "RegionState":
        return cls((Branch(1.0, D.ZERO, EnergyState.fresh(cfg.initial_energy, cfg.e_min)),))

    @property
    def total_weight(self) -> float:
        return float(sum(b.weight for b in self.branches))

    def time(self) -> D.Dist:
        total = self.total_weight
        return D.mixture([(b.weight / total, b.time) for b in self.branches])


def _prefix_sums(dists):
    out, acc = [], D.ZERO
    for d in dists:
        acc = D.convolve(acc, d)
        out.append(acc)
    return out


@dataclass(frozen=True)
class _RegionCosts:
    cum_time: list
    cum_energy: list
    after_failure: EnergyPart
    nonterm_prob: float


def _region_costs(costs, cfg: EnergyConfig) -> _RegionCosts:
    cum_t = _prefix_sums([c.timing for c in costs])
    cum_e = _prefix_sums([c.energy for c in costs])
    base = D.affine(D.negate(cfg.recovery.energy), 1.0, cfg.e_max)
    fail_after = _fail_prob(base, cum_e[-1], cfg.e_min)
    return _RegionCosts(cum_t, cum_e, EnergyPart(1.0, base, cum_e[-1], 1.0 - fail_after), fail_after)


def derive_failure_paths(region: Region, energy_now, cfg: EnergyConfig, path: PathRecord,
                         prob_floor: float = 1e-9) -> list[FailureCase]:
    """Failure cases of ``region`` entered with ``energy_now``.

    ``energy_now`` is a :class:`EnergyState` or a plain distribution of the
    stored energy.  Case probabilities are unconditional within the entry
    state; cases at or below ``prob_floor`` are dropped.
    """
    if isinstance(energy_now, D.Dist):
        energy_now = EnergyState.fresh(energy_now, cfg.e_min)
    rc = _region_costs(path.costs[region.start:region.stop], cfg)
    fail, _ = _case_probs(energy_now, rc.cum_energy)
    tail = D.convolve_all([cfg.tau_harvest, cfg.recovery.timing, rc.cum_time[-1]])
    cases = []
    for k, p in enumerate(fail):
        if p > prob_floor:
            cases.append(FailureCase(k, p, region.blocks[:k + 1], region.blocks,
                                     D.convolve(rc.cum_time[k], tail)))
    return cases


@dataclass
class RegionOutcome:
    state: RegionState
    warnings: list
    dropped_mass: float
    cases: list
    nonterminating_mass: float = 0.0


def analyze_region(state: RegionState, region: Region, cfg: EnergyConfig, path: PathRecord,
                   prob_floor: float = 1e-9, consolidate: bool = False,
                   region_index: int = 0, max_branches: int = 256) -> RegionOutcome:
    """Advance every branch of ``state`` through ``region``.

    Each branch splits into a no-failure continuation and a failure branch
    mixing the per-block failure cases.  Failure branches are merged without
    loss, so a path carries at most one branch per region plus the clean
    one.  With ``consolidate`` the no-failure continuations are merged too,
    leaving at most two branches; that discards the link between elapsed
    time and stored energy and widens the result.

    When a replay on a full capacitor fails with probability above
    ``prob_floor`` a :class:`NonTerminating` warning is raised.  If it fails
    with certainty (within ``prob_floor``) the failure branch never finishes
    and its mass moves to ``nonterminating_mass``; otherwise the replay is
    assumed to succeed.
    """
    rc = _region_costs(path.costs[region.start:region.stop], cfg)
    warnings = []
    if rc.nonterm_prob > prob_floor:
        warnings.append(NonTerminating(tuple(b for _, b in path.blocks), region_index, rc.nonterm_prob))
    stuck = rc.nonterm_prob >= 1.0 - prob_floor
    replay_tail = D.convolve_all([cfg.tau_harvest, cfg.recovery.timing, rc.cum_time[-1]])
    ok_out, fail_out, cases = [], [], []
    dropped = 0.0
    for br in state.branches:
        fail, survivors = _case_probs(br.energy, rc.cum_energy)
        kept = [(k, p) for k, p in enumerate(fail) if p > prob_floor]
        dropped += br.weight * sum(p for p in fail if p <= prob_floor)
        p_ok = sum(w for w, _ in survivors)
        if p_ok > 0:
            parts = _merge_parts(survivors)
            ok_out.append(Branch(br.weight * p_ok, D.convolve(br.time, rc.cum_time[-1]),
                                 EnergyState(parts, cfg.e_min)))
        p_fail = sum(p for _, p in kept)
        if p_fail > 0:
            attempt = D.mixture([(p / p_fail, rc.cum_time[k]) for k, p in kept])
            t = D.convolve_all([br.time, attempt, replay_tail])
            fail_out.append(Branch(br.weight * p_fail, t,
                                   EnergyState((rc.after_failure,), cfg.e_min)))
            for k, p in kept:
                cases.append(FailureCase(k, br.weight * p, region.blocks[:k + 1], region.blocks,
                                         D.convolve_all([br.time, rc.cum_time[k], replay_tail])))
    # failure branches all leave the same energy state behind, and what
    # happens next depends on the energy only, so merging them is exact
    merged_fail = _consolidate(fail_out, cfg.e_min)
    stuck_mass = 0.0
    if stuck and merged_fail:
        stuck_mass, merged_fail = merged_fail.weight, None
    if consolidate or len(ok_out) + 1 > max_branches:
        out = [b for b in (_consolidate(ok_out, cfg.e_min), merged_fail) if b]
    else:
        out = ok_out + ([merged_fail] if merged_fail else [])
    return RegionOutcome(RegionState(tuple(out)), warnings, dropped, cases, stuck_mass)


def _consolidate(branches, e_min):
    if not branches:
        return None
    if len(branches) == 1:
        return branches[0]
    total = sum(b.weight for b in branches)
    time = D.mixture([(b.weight / total, b.time) for b in branches])
    parts = _merge_parts([(b.weight / total * p.weight, p) for b in branches for p in b.energy.parts])
    return Branch(total, time, EnergyState(parts, e_min))


@dataclass
class PathOutcome:
    """``time`` is conditional on termination; it is None when the path never
    terminates (``nonterminating_mass`` is then 1)."""

    path: PathRecord
    time: D.Dist | None
    probability: float
    warnings: list
    dropped_mass: float
    failure_probability: float
    nonterminating_mass: float = 0.0


def analyze_path(p: PathRecord, cfg: EnergyConfig, prob_floor: float = 1e-9,
                 consolidate: bool = False) -> PathOutcome:
    """Intermittent timing of one path, folding :func:`analyze_region`."""
    state = RegionState.initial(cfg)
    warnings, dropped, stuck = [], 0.0, 0.0
    for i, region in enumerate(segment_regions(p)):
        res = analyze_region(state, region, cfg, p, prob_floor, consolidate, i)
        state = res.state
        warnings.extend(res.warnings)
        dropped += res.dropped_mass
        stuck += res.nonterminating_mass
        if not state.branches:
            break
    if not state.branches and stuck <= 0:
        raise EmptyPathSet("every intermittent branch of the path was dropped")
    # energy only decreases along a clean run, so it avoids failures exactly
    # when the whole path's energy fits the initial budget
    init = EnergyState.fresh(cfg.initial_energy, cfg.e_min).parts[0]
    p_fail = 1.0
    if init.survival > 0:
        f0 = 1.0 - init.survival
        p_fail = (_fail_prob(init.base, p.energy, cfg.e_min) - f0) / init.survival
    time = state.time() if state.branches else None
    stuck = 1.0 if time is None else min(stuck, 1.0)
    return PathOutcome(p, time, p.probability, warnings, dropped, min(max(p_fail, 0.0), 1.0), stuck)


def slice_path(p: PathRecord, start: int, stop: int) -> PathRecord:
    """Sub-path ``start:stop`` with checkpoint and label indices re-based."""
    blocks = p.blocks[start:stop]
    cps = tuple(i - start for i in p.checkpoint_positions if start <= i < stop)
    labels = {}
    for i, (_, b) in enumerate(blocks):
        labels.setdefault(b, i)
    return PathRecord(p.function, blocks, p.probability, p.costs[start:stop], cps, labels)


@dataclass
class IntermittentResult:
    """``function_time`` is conditional on termination; ``nonterminating_mass``
    is the probability that the function never completes."""

    per_path: list  # of PathOutcome
    function_time: D.Dist
    warnings: list
    dropped_mass: float = 0.0
    nonterminating_mass: float = 0.0


def analyze_function(paths, cfg: EnergyConfig, prob_floor: float = 1e-9,
                     consolidate: bool = False) -> IntermittentResult:
    """Per-path intermittent analysis mixed by path probability."""
    paths = list(paths)
    if not paths:
        raise EmptyPathSet("no paths to analyze")
    outcomes = [analyze_path(p, cfg, prob_floor, consolidate) for p in paths]
    total = sum(o.probability for o in outcomes)
    if total <= 0:
        raise EmptyPathSet("paths carry no probability mass")
    warnings = [w for o in outcomes for w in o.warnings]
    stuck = sum(o.probability / total * o.nonterminating_mass for o in outcomes)
    live = [(o.probability * (1.0 - o.nonterminating_mass), o.time) for o in outcomes
            if o.time is not None]
    live_total = sum(w for w, _ in live)
    if live_total <= 0:
        raise NonTerminatingProgram(warnings)
    ft = D.mixture([(w / live_total, t) for w, t in live])
    dropped = sum(o.probability / total * o.dropped_mass for o in outcomes)
    return IntermittentResult(outcomes, ft, warnings, dropped, min(stuck, 1.0))


def check_callees(prog_paths) -> None:
    """Reject programs whose target calls functions containing checkpoints."""
    for name, summary in prog_paths.callees.items():
        if summary.has_checkpoint:
            raise UnsupportedProgram(
                f"function {name} is called and contains a checkpoint; "
                "intermittent analysis supports checkpoints only in the analyzed function")
