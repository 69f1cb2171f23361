"""Probabilistic depth-first path exploration under continuous power.

Each explored path carries its probability, the per-block step costs along
it, and the convolved path timing and energy.  Program inputs are symbolic
random variables; a branch on them forks the environment and conditions the
branched-on variable on each outcome.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import dist as D
from . import ir
from .costmodel import BlockCostTable, CostModel, CostPair, sum_costs
from .errors import CostModelError, EmptyPathSet, UnresolvedReference


@dataclass(frozen=True)
class Limits:
    max_loop: int = 32
    prob_floor: float = 1e-9

    def __post_init__(self):
        if self.max_loop < 1:
            raise ValueError("max_loop must be positive")
        if not 0.0 <= self.prob_floor < 1.0:
            raise ValueError("prob_floor must lie in [0, 1)")


@dataclass
class SymbolicEnv:
    """Variable distributions (assumed independent) and back-edge counters."""

    vars: dict = field(default_factory=dict)
    loop_counters: dict = field(default_factory=dict)

    def clone(self) -> "SymbolicEnv":
        return SymbolicEnv(dict(self.vars), dict(self.loop_counters))

    def lookup(self, name: str) -> D.Dist:
        try:
            return self.vars[name]
        except KeyError:
            raise UnresolvedReference(name, "environment") from None


@dataclass(frozen=True)
class TruncationWarning:
    function: str
    blocks: tuple
    probability: float

    def __str__(self):
        return (f"loop bound reached in {self.function} after "
                f"{len(self.blocks)} blocks; {self.probability:.3g} probability mass dropped")


@dataclass(frozen=True)
class PathRecord:
    """One failure-free path through a function.

    ``costs[i]`` is the step cost of ``blocks[i]``: its instructions, the
    checkpoint it opens (if any), callee summaries and intrinsic counts that
    depend on program variables.
    """

    function: str
    blocks: tuple  # of (function, block id)
    probability: float
    costs: tuple  # of CostPair, aligned with blocks
    checkpoint_positions: tuple
    labels_hit: dict

    @property
    def timing(self) -> D.Dist:
        return _path_sum(self, "timing")

    @property
    def energy(self) -> D.Dist:
        return _path_sum(self, "energy")

    @property
    def block_ids(self) -> tuple:
        return tuple(b for _, b in self.blocks)

    def slice_costs(self, start: int, stop: int) -> CostPair:
        return sum_costs(self.costs[start:stop])

    def to_json(self):
        return {
            "function": self.function,
            "blocks": [b for _, b in self.blocks],
            "probability": self.probability,
            "timing": D.to_json(self.timing),
            "energy": D.to_json(self.energy),
            "checkpoints": list(self.checkpoint_positions),
        }


_SUM_CACHE: dict = {}


def _path_sum(p: PathRecord, attr: str) -> D.Dist:
    key = (id(p), attr)
    hit = _SUM_CACHE.get(key)
    if hit is not None and hit[0] is p:
        return hit[1]
    d = D.convolve_all(getattr(c, attr) for c in p.costs) if p.costs else D.ZERO
    if len(_SUM_CACHE) > 4096:
        _SUM_CACHE.clear()
    _SUM_CACHE[key] = (p, d)
    return d


@dataclass
class PathSet:
    """Result of exploring one function."""

    function: str
    paths: list
    pruned_mass: float = 0.0
    truncated_mass: float = 0.0
    warnings: list = field(default_factory=list)

    def __iter__(self) -> Iterator[PathRecord]:
        return iter(self.paths)

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, i):
        return self.paths[i]

    @property
    def explored_mass(self) -> float:
        return float(sum(p.probability for p in self.paths))

    def to_json(self):
        return {
            "function": self.function,
            "pruned_mass": self.pruned_mass,
            "truncated_mass": self.truncated_mass,
            "paths": [p.to_json() for p in self.paths],
        }


# ---------------------------------------------------------------------------
# symbolic evaluation


def _affine_value(env: SymbolicEnv, aff: ir.Affine) -> D.Dist:
    const = aff.const
    terms = []
    for name, coef in aff.coefs:
        d = env.lookup(name)
        if isinstance(d, D.Constant):
            const += coef * d.value
        else:
            terms.append(D.affine(d, coef, 0.0))
    if not terms:
        return D.Constant(const)
    return D.affine(D.convolve_all(terms), 1.0, const)


def eval_expr(env: SymbolicEnv, expr) -> D.Dist:
    """Distribution of an affine expression over independent variables."""
    return _affine_value(env, ir.linearize(expr))


def eval_instr(env: SymbolicEnv, ins) -> None:
    if isinstance(ins, ir.Assign):
        env.vars[ins.var] = eval_expr(env, ins.expr)


def eval_block(env: SymbolicEnv, b: ir.Block) -> SymbolicEnv:
    """Apply a block's assignments to a copy of ``env``."""
    out = env.clone()
    for ins in b.instructions:
        eval_instr(out, ins)
    return out


_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}


def _truth(op: str, v: float) -> bool:
    return {"<": v < 0, "<=": v <= 0, ">": v > 0, ">=": v >= 0, "==": v == 0, "!=": v != 0}[op]


def _outcome_sets(op, t):
    """Intervals (lo, hi, lo_closed, hi_closed) for ``X op t`` and its negation."""
    inf = math.inf
    le = [(-inf, t, False, True)]
    lt = [(-inf, t, False, False)]
    ge = [(t, inf, True, False)]
    gt = [(t, inf, False, False)]
    eq = [(t, t, True, True)]
    ne = lt + gt
    table = {"<=": (le, gt), "<": (lt, ge), ">=": (ge, lt), ">": (gt, le), "==": (eq, ne), "!=": (ne, eq)}
    return table[op]


def _restrict_union(d: D.Dist, intervals):
    parts = []
    for lo, hi, lc, hc in intervals:
        p, c = D.restrict(d, lo, hi, lc, hc)
        if p > 0.0 and c is not None:
            parts.append((p, c))
    total = sum(p for p, _ in parts)
    if total <= 0.0:
        return 0.0, None
    if len(parts) == 1:
        return total, parts[0][1]
    return total, D.mixture([(p / total, c) for p, c in parts])


def branch_probability(env: SymbolicEnv, cond: ir.Cmp):
    """``(p_true, env_true, env_false)`` for a branch condition.

    With a single random variable in the condition, each outcome's
    environment carries that variable conditioned on the outcome.  With
    several, the probability comes from the distribution of their affine
    combination and the environments are left unconditioned.  An impossible
    side gets ``None`` as its environment.
    """
    aff = ir.linearize(ir.BinOp("-", cond.left, cond.right))
    const = aff.const
    rand = []
    for name, coef in aff.coefs:
        d = env.lookup(name)
        if isinstance(d, D.Constant):
            const += coef * d.value
        else:
            rand.append((name, coef, d))
    if not rand:
        ok = _truth(cond.op, const)
        return (1.0, env, None) if ok else (0.0, None, env)
    if len(rand) == 1:
        name, coef, d = rand[0]
        op = cond.op if coef > 0 else _FLIP[cond.op]
        t = -const / coef
        true_set, false_set = _outcome_sets(op, t)
        p_true, d_true = _restrict_union(d, true_set)
        p_true = min(max(p_true, 0.0), 1.0)
        _, d_false = _restrict_union(d, false_set) if p_true < 1.0 else (0.0, None)
        env_t = env_f = None
        if p_true > 0.0 and d_true is not None:
            env_t = env.clone()
            env_t.vars[name] = d_true
        if p_true < 1.0 and d_false is not None:
            env_f = env.clone()
            env_f.vars[name] = d_false
        if env_t is None:
            p_true = 0.0
        if env_f is None:
            p_true = 1.0
        return p_true, env_t, env_f
    combo = D.affine(D.convolve_all(D.affine(d, c, 0.0) for _, c, d in rand), 1.0, const)
    true_set, _ = _outcome_sets(cond.op, 0.0)
    p_true = 0.0
    for lo, hi, lc, hc in true_set:
        p_true += D.restrict(combo, lo, hi, lc, hc)[0]
    p_true = min(max(p_true, 0.0), 1.0)
    return (p_true, env.clone() if p_true > 0 else None, env.clone() if p_true < 1 else None)


# ---------------------------------------------------------------------------
# path costs


def _with_checkpoint(cost: CostPair, m: CostModel) -> CostPair:
    """Step cost of a block that opens with a checkpoint."""
    return cost + m.checkpoint


def _symbolic_intrinsic(env: SymbolicEnv, ins: ir.Intrinsic, m: CostModel) -> CostPair:
    spec = m.intrinsic(ins.name)
    count = eval_expr(env, ins.count)
    if isinstance(count, D.Constant):
        c = count.value
        if c < 0 or c != int(c):
            raise CostModelError(f"intrinsic {ins.name}: count {c!r} is not a nonnegative integer")
        return spec.at(int(c))
    if not count.discrete:
        raise CostModelError(f"intrinsic {ins.name}: count must be integer valued")
    values, masses = count.atoms()
    if np.any(values < 0) or np.any(values != np.round(values)):
        raise CostModelError(f"intrinsic {ins.name}: count support must be nonnegative integers")
    costs = [(w, spec.at(int(v))) for v, w in zip(values, masses) if w > 0]
    total = sum(w for w, _ in costs)
    return CostPair(D.mixture([(w / total, c.timing) for w, c in costs]),
                    D.mixture([(w / total, c.energy) for w, c in costs]))


@dataclass(frozen=True)
class CalleeSummary:
    """Continuous-power cost of one call to a function."""

    name: str
    cost: CostPair
    has_checkpoint: bool
    paths: PathSet


def _walk_block(env: SymbolicEnv, fn: ir.Function, b: ir.Block, m: CostModel,
                table: BlockCostTable, callees: dict) -> tuple[SymbolicEnv, CostPair]:
    out = env.clone()
    extra = []
    for ins in b.instructions:
        if isinstance(ins, ir.Assign):
            eval_instr(out, ins)
        elif isinstance(ins, ir.Call):
            try:
                extra.append(callees[ins.function].cost)
            except KeyError:
                raise UnresolvedReference(ins.function, f"{fn.name}.{b.id} (callee not analyzed)") from None
        elif isinstance(ins, ir.Intrinsic):
            if ir.linearize(ins.count).is_constant():
                continue  # already in the table
            extra.append(_symbolic_intrinsic(out, ins, m))
    cost = table[(fn.name, b.id)]
    if extra:
        cost = sum_costs([cost] + extra)
    for ins in b.instructions:
        if isinstance(ins, ir.Checkpoint):
            cost = _with_checkpoint(cost, m)
    return out, cost


# ---------------------------------------------------------------------------
# exploration


def explore_paths(f: ir.Function, m: CostModel, table: BlockCostTable, inputs: dict,
                  limits: Limits = Limits(), callees: dict | None = None) -> PathSet:
    """Depth-first enumeration of ``f``'s paths with their probabilities.

    A successor whose path probability would fall to ``limits.prob_floor`` or
    below is pruned.  A back edge (see :func:`back_edges`) taken more than
    the loop bound ends that path; its mass is reported as
    truncated.  Counts of loops nested inside a loop restart on each of its
    iterations.
    """
    callees = callees or {}
    loops = loop_structure(f)
    bound = f.loop_bound if f.loop_bound is not None else limits.max_loop
    result = PathSet(f.name, [])
    env0 = SymbolicEnv(dict(inputs))
    # stack items: (block id, env, prob, blocks, costs)
    stack = [(f.entry_block, env0, 1.0, (), ())]
    while stack:
        bid, env, prob, blocks, costs = stack.pop()
        b = f.block(bid)
        env, cost = _walk_block(env, f, b, m, table, callees)
        blocks = blocks + (bid,)
        costs = costs + (cost,)
        term = b.terminator
        if isinstance(term, ir.Return):
            result.paths.append(_make_record(f, blocks, prob, costs))
            continue
        if isinstance(term, ir.Goto):
            outcomes = [(term.target, 1.0, env)]
        else:
            p_true, env_t, env_f = branch_probability(env, term.cond)
            outcomes = [(term.then, p_true, env_t), (term.else_, 1.0 - p_true, env_f)]
        pushed = []
        for succ, p, e in outcomes:
            if p <= 0.0 or e is None:
                continue
            q = prob * p
            if q <= limits.prob_floor:
                result.pruned_mass += q
                continue
            edge = (bid, succ)
            if edge in loops:
                n = e.loop_counters.get(edge, 0)
                if n >= bound:
                    result.truncated_mass += q
                    result.warnings.append(TruncationWarning(f.name, blocks, q))
                    continue
                if e is env:
                    e = e.clone()
                # loops nested in this one restart their counts each iteration
                for k in loops[edge]:
                    e.loop_counters.pop(k, None)
                e.loop_counters[edge] = n + 1
            pushed.append((succ, e, q, blocks, costs))
        # push in reverse so the then-side is explored first
        stack.extend(reversed(pushed))
    return result


def back_edges(f: ir.Function) -> set:
    """Edges closing a cycle in a depth-first walk from the entry block."""
    found, state = set(), {}
    stack = [(f.entry_block, iter(ir.successors(f.block(f.entry_block).terminator)))]
    state[f.entry_block] = 1
    while stack:
        bid, succs = stack[-1]
        for s in succs:
            if state.get(s) == 1:
                found.add((bid, s))
            elif s not in state:
                state[s] = 1
                stack.append((s, iter(ir.successors(f.block(s).terminator))))
                break
        else:
            state[bid] = 2
            stack.pop()
    return found


def _natural_loop(f: ir.Function, tail: str, head: str) -> set:
    preds: dict = {}
    for b in f.blocks.values():
        for s in ir.successors(b.terminator):
            preds.setdefault(s, set()).add(b.id)
    body, work = {head, tail}, [tail]
    while work:
        for p in preds.get(work.pop(), ()):
            if p not in body:
                body.add(p)
                work.append(p)
    return body


def loop_structure(f: ir.Function) -> dict:
    """Back edge -> back edges of the loops nested strictly inside its loop."""
    edges = back_edges(f)
    bodies = {e: _natural_loop(f, *e) for e in edges}
    return {e: {o for o in edges if o[1] != e[1] and o[1] in bodies[e] and bodies[o] < bodies[e]}
            for e in edges}


def _make_record(f: ir.Function, blocks, prob, costs) -> PathRecord:
    cps = tuple(i for i, bid in enumerate(blocks) if f.blocks[bid].has_checkpoint)
    labels = {}
    for i, bid in enumerate(blocks):
        labels.setdefault(bid, i)
    return PathRecord(f.name, tuple((f.name, b) for b in blocks), float(prob), tuple(costs), cps, labels)


def function_time_continuous(paths) -> D.Dist:
    """Mixture of path timings weighted by renormalized path probabilities."""
    return _mix(paths, "timing")


def function_energy_continuous(paths) -> D.Dist:
    return _mix(paths, "energy")


def _mix(paths, attr) -> D.Dist:
    paths = list(paths)
    if not paths:
        raise EmptyPathSet("no path survived exploration")
    total = sum(p.probability for p in paths)
    if total <= 0.0:
        raise EmptyPathSet("explored paths carry no probability mass")
    return D.mixture([(p.probability / total, getattr(p, attr)) for p in paths])


@dataclass
class ProgramPaths:
    """Exploration of a target function together with its callee summaries."""

    target: PathSet
    callees: dict  # name -> CalleeSummary


def explore_program(prog: ir.Program, m: CostModel, table: BlockCostTable,
                    limits: Limits = Limits(), function: str | None = None) -> ProgramPaths:
    """Explore ``function`` (default: the entry), summarizing callees first.

    Callees are explored with the program's input distributions and enter
    their callers as a single cost site.
    """
    target = function or prog.entry_function
    order = prog.call_order(target)
    summaries: dict = {}
    result = None
    for name in order:
        fn = prog.function(name)
        ps = explore_paths(fn, m, table, prog.input_specs, limits, summaries)
        if name == target:
            result = ps
        else:
            cost = CostPair(function_time_continuous(ps), function_energy_continuous(ps))
            has_cp = fn.has_checkpoint or any(summaries[c].has_checkpoint for c in fn.calls())
            summaries[name] = CalleeSummary(name, cost, has_cp, ps)
    assert result is not None
    return ProgramPaths(result, summaries)


def paths_to_json(ps: PathSet) -> dict:
    return ps.to_json()
