"""Monte Carlo execution of programs under intermittent power.

An oracle for the analytic engine that shares none of its probability
algebra: inputs, instruction costs and recharge times are sampled, and the
capacitor is debited block by block.  Runs are simulated in vectorized
chunks; each chunk draws from its own stream spawned from the seed, so the
samples do not depend on how the work is scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dist as D
from . import ir
from .costmodel import CostModel
from .errors import EmptySample
from .intermittent import EnergyConfig

CHUNK = 8192


@dataclass(frozen=True)
class SimConfig:
    runs: int = 10_000
    seed: int = 0
    clamp_negative_costs: bool = True
    max_replay: int = 64
    max_steps: int = 1_000_000  # blocks per run before it is abandoned

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.max_replay < 1 or self.max_steps < 1:
            raise ValueError("max_replay and max_steps must be positive")


@dataclass
class EmpiricalResult:
    samples: np.ndarray  # completed runs' total times (µs)
    failures: np.ndarray  # power failures per completed run
    nonterminating_runs: int = 0
    step_limited_runs: int = 0

    @property
    def runs(self) -> int:
        return int(self.samples.size + self.abandoned_runs)

    @property
    def abandoned_runs(self) -> int:
        return self.nonterminating_runs + self.step_limited_runs

    def mean(self) -> float:
        self._need()
        return float(self.samples.mean())

    def std(self) -> float:
        self._need()
        return float(self.samples.std(ddof=1)) if self.samples.size > 1 else 0.0

    def quantiles(self, levels=(0.025, 0.05, 0.1, 0.5, 0.9, 0.95, 0.975)) -> dict:
        self._need()
        return {float(q): float(v) for q, v in zip(levels, np.quantile(self.samples, levels))}

    def _need(self):
        if self.samples.size == 0:
            raise EmptySample("no run completed")


class NonTerminated(Exception):
    """Signal from :func:`simulate_once` that the run could not finish."""


# ---------------------------------------------------------------------------
# compilation to a vector-friendly form


@dataclass
class _Fn:
    name: str
    block_index: dict
    blocks: list  # of (instrs, terminator, is_checkpoint)
    entry: int
    is_checkpoint: np.ndarray = None


def _compile(prog: ir.Program, m: CostModel):
    names = set(prog.input_specs)
    for fn in prog.functions.values():
        for b in fn.blocks.values():
            for ins in b.instructions:
                if isinstance(ins, ir.Assign):
                    names.add(ins.var)
    var_index = {n: i for i, n in enumerate(sorted(names))}

    def affine(expr):
        a = ir.linearize(expr)
        return [(var_index[v], c) for v, c in a.coefs], a.const

    fns = {}
    for fn in prog.functions.values():
        index = {bid: i for i, bid in enumerate(fn.blocks)}
        blocks = []
        for b in fn.blocks.values():
            ops = []
            for ins in b.instructions:
                if isinstance(ins, ir.CostOp):
                    ops.append(("cost", m.cost_of(ins.class_id)))
                elif isinstance(ins, ir.Assign):
                    ops.append(("let", var_index[ins.var], affine(ins.expr)))
                elif isinstance(ins, ir.Call):
                    ops.append(("call", ins.function))
                elif isinstance(ins, ir.Checkpoint):
                    ops.append(("cost", m.checkpoint))
                elif isinstance(ins, ir.Intrinsic):
                    ops.append(("intrinsic", m.intrinsic(ins.name), affine(ins.count)))
            t = b.terminator
            if isinstance(t, ir.Goto):
                term = ("goto", index[t.target])
            elif isinstance(t, ir.Branch):
                diff = ir.BinOp("-", t.cond.left, t.cond.right)
                term = ("branch", t.cond.op, affine(diff), index[t.then], index[t.else_])
            else:
                term = ("return",)
            blocks.append((ops, term, b.has_checkpoint))
        fns[fn.name] = _Fn(fn.name, index, blocks, index[fn.entry_block],
                           np.array([b[2] for b in blocks], dtype=bool))
    return fns, var_index


def _eval(vars_, aff):
    coefs, const = aff
    out = np.full(vars_.shape[0], float(const))
    for i, c in coefs:
        out += c * vars_[:, i]
    return out


def _compare(op, v):
    if op == "<":
        return v < 0
    if op == "<=":
        return v <= 0
    if op == ">":
        return v > 0
    if op == ">=":
        return v >= 0
    if op == "==":
        return v == 0
    return v != 0


class _Sampler:
    def __init__(self, rng, clamp):
        self.rng = rng
        self.clamp = clamp

    def draw(self, d: D.Dist, n: int) -> np.ndarray:
        x = np.asarray(d.sample(self.rng, n), dtype=float).reshape(n)
        return np.maximum(x, 0.0) if self.clamp else x


class _Machine:
    def __init__(self, prog, m, cfg, sim, rng):
        self.fns, self.var_index = _compile(prog, m)
        self.prog = prog
        self.cfg = cfg
        self.sim = sim
        self.s = _Sampler(rng, sim.clamp_negative_costs)

    def inputs(self, n):
        vars_ = np.full((n, len(self.var_index)), np.nan)
        for name, d in self.prog.input_specs.items():
            vars_[:, self.var_index[name]] = np.asarray(d.sample(self.s.rng, n), dtype=float).reshape(n)
        return vars_

    def exec_block(self, fn: _Fn, bi: int, vars_, inputs):
        """Run block ``bi`` for every row of ``vars_`` (updated in place);
        returns sampled time, energy and the next block (-1 on return)."""
        n = vars_.shape[0]
        t = np.zeros(n)
        e = np.zeros(n)
        ops, term, _ = fn.blocks[bi]
        for op in ops:
            kind = op[0]
            if kind == "cost":
                t += self.s.draw(op[1].timing, n)
                e += self.s.draw(op[1].energy, n)
            elif kind == "let":
                vars_[:, op[1]] = _eval(vars_, op[2])
            elif kind == "intrinsic":
                spec, count = op[1], _eval(vars_, op[2])
                t += self.s.draw(spec.base.timing, n) + count * self.s.draw(spec.per_unit.timing, n)
                e += self.s.draw(spec.base.energy, n) + count * self.s.draw(spec.per_unit.energy, n)
            else:  # call
                ct, ce = self.run_continuous(self.fns[op[1]], inputs)
                t += ct
                e += ce
        if term[0] == "goto":
            nxt = np.full(n, term[1])
        elif term[0] == "branch":
            ok = _compare(term[1], _eval(vars_, term[2]))
            nxt = np.where(ok, term[3], term[4])
        else:
            nxt = np.full(n, -1)
        return t, e, nxt

    def run_continuous(self, fn: _Fn, inputs):
        """Execute ``fn`` to completion without power failures."""
        n = inputs.shape[0]
        vars_ = inputs.copy()
        pos = np.full(n, fn.entry)
        t = np.zeros(n)
        e = np.zeros(n)
        steps = 0
        while True:
            live = np.flatnonzero(pos >= 0)
            if live.size == 0:
                return t, e
            steps += 1
            if steps > self.sim.max_steps:
                raise RuntimeError(f"function {fn.name} exceeded {self.sim.max_steps} blocks")
            for bi in np.unique(pos[live]):
                idx = live[pos[live] == bi]
                sub = vars_[idx]
                bt, be, nxt = self.exec_block(fn, bi, sub, inputs[idx])
                vars_[idx] = sub
                t[idx] += bt
                e[idx] += be
                pos[idx] = nxt

    def run(self, fn: _Fn, n: int):
        """Intermittent execution of ``fn`` for ``n`` runs."""
        cfg = self.cfg
        inputs = self.inputs(n)
        vars_ = inputs.copy()
        pos = np.full(n, fn.entry)
        time = np.zeros(n)
        fails = np.zeros(n, dtype=np.int64)
        status = np.zeros(n, dtype=np.int8)  # 0 running, 1 done, 2 nonterminating, 3 step limit
        if cfg is not None:
            energy = np.asarray(cfg.initial_energy.sample(self.s.rng, n), dtype=float).reshape(n)
            energy = np.clip(energy, cfg.e_min, cfg.e_max)
        else:
            energy = np.full(n, math.inf)
        cp_pos = pos.copy()
        cp_vars = vars_.copy()
        streak = np.zeros(n, dtype=np.int64)
        steps = np.zeros(n, dtype=np.int64)
        while True:
            live = np.flatnonzero(status == 0)
            if live.size == 0:
                break
            for bi in np.unique(pos[live]):
                idx = live[pos[live] == bi]
                sub = vars_[idx]
                bt, be, nxt = self.exec_block(fn, bi, sub, inputs[idx])
                steps[idx] += 1
                time[idx] += bt
                if cfg is None:
                    dead = np.zeros(idx.size, dtype=bool)
                else:
                    dead = energy[idx] - be < cfg.e_min
                ok = idx[~dead]
                vars_[ok] = sub[~dead]
                energy[ok] -= be[~dead]
                nxt_ok = nxt[~dead]
                pos[ok] = nxt_ok
                status[ok[nxt_ok < 0]] = 1
                # normal-flow entry into a checkpoint block saves state
                enter = nxt_ok >= 0
                saving = ok[enter][fn.is_checkpoint[nxt_ok[enter]]]
                if saving.size:
                    cp_pos[saving] = pos[saving]
                    cp_vars[saving] = vars_[saving]
                    streak[saving] = 0
                if dead.any():
                    f = idx[dead]
                    k = f.size
                    time[f] += self.s.draw(cfg.tau_harvest, k) + self.s.draw(cfg.recovery.timing, k)
                    energy[f] = cfg.e_max - self.s.draw(cfg.recovery.energy, k)
                    fails[f] += 1
                    streak[f] += 1
                    pos[f] = cp_pos[f]
                    vars_[f] = cp_vars[f]
                    status[f[streak[f] >= self.sim.max_replay]] = 2
            status[(status == 0) & (steps >= self.sim.max_steps)] = 3
        return time, fails, status


def _chunk_rng(seed: int, index: int) -> np.random.Generator:
    # children of a SeedSequence depend only on their index
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(index + 1)[index])


def simulate_many(prog: ir.Program, m: CostModel, cfg: EnergyConfig | None,
                  sim: SimConfig = SimConfig(), function: str | None = None) -> EmpiricalResult:
    """``sim.runs`` independent executions; ``cfg=None`` means continuous power."""
    name = function or prog.entry_function
    samples, failures = [], []
    nonterm = limited = 0
    n_chunks = -(-sim.runs // CHUNK)
    seeds = np.random.SeedSequence(sim.seed).spawn(n_chunks)
    for c in range(n_chunks):
        n = min(CHUNK, sim.runs - c * CHUNK)
        machine = _Machine(prog, m, cfg, sim, np.random.default_rng(seeds[c]))
        time, fails, status = machine.run(machine.fns[name], n)
        done = status == 1
        samples.append(time[done])
        failures.append(fails[done])
        nonterm += int((status == 2).sum())
        limited += int((status == 3).sum())
    return EmpiricalResult(np.concatenate(samples), np.concatenate(failures), nonterm, limited)


def simulate_once(prog: ir.Program, m: CostModel, cfg: EnergyConfig | None, rng,
                  sim: SimConfig = SimConfig(runs=1), function: str | None = None):
    """One execution: ``(time, failures)`` or raises :class:`NonTerminated`.

    ``rng`` is a Generator or an integer seed; a seed selects the same stream
    as the first run of :func:`simulate_many` with that seed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = _chunk_rng(int(rng), 0)
    machine = _Machine(prog, m, cfg, sim, rng)
    time, fails, status = machine.run(machine.fns[function or prog.entry_function], 1)
    if status[0] != 1:
        raise NonTerminated("run did not complete" if status[0] == 3 else
                            f"region failed {sim.max_replay} times in a row")
    return float(time[0]), int(fails[0])


# ---------------------------------------------------------------------------
# comparison


def ks_statistic(samples, analytic: D.Dist) -> float:
    """Two-sided Kolmogorov-Smirnov distance between samples and a CDF.

    Both one-sided limits are compared at every sample point, so analytic
    distributions with atoms are handled exactly.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise EmptySample("no samples to compare")
    u = np.unique(x)
    n = x.size
    fn_right = np.searchsorted(x, u, side="right") / n
    fn_left = np.searchsorted(x, u, side="left") / n
    f_right = np.asarray(analytic.cdf(u), dtype=float)
    f_left = np.asarray(analytic.cdf_left(u), dtype=float)
    return float(max(np.max(np.abs(fn_right - f_right)), np.max(np.abs(fn_left - f_left))))


def _rel(a, b):
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return abs(a - b) / abs(b)


def compare(e: EmpiricalResult, analytic: D.Dist) -> dict:
    """KS statistic and relative mean/std errors of samples against ``analytic``."""
    if e.samples.size == 0:
        raise EmptySample("no completed runs to compare")
    return {
        "ks_statistic": ks_statistic(e.samples, analytic),
        "mean_rel_error": _rel(e.mean(), analytic.mean()),
        "std_rel_error": _rel(e.std(), analytic.std()),
        "n": int(e.samples.size),
    }


def summary_json(e: EmpiricalResult, analytic: D.Dist | None = None) -> dict:
    out = {
        "runs": e.runs,
        "completed": int(e.samples.size),
        "nonterminating_runs": e.nonterminating_runs,
        "step_limited_runs": e.step_limited_runs,
        "mean_failures": float(e.failures.mean()) if e.failures.size else 0.0,
    }
    if e.samples.size:
        out.update({"mean": e.mean(), "std": e.std(),
                    "quantiles": {f"{q:g}": v for q, v in e.quantiles().items()}})
    if analytic is not None and e.samples.size:
        out["ks_vs_analytic"] = compare(e, analytic)
    return out


def write_samples_csv(e: EmpiricalResult, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for v in e.samples:
            fh.write(f"{v:.9g}\n")
