"""Stochastic per-instruction cost profiles and block-level cost tables."""
from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import dist as D
from . import ir
from .errors import (
    CostModelError,
    DistError,
    MissingCheckpointCosts,
    SchemaError,
    UnknownCostClass,
    UnsplittableBlock,
)


@dataclass(frozen=True)
class CostPair:
    """Timing (µs) and energy (nJ) of one unit of work."""

    timing: D.Dist
    energy: D.Dist

    def __add__(self, other: "CostPair") -> "CostPair":
        return CostPair(D.convolve(self.timing, other.timing), D.convolve(self.energy, other.energy))

    def to_json(self):
        return {"timing": D.to_json(self.timing), "energy": D.to_json(self.energy)}


ZERO_COST = CostPair(D.ZERO, D.ZERO)


def sum_costs(pairs) -> CostPair:
    pairs = list(pairs)
    if not pairs:
        return ZERO_COST
    return CostPair(D.convolve_all(p.timing for p in pairs), D.convolve_all(p.energy for p in pairs))


@dataclass(frozen=True)
class IntrinsicCost:
    """Count-parameterized cost: ``base + count * per_unit``."""

    base: CostPair
    per_unit: CostPair

    def at(self, count: int) -> CostPair:
        return CostPair(D.scaled_count(self.base.timing, self.per_unit.timing, count),
                        D.scaled_count(self.base.energy, self.per_unit.energy, count))


@dataclass(frozen=True)
class CostModel:
    classes: Mapping
    intrinsics: Mapping = field(default_factory=dict)
    checkpoint: CostPair = ZERO_COST
    recovery: CostPair = ZERO_COST
    name: str = ""

    def cost_of(self, class_id: str) -> CostPair:
        try:
            return self.classes[class_id]
        except KeyError:
            raise UnknownCostClass(class_id) from None

    def intrinsic(self, name: str) -> IntrinsicCost:
        try:
            return self.intrinsics[name]
        except KeyError:
            raise UnknownCostClass(name) from None

    def to_json(self):
        return {
            "name": self.name,
            "classes": {k: v.to_json() for k, v in self.classes.items()},
            "intrinsics": {k: {"base": v.base.to_json(), "per_unit": v.per_unit.to_json()}
                           for k, v in self.intrinsics.items()},
            "checkpoint": self.checkpoint.to_json(),
            "recovery": self.recovery.to_json(),
        }


def _pair(obj, where) -> CostPair:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object with 'timing' and 'energy'")
    missing = [k for k in ("timing", "energy") if k not in obj]
    if missing:
        raise SchemaError(f"{where}: missing {', '.join(missing)}")
    try:
        return CostPair(D.from_json(obj["timing"]), D.from_json(obj["energy"]))
    except DistError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def load_cost_model(source) -> CostModel:
    """Build a :class:`CostModel` from JSON text or an already decoded dict.

    Schema::

        {"classes": {id: {"timing": Dist, "energy": Dist}},
         "intrinsics": {name: {"base": {...}, "per_unit": {...}}},
         "checkpoint": {"timing": Dist, "energy": Dist},
         "recovery": {"timing": Dist, "energy": Dist}}

    A missing ``recovery`` section means recovery is free.
    """
    if isinstance(source, (str, bytes)):
        try:
            obj = json.loads(source)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"cost model is not valid JSON: {exc}") from None
    else:
        obj = source
    if not isinstance(obj, dict):
        raise SchemaError("cost model must be a JSON object")
    classes = obj.get("classes")
    if not isinstance(classes, dict):
        raise SchemaError("cost model needs a 'classes' object")
    parsed = {str(k): _pair(v, f"classes.{k}") for k, v in classes.items()}
    intr = obj.get("intrinsics", {})
    if not isinstance(intr, dict):
        raise SchemaError("'intrinsics' must be an object")
    intrinsics = {}
    for name, spec in intr.items():
        if not isinstance(spec, dict) or "base" not in spec or "per_unit" not in spec:
            raise SchemaError(f"intrinsics.{name}: needs 'base' and 'per_unit'")
        intrinsics[name] = IntrinsicCost(_pair(spec["base"], f"intrinsics.{name}.base"),
                                         _pair(spec["per_unit"], f"intrinsics.{name}.per_unit"))
    if "checkpoint" not in obj:
        raise MissingCheckpointCosts("cost model lacks a 'checkpoint' section")
    checkpoint = _pair(obj["checkpoint"], "checkpoint")
    recovery = _pair(obj["recovery"], "recovery") if "recovery" in obj else ZERO_COST
    return CostModel(parsed, intrinsics, checkpoint, recovery, str(obj.get("name", "")))


def load_cost_model_file(path) -> CostModel:
    return load_cost_model(Path(path).read_text(encoding="utf-8"))


def default_cost_model() -> CostModel:
    """The bundled MSP430FR5994 profile."""
    text = resources.files("intermit").joinpath("data/msp430fr5994.json").read_text(encoding="utf-8")
    return load_cost_model(text)


# ---------------------------------------------------------------------------
# block costs


def constant_count(expr) -> int | None:
    """Integer value of a variable-free count expression, else None."""
    aff = ir.linearize(expr)
    if not aff.is_constant():
        return None
    c = aff.const
    if c < 0 or c != int(c):
        raise CostModelError(f"intrinsic count must be a nonnegative integer, got {c!r}")
    return int(c)


def instr_cost(ins, m: CostModel) -> CostPair | None:
    """Cost of one instruction; None for symbolic intrinsic counts.

    Calls, checkpoints and assignments cost nothing here: callee and
    checkpoint costs are added along paths.
    """
    if isinstance(ins, ir.CostOp):
        return m.cost_of(ins.class_id)
    if isinstance(ins, ir.Intrinsic):
        spec = m.intrinsic(ins.name)
        c = constant_count(ins.count)
        return None if c is None else spec.at(c)
    return ZERO_COST


def block_cost(b: ir.Block, m: CostModel, skip_symbolic: bool = False) -> CostPair:
    """Convolution of a block's instruction costs.

    Intrinsics whose count depends on program variables are rejected unless
    ``skip_symbolic`` is set, in which case they are left for path-level
    evaluation.
    """
    parts = []
    for ins in b.instructions:
        c = instr_cost(ins, m)
        if c is None:
            if not skip_symbolic:
                raise CostModelError(
                    f"block {b.id}: intrinsic {ins.name} has a variable count; "
                    "it is resolved during path exploration")
            continue
        if c is not ZERO_COST:
            parts.append(c)
    return sum_costs(parts)


class BlockCostTable(Mapping):
    """Immutable map ``(function, block id) -> CostPair``."""

    def __init__(self, entries=None):
        self._d = dict(entries or {})

    def __getitem__(self, key):
        return self._d[key]

    def __iter__(self):
        return iter(self._d)

    def __len__(self):
        return len(self._d)

    def __repr__(self):
        return f"BlockCostTable({len(self._d)} blocks)"

    def updated(self, entries) -> "BlockCostTable":
        d = dict(self._d)
        d.update(entries)
        return BlockCostTable(d)

    def without_function(self, fn_name) -> "BlockCostTable":
        return BlockCostTable({k: v for k, v in self._d.items() if k[0] != fn_name})

    def mean_energies(self, fn_name) -> dict:
        return {bid: v.energy.mean() for (f, bid), v in self._d.items() if f == fn_name}


def build_cost_table(prog: ir.Program, m: CostModel) -> BlockCostTable:
    """Block costs for every block of every function."""
    entries = {}
    for fn in prog.functions.values():
        for b in fn.blocks.values():
            entries[(fn.name, b.id)] = block_cost(b, m, skip_symbolic=True)
    return BlockCostTable(entries)


# ---------------------------------------------------------------------------
# outlier splitting


def _median(xs):
    n = len(xs)
    mid = n // 2
    return xs[mid] if n % 2 else 0.5 * (xs[mid - 1] + xs[mid])


def quartiles(sample) -> tuple[float, float, float]:
    """``(Q1, Q3, IQR)`` by Tukey's hinges.

    The halves each include the median when the sample size is odd, so
    ``[5, 5, 5, 5, 50]`` has ``Q3 = 5``.
    """
    xs = sorted(float(x) for x in sample)
    if not xs:
        raise ValueError("quartiles of an empty sample")
    h = (len(xs) + 1) // 2
    q1, q3 = _median(xs[:h]), _median(xs[-h:])
    return q1, q3, q3 - q1


def outlier_threshold(sample) -> float:
    _, q3, iqr = quartiles(sample)
    return q3 + 1.5 * iqr


class SplitResult(NamedTuple):
    function: ir.Function
    table: BlockCostTable
    diagnostics: list
    threshold: float


def _instr_energy_mean(ins, m):
    c = instr_cost(ins, m)
    return 0.0 if c is None else c.energy.mean()


def split_outlier_blocks(f: ir.Function, table: BlockCostTable, m: CostModel,
                         threshold: float | None = None) -> SplitResult:
    """Split blocks whose mean energy exceeds ``Q3 + 1.5 IQR``.

    The sample is the mean block energy of every block in ``f``.  An outlier
    block is cut greedily left to right: instructions accumulate until the
    next one would push the piece over the threshold.  Pieces are chained by
    ``goto`` and the first keeps the original id, so branch targets and
    labels are unaffected.  A block holding an instruction that alone exceeds
    the threshold is reported and left intact.
    """
    means = {bid: table[(f.name, bid)].energy.mean() for bid in f.blocks}
    if threshold is None:
        threshold = outlier_threshold(list(means.values()))
    taken = set(f.blocks)
    blocks: dict = {}
    new_entries = {}
    diags = []
    for b in f.blocks.values():
        if means[b.id] <= threshold or len(b.instructions) == 0:
            blocks[b.id] = b
            continue
        energies = [_instr_energy_mean(i, m) for i in b.instructions]
        worst = int(np.argmax(energies))
        if energies[worst] > threshold:
            diags.append(UnsplittableBlock(f.name, b.id, worst, energies[worst], threshold))
            blocks[b.id] = b
            continue
        pieces, acc = [[]], 0.0
        for ins, e in zip(b.instructions, energies):
            if pieces[-1] and acc + e > threshold:
                pieces.append([])
                acc = 0.0
            pieces[-1].append(ins)
            acc += e
        if len(pieces) == 1:
            blocks[b.id] = b
            continue
        ids = [b.id] + [ir._fresh_id(b.id, taken, "s") for _ in pieces[1:]]
        for k, (bid, instrs) in enumerate(zip(ids, pieces)):
            term = ir.Goto(ids[k + 1]) if k + 1 < len(ids) else b.terminator
            nb = ir.Block(bid, tuple(instrs), term)
            blocks[bid] = nb
            new_entries[(f.name, bid)] = block_cost(nb, m, skip_symbolic=True)
    new_fn = replace(f, blocks=blocks)
    return SplitResult(new_fn, table.updated(new_entries), diags, threshold)


def split_program_outliers(prog: ir.Program, table: BlockCostTable, m: CostModel):
    """Apply :func:`split_outlier_blocks` to every function, one pass each."""
    fns, diags = {}, []
    for name, fn in prog.functions.items():
        res = split_outlier_blocks(fn, table, m)
        fns[name] = res.function
        table = res.table
        diags.extend(res.diagnostics)
    return replace(prog, functions=fns), table, diags
