import json
import math

import pytest

from intermit import costmodel as cm
from intermit import dist as D
from intermit import ir
from intermit.errors import MissingCheckpointCosts, SchemaError, UnknownCostClass

ZERO = {"timing": {"kind": "constant", "value": 0}, "energy": {"kind": "constant", "value": 0}}


def model_dict(**classes):
    return {"classes": classes, "checkpoint": ZERO, "recovery": ZERO}


def test_load_normal_class():
    entry = {"timing": {"kind": "normal", "mean": 1.02, "std": 0.01},
             "energy": {"kind": "normal", "mean": 4.52, "std": 0.62}}
    m = cm.load_cost_model(json.dumps(model_dict(mov_rr=entry)))
    assert m.cost_of("mov_rr") == cm.CostPair(D.Normal(1.02, 0.01), D.Normal(4.52, 0.62))


def test_constant_timing_class():
    entry = {"timing": {"kind": "constant", "value": 2},
             "energy": {"kind": "normal", "mean": 5.8, "std": 0.62}}
    m = cm.load_cost_model(model_dict(jmp=entry))
    assert m.cost_of("jmp").timing == D.Constant(2)


def test_missing_checkpoint_section():
    with pytest.raises(MissingCheckpointCosts):
        cm.load_cost_model({"classes": {}, "recovery": ZERO})


def test_malformed_entry():
    with pytest.raises(SchemaError):
        cm.load_cost_model(model_dict(bad={"timing": {"kind": "normal", "mean": 1}}))


def test_unknown_class():
    with pytest.raises(UnknownCostClass):
        cm.default_cost_model().cost_of("fmul")


def test_default_model_loads():
    m = cm.default_cost_model()
    assert m.cost_of("jmp").timing == D.Constant(2)
    assert "memcpy" in m.intrinsics


# -- block costs --------------------------------------------------------------

def block(body):
    return ir.parse_program(f"fn main {{ b: {body}; return }}").function().blocks["b"]


def test_block_cost_sums_normals():
    c = cm.block_cost(block("cost mov_rr; cost add_ri"), cm.default_cost_model())
    assert c.timing.mean() == pytest.approx(4.04)
    assert c.timing.std() == pytest.approx(0.014142, abs=1e-6)
    assert c.energy.mean() == pytest.approx(11.60)
    assert c.energy.std() == pytest.approx(math.hypot(0.62, 0.62), abs=1e-9)


def test_empty_block_costs_nothing():
    c = cm.block_cost(ir.Block("b"), cm.default_cost_model())
    assert c.timing == D.Constant(0) and c.energy == D.Constant(0)


def test_memcpy_intrinsic():
    c = cm.block_cost(block("intrinsic memcpy 2"), cm.default_cost_model())
    assert c.timing.mean() == pytest.approx(13.06 + 2 * 9.06)
    assert c.timing.std() == pytest.approx(math.hypot(0.01, 0.02))


def test_block_cost_unknown_class():
    with pytest.raises(UnknownCostClass):
        cm.block_cost(block("cost nope"), cm.default_cost_model())


# -- quartiles and splitting ---------------------------------------------------------

@pytest.mark.parametrize("sample, q1, q3", [
    ([1, 2, 3, 4], 1.5, 3.5),
    ([5], 5, 5),
    ([1, 1, 1, 100], 1, 50.5),
    ([5, 5, 5, 5, 50], 5, 5),
])
def test_quartiles(sample, q1, q3):
    assert cm.quartiles(sample) == (q1, q3, q3 - q1)


def test_outlier_threshold_sensitivity():
    assert cm.outlier_threshold([1, 1, 1, 100]) == pytest.approx(124.75)


def energy_model(**energies):
    classes = {k: {"timing": {"kind": "constant", "value": 1},
                   "energy": {"kind": "constant", "value": v}} for k, v in energies.items()}
    return cm.load_cost_model(model_dict(**classes))


def split(src, m):
    prog = ir.parse_program(src)
    table = cm.build_cost_table(prog, m)
    return cm.split_outlier_blocks(prog.function(), table, m), prog


def test_outlier_block_is_split():
    m = energy_model(e1=1, e5=5)
    body = "; ".join(["cost e5"] * 10)
    src = f"""fn main {{
  a: cost e5; goto b
  b: cost e5; goto c
  c: cost e5; goto d
  d: cost e5; goto x
  x: {body}; return
}}"""
    res, prog = split(src, m)
    assert res.threshold == 5
    fn = res.function
    assert len(fn.blocks) == 14
    assert fn.entry_block == "a"
    for bid, b in fn.blocks.items():
        assert res.table[("main", bid)].energy.mean() <= 5
    # the chain preserves the instruction sequence
    order, bid = [], "x"
    while True:
        b = fn.blocks[bid]
        order.extend(b.instructions)
        if not isinstance(b.terminator, ir.Goto):
            break
        bid = b.terminator.target
    assert tuple(order) == prog.function().blocks["x"].instructions
    # splitting again with the same threshold is a no-op
    again = cm.split_outlier_blocks(fn, res.table, m, threshold=res.threshold)
    assert again.function == fn


def test_equal_blocks_not_split():
    m = energy_model(e5=5)
    res, prog = split("fn main { a: cost e5; goto b\n b: cost e5; goto c\n c: cost e5; return }", m)
    assert res.function == prog.function()
    assert res.diagnostics == []


def test_unsplittable_block_reported():
    m = energy_model(e1=1, big=500)
    src = ("fn main { a: cost e1; goto b\n b: cost e1; goto c\n c: cost e1; goto d\n"
           " d: cost e1; goto e\n e: cost e1; cost big; return }")
    res, prog = split(src, m)
    assert res.function == prog.function()
    assert len(res.diagnostics) == 1
    assert "main" in str(res.diagnostics[0])
