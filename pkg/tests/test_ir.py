import pytest

from intermit import dist as D
from intermit import ir
from intermit.errors import EtirSyntaxError, NonAffineExpression, RecursionDetected, UnresolvedReference

from corpus import FIG5, PROGRAMS


def test_minimal_program():
    p = ir.parse_program("fn main { entry: cost mov_rr; return }")
    assert list(p.functions) == ["main"]
    fn = p.function()
    assert list(fn.blocks) == ["entry"]
    assert fn.blocks["entry"].instructions == (ir.CostOp("mov_rr"),)
    assert fn.blocks["entry"].terminator == ir.Return()


def test_branch_on_binomial_input():
    p = ir.parse_program("""
input x ~ binomial(40, 0.4)
fn main {
  s: branch (x <= 16) then A else B
  A: return
  B: return
}
""")
    assert p.input_specs["x"] == D.Binomial(40, 0.4)
    term = p.function().blocks["s"].terminator
    assert isinstance(term, ir.Branch)
    assert "x" in ir.expr_vars(term.cond)
    assert (term.then, term.else_) == ("A", "B")


def test_requirements_parsed():
    p = ir.parse_program("""
require expires(main, 0.2, 0.9)
require reach(a, b, 0.05)
fn main { a: goto b; b: return }
""")
    assert p.requirements == (ir.Expires("main", 0.2, 0.9), ir.Reachability("a", "b", 0.05, 0.8))


def test_loop_bound_annotation():
    p = ir.parse_program("fn main(max_loop=4) { a: return }")
    assert p.function().loop_bound == 4


def test_undefined_call():
    with pytest.raises(UnresolvedReference):
        ir.parse_program("fn main { a: call nope; return }")


def test_missing_block():
    with pytest.raises(UnresolvedReference):
        ir.parse_program("fn main { a: goto nowhere }")


def test_recursion_rejected():
    with pytest.raises(RecursionDetected):
        ir.parse_program("fn main { a: call f; return }\nfn f { b: call main; return }")


def test_syntax_error_has_position():
    with pytest.raises(EtirSyntaxError) as info:
        ir.parse_program("fn main {\n  a: cost mov_rr\n  b: ??? \n}")
    assert info.value.line >= 2 and info.value.col >= 1


def test_non_affine_expression_rejected():
    p = ir.parse_program("input x ~ uniform(0,1)\nfn main { a: let y = x * x; return }")
    expr = p.function().blocks["a"].instructions[0].expr
    with pytest.raises(NonAffineExpression):
        ir.linearize(expr)
    assert ir.linearize(ir.BinOp("*", ir.Num(3), ir.Var("x"))) == ir.Affine.of({"x": 3}, 0)


@pytest.mark.parametrize("name", sorted(PROGRAMS) + ["fig5"])
def test_format_round_trip(name):
    src = FIG5 if name == "fig5" else PROGRAMS[name]
    p = ir.parse_program(src)
    assert ir.parse_program(ir.format_program(p)) == p


def test_validate_well_formed():
    assert ir.validate(ir.parse_program(PROGRAMS["calls"])) == []


def test_validate_reports_problems():
    good = ir.parse_program("fn main { a: return }\nfn f { b: return }")
    fn = good.function("main")
    bad_block = ir.Block("a", (), ir.Goto("zz"))
    broken = ir.Program({"main": ir.Function("main", {"a": bad_block}, "a")}, "main")
    kinds = [d.kind for d in ir.validate(broken)]
    assert kinds == ["UnresolvedReference"]
    f = ir.Function("f", {"b": ir.Block("b", (ir.Call("main"),))}, "b")
    m = ir.Function("main", {"a": ir.Block("a", (ir.Call("f"),))}, "a")
    cyc = ir.Program({"main": m, "f": f}, "main")
    assert [d.kind for d in ir.validate(cyc)] == ["RecursionDetected"]
    assert fn.name == "main"


# -- checkpoint normalization ------------------------------------------------

def _one_block(body):
    return ir.parse_program(f"fn main {{ x: {body}; return }}")


def test_mid_block_checkpoint_splits():
    p = ir.normalize_checkpoints(_one_block("cost mov_rr; checkpoint; cost add_ri"))
    blocks = p.function().blocks
    assert list(blocks) == ["x", "x_cp1"]
    assert blocks["x"].instructions == (ir.CostOp("mov_rr"),)
    assert blocks["x"].terminator == ir.Goto("x_cp1")
    assert blocks["x_cp1"].instructions == (ir.Checkpoint(), ir.CostOp("add_ri"))
    assert blocks["x_cp1"].terminator == ir.Return()


def test_leading_checkpoint_unchanged():
    p = _one_block("checkpoint; cost mov_rr")
    assert ir.normalize_checkpoints(p) == p


def test_two_checkpoints_three_blocks():
    p = ir.normalize_checkpoints(_one_block("cost a; checkpoint; cost b; checkpoint; cost c"))
    blocks = list(p.function().blocks.values())
    assert len(blocks) == 3
    for b in blocks[1:]:
        assert b.leading_checkpoint
        assert sum(isinstance(i, ir.Checkpoint) for i in b.instructions) == 1
    assert ir.validate(p, normalized=True) == []
    assert ir.normalize_checkpoints(p) == p
