"""Synthetic programs and models shared by the test modules."""
from intermit import costmodel as cm
from intermit import dist as D


def bulk(*classes, times=1):
    return "; ".join(f"cost {c}" for c in classes * times)


PROGRAMS = {
    "straight": f"""
fn main {{
  a: checkpoint; {bulk("mov_rr", "add_ri", "mov_xr", "add_xx", "mpyi", times=12)}; goto b
  b: {bulk("and_nr", "xor_nx", "divu", times=10)}; intrinsic memcpy 6; goto c
  c: checkpoint; {bulk("push_r", "call_x", "mov_cr", "mov_px", times=15)}; return
}}
""",
    "branch": f"""
input x ~ binomial(20, 0.35)
fn main {{
  a: checkpoint; {bulk("mov_rr", "add_ri", times=20)}; branch (x >= 8) then hot else cold
  hot: {bulk("mpyi", "divu", "add_xx", times=25)}; goto out
  cold: {bulk("add_xx", "xor_nx", "mov_xr", times=8)}; goto out
  out: checkpoint; {bulk("push_r", "mov_rr", times=30)}; return
}}
""",
    "loop": f"""
fn main {{
  a: checkpoint; {bulk("mov_rr", "add_ri", times=15)}; let i = 0; goto h
  h: branch (i < 6) then body else out
  body: {bulk("add_xx", "mpyi", "xor_nx", times=6)}; let i = i + 1; goto h
  out: checkpoint; {bulk("push_r", "mov_xr", times=25)}; return
}}
""",
    "nested": f"""
input n ~ binomial(6, 0.5)
input u ~ uniform(0, 1)
fn main {{
  a: checkpoint; {bulk("mov_rr", "add_ri", times=15)}; let i = 0; goto h
  h: branch (i < n) then body else out
  body: {bulk("add_xx", times=10)}; branch (u < 0.3) then slow else fast
  slow: {bulk("mpyi", "divu", times=20)}; goto latch
  fast: {bulk("mov_xr", "and_nr", times=10)}; goto latch
  latch: checkpoint; let i = i + 1; goto h
  out: {bulk("push_r", "mov_cr", times=20)}; return
}}
""",
    # callees are summarized independently of the caller, so a replay would
    # redraw a callee's branch; the chain is kept branch-free
    "calls": f"""
fn main {{
  a: checkpoint; {bulk("mov_rr", "add_ri", times=10)}; call f; {bulk("add_xx", times=20)}; goto b
  b: checkpoint; call g; {bulk("push_r", "mov_px", times=20)}; return
}}
fn f {{
  e: {bulk("mpyi", times=10)}; call g; goto e2
  e2: {bulk("divu", "add_xx", times=15)}; return
}}
fn g {{
  q: {bulk("add_ri", "xor_nx", "mov_xr", times=10)}; return
}}
""",
}

# paths a -> b(cp) -> c -> d(cp) -> e(cp), a -> b -> f -> g -> h(cp) -> i -> e
# and a -> b -> f -> j -> i -> e with weights 0.648, 0.058 and 0.294
FIG5 = f"""
input s ~ empirical(0:0.648, 1:0.058, 2:0.294)
fn classify {{
  a: {bulk("mov_rr", "add_ri", times=5)}; goto b
  b: checkpoint; {bulk("mov_xr", times=8)}; branch (s <= 0) then c else f
  c: {bulk("mpyi", "add_xx", times=10)}; goto d
  d: checkpoint; {bulk("divu", times=6)}; goto e
  e: checkpoint; {bulk("push_r", times=4)}; return
  f: {bulk("and_nr", times=6)}; branch (s <= 1) then g else j
  g: {bulk("xor_nx", "mpyi", times=9)}; goto h
  h: checkpoint; {bulk("mov_cr", times=7)}; goto i
  j: {bulk("add_xx", times=12)}; goto i
  i: {bulk("mov_px", times=5)}; goto e
}}
"""


def table1_model():
    """The bundled instruction profile."""
    return cm.default_cost_model()


def light_checkpoint_model():
    """Instruction profile with cheap checkpoints, so that small capacitor
    windows still leave room for a replay."""
    m = cm.default_cost_model()
    return cm.CostModel(
        m.classes, m.intrinsics,
        cm.CostPair(D.Normal(40.0, 0.5), D.Normal(100.0, 2.0)),
        cm.CostPair(D.Normal(20.0, 0.5), D.Normal(50.0, 1.0)),
        "light-checkpoint",
    )


TAU = D.Normal(10715.0, 630.0)


def const_model(checkpoint=(0.0, 0.0), recovery=(0.0, 0.0), **classes):
    """Model whose classes cost fixed ``(time, energy)`` pairs."""
    def pair(te):
        return cm.CostPair(D.Constant(te[0]), D.Constant(te[1]))
    return cm.CostModel({k: pair(v) for k, v in classes.items()}, {},
                        pair(checkpoint), pair(recovery), "constant")
