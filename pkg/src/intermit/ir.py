"""Block-structured program representation (ETIR), its parser and transforms.

Grammar (line comments start with ``#``; ``;`` and newlines separate freely)::

    input <var> ~ <dist>            # JSON object or shorthand, e.g. binomial(40, 0.4)
    require expires(<fn|label>, <seconds>[, <threshold>])
    require reach(<labelA>, <labelB>, <seconds>[, <threshold>])
    fn <name>[(max_loop=<n>)] {
      <id>:
        cost <class>
        let <var> = <affine expr>
        call <fn>
        checkpoint
        intrinsic <name> <count expr>
        goto <id> | branch (<expr> <cmp> <expr>) then <id> else <id> | return
    }

The first block of a function is its entry block; the entry function is
``main`` when present, otherwise the first function declared.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Union

from . import dist as D
from .errors import (
    EtirSyntaxError,
    IRError,
    NonAffineExpression,
    RecursionDetected,
    UnresolvedReference,
)

DEFAULT_LOOP_BOUND = 32

# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # '+', '-', '*'
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


Expr = Union[Num, Var, BinOp, Neg]

CMP_OPS = ("<=", ">=", "==", "!=", "<", ">")


@dataclass(frozen=True)
class Cmp:
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Affine:
    """``const + sum(coef * var)``."""

    coefs: tuple[tuple[str, float], ...]
    const: float

    @classmethod
    def of(cls, coefs: dict, const: float) -> "Affine":
        return cls(tuple(sorted((k, v) for k, v in coefs.items() if v != 0)), float(const))

    @property
    def variables(self):
        return [k for k, _ in self.coefs]

    def is_constant(self):
        return not self.coefs


def linearize(e: Expr) -> Affine:
    """Reduce an expression tree to affine form or raise NonAffineExpression."""
    if isinstance(e, Num):
        return Affine((), e.value)
    if isinstance(e, Var):
        return Affine(((e.name, 1.0),), 0.0)
    if isinstance(e, Neg):
        a = linearize(e.operand)
        return Affine.of({k: -v for k, v in a.coefs}, -a.const)
    if isinstance(e, BinOp):
        a, b = linearize(e.left), linearize(e.right)
        if e.op in "+-":
            sign = 1.0 if e.op == "+" else -1.0
            coefs = dict(a.coefs)
            for k, v in b.coefs:
                coefs[k] = coefs.get(k, 0.0) + sign * v
            return Affine.of(coefs, a.const + sign * b.const)
        if e.op == "*":
            if a.is_constant():
                a, b = b, a
            if not b.is_constant():
                raise NonAffineExpression(f"product of two variable terms: {format_expr(e)}")
            k = b.const
            return Affine.of({n: v * k for n, v in a.coefs}, a.const * k)
    raise NonAffineExpression(f"unsupported expression {e!r}")


def expr_vars(e) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return expr_vars(e.operand)
    if isinstance(e, (BinOp, Cmp)):
        return expr_vars(e.left) | expr_vars(e.right)
    return set()


def format_expr(e) -> str:
    if isinstance(e, Num):
        v = e.value
        return str(int(v)) if float(v).is_integer() else repr(v)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"-({format_expr(e.operand)})"
    if isinstance(e, BinOp):
        return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"
    if isinstance(e, Cmp):
        return f"{format_expr(e.left)} {e.op} {format_expr(e.right)}"
    raise TypeError(e)


# ---------------------------------------------------------------------------
# instructions, blocks, functions


@dataclass(frozen=True)
class CostOp:
    class_id: str


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Expr


@dataclass(frozen=True)
class Call:
    function: str


@dataclass(frozen=True)
class Checkpoint:
    pass


@dataclass(frozen=True)
class Intrinsic:
    name: str
    count: Expr


Instr = Union[CostOp, Assign, Call, Checkpoint, Intrinsic]


@dataclass(frozen=True)
class Goto:
    target: str


@dataclass(frozen=True)
class Branch:
    cond: Cmp
    then: str
    else_: str


@dataclass(frozen=True)
class Return:
    pass


Terminator = Union[Goto, Branch, Return]


def successors(t: Terminator) -> tuple[str, ...]:
    if isinstance(t, Goto):
        return (t.target,)
    if isinstance(t, Branch):
        return (t.then, t.else_)
    return ()


@dataclass(frozen=True)
class Block:
    id: str
    instructions: tuple = ()
    terminator: Terminator = Return()

    @property
    def has_checkpoint(self) -> bool:
        return any(isinstance(i, Checkpoint) for i in self.instructions)

    @property
    def leading_checkpoint(self) -> bool:
        return bool(self.instructions) and isinstance(self.instructions[0], Checkpoint)


@dataclass(frozen=True)
class Function:
    name: str
    blocks: dict  # id -> Block, insertion ordered
    entry_block: str
    params: tuple = ()
    loop_bound: int | None = None  # None: use the exploration limit

    def block(self, block_id: str) -> Block:
        try:
            return self.blocks[block_id]
        except KeyError:
            raise UnresolvedReference(block_id, f"function {self.name}") from None

    def calls(self) -> set[str]:
        return {i.function for b in self.blocks.values() for i in b.instructions if isinstance(i, Call)}

    @property
    def has_checkpoint(self) -> bool:
        return any(b.has_checkpoint for b in self.blocks.values())


@dataclass(frozen=True)
class Expires:
    scope: str
    bound_s: float
    threshold: float = 0.8


@dataclass(frozen=True)
class Reachability:
    from_label: str
    to_label: str
    bound_s: float
    threshold: float = 0.8


TimingRequirement = Union[Expires, Reachability]


@dataclass(frozen=True)
class Program:
    functions: dict  # name -> Function
    entry_function: str
    input_specs: dict = field(default_factory=dict)  # var -> Dist
    requirements: tuple = ()

    def function(self, name: str | None = None) -> Function:
        name = name or self.entry_function
        try:
            return self.functions[name]
        except KeyError:
            raise UnresolvedReference(name, "program") from None

    def call_order(self, root: str | None = None) -> list[str]:
        """Functions reachable from ``root``, callees before callers."""
        order, seen = [], set()

        def visit(name, stack):
            if name in stack:
                cyc = stack[stack.index(name):] + [name]
                raise RecursionDetected(cyc)
            if name in seen:
                return
            fn = self.function(name)
            for callee in sorted(fn.calls()):
                visit(callee, stack + [name])
            seen.add(name)
            order.append(name)

        visit(root or self.entry_function, [])
        return order


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<op><=|>=|==|!=|[{}():;,~+\-*<>=\[\]])
  | (?P<other>\S)
    """,
    re.VERBOSE,
)

KEYWORDS = {"fn", "input", "require", "cost", "let", "call", "checkpoint", "intrinsic",
            "goto", "branch", "then", "else", "return"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise EtirSyntaxError(line, pos - line_start + 1, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind == "nl":
            toks.append(_Tok("nl", "\n", line, pos - line_start + 1))
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


_SHORTHAND = {
    "normal": (2, lambda a: D.Normal(a[0], a[1])),
    "uniform": (2, lambda a: D.Uniform(a[0], a[1])),
    "constant": (1, lambda a: D.Constant(a[0])),
    "binomial": (2, lambda a: D.Binomial(int(a[0]), a[1])),
    "binom": (2, lambda a: D.Binomial(int(a[0]), a[1])),
}


def parse_dist_spec(text: str) -> D.Dist:
    """Parse a distribution given as JSON or shorthand like ``normal(1.02, 0.01)``.

    ``empirical(0:0.25, 1:0.75)`` and ``mixture(0.5*normal(0,1), 0.5*constant(3))``
    are accepted too.
    """
    s = text.strip()
    if s.startswith("{"):
        try:
            return D.from_json(json.loads(s))
        except json.JSONDecodeError as exc:
            raise IRError(f"bad JSON distribution: {exc}") from exc
    m = re.fullmatch(r"([A-Za-z_]+)\s*\((.*)\)", s, re.S)
    if not m:
        raise IRError(f"cannot parse distribution {text!r}")
    name, body = m.group(1).lower(), m.group(2)
    if name == "empirical":
        pts = []
        for part in _split_top(body):
            v, _, w = part.partition(":")
            pts.append((float(v), float(w)))
        return D.from_json({"kind": "empirical", "points": pts})
    if name == "mixture":
        comps = []
        for part in _split_top(body):
            w, _, inner = part.partition("*")
            comps.append((float(w), parse_dist_spec(inner)))
        return D.mixture(comps)
    if name not in _SHORTHAND:
        raise IRError(f"unknown distribution {name!r}")
    arity, build = _SHORTHAND[name]
    args = [float(a) for a in _split_top(body)]
    if len(args) != arity:
        raise IRError(f"{name} takes {arity} arguments, got {len(args)}")
    return build(args)


def _split_top(body: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        parts.append(tail)
    return parts


_DURATION_RE = re.compile(r"^([0-9.eE+-]+)\s*(s|ms|us)?$")


def _parse_seconds(text: str, line: int, col: int) -> float:
    m = _DURATION_RE.match(text.strip())
    if not m:
        raise EtirSyntaxError(line, col, f"bad duration {text!r}")
    scale = {"s": 1.0, "ms": 1e-3, "us": 1e-6, None: 1.0}[m.group(2)]
    return float(m.group(1)) * scale


class _Parser:
    def __init__(self, text: str):
        self.lines = text.split("\n")
        self.toks = _tokenize(text)
        self.i = 0

    # token helpers
    def peek(self, k=0):
        j = self.i
        seen = 0
        while True:
            t = self.toks[j]
            if t.kind != "nl" and t.text != ";":
                if seen == k:
                    return t
                seen += 1
            j += 1

    def next(self):
        while self.toks[self.i].kind == "nl" or self.toks[self.i].text == ";":
            self.i += 1
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text=None, kind=None):
        t = self.next()
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = repr(text) if text is not None else kind
            got = repr(t.text) if t.kind != "eof" else "end of input"
            raise EtirSyntaxError(t.line, t.col, f"expected {want}, got {got}")
        return t

    def ident(self, what="identifier"):
        t = self.next()
        if t.kind != "ident" or t.text in KEYWORDS:
            got = repr(t.text) if t.kind != "eof" else "end of input"
            raise EtirSyntaxError(t.line, t.col, f"expected {what}, got {got}")
        return t

    def rest_of_line(self, tok):
        # raw text after ``tok`` up to the end of its line, minus comments
        line = self.lines[tok.line - 1]
        start = tok.col - 1 + len(tok.text)
        raw = line[start:]
        raw = raw.split("#", 1)[0]
        # skip tokens belonging to this line
        while self.toks[self.i].kind not in ("nl", "eof"):
            self.i += 1
        return raw.strip()

    # grammar
    def program(self) -> Program:
        functions, inputs, reqs = {}, {}, []
        order = []
        while True:
            t = self.peek()
            if t.kind == "eof":
                break
            if t.text == "input":
                name, d = self.input_decl()
                inputs[name] = d
            elif t.text == "require":
                reqs.append(self.require_decl())
            elif t.text == "fn":
                fn = self.function()
                if fn.name in functions:
                    raise EtirSyntaxError(t.line, t.col, f"duplicate function {fn.name!r}")
                functions[fn.name] = fn
                order.append(fn.name)
            else:
                raise EtirSyntaxError(t.line, t.col, f"expected 'fn', 'input' or 'require', got {t.text!r}")
        if not functions:
            t = self.toks[-1]
            raise EtirSyntaxError(t.line, t.col, "program declares no functions")
        entry = "main" if "main" in functions else order[0]
        return Program(functions, entry, inputs, tuple(reqs))

    def input_decl(self):
        self.next()
        name = self.ident("input variable name")
        tilde = self.expect("~")
        raw = self.rest_of_line(tilde)
        try:
            d = parse_dist_spec(raw)
        except (IRError, ValueError) as exc:
            raise EtirSyntaxError(tilde.line, tilde.col + 1, str(exc)) from None
        return name.text, d

    def require_decl(self):
        self.next()
        kind = self.ident("'expires' or 'reach'")
        open_ = self.expect("(")
        raw = self.rest_of_line(open_)
        if not raw.endswith(")"):
            raise EtirSyntaxError(open_.line, open_.col, "unterminated requirement")
        args = [a.strip() for a in raw[:-1].split(",")]
        line, col = open_.line, open_.col + 1
        if kind.text == "expires":
            if len(args) not in (2, 3):
                raise EtirSyntaxError(line, col, "expires(<scope>, <seconds>[, <threshold>])")
            thr = float(args[2]) if len(args) == 3 else 0.8
            return Expires(args[0], _parse_seconds(args[1], line, col), thr)
        if kind.text in ("reach", "reachability"):
            if len(args) not in (3, 4):
                raise EtirSyntaxError(line, col, "reach(<from>, <to>, <seconds>[, <threshold>])")
            thr = float(args[3]) if len(args) == 4 else 0.8
            return Reachability(args[0], args[1], _parse_seconds(args[2], line, col), thr)
        raise EtirSyntaxError(kind.line, kind.col, f"unknown requirement {kind.text!r}")

    def function(self) -> Function:
        self.expect("fn")
        name = self.ident("function name")
        loop_bound = None
        if self.peek().text == "(":
            # optional per-function loop bound: fn f(max_loop=8) { ... }
            self.next()
            key = self.ident("option name")
            self.expect("=")
            val = self.expect(kind="num")
            self.expect(")")
            if key.text != "max_loop":
                raise EtirSyntaxError(key.line, key.col, f"unknown function option {key.text!r}")
            loop_bound = int(float(val.text))
        self.expect("{")
        blocks = {}
        while self.peek().text != "}":
            if self.peek().kind == "eof":
                t = self.peek()
                raise EtirSyntaxError(t.line, t.col, f"unterminated function {name.text!r}")
            b, tok = self.block()
            if b.id in blocks:
                raise EtirSyntaxError(tok.line, tok.col, f"duplicate block id {b.id!r}")
            blocks[b.id] = b
        self.expect("}")
        if not blocks:
            raise EtirSyntaxError(name.line, name.col, f"function {name.text!r} has no blocks")
        return Function(name.text, blocks, next(iter(blocks)), (), loop_bound)

    def block(self):
        label = self.ident("block label")
        self.expect(":")
        instrs = []
        while True:
            t = self.peek()
            if t.text in ("goto", "branch", "return"):
                term = self.terminator()
                return Block(label.text, tuple(instrs), term), label
            if t.kind == "eof" or t.text == "}" or (t.kind == "ident" and self.peek(1).text == ":"):
                raise EtirSyntaxError(t.line, t.col, f"block {label.text!r} lacks a terminator")
            instrs.append(self.instr())

    def instr(self):
        t = self.next()
        if t.text == "cost":
            return CostOp(self.ident("cost class").text)
        if t.text == "let":
            v = self.ident("variable")
            self.expect("=")
            return Assign(v.text, self.expr())
        if t.text == "call":
            return Call(self.ident("function name").text)
        if t.text == "checkpoint":
            if self.peek().text == "(":
                self.next()
                self.expect(")")
            return Checkpoint()
        if t.text == "intrinsic":
            name = self.ident("intrinsic name")
            return Intrinsic(name.text, self.expr())
        raise EtirSyntaxError(t.line, t.col, f"unknown instruction {t.text!r}")

    def terminator(self):
        t = self.next()
        if t.text == "goto":
            return Goto(self.ident("block label").text)
        if t.text == "return":
            return Return()
        self.expect("(")
        left = self.expr()
        op = self.next()
        if op.text not in CMP_OPS and op.text != "=":
            raise EtirSyntaxError(op.line, op.col, f"expected comparison operator, got {op.text!r}")
        right = self.expr()
        self.expect(")")
        self.expect("then")
        then = self.ident("block label")
        self.expect("else")
        else_ = self.ident("block label")
        return Branch(Cmp("==" if op.text == "=" else op.text, left, right), then.text, else_.text)

    def expr(self):
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().text == "*":
            self.next()
            node = BinOp("*", node, self.unary())
        return node

    def unary(self):
        t = self.peek()
        if t.text == "-":
            self.next()
            return Neg(self.unary())
        if t.text == "(":
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        t = self.next()
        if t.kind == "num":
            return Num(float(t.text))
        if t.kind == "ident" and t.text not in KEYWORDS:
            return Var(t.text)
        got = repr(t.text) if t.kind != "eof" else "end of input"
        raise EtirSyntaxError(t.line, t.col, f"expected expression, got {got}")


def parse_program(text: str) -> Program:
    """Parse ETIR source into a resolved :class:`Program`.

    Raises EtirSyntaxError for malformed text, UnresolvedReference for missing
    functions, blocks or labels, and RecursionDetected for call cycles.
    """
    prog = _Parser(text).program()
    for diag in validate(prog):
        raise diag.error
    return prog


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    error: Exception = field(compare=False, repr=False, default=None)

    def __str__(self):
        return f"{self.kind}: {self.message}"


def _labels(prog: Program) -> set[str]:
    return {bid for fn in prog.functions.values() for bid in fn.blocks}


def validate(prog: Program, normalized: bool = False) -> list[Diagnostic]:
    """One diagnostic per violated structural invariant; empty when well formed."""
    out: list[Diagnostic] = []

    def add(err, kind=None):
        out.append(Diagnostic(kind or type(err).__name__, str(err), err))

    if prog.entry_function not in prog.functions:
        add(UnresolvedReference(prog.entry_function, "program entry"))
    for fn in prog.functions.values():
        if fn.entry_block not in fn.blocks:
            add(UnresolvedReference(fn.entry_block, f"function {fn.name}"))
        for b in fn.blocks.values():
            for tgt in successors(b.terminator):
                if tgt not in fn.blocks:
                    add(UnresolvedReference(tgt, f"{fn.name}.{b.id}"))
            for ins in b.instructions:
                if isinstance(ins, Call) and ins.function not in prog.functions:
                    add(UnresolvedReference(ins.function, f"{fn.name}.{b.id}"))
            if normalized and b.has_checkpoint:
                rest = b.instructions[1:]
                if not b.leading_checkpoint or any(isinstance(i, Checkpoint) for i in rest):
                    add(IRError(f"{fn.name}.{b.id}: checkpoint is not the first instruction"),
                        "CheckpointNotLeading")
        if fn.loop_bound is not None and fn.loop_bound < 1:
            add(IRError(f"function {fn.name}: loop bound must be positive"), "InvalidLoopBound")
    # call graph cycles
    graph = {n: f.calls() & set(prog.functions) for n, f in prog.functions.items()}
    state: dict[str, int] = {}
    reported = set()

    def dfs(n, stack):
        state[n] = 1
        for m in sorted(graph[n]):
            if state.get(m) == 1:
                cyc = stack[stack.index(m):] + [m]
                key = frozenset(cyc)
                if key not in reported:
                    reported.add(key)
                    add(RecursionDetected(cyc))
            elif m not in state:
                dfs(m, stack + [m])
        state[n] = 2

    for n in graph:
        if n not in state:
            dfs(n, [n])
    labels = _labels(prog)
    for req in prog.requirements:
        names = [req.scope] if isinstance(req, Expires) else [req.from_label, req.to_label]
        for name in names:
            if name not in labels and name not in prog.functions:
                add(UnresolvedReference(name, "requirement"))
        if not req.bound_s > 0:
            add(IRError(f"requirement bound must be positive: {req}"), "InvalidRequirement")
        if not 0.0 <= req.threshold <= 1.0:
            add(IRError(f"requirement threshold must lie in [0, 1]: {req}"), "InvalidRequirement")
    for name, d in prog.input_specs.items():
        if not isinstance(d, D.Dist):
            add(IRError(f"input {name} is not a distribution"), "InvalidInput")
    return out


# ---------------------------------------------------------------------------
# transforms


def _fresh_id(base: str, taken: set[str], tag: str) -> str:
    k = 1
    while f"{base}_{tag}{k}" in taken:
        k += 1
    new = f"{base}_{tag}{k}"
    taken.add(new)
    return new


def normalize_function(fn: Function) -> Function:
    """Split blocks so that every checkpoint leads its block."""
    taken = set(fn.blocks)
    out: dict[str, Block] = {}
    for b in fn.blocks.values():
        pieces: list[list] = [[]]
        for ins in b.instructions:
            if isinstance(ins, Checkpoint) and pieces[-1]:
                pieces.append([])
            pieces[-1].append(ins)
        ids = [b.id] + [_fresh_id(b.id, taken, "cp") for _ in pieces[1:]]
        for k, (bid, instrs) in enumerate(zip(ids, pieces)):
            term = Goto(ids[k + 1]) if k + 1 < len(ids) else b.terminator
            out[bid] = Block(bid, tuple(instrs), term)
    return replace(fn, blocks=out)


def normalize_checkpoints(prog: Program) -> Program:
    """Every checkpoint becomes the first instruction of its block.

    Mid-block checkpoints split their block; the head falls through to the
    tail with ``goto``.  Applying the transform twice equals applying it once.
    """
    fns = {n: normalize_function(f) for n, f in prog.functions.items()}
    return replace(prog, functions=fns)


def format_program(prog: Program) -> str:
    """Render a program back to ETIR text (parse(format(p)) == p)."""
    lines = []
    for name, d in prog.input_specs.items():
        lines.append(f"input {name} ~ {json.dumps(D.to_json(d))}")
    for r in prog.requirements:
        if isinstance(r, Expires):
            lines.append(f"require expires({r.scope}, {r.bound_s!r}, {r.threshold!r})")
        else:
            lines.append(f"require reach({r.from_label}, {r.to_label}, {r.bound_s!r}, {r.threshold!r})")
    for fn in prog.functions.values():
        head = f"fn {fn.name}" + (f"(max_loop={fn.loop_bound})" if fn.loop_bound is not None else "")
        lines.append(head + " {")
        for b in fn.blocks.values():
            lines.append(f"  {b.id}:")
            for ins in b.instructions:
                lines.append("    " + _format_instr(ins))
            lines.append("    " + _format_term(b.terminator))
        lines.append("}")
    return "\n".join(lines) + "\n"


def _format_instr(ins) -> str:
    if isinstance(ins, CostOp):
        return f"cost {ins.class_id}"
    if isinstance(ins, Assign):
        return f"let {ins.var} = {format_expr(ins.expr)}"
    if isinstance(ins, Call):
        return f"call {ins.function}"
    if isinstance(ins, Checkpoint):
        return "checkpoint"
    if isinstance(ins, Intrinsic):
        return f"intrinsic {ins.name} {format_expr(ins.count)}"
    raise TypeError(ins)


def _format_term(t) -> str:
    if isinstance(t, Goto):
        return f"goto {t.target}"
    if isinstance(t, Branch):
        return f"branch ({format_expr(t.cond)}) then {t.then} else {t.else_}"
    return "return"
