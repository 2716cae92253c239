"""A tiny imperative DSL rendered into three surface languages.

The same program (integer variables, assignments, ``add/sub/mul`` expressions,
an optional single counted loop, prints) renders as

=========  ==========================  ===============================
language   ``x = 1 + 2``               ``print x`` / loop of 3
=========  ==========================  ===============================
toyA       ``set x = 1 + 2 ;``         ``print x ;`` / ``loop 3 { ... }``
toyB       ``x := add [ 1 , 2 ]``      ``show [ x ]`` / ``times 3 do ... end``
toyC       ``1 2 plus -> x``           ``x emit`` / ``3 repeat ... done``
=========  ==========================  ===============================

toyA is infix (nested operations always parenthesised), toyB prefix with
square brackets, toyC postfix.  Keyword/punctuation sets are pairwise
disjoint; identifiers and digit literals are shared.  Renderers emit
whitespace-separated tokens and each parser inverts its renderer exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ParseError, UnknownLanguage

IDENTIFIERS = ("a", "b", "c", "d", "x", "y")
DIGITS = tuple(str(i) for i in range(10))
SHARED_TOKENS = IDENTIFIERS + DIGITS
OPS = ("add", "sub", "mul")

KEYWORDS = {
    "toyA": ("set", "=", ";", "+", "-", "*", "(", ")", "print", "loop", "{", "}"),
    "toyB": (":=", "add", "sub", "mul", "[", ",", "]", "show", "times", "do", "end"),
    "toyC": ("plus", "minus", "mult", "->", "emit", "repeat", "done"),
}
LANGUAGES = tuple(KEYWORDS)

_A_OP = {"add": "+", "sub": "-", "mul": "*"}
_C_OP = {"add": "plus", "sub": "minus", "mul": "mult"}


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Var, BinOp]


@dataclass(frozen=True)
class Assign:
    target: str
    expr: Expr


@dataclass(frozen=True)
class Print:
    expr: Expr


@dataclass(frozen=True)
class Loop:
    count: int
    body: tuple


Stmt = Union[Assign, Print, Loop]


@dataclass(frozen=True)
class Program:
    body: tuple
    task: str = "arith"

    def __eq__(self, other):
        # the task tag is metadata, not semantics
        return isinstance(other, Program) and self.body == other.body

    def __hash__(self):
        return hash(self.body)


def _expr_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, BinOp):
        return _expr_vars(e.left) | _expr_vars(e.right)
    return set()


def well_formed(p: Program) -> bool:
    """Every variable is assigned before use; at most one loop, never nested."""
    assigned: set[str] = set()
    loops = 0

    def walk(stmts, depth):
        nonlocal loops
        for s in stmts:
            if isinstance(s, Loop):
                loops += 1
                if depth > 0 or s.count < 0:
                    return False
                if not walk(s.body, depth + 1):
                    return False
            else:
                if not _expr_vars(s.expr) <= assigned:
                    return False
                if isinstance(s, Assign):
                    assigned.add(s.target)
        return True

    return walk(p.body, 0) and loops <= 1


def execute(p: Program) -> list[int]:
    """Run the program and return printed values (used for semantic checks)."""
    env: dict[str, int] = {}
    out: list[int] = []

    def ev(e):
        if isinstance(e, Num):
            return e.value
        if isinstance(e, Var):
            return env[e.name]
        a, b = ev(e.left), ev(e.right)
        return a + b if e.op == "add" else a - b if e.op == "sub" else a * b

    def run(stmts):
        for s in stmts:
            if isinstance(s, Assign):
                env[s.target] = ev(s.expr)
            elif isinstance(s, Print):
                out.append(ev(s.expr))
            else:
                for _ in range(s.count):
                    run(s.body)

    run(p.body)
    return out


# ---------------------------------------------------------------------------
# rendering


def _leaf(e: Expr) -> str | None:
    if isinstance(e, Num):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    return None


def _infix(e: Expr) -> list[str]:
    leaf = _leaf(e)
    if leaf is not None:
        return [leaf]

    def side(x):
        return ["("] + _infix(x) + [")"] if isinstance(x, BinOp) else _infix(x)

    return side(e.left) + [_A_OP[e.op]] + side(e.right)


def _prefix(e: Expr) -> list[str]:
    leaf = _leaf(e)
    if leaf is not None:
        return [leaf]
    return [e.op, "["] + _prefix(e.left) + [","] + _prefix(e.right) + ["]"]


def _postfix(e: Expr) -> list[str]:
    leaf = _leaf(e)
    if leaf is not None:
        return [leaf]
    return _postfix(e.left) + _postfix(e.right) + [_C_OP[e.op]]


def _render_a(stmts) -> list[str]:
    out: list[str] = []
    for s in stmts:
        if isinstance(s, Assign):
            out += ["set", s.target, "="] + _infix(s.expr) + [";"]
        elif isinstance(s, Print):
            out += ["print"] + _infix(s.expr) + [";"]
        else:
            out += ["loop", str(s.count), "{"] + _render_a(s.body) + ["}"]
    return out


def _render_b(stmts) -> list[str]:
    out: list[str] = []
    for s in stmts:
        if isinstance(s, Assign):
            out += [s.target, ":="] + _prefix(s.expr)
        elif isinstance(s, Print):
            out += ["show", "["] + _prefix(s.expr) + ["]"]
        else:
            out += ["times", str(s.count), "do"] + _render_b(s.body) + ["end"]
    return out


def _render_c(stmts) -> list[str]:
    out: list[str] = []
    for s in stmts:
        if isinstance(s, Assign):
            out += _postfix(s.expr) + ["->", s.target]
        elif isinstance(s, Print):
            out += _postfix(s.expr) + ["emit"]
        else:
            out += [str(s.count), "repeat"] + _render_c(s.body) + ["done"]
    return out


_RENDERERS = {"toyA": _render_a, "toyB": _render_b, "toyC": _render_c}


def render(p: Program, lang: str) -> list[str]:
    try:
        fn = _RENDERERS[lang]
    except KeyError:
        raise UnknownLanguage(lang) from None
    return fn(p.body)


# ---------------------------------------------------------------------------
# parsing


class _Stream:
    def __init__(self, tokens):
        self.toks = list(tokens)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input")
        self.pos += 1
        return tok

    def expect(self, tok):
        got = self.next()
        if got != tok:
            raise ParseError(f"expected {tok!r} at token {self.pos - 1}, got {got!r}")

    def done(self):
        return self.pos >= len(self.toks)


def _parse_leaf(tok: str) -> Expr:
    if tok in DIGITS:
        return Num(int(tok))
    if tok in IDENTIFIERS:
        return Var(tok)
    raise ParseError(f"unexpected token {tok!r}")


def _parse_count(tok: str) -> int:
    if tok not in DIGITS:
        raise ParseError(f"loop count must be a digit, got {tok!r}")
    return int(tok)


def _parse_a(tokens) -> tuple:
    st = _Stream(tokens)

    def term():
        tok = st.next()
        if tok == "(":
            e = expr()
            st.expect(")")
            return e
        return _parse_leaf(tok)

    def expr():
        left = term()
        inv = {v: k for k, v in _A_OP.items()}
        if st.peek() in inv:
            op = inv[st.next()]
            return BinOp(op, left, term())
        return left

    def stmts(closing):
        out = []
        while True:
            tok = st.peek()
            if tok == closing:
                return tuple(out)
            if tok is None:
                raise ParseError("unexpected end of input")
            st.next()
            if tok == "set":
                name = st.next()
                if name not in IDENTIFIERS:
                    raise ParseError(f"bad identifier {name!r}")
                st.expect("=")
                e = expr()
                st.expect(";")
                out.append(Assign(name, e))
            elif tok == "print":
                e = expr()
                st.expect(";")
                out.append(Print(e))
            elif tok == "loop":
                n = _parse_count(st.next())
                st.expect("{")
                body = stmts("}")
                st.expect("}")
                out.append(Loop(n, body))
            else:
                raise ParseError(f"unexpected token {tok!r}")

    return stmts(None)


def _parse_b(tokens) -> tuple:
    st = _Stream(tokens)

    def expr():
        tok = st.next()
        if tok in OPS:
            st.expect("[")
            left = expr()
            st.expect(",")
            right = expr()
            st.expect("]")
            return BinOp(tok, left, right)
        return _parse_leaf(tok)

    def stmts(closing):
        out = []
        while True:
            tok = st.peek()
            if tok == closing:
                return tuple(out)
            if tok is None:
                raise ParseError("unexpected end of input")
            st.next()
            if tok in IDENTIFIERS:
                st.expect(":=")
                out.append(Assign(tok, expr()))
            elif tok == "show":
                st.expect("[")
                e = expr()
                st.expect("]")
                out.append(Print(e))
            elif tok == "times":
                n = _parse_count(st.next())
                st.expect("do")
                body = stmts("end")
                st.expect("end")
                out.append(Loop(n, body))
            else:
                raise ParseError(f"unexpected token {tok!r}")

    return stmts(None)


def _parse_c(tokens) -> tuple:
    inv = {v: k for k, v in _C_OP.items()}
    blocks: list[list] = [[]]
    counts: list[int] = []
    stack: list[Expr] = []
    st = _Stream(tokens)
    while not st.done():
        tok = st.next()
        if tok in inv:
            if len(stack) < 2:
                raise ParseError(f"operator {tok!r} needs two operands")
            right, left = stack.pop(), stack.pop()
            stack.append(BinOp(inv[tok], left, right))
        elif tok == "->":
            name = st.next()
            if name not in IDENTIFIERS or len(stack) != 1:
                raise ParseError("malformed assignment")
            blocks[-1].append(Assign(name, stack.pop()))
        elif tok == "emit":
            if len(stack) != 1:
                raise ParseError("malformed print")
            blocks[-1].append(Print(stack.pop()))
        elif tok == "repeat":
            if len(stack) != 1 or not isinstance(stack[-1], Num):
                raise ParseError("repeat needs a literal count")
            counts.append(stack.pop().value)
            blocks.append([])
        elif tok == "done":
            if not counts or stack:
                raise ParseError("unbalanced done")
            body = tuple(blocks.pop())
            blocks[-1].append(Loop(counts.pop(), body))
        else:
            stack.append(_parse_leaf(tok))
    if stack or counts:
        raise ParseError("dangling expression or unterminated loop")
    return tuple(blocks[0])


_PARSERS = {"toyA": _parse_a, "toyB": _parse_b, "toyC": _parse_c}


def parse(tokens, lang: str, task: str = "arith") -> Program:
    try:
        fn = _PARSERS[lang]
    except KeyError:
        raise UnknownLanguage(lang) from None
    return Program(fn(tokens), task)


def detect_language(tokens) -> str | None:
    """Identify the language from its keywords (None if only shared tokens)."""
    for lang, kws in KEYWORDS.items():
        if any(t in kws for t in tokens):
            return lang
    return None


# ---------------------------------------------------------------------------
# random programs


TASKS = ("arith", "loop")


def _random_expr(rng: np.random.Generator, assigned: list[str], depth: int) -> Expr:
    if depth > 0 and rng.random() < 0.55:
        op = OPS[int(rng.integers(len(OPS)))]
        return BinOp(op, _random_expr(rng, assigned, depth - 1), _random_expr(rng, assigned, depth - 1))
    if assigned and rng.random() < 0.5:
        return Var(assigned[int(rng.integers(len(assigned)))])
    return Num(int(rng.integers(10)))


def _random_stmt(rng, assigned: list[str], allow_print=True):
    if allow_print and assigned and rng.random() < 0.3:
        return Print(_random_expr(rng, assigned, 1))
    name = IDENTIFIERS[int(rng.integers(len(IDENTIFIERS)))]
    s = Assign(name, _random_expr(rng, assigned, 2))
    if name not in assigned:
        assigned.append(name)
    return s


def random_program(rng: np.random.Generator, task: str = "arith", max_tokens: int = 32) -> Program:
    """Draw a well-formed program whose every rendering has <= ``max_tokens`` tokens."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    while True:
        assigned: list[str] = []
        body: list = []
        if task == "arith":
            for _ in range(int(rng.integers(1, 4))):
                body.append(_random_stmt(rng, assigned))
        else:
            if rng.random() < 0.7:
                body.append(_random_stmt(rng, assigned, allow_print=False))
            inner = [_random_stmt(rng, assigned) for _ in range(int(rng.integers(1, 3)))]
            body.append(Loop(int(rng.integers(2, 10)), tuple(inner)))
            if assigned and rng.random() < 0.4:
                body.append(Print(Var(assigned[int(rng.integers(len(assigned)))])))
        p = Program(tuple(body), task)
        if all(len(render(p, lang)) <= max_tokens for lang in LANGUAGES):
            return p
