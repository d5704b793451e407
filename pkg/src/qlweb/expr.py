"""Scalar expressions in the Riemann invariants R1..Rn.

Expressions are immutable, hash-consed DAG nodes: structurally equal
subtrees are the same Python object, so derivative memoisation and tape
compilation share work automatically.

>>> e = parse("R1*R1 + 2^3", 2)
>>> e.evaluate([3.0, 0.0])
17.0
>>> str(e.diff(1))
'2*R1'
"""
from __future__ import annotations

import math
import re
import weakref
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels as K

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")

_FUNC_OPS = {"exp": K.OP_EXP, "log": K.OP_LOG, "sin": K.OP_SIN, "cos": K.OP_COS, "sqrt": K.OP_SQRT}
_BINARY_OPS = {"+": K.OP_ADD, "-": K.OP_SUB, "*": K.OP_MUL, "/": K.OP_DIV}


class ExprSyntaxError(SyntaxError):
    """Parse failure; ``pos`` is the 0-based character offset."""

    def __init__(self, msg: str, text: str, pos: int):
        super().__init__(f"{msg} at position {pos}: {text!r}")
        self.text = text
        self.pos = pos


class EvalError(ArithmeticError):
    """Domain error during evaluation; ``subterm`` is the offending node."""

    def __init__(self, subterm: "Expression", point):
        super().__init__(f"cannot evaluate {subterm} at {list(point)}")
        self.subterm = subterm
        self.point = point


_INTERN: "weakref.WeakValueDictionary[tuple, Expression]" = weakref.WeakValueDictionary()


class Expression:
    """A node of the expression DAG.

    Build expressions with :func:`parse`, :func:`var`, :func:`const` and the
    overloaded arithmetic operators; never call the constructor directly.
    """

    __slots__ = ("op", "args", "value", "_hash", "_dcache", "_tape", "_vars", "__weakref__")

    op: str
    args: tuple
    value: float | int | str | None

    def __new__(cls, op, args=(), value=None):
        key = (op, value, tuple(id(a) for a in args))
        node = _INTERN.get(key)
        if node is not None:
            return node
        node = object.__new__(cls)
        node.op = op
        node.args = tuple(args)
        node.value = value
        node._hash = hash(key)
        node._dcache = {}
        node._tape = None
        node._vars = None
        _INTERN[key] = node
        return node

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return self is other

    def __reduce__(self):
        return (parse, (to_string(self), max(self.variables(), default=1)))

    # -- arithmetic with light simplification ------------------------------

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise TypeError("only non-negative integer powers are supported")
        return power(self, int(n))

    def __neg__(self):
        return neg(self)

    # -- queries -----------------------------------------------------------

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    def is_zero(self) -> bool:
        return self.op == "const" and self.value == 0.0

    def variables(self) -> frozenset[int]:
        """1-based indices of the variables this expression references."""
        if self._vars is None:
            found = set()
            for node in _postorder([self]):
                if node.op == "var":
                    found.add(node.value)
            self._vars = frozenset(found)
        return self._vars

    def size(self) -> int:
        """Number of distinct DAG nodes."""
        return len(_postorder([self]))

    def diff(self, i: int) -> "Expression":
        return differentiate(self, i)

    def evaluate(self, point) -> float:
        return evaluate(self, point)

    def __str__(self):
        return to_string(self)

    def __repr__(self):
        return f"Expression({to_string(self)!r})"


def _coerce(v) -> Expression:
    if isinstance(v, Expression):
        return v
    if isinstance(v, (int, float, np.integer, np.floating)):
        return const(float(v))
    raise TypeError(f"cannot use {type(v).__name__} in an expression")


def const(v: float) -> Expression:
    v = float(v)
    if v == 0.0:
        v = 0.0  # fold -0.0
    return Expression("const", (), v)


def var(i: int) -> Expression:
    if i < 1:
        raise IndexError(f"variable index must be >= 1, got {i}")
    return Expression("var", (), int(i))


ZERO = const(0.0)
ONE = const(1.0)


def add(a: Expression, b: Expression) -> Expression:
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    if b.op == "neg":
        return sub(a, b.args[0])
    return Expression("+", (a, b))


def sub(a: Expression, b: Expression) -> Expression:
    if a.is_const and b.is_const:
        return const(a.value - b.value)
    if b.is_zero():
        return a
    if a.is_zero():
        return neg(b)
    if a is b:
        return ZERO
    if b.op == "neg":
        return add(a, b.args[0])
    return Expression("-", (a, b))


def mul(a: Expression, b: Expression) -> Expression:
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    if a.is_zero() or b.is_zero():
        return ZERO
    if a.is_const and a.value == 1.0:
        return b
    if b.is_const and b.value == 1.0:
        return a
    if a.is_const and a.value == -1.0:
        return neg(b)
    if b.is_const and b.value == -1.0:
        return neg(a)
    if b.is_const:
        a, b = b, a
    return Expression("*", (a, b))


def div(a: Expression, b: Expression) -> Expression:
    if b.is_const and b.value != 0.0:
        if a.is_const:
            return const(a.value / b.value)
        if b.value == 1.0:
            return a
    if a.is_zero() and not b.is_zero():
        return ZERO
    return Expression("/", (a, b))


def power(a: Expression, n: int) -> Expression:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if a.is_const:
        return const(a.value ** n)
    if a.op == "^":
        return power(a.args[0], a.value * n)
    return Expression("^", (a,), int(n))


def neg(a: Expression) -> Expression:
    if a.is_const:
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return Expression("neg", (a,))


def func(name: str, a: Expression) -> Expression:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if a.is_const:
        folded = _fold_func(name, a.value)
        if folded is not None:
            return const(folded)
    return Expression(name, (a,))


def _fold_func(name, v):
    if name == "exp":
        return math.exp(v)
    if name == "sin":
        return math.sin(v)
    if name == "cos":
        return math.cos(v)
    if name == "log" and v > 0:
        return math.log(v)
    if name == "sqrt" and v >= 0:
        return math.sqrt(v)
    return None


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<sym>[-+*/^()]))"
)


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", text, start)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, n, names):
        self.text = text
        self.n = n
        self.names = names
        self.tokens = _tokenize(text)
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def take(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect(self, sym):
        tok = self.take()
        if tok[1] != sym:
            raise ExprSyntaxError(f"expected {sym!r}, found {tok[1] or 'end of input'!r}", self.text, tok[2])

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", self.text, tok[2])
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "sym":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "sym":
            op = self.take()[1]
            rhs = self.factor()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def factor(self):
        tok = self.peek()
        if tok[0] == "sym" and tok[1] == "-":
            self.take()
            return neg(self.factor())
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "sym":
            self.take()
            tok = self.take()
            if tok[0] != "num" or not tok[1].isdigit():
                raise ExprSyntaxError("exponent must be an unsigned integer", self.text, tok[2])
            base = power(base, int(tok[1]))
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return const(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return func(text, inner)
            if text in self.names:
                return var(self.names[text])
            m = re.fullmatch(r"R(\d+)", text)
            if m:
                i = int(m.group(1))
                if i < 1 or i > self.n:
                    raise IndexError(f"variable R{i} out of range 1..{self.n} in {self.text!r}")
                return var(i)
            raise ExprSyntaxError(f"unknown identifier {text!r}", self.text, pos)
        if kind == "sym" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", self.text, pos)


def parse(text: str, n: int, names: Mapping[str, int] | None = None) -> Expression:
    """Parse ``text`` into an expression over R1..Rn.

    ``names`` maps extra identifiers (such as a univariate placeholder ``u``)
    to 1-based variable indices.

    Raises
    ------
    ExprSyntaxError
        On malformed input, with the character position.
    IndexError
        If a variable index exceeds ``n``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    return _Parser(text, n, dict(names or {})).parse()


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        s = str(int(v))
    else:
        s = repr(v)
    if s.startswith("-"):
        return "(" + s + ")"
    return s


def to_string(e: Expression) -> str:
    """Render in the input grammar; ``parse(to_string(e))`` evaluates identically."""
    memo: dict[int, tuple[str, int]] = {}
    for node in _postorder([e]):
        op = node.op
        if op == "const":
            s = _fmt_number(node.value)
            memo[id(node)] = (s, 5 if not s.startswith("(") else 5)
        elif op == "var":
            memo[id(node)] = (f"R{node.value}", 5)
        elif op in FUNCTIONS:
            memo[id(node)] = (f"{op}({memo[id(node.args[0])][0]})", 5)
        elif op == "neg":
            s, p = memo[id(node.args[0])]
            if p < _PREC["neg"]:
                s = f"({s})"
            memo[id(node)] = ("-" + s, _PREC["neg"])
        elif op == "^":
            s, p = memo[id(node.args[0])]
            if p < 5:
                s = f"({s})"
            memo[id(node)] = (f"{s}^{node.value}", _PREC["^"])
        else:
            prec = _PREC[op]
            ls, lp = memo[id(node.args[0])]
            rs, rp = memo[id(node.args[1])]
            if lp < prec:
                ls = f"({ls})"
            # left-associative: right operand of equal precedence needs parens
            if rp < prec or (rp == prec and op in ("-", "/", "+", "*")):
                rs = f"({rs})"
            memo[id(node)] = (f"{ls}{op}{rs}" if op in "*/^" else f"{ls} {op} {rs}", prec)
    return memo[id(e)][0]


def _postorder(roots: Iterable[Expression]) -> list[Expression]:
    seen: set[int] = set()
    order: list[Expression] = []
    for root in roots:
        if id(root) in seen:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for a in reversed(node.args):
                if id(a) not in seen:
                    stack.append((a, False))
    return order


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def differentiate(e: Expression, i: int) -> Expression:
    """Exact partial derivative with respect to R_i (1-based)."""
    if i < 1:
        raise IndexError(f"variable index must be >= 1, got {i}")
    for node in _postorder([e]):
        if i in node._dcache:
            continue
        if i not in node.variables():
            node._dcache[i] = ZERO
            continue
        node._dcache[i] = _diff_rule(node, i)
    return e._dcache[i]


def _diff_rule(node: Expression, i: int) -> Expression:
    op = node.op
    if op == "var":
        return ONE if node.value == i else ZERO
    args = node.args
    d = [a._dcache[i] for a in args]
    if op == "+":
        return d[0] + d[1]
    if op == "-":
        return d[0] - d[1]
    if op == "*":
        return d[0] * args[1] + args[0] * d[1]
    if op == "/":
        # (u/v)' = (u' - (u/v) v') / v, reusing the quotient node
        return div(d[0] - node * d[1], args[1])
    if op == "^":
        n = node.value
        return const(n) * power(args[0], n - 1) * d[0]
    if op == "neg":
        return -d[0]
    u = args[0]
    if op == "exp":
        return node * d[0]
    if op == "log":
        return div(d[0], u)
    if op == "sin":
        return func("cos", u) * d[0]
    if op == "cos":
        return -(func("sin", u) * d[0])
    if op == "sqrt":
        return div(d[0], const(2.0) * node)
    raise AssertionError(op)


def substitute(e: Expression, mapping: Mapping[int, Expression]) -> Expression:
    """Replace variables ``R_i`` by the given expressions."""
    memo: dict[int, Expression] = {}
    for node in _postorder([e]):
        op = node.op
        if op == "var":
            r = mapping.get(node.value, node)
        elif op == "const":
            r = node
        else:
            a = [memo[id(x)] for x in node.args]
            if op == "+":
                r = add(*a)
            elif op == "-":
                r = sub(*a)
            elif op == "*":
                r = mul(*a)
            elif op == "/":
                r = div(*a)
            elif op == "^":
                r = power(a[0], node.value)
            elif op == "neg":
                r = neg(a[0])
            else:
                r = func(op, a[0])
        memo[id(node)] = r
    return memo[id(e)]


# ---------------------------------------------------------------------------
# evaluation via compiled tapes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Tape:
    """A compiled register program for one or more output expressions."""

    ops: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    val: np.ndarray
    outs: np.ndarray
    nodes: tuple
    nvars: int

    @classmethod
    def compile(cls, exprs: Sequence[Expression]) -> "Tape":
        order = _postorder(exprs)
        index = {id(node): k for k, node in enumerate(order)}
        m = len(order)
        ops = np.zeros(m, dtype=np.int64)
        a0 = np.zeros(m, dtype=np.int64)
        a1 = np.zeros(m, dtype=np.int64)
        val = np.zeros(m)
        nvars = 0
        for k, node in enumerate(order):
            op = node.op
            if op == "const":
                ops[k] = K.OP_CONST
                val[k] = node.value
            elif op == "var":
                ops[k] = K.OP_VAR
                a0[k] = node.value - 1
                nvars = max(nvars, node.value)
            elif op in _BINARY_OPS:
                ops[k] = _BINARY_OPS[op]
                a0[k] = index[id(node.args[0])]
                a1[k] = index[id(node.args[1])]
            elif op == "^":
                ops[k] = K.OP_POW
                a0[k] = index[id(node.args[0])]
                a1[k] = node.value
            elif op == "neg":
                ops[k] = K.OP_NEG
                a0[k] = index[id(node.args[0])]
            else:
                ops[k] = _FUNC_OPS[op]
                a0[k] = index[id(node.args[0])]
        outs = np.array([index[id(e)] for e in exprs], dtype=np.int64)
        return cls(ops, a0, a1, val, outs, tuple(order), nvars)

    @property
    def args(self):
        return self.ops, self.a0, self.a1, self.val, self.outs

    def __call__(self, X, errors: str = "raise") -> np.ndarray:
        """Evaluate at points ``X`` of shape (m, n) -> (m, outputs).

        ``errors="raise"`` raises :class:`EvalError` for the first bad point;
        ``errors="nan"`` leaves NaN in affected outputs.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] < self.nvars:
            raise ValueError(f"points have dimension {X.shape[1]}, need >= {self.nvars}")
        out, err = K.eval_points(*self.args, X)
        if errors == "raise" and (err >= 0).any():
            p = int(np.flatnonzero(err >= 0)[0])
            raise EvalError(self.nodes[err[p]], X[p])
        return out

    def evaluate_with_errors(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return K.eval_points(*self.args, X)


def tape_of(e: Expression) -> Tape:
    if e._tape is None:
        e._tape = Tape.compile([e])
    return e._tape


def evaluate(e: Expression, point) -> float:
    """Evaluate at one point (R1..Rn); raises :class:`EvalError` on domain errors."""
    point = np.asarray(point, dtype=float).ravel()
    return float(tape_of(e)(point[None, :])[0, 0])


def evaluate_many(e: Expression, X, errors: str = "raise") -> np.ndarray:
    return tape_of(e)(X, errors=errors)[:, 0]


# ---------------------------------------------------------------------------
# univariate helpers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnivariateSpec:
    """A function of a single variable, stored over ``R1``.

    ``role`` is one of ``"f"``, ``"g"`` or ``"profile"``.
    """

    expr: Expression
    role: str = "f"
    source: str = ""

    def __post_init__(self):
        if not self.expr.variables() <= {1}:
            raise ValueError(f"univariate function references {sorted(self.expr.variables())}")

    @classmethod
    def parse(cls, text: str, role: str = "f", placeholder: str = "u") -> "UnivariateSpec":
        return cls(parse(text, 1, names={placeholder: 1}), role, text)

    def at(self, i: int) -> Expression:
        """The function applied to ``R_i``."""
        return substitute(self.expr, {1: var(i)})

    def derivative(self) -> "UnivariateSpec":
        return UnivariateSpec(differentiate(self.expr, 1), self.role, "")

    def compose(self, inner: "UnivariateSpec") -> "UnivariateSpec":
        """``self(inner(u))``."""
        return UnivariateSpec(substitute(self.expr, {1: inner.expr}), self.role, "")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return evaluate_many(self.expr, u.reshape(-1, 1)).reshape(u.shape)
