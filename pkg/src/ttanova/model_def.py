"""Black-box subsystem models: an arithmetic expression language and builtins.

Expressions use the variables ``x1..xd`` (or ``z1..zq`` for system-level
functions), the operators ``+ - * / ^`` and the functions sin, cos, exp,
log, sqrt, abs, tanh. Exponents must be non-negative integer literals.
Evaluation is vectorized over rows of an ``(n, d)`` array.
"""
from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dist_poly import DistributionSpec, family_from_json
from .errors import ConfigurationError, ExprSyntaxError, NumericError, UnknownSymbol

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs", "tanh")
MAX_DEPTH = 256

# ---------------------------------------------------------------------------
# syntax tree


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Call:
    name: str
    arg: object


@dataclass(frozen=True)
class Expr:
    root: object
    prefix: str = "x"
    text: str = ""

    @property
    def max_index(self) -> int:
        return _max_index(self.root)

    def __call__(self, xi):
        return evaluate(self, xi)

    def __str__(self):
        return to_text(self.root, self.prefix)


def _max_index(node) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Num):
        return 0
    if isinstance(node, (Neg,)):
        return _max_index(node.operand)
    if isinstance(node, Pow):
        return _max_index(node.base)
    if isinstance(node, Call):
        return _max_index(node.arg)
    return max(_max_index(node.left), _max_index(node.right))


def to_text(node, prefix: str = "x") -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"{prefix}{node.index}"
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand, prefix)})"
    if isinstance(node, Pow):
        return f"({to_text(node.base, prefix)}^{node.exponent})"
    if isinstance(node, Call):
        return f"{node.name}({to_text(node.arg, prefix)})"
    return f"({to_text(node.left, prefix)} {node.op} {to_text(node.right, prefix)})"


# ---------------------------------------------------------------------------
# lexer and parser

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            tokens.append(_Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(_Token("end", "", line, len(text) - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, prefix: str, dimension: int | None):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.prefix = prefix
        self.dimension = dimension
        self.depth = 0
        self.var_re = re.compile(rf"{re.escape(prefix)}([1-9]\d*)")

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def fail(self, message, expected=None):
        t = self.tok
        raise ExprSyntaxError(message, t.line, t.column, expected)

    def take(self, text=None):
        t = self.tok
        if text is not None and t.text != text:
            found = "end of input" if t.kind == "end" else repr(t.text)
            self.fail(f"found {found}", expected=repr(text))
        self.pos += 1
        return t

    def enter(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.fail(f"expression nested deeper than {MAX_DEPTH}")

    def parse(self):
        node = self.sum()
        if self.tok.kind != "end":
            self.fail(f"unexpected {self.tok.text!r}", expected="operator or end of input")
        return node

    def sum(self):
        self.enter()
        node = self.product()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.take().text
            node = BinOp(op, node, self.product())
        self.depth -= 1
        return node

    def product(self):
        node = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.text == "-" and self.tok.kind == "op":
            self.take()
            self.enter()
            node = Neg(self.unary())
            self.depth -= 1
            return node
        return self.power()

    def power(self):
        node = self.primary()
        while self.tok.text == "^":
            self.take()
            t = self.tok
            if t.kind != "num" or not re.fullmatch(r"\d+", t.text):
                self.fail("exponent must be a non-negative integer literal",
                          expected="integer exponent")
            self.take()
            node = Pow(node, int(t.text))
        return node

    def primary(self):
        t = self.tok
        if t.kind == "num":
            self.take()
            return Num(float(t.text))
        if t.kind == "name":
            self.take()
            if t.text in FUNCTIONS:
                self.take("(")
                arg = self.sum()
                self.take(")")
                return Call(t.text, arg)
            m = self.var_re.fullmatch(t.text)
            if m is None:
                raise UnknownSymbol(t.text, t.line, t.column)
            index = int(m.group(1))
            if self.dimension is not None and index > self.dimension:
                raise UnknownSymbol(t.text, t.line, t.column)
            return Var(index)
        if t.text == "(":
            self.take()
            node = self.sum()
            self.take(")")
            return node
        found = "end of input" if t.kind == "end" else repr(t.text)
        self.fail(f"found {found}", expected="number, variable, function or '('")


def parse(text: str, prefix: str = "x", dimension: int | None = None) -> Expr:
    # each nesting level costs several Python frames; make room for MAX_DEPTH
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 8 * MAX_DEPTH + 1000))
    try:
        return Expr(_Parser(text, prefix, dimension).parse(), prefix, text)
    finally:
        sys.setrecursionlimit(limit)


# ---------------------------------------------------------------------------
# evaluation

_UNARY = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh, "abs": np.abs,
          "log": np.log, "sqrt": np.sqrt}


def _eval(node, x: np.ndarray):
    if isinstance(node, Num):
        return np.full(x.shape[0], node.value)
    if isinstance(node, Var):
        return x[:, node.index - 1]
    if isinstance(node, Neg):
        return -_eval(node.operand, x)
    if isinstance(node, Pow):
        return _eval(node.base, x) ** node.exponent
    if isinstance(node, Call):
        arg = _eval(node.arg, x)
        if node.name == "log" and np.any(arg <= 0):
            raise NumericError("log of a non-positive value")
        if node.name == "sqrt" and np.any(arg < 0):
            raise NumericError("sqrt of a negative value")
        return _UNARY[node.name](arg)
    left = _eval(node.left, x)
    right = _eval(node.right, x)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    return left / right


def evaluate(e: Expr, xi):
    """IEEE double evaluation at one point or a batch of rows."""
    x = np.asarray(xi, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] < e.max_index:
        raise ConfigurationError(
            f"expression uses {e.prefix}{e.max_index} but points have {x.shape[1]} coordinates")
    with np.errstate(all="ignore"):
        out = _eval(e.root, x)
    if not np.all(np.isfinite(out)):
        raise NumericError("expression produced a non-finite value")
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# builtins


@dataclass(frozen=True)
class Builtin:
    name: str
    dimension: int
    distributions: tuple
    function: Callable
    expression: str

    def __call__(self, xi):
        x = np.asarray(xi, dtype=float)
        single = x.ndim == 1
        out = self.function(np.atleast_2d(x))
        return float(out[0]) if single else out


def _ishigami(a=7.0, b=0.1):
    a, b = float(a), float(b)

    def f(x):
        return np.sin(x[:, 0]) + a * np.sin(x[:, 1]) ** 2 + b * x[:, 2] ** 4 * np.sin(x[:, 0])

    text = f"sin(x1) + {a!r}*sin(x2)^2 + {b!r}*x3^4*sin(x1)"
    dists = (DistributionSpec.uniform(-math.pi, math.pi),) * 3
    return Builtin("ishigami", 3, dists, f, text)


def _linear_text(c, power):
    parts = []
    for k, ck in enumerate(c):
        parts.append(f"{ck!r}*x{k + 1}" + (f"^{power}" if power != 1 else ""))
    return " + ".join(parts)


def _additive_quadratic(c=(1.0, 1.0)):
    c = tuple(float(v) for v in c)

    def f(x):
        out = c[0] * x[:, 0] ** 2
        for k in range(1, len(c)):
            out = out + c[k] * x[:, k] ** 2
        return out

    return Builtin("additive_quadratic", len(c), (DistributionSpec.gaussian(),) * len(c), f,
                   _linear_text(c, 2))


def _affine(c=(1.0,)):
    c = tuple(float(v) for v in c)

    def f(x):
        out = c[0] * x[:, 0]
        for k in range(1, len(c)):
            out = out + c[k] * x[:, k]
        return out

    return Builtin("affine", len(c), (DistributionSpec.gaussian(),) * len(c), f, _linear_text(c, 1))


# 46-input sparse test model. Inputs are N(1, 0.03); u = (x - 1)/0.03 is
# standard normal and He_j denotes orthonormal probabilists' Hermite terms.
SPARSE46_DIM = 46
SPARSE46_MEAN = 1.0
SPARSE46_STD = 0.03
SPARSE46_OFFSET = 5.0
SPARSE46_DOMINANT = (4, 5, 7)  # 0-based
SPARSE46_COUPLING = 0.02


def _sparse46_univariate() -> dict:
    """{variable: (c1, c2, c3)} coefficients of He_1, He_2, He_3."""
    coeffs = {4: (0.55, 0.15, 0.05), 5: (-0.5, 0.25, 0.0), 7: (0.45, -0.3, 0.1)}
    minors = [k for k in range(SPARSE46_DIM) if k not in SPARSE46_DOMINANT]
    # minor variables share about 2% of the output variance, none above 1e-3 of the total
    base = 4.48e-4
    for i, k in enumerate(minors):
        var = base * (0.5 + i / (len(minors) - 1))
        sign = -1.0 if i % 3 == 1 else 1.0
        if i % 2:
            coeffs[k] = (round(sign * math.sqrt(0.8 * var), 6), round(math.sqrt(0.2 * var), 6), 0.0)
        else:
            coeffs[k] = (round(sign * math.sqrt(var), 6), 0.0, 0.0)
    return coeffs


def sparse46_coefficients() -> dict:
    """Exact gPC coefficients of ``sparse46`` over orthonormal Hermite terms."""
    a, b, c = SPARSE46_DOMINANT
    terms = {(0,) * SPARSE46_DIM: SPARSE46_OFFSET}

    def put(pairs, value):
        alpha = [0] * SPARSE46_DIM
        for k, deg in pairs:
            alpha[k] = deg
        alpha = tuple(alpha)
        terms[alpha] = terms.get(alpha, 0.0) + value

    for k, cs in _sparse46_univariate().items():
        for deg, ck in enumerate(cs, start=1):
            if ck:
                put([(k, deg)], ck)
    put([(a, 1), (b, 1)], SPARSE46_COUPLING)
    put([(a, 1), (c, 1)], SPARSE46_COUPLING)
    put([(b, 1), (c, 2)], SPARSE46_COUPLING)
    return terms


def _sparse46_pieces():
    """(coefficient, variable, kind) pieces in evaluation order."""
    pieces = []
    s2, s6 = math.sqrt(2.0), math.sqrt(6.0)
    for k, (c1, c2, c3) in sorted(_sparse46_univariate().items()):
        if c1:
            pieces.append((c1, (k,), "u"))
        if c2:
            pieces.append((c2 / s2, (k,), "he2"))
        if c3:
            pieces.append((c3 / s6, (k,), "he3"))
    a, b, c = SPARSE46_DOMINANT
    pieces.append((SPARSE46_COUPLING, (a, b), "uu"))
    pieces.append((SPARSE46_COUPLING, (a, c), "uu"))
    pieces.append((SPARSE46_COUPLING / s2, (b, c), "uhe2"))
    return pieces


def _sparse46():
    pieces = _sparse46_pieces()
    mean, std = SPARSE46_MEAN, SPARSE46_STD

    def u_text(k):
        return f"((x{k + 1} - {mean!r})/{std!r})"

    texts = [repr(SPARSE46_OFFSET)]
    for coef, ks, kind in pieces:
        if kind == "u":
            body = u_text(ks[0])
        elif kind == "he2":
            body = f"({u_text(ks[0])}^2 - 1.0)"
        elif kind == "he3":
            body = f"({u_text(ks[0])}^3 - 3.0*{u_text(ks[0])})"
        elif kind == "uu":
            body = f"{u_text(ks[0])}*{u_text(ks[1])}"
        else:
            body = f"{u_text(ks[0])}*({u_text(ks[1])}^2 - 1.0)"
        texts.append(f"{coef!r}*{body}")
    text = " + ".join(texts)

    def f(x):
        u = (x - mean) / std
        out = np.full(x.shape[0], SPARSE46_OFFSET)
        for coef, ks, kind in pieces:
            if kind == "u":
                term = coef * u[:, ks[0]]
            elif kind == "he2":
                term = coef * (u[:, ks[0]] ** 2 - 1.0)
            elif kind == "he3":
                term = coef * (u[:, ks[0]] ** 3 - 3.0 * u[:, ks[0]])
            elif kind == "uu":
                term = coef * u[:, ks[0]] * u[:, ks[1]]
            else:
                term = coef * u[:, ks[0]] * (u[:, ks[1]] ** 2 - 1.0)
            out = out + term
        return out

    dists = (DistributionSpec.gaussian(mean, std),) * SPARSE46_DIM
    return Builtin("sparse46", SPARSE46_DIM, dists, f, text)


BUILTINS = {
    "ishigami": _ishigami,
    "additive_quadratic": _additive_quadratic,
    "affine": _affine,
    "sparse46": _sparse46,
}


def builtin(name: str, **params) -> Builtin:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown builtin model {name!r}; known: {', '.join(sorted(BUILTINS))}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for builtin {name!r}: {exc}") from None


# ---------------------------------------------------------------------------
# model specs


@dataclass(frozen=True)
class ModelSpec:
    dimension: int
    distributions: tuple
    function: Callable
    source: dict

    def __call__(self, xi):
        return self.function(xi)

    def to_json(self) -> dict:
        return {"dimension": self.dimension,
                "distributions": [d.to_json() for d in self.distributions],
                "model": self.source}


def model_from_json(obj: dict) -> ModelSpec:
    if "model" not in obj:
        raise ConfigurationError("model file needs a 'model' entry")
    body = obj["model"]
    dists = obj.get("distributions")
    if "builtin" in body:
        model = builtin(body["builtin"], **body.get("params", {}))
        d = int(obj.get("dimension", model.dimension))
        if d != model.dimension:
            raise ConfigurationError(
                f"builtin {model.name!r} has {model.dimension} inputs, file declares {d}")
        dists = model.distributions if dists is None else tuple(family_from_json(x) for x in dists)
        function = model
    elif "expr" in body:
        if "dimension" not in obj or dists is None:
            raise ConfigurationError("expression models need 'dimension' and 'distributions'")
        d = int(obj["dimension"])
        function = parse(body["expr"], "x", d)
        dists = tuple(family_from_json(x) for x in dists)
    else:
        raise ConfigurationError("model entry needs 'builtin' or 'expr'")
    if len(dists) != d:
        raise ConfigurationError(f"model declares {d} inputs but {len(dists)} distributions")
    return ModelSpec(d, tuple(dists), function, dict(body))
