"""A small text language for pulse sequences.

Example::

    seq echo(tau: time) {
        pulse(90deg, x);
        delay(tau);
        pulse(180deg, y);
        delay(tau);
        pulse(90deg, x);
    }

Grammar::

    program  := "seq" IDENT "(" [param {"," param}] ")" block
    param    := IDENT ":" ("time" | "angle" | "count")
    block    := "{" {stmt} "}"
    stmt     := "pulse" "(" expr "," phase ["," expr] ")" ";"
              | "delay" "(" expr ")" ";"
              | "flip" ";"
              | "repeat" "(" expr ["," pattern] ")" block [";"]
              | "adjoint" block [";"]
    phase    := "x" | "y" | "-x" | "-y" | "@pattern" | expr
    pattern  := "xy8" | "cp" | "[" {phase_atom} "]"
    expr     := term {("+" | "-") term}
    term     := unary {("*" | "/") unary}
    unary    := "-" unary | atom
    atom     := NUMBER [UNIT] | IDENT | "(" expr ")"

Literal times and angles must carry a unit (ns, us, ms, s, deg, rad); bare
numbers are dimensionless and serve as counts and scale factors.

``adjoint { ... }`` stands for the inverse propagator of its body.  It is how
the correlation programs express the time-reversed readout block.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources

from .dynamics import Adjoint, Delay, Flip, Pulse, PulseSequence

UNITS = {
    "ns": ("time", 1e-9),
    "us": ("time", 1e-6),
    "ms": ("time", 1e-3),
    "s": ("time", 1.0),
    "deg": ("angle", math.pi / 180),
    "rad": ("angle", 1.0),
}
PARAM_TYPES = {"time": "time", "angle": "angle", "count": None}
NAMED_PHASES = {"x": 0.0, "y": 90.0, "-x": 180.0, "-y": 270.0}
PATTERNS = {
    "xy8": ("x", "y", "x", "y", "y", "x", "y", "x"),
    "cp": ("x",),
}
KEYWORDS = {"seq", "pulse", "delay", "repeat", "flip", "adjoint"}


class SeqError(Exception):
    """Lexical, syntax, unit or binding error, with a source position when known."""

    def __init__(self, message, line=None, col=None):
        self.message = message
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(where + message)


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float
    unit: str | None = None


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class NamedPhase:
    name: str  # x, y, -x, -y


@dataclass(frozen=True)
class PatternPhase:
    """The ``@pattern`` placeholder, resolved by the enclosing repeat."""


@dataclass(frozen=True)
class Pattern:
    name: str | None = None  # "xy8" | "cp"
    atoms: tuple = ()  # explicit list of NamedPhase / Num


@dataclass(frozen=True)
class PulseStmt:
    angle: object
    phase: object
    duration: object = None


@dataclass(frozen=True)
class DelayStmt:
    duration: object


@dataclass(frozen=True)
class FlipStmt:
    pass


@dataclass(frozen=True)
class RepeatStmt:
    count: object
    pattern: Pattern | None
    body: tuple


@dataclass(frozen=True)
class AdjointStmt:
    body: tuple


@dataclass(frozen=True)
class Param:
    name: str
    type: str


@dataclass(frozen=True)
class SeqProgram:
    name: str
    params: tuple
    body: tuple
    source: str | None = field(default=None, compare=False, repr=False)


# --------------------------------------------------------------------------
# lexer


@dataclass(frozen=True)
class Token:
    kind: str  # NUMBER, IDENT, OP, EOF
    text: str
    line: int
    col: int
    value: float | None = None
    unit: str | None = None


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>(\#|//)[^\n]*)
  | (?P<number>(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)(?P<unit>[A-Za-z_]\w*)?
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<op>[(){}\[\],;:+\-*/@])
    """,
    re.VERBOSE,
)


def tokenize(text):
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise SeqError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup if m.lastgroup != "unit" else "number"
        if m.group("nl"):
            line += 1
            line_start = m.end()
        elif m.group("number") is not None:
            unit = m.group("unit")
            if unit is not None and unit not in UNITS:
                raise SeqError(f"unknown unit {unit!r}", line, col + len(m.group("number")))
            tokens.append(Token("NUMBER", m.group(0), line, col, float(m.group("number")), unit))
        elif m.group("ident"):
            tokens.append(Token("IDENT", m.group(0), line, col))
        elif m.group("op"):
            tokens.append(Token("OP", m.group(0), line, col))
        del kind
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


# --------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0
        self.params = {}

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return SeqError(msg, tok.line, tok.col)

    def describe(self, tok):
        return "end of input" if tok.kind == "EOF" else repr(tok.text)

    def advance(self):
        t = self.tok
        self.i += 1
        return t

    def at(self, text):
        return self.tok.kind in ("OP", "IDENT") and self.tok.text == text

    def expect(self, text):
        if not self.at(text):
            raise self.error(f"expected {text!r}, found {self.describe(self.tok)}")
        return self.advance()

    def ident(self, what="identifier"):
        if self.tok.kind != "IDENT":
            raise self.error(f"expected {what}, found {self.describe(self.tok)}")
        return self.advance()

    # program structure

    def program(self):
        self.expect("seq")
        name = self.ident("program name").text
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.param())
            while self.at(","):
                self.advance()
                params.append(self.param())
        self.expect(")")
        body = self.block()
        if self.tok.kind != "EOF":
            raise self.error(f"unexpected {self.describe(self.tok)} after program end")
        return SeqProgram(name, tuple(params), body)

    def param(self):
        tok = self.ident("parameter name")
        if tok.text in self.params:
            raise self.error(f"duplicate parameter {tok.text!r}", tok)
        if tok.text in KEYWORDS or tok.text in ("x", "y"):
            raise self.error(f"reserved name {tok.text!r} cannot be a parameter", tok)
        self.expect(":")
        ttok = self.ident("parameter type")
        if ttok.text not in PARAM_TYPES:
            raise self.error(f"unknown parameter type {ttok.text!r} (time, angle, count)", ttok)
        self.params[tok.text] = PARAM_TYPES[ttok.text]
        return Param(tok.text, ttok.text)

    def block(self):
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "EOF":
                raise self.error("unterminated block, expected '}'")
            stmts.append(self.statement())
        self.expect("}")
        return tuple(stmts)

    def statement(self):
        tok = self.tok
        if self.at("pulse"):
            self.advance()
            self.expect("(")
            angle = self.typed_expr("angle", "pulse angle")
            self.expect(",")
            phase = self.phase()
            duration = None
            if self.at(","):
                self.advance()
                duration = self.typed_expr("time", "pulse duration")
            self.expect(")")
            self.expect(";")
            return PulseStmt(angle, phase, duration)
        if self.at("delay"):
            self.advance()
            self.expect("(")
            d = self.typed_expr("time", "delay")
            self.expect(")")
            self.expect(";")
            return DelayStmt(d)
        if self.at("flip"):
            self.advance()
            if self.at("("):
                self.advance()
                self.expect(")")
            self.expect(";")
            return FlipStmt()
        if self.at("repeat"):
            self.advance()
            self.expect("(")
            count = self.typed_expr(None, "repeat count")
            pattern = None
            if self.at(","):
                self.advance()
                pattern = self.pattern()
            self.expect(")")
            body = self.block()
            if self.at(";"):
                self.advance()
            return RepeatStmt(count, pattern, body)
        if self.at("adjoint"):
            self.advance()
            body = self.block()
            if self.at(";"):
                self.advance()
            return AdjointStmt(body)
        raise self.error(f"expected a statement (pulse, delay, flip, repeat, adjoint), found {self.describe(tok)}")

    def phase(self):
        if self.at("@"):
            self.advance()
            tok = self.ident("'pattern'")
            if tok.text != "pattern":
                raise self.error("only '@pattern' is supported", tok)
            return PatternPhase()
        named = self.named_phase()
        if named is not None:
            return named
        return self.typed_expr("angle", "pulse phase")

    def named_phase(self):
        if self.tok.kind == "IDENT" and self.tok.text in ("x", "y"):
            return NamedPhase(self.advance().text)
        nxt = self.toks[self.i + 1]
        if self.at("-") and nxt.kind == "IDENT" and nxt.text in ("x", "y"):
            self.advance()
            return NamedPhase("-" + self.advance().text)
        return None

    def pattern(self):
        if self.tok.kind == "IDENT" and self.tok.text in PATTERNS:
            return Pattern(self.advance().text)
        if self.at("["):
            self.advance()
            atoms = []
            while not self.at("]"):
                if self.at(","):
                    self.advance()
                    continue
                named = self.named_phase()
                if named is not None:
                    atoms.append(named)
                    continue
                tok = self.tok
                if tok.kind == "NUMBER" and tok.unit in ("deg", "rad"):
                    self.advance()
                    atoms.append(Num(tok.value, tok.unit))
                    continue
                raise self.error(f"expected a phase in pattern list, found {self.describe(tok)}")
            self.advance()
            if not atoms:
                raise self.error("empty phase pattern")
            return Pattern(None, tuple(atoms))
        raise self.error(f"expected phase pattern (xy8, cp or [...]), found {self.describe(self.tok)}")

    # expressions

    def typed_expr(self, dim, what):
        tok = self.tok
        e = self.expr()
        got = self.dim_of(e, tok)
        if got != dim:
            raise self.error(f"{what} must be {_dim_name(dim)}, got {_dim_name(got)}", tok)
        return e

    def expr(self):
        left = self.term()
        while self.at("+") or self.at("-"):
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.at("*") or self.at("/"):
            op = self.advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        if self.at("-"):
            self.advance()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        tok = self.tok
        if tok.kind == "NUMBER":
            self.advance()
            return Num(tok.value, tok.unit)
        if tok.kind == "IDENT":
            if tok.text not in self.params:
                raise self.error(f"unknown parameter {tok.text!r}")
            self.advance()
            return Ref(tok.text)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        raise self.error(f"expected an expression, found {self.describe(tok)}")

    def dim_of(self, e, tok):
        if isinstance(e, Num):
            return UNITS[e.unit][0] if e.unit else None
        if isinstance(e, Ref):
            return self.params[e.name]
        if isinstance(e, Neg):
            return self.dim_of(e.operand, tok)
        a, b = self.dim_of(e.left, tok), self.dim_of(e.right, tok)
        if e.op in "+-":
            if a != b:
                raise self.error(f"cannot add {_dim_name(a)} and {_dim_name(b)}", tok)
            return a
        if e.op == "*":
            if a is not None and b is not None:
                raise self.error(f"cannot multiply {_dim_name(a)} by {_dim_name(b)}", tok)
            return a or b
        if b is None:
            return a
        if a == b:
            return None
        raise self.error(f"cannot divide {_dim_name(a)} by {_dim_name(b)}", tok)


def _dim_name(d):
    return "dimensionless" if d is None else d


def parse(text):
    """Parse sequence source text into a :class:`SeqProgram`."""
    prog = _Parser(text).program()
    return SeqProgram(prog.name, prog.params, prog.body, source=text)


# --------------------------------------------------------------------------
# formatter

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_number(v):
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _prec(e):
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 4


def format_expr(e):
    if isinstance(e, Num):
        return _fmt_number(e.value) + (e.unit or "")
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Neg):
        inner = format_expr(e.operand)
        return "-" + (f"({inner})" if _prec(e.operand) < 3 else inner)
    p = _PREC[e.op]
    left = format_expr(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = format_expr(e.right)
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def _fmt_phase(ph):
    if isinstance(ph, NamedPhase):
        return ph.name
    if isinstance(ph, PatternPhase):
        return "@pattern"
    return format_expr(ph)


def _fmt_pattern(p):
    if p.name:
        return p.name
    return "[" + " ".join(_fmt_phase(a) for a in p.atoms) + "]"


def format_program(prog, indent="    "):
    """Canonical source text; ``parse(format_program(p)) == p``."""
    params = ", ".join(f"{p.name}: {p.type}" for p in prog.params)
    lines = [f"seq {prog.name}({params}) {{"]

    def emit(stmts, depth):
        pad = indent * depth
        for s in stmts:
            if isinstance(s, PulseStmt):
                args = [format_expr(s.angle), _fmt_phase(s.phase)]
                if s.duration is not None:
                    args.append(format_expr(s.duration))
                lines.append(f"{pad}pulse({', '.join(args)});")
            elif isinstance(s, DelayStmt):
                lines.append(f"{pad}delay({format_expr(s.duration)});")
            elif isinstance(s, FlipStmt):
                lines.append(f"{pad}flip;")
            elif isinstance(s, AdjointStmt):
                lines.append(f"{pad}adjoint {{")
                emit(s.body, depth + 1)
                lines.append(f"{pad}}}")
            else:
                head = format_expr(s.count)
                if s.pattern is not None:
                    head += ", " + _fmt_pattern(s.pattern)
                lines.append(f"{pad}repeat({head}) {{")
                emit(s.body, depth + 1)
                lines.append(f"{pad}}}")

    emit(prog.body, 1)
    lines.append("}")
    return "\n".join(lines) + "\n"


# spec-facing alias
format = format_program  # noqa: A001


# --------------------------------------------------------------------------
# binding and expansion


def _eval(e, env):
    if isinstance(e, Num):
        return e.value * (UNITS[e.unit][1] if e.unit else 1.0)
    if isinstance(e, Ref):
        if e.name not in env:
            raise SeqError(f"unbound parameter {e.name!r}")
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    a, b = _eval(e.left, env), _eval(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if b == 0:
        raise SeqError("division by zero")
    return a / b


def _phase_value(ph, env):
    if isinstance(ph, NamedPhase):
        return math.radians(NAMED_PHASES[ph.name])
    if isinstance(ph, Num):
        return _eval(ph, env)
    return _eval(ph, env)


def _pattern_phases(p, env):
    if p.name:
        return [math.radians(NAMED_PHASES[n]) for n in PATTERNS[p.name]]
    return [_phase_value(a, env) for a in p.atoms]


def _check_args(prog, args):
    names = {p.name for p in prog.params}
    extra = set(args) - names
    if extra:
        raise SeqError(f"unknown argument(s) {sorted(extra)} for {prog.name}")
    env = {}
    for p in prog.params:
        if p.name not in args:
            continue
        v = args[p.name]
        if p.type == "count":
            if isinstance(v, float) and not v.is_integer():
                raise SeqError(f"count parameter {p.name!r} must be an integer, got {v}")
            v = int(v)
        env[p.name] = float(v) if p.type != "count" else v
    return env


def bind_and_expand(prog, args):
    """Bind parameters (SI values) and unroll every loop into a flat PulseSequence."""
    env = _check_args(prog, args)
    missing = [p.name for p in prog.params if p.name not in env]
    if missing:
        raise SeqError(f"unbound parameter(s) {missing} for {prog.name}")
    out = []

    def count_of(expr):
        v = _eval(expr, env)
        if abs(v - round(v)) > 1e-9:
            raise SeqError(f"repeat count {v} is not an integer")
        n = int(round(v))
        if n < 1:
            raise SeqError(f"repeat count must be >= 1, got {n}")
        return n

    def duration_of(expr):
        d = _eval(expr, env)
        if d < 0:
            raise SeqError(f"negative duration {d}")
        return d

    def walk(stmts, pattern, counter):
        for s in stmts:
            if isinstance(s, PulseStmt):
                if isinstance(s.phase, PatternPhase):
                    if pattern is None:
                        raise SeqError("@pattern used outside a patterned repeat")
                    phase = pattern[counter[0] % len(pattern)]
                    counter[0] += 1
                else:
                    phase = _phase_value(s.phase, env)
                dur = duration_of(s.duration) if s.duration is not None else 0.0
                angle = _eval(s.angle, env)
                try:
                    out.append(Pulse(angle, phase % (2 * math.pi), dur))
                except ValueError as exc:
                    raise SeqError(str(exc)) from None
            elif isinstance(s, DelayStmt):
                out.append(Delay(duration_of(s.duration)))
            elif isinstance(s, FlipStmt):
                out.append(Flip())
            elif isinstance(s, AdjointStmt):
                start = len(out)
                walk(s.body, pattern, counter)
                inner = tuple(out[start:])
                del out[start:]
                out.append(Adjoint(inner))
            else:
                n = count_of(s.count)
                if s.pattern is not None:
                    inner, inner_counter = _pattern_phases(s.pattern, env), [0]
                else:
                    inner, inner_counter = pattern, counter
                for _ in range(n):
                    walk(s.body, inner, inner_counter)

    walk(prog.body, None, [0])
    return PulseSequence(tuple(out))


def substitute(prog, args):
    """Replace some parameters by literal values (SI), leaving the rest symbolic."""
    env = _check_args(prog, args)
    kinds = {p.name: p.type for p in prog.params}

    def lit(name):
        v = env[name]
        unit = {"time": "s", "angle": "rad", "count": None}[kinds[name]]
        return Num(float(v), unit)

    def sub(e):
        if isinstance(e, Ref):
            return lit(e.name) if e.name in env else e
        if isinstance(e, Neg):
            return Neg(sub(e.operand))
        if isinstance(e, BinOp):
            return BinOp(e.op, sub(e.left), sub(e.right))
        return e

    def sub_phase(ph):
        return ph if isinstance(ph, (NamedPhase, PatternPhase)) else sub(ph)

    def sub_pattern(p):
        if p is None or p.name:
            return p
        return Pattern(None, tuple(sub_phase(a) for a in p.atoms))

    def stmts(body):
        out = []
        for s in body:
            if isinstance(s, PulseStmt):
                dur = sub(s.duration) if s.duration is not None else None
                out.append(PulseStmt(sub(s.angle), sub_phase(s.phase), dur))
            elif isinstance(s, DelayStmt):
                out.append(DelayStmt(sub(s.duration)))
            elif isinstance(s, RepeatStmt):
                out.append(RepeatStmt(sub(s.count), sub_pattern(s.pattern), stmts(s.body)))
            elif isinstance(s, AdjointStmt):
                out.append(AdjointStmt(stmts(s.body)))
            else:
                out.append(s)
        return tuple(out)

    params = tuple(p for p in prog.params if p.name not in env)
    return SeqProgram(prog.name, params, stmts(prog.body))


def parse_value(text, type_=None):
    """Parse a CLI argument like ``121.8ns`` or ``8`` into an SI float."""
    toks = tokenize(text)
    sign = 1.0
    i = 0
    if toks[0].kind == "OP" and toks[0].text == "-":
        sign, i = -1.0, 1
    tok = toks[i]
    if tok.kind != "NUMBER" or toks[i + 1].kind != "EOF":
        raise SeqError(f"cannot parse value {text!r}")
    dim = UNITS[tok.unit][0] if tok.unit else None
    if type_ is not None and PARAM_TYPES[type_] != dim:
        raise SeqError(f"value {text!r} is {_dim_name(dim)}, expected {type_}")
    return sign * tok.value * (UNITS[tok.unit][1] if tok.unit else 1.0)


def schedule(seq):
    """Timed rows (t_start, kind, angle, phase, duration) of a flat sequence."""
    rows = []
    t = 0.0

    def walk(elems, suffix):
        nonlocal t
        for e in elems:
            if isinstance(e, Adjoint):
                # listed in the order the inverse factors act
                walk(reversed(e.body), "_adjoint")
            elif isinstance(e, Pulse):
                rows.append((t, "pulse" + suffix, e.angle, e.phase, e.duration))
                t += e.duration
            elif isinstance(e, Delay):
                rows.append((t, "delay" + suffix, 0.0, 0.0, e.duration))
                t += e.duration
            elif isinstance(e, Flip):
                rows.append((t, "flip" + suffix, math.pi, 0.0, 0.0))

    walk(seq.expanded().elements, "")
    return rows


LIBRARY = ("echo", "xy8", "fid_h1", "fid_h2", "fid_h3", "fid_2d")


def library_source(name):
    return resources.files("nvnmr.library").joinpath(f"{name}.seq").read_text()


def load_library(name):
    """Parse one of the shipped programs."""
    if name not in LIBRARY:
        raise KeyError(f"no library program {name!r}; available: {LIBRARY}")
    return parse(library_source(name))
