"""Concrete ASCII syntax for CQP.

Grammar sketch (``--`` starts a comment)::

    program  ::= (definition | 'abstract' decl | 'init' '{' ... '}')*
    definition ::= Name ['(' params ')'] '=' proc
    proc     ::= prefix ('|' prefix)*
    prefix   ::= '0' | '(' proc ')' | '(' 'new' x:T, ... ')' prefix
               | '(' 'qbit' x, ... ')' prefix | '{' expr '}' '.' prefix
               | e '?' '[' x:T, ... ']' ['.' prefix]
               | e '!' '[' e, ... ']' ['.' prefix]
               | 'if' expr 'then' prefix 'else' prefix | Name ['(' e, ... ')']
    type     ::= Int | Unit | Bit | Qbit | ^[T, ...] | List[T] | T * T
               | n..m | Op(n) | '(' T ')'
"""
from __future__ import annotations

import ast as pyast
import cmath
import math
import re
from dataclasses import dataclass, field
from typing import Iterator

from .ast import (
    GATE_ALIASES,
    INT,
    NIL,
    QBIT,
    UNARY_OPS,
    UNIT,
    Action,
    BinOp,
    Call,
    ChannelName,
    CqpType,
    Definition,
    Expr,
    GateConst,
    IfExpr,
    IfProc,
    Input,
    IntLit,
    ListLit,
    Measure,
    NewChan,
    NewQbit,
    Nil,
    Output,
    PairLit,
    Par,
    PauliIndex,
    Proc,
    Program,
    QubitName,
    SourceSpan,
    TChan,
    TList,
    TOp,
    TProd,
    Transform,
    UnitLit,
    UnOp,
    Var,
)


class ParseError(Exception):
    def __init__(self, span: SourceSpan, message: str, expected: str = ""):
        super().__init__(f"{span}: {message}")
        self.span = span
        self.message = message
        self.expected = expected

    def to_json(self) -> dict:
        return {
            "kind": "parse-error",
            "message": self.message,
            "expected": self.expected,
            "span": self.span.to_json(),
        }


# ---------------------------------------------------------------------------
# Lexer

KEYWORDS = frozenset(
    {
        "measure", "new", "qbit", "if", "then", "else", "unit", "sigma",
        "hd", "tl", "length", "fst", "snd",
        "Int", "Unit", "Bit", "Qbit", "List", "Op", "abstract", "init",
    }
    | set(GATE_ALIASES)
)
PUNCT = ("*=", "..", "!", "?", "[", "]", "(", ")", "{", "}", ".", ",", ":",
         "|", "+", "-", "=", "@", "^", "*")

_IDENT = re.compile(r"[A-Za-z][A-Za-z0-9_']*")
_INT = re.compile(r"[0-9]+")


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # 'ident', 'int', 'kw', 'punct', 'init', 'eof'
    text: str
    span: SourceSpan

    def __repr__(self) -> str:
        return f"Token({self.kind}, {self.text!r})"


def tokenize(source: str, file: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(source)

    def advance(k: int) -> None:
        nonlocal i, line, col
        for ch in source[i:i + k]:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1
        i += k

    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            advance(1)
            continue
        if source.startswith("--", i):
            j = source.find("\n", i)
            advance((n if j < 0 else j) - i)
            continue
        start_line, start_col = line, col
        m = _IDENT.match(source, i)
        if m:
            text = m.group()
            if text == "init":
                j = m.end()
                while j < n and source[j] in " \t\r\n":
                    j += 1
                if j < n and source[j] == "{":
                    close = source.find("}", j)
                    if close < 0:
                        span = SourceSpan(file, start_line, start_col, start_line, start_col + 4)
                        raise ParseError(span, "unclosed init block", "'}'")
                    advance(j + 1 - i)
                    body_line = line
                    body = source[j + 1:close]
                    advance(close + 1 - i)
                    span = SourceSpan(file, body_line, start_col, line, col)
                    tokens.append(Token("init", body, span))
                    continue
            advance(len(text))
            kind = "kw" if text in KEYWORDS else "ident"
            tokens.append(Token(kind, text, SourceSpan(file, start_line, start_col, line, col)))
            continue
        m = _INT.match(source, i)
        if m:
            advance(len(m.group()))
            tokens.append(Token("int", m.group(), SourceSpan(file, start_line, start_col, line, col)))
            continue
        for p in PUNCT:
            if source.startswith(p, i):
                advance(len(p))
                tokens.append(Token("punct", p, SourceSpan(file, start_line, start_col, line, col)))
                break
        else:
            span = SourceSpan(file, start_line, start_col, start_line, start_col + 1)
            raise ParseError(span, f"illegal character {ch!r}")
    tokens.append(Token("eof", "", SourceSpan(file, line, col, line, col)))
    return tokens


# ---------------------------------------------------------------------------
# Init blocks


@dataclass(frozen=True)
class FinalStateAssertion:
    qubits: tuple[str, ...]
    amps: tuple[complex, ...]
    text: str

    def describe(self) -> str:
        return self.text


@dataclass(frozen=True)
class OutcomeProbsAssertion:
    probs: tuple[float, ...]
    text: str

    def describe(self) -> str:
        return self.text


@dataclass(frozen=True)
class InitSpec:
    """Entry process, initial qubit register and assertions for a run."""

    entry: str | None = None
    args: tuple[Expr, ...] = ()
    groups: tuple[tuple[tuple[str, ...], tuple[complex, ...]], ...] = ()
    asserts: tuple = ()
    source: str = field(default="", compare=False, repr=False)

    @property
    def qubits(self) -> tuple[str, ...]:
        return tuple(q for names, _ in self.groups for q in names)


PRESETS = {
    "|0>": (1.0, 0.0),
    "|1>": (0.0, 1.0),
    "|+>": (1 / math.sqrt(2), 1 / math.sqrt(2)),
    "|->": (1 / math.sqrt(2), -1 / math.sqrt(2)),
}
_KET = re.compile(r"\|([01]+)>")


def eval_amplitude(text: str) -> complex:
    """Evaluate an amplitude such as ``0.6``, ``-1i``, ``(1/sqrt(2))``."""
    src = re.sub(r"(\d(?:\.\d*)?(?:[eE][-+]?\d+)?)i\b", r"\1j", text.strip())
    src = re.sub(r"(?<![\w.])i\b", "1j", src)
    try:
        tree = pyast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"bad amplitude {text!r}") from exc

    def ev(node: pyast.AST) -> complex:
        if isinstance(node, pyast.Expression):
            return ev(node.body)
        if isinstance(node, pyast.Constant) and isinstance(node.value, (int, float, complex)):
            return complex(node.value)
        if isinstance(node, pyast.UnaryOp) and isinstance(node.op, (pyast.UAdd, pyast.USub)):
            v = ev(node.operand)
            return v if isinstance(node.op, pyast.UAdd) else -v
        if isinstance(node, pyast.BinOp):
            a, b = ev(node.left), ev(node.right)
            if isinstance(node.op, pyast.Add):
                return a + b
            if isinstance(node.op, pyast.Sub):
                return a - b
            if isinstance(node.op, pyast.Mult):
                return a * b
            if isinstance(node.op, pyast.Div):
                return a / b
            if isinstance(node.op, pyast.Pow):
                return a ** b
        if (
            isinstance(node, pyast.Call)
            and isinstance(node.func, pyast.Name)
            and node.func.id == "sqrt"
            and len(node.args) == 1
        ):
            return cmath.sqrt(ev(node.args[0]))
        raise ValueError(f"bad amplitude {text!r}")

    value = ev(tree)
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise ValueError(f"amplitude {text!r} is not finite")
    return value


def parse_state(text: str, nqubits: int) -> tuple[complex, ...]:
    """Parse a basis-term list ``a|01> + b|10>`` or a single-qubit preset."""
    text = text.strip()
    if text in PRESETS:
        if nqubits != 1:
            raise ValueError(f"preset {text} names a single qubit, {nqubits} declared")
        return tuple(complex(a) for a in PRESETS[text])
    kets = list(_KET.finditer(text))
    if not kets:
        parts = [p for p in text.split(",") if p.strip()]
        if nqubits == 1 and len(parts) == 2:
            return tuple(eval_amplitude(p) for p in parts)
        raise ValueError(f"no basis terms in {text!r}")
    amps = [0j] * (2 ** nqubits)
    prev = 0
    for m in kets:
        coeff = text[prev:m.start()].strip()
        if prev > 0 and not coeff.startswith(("+", "-")):
            raise ValueError(f"missing '+' or '-' before {m.group()}")
        if coeff in ("", "+"):
            value = 1 + 0j
        elif coeff == "-":
            value = -1 + 0j
        else:
            value = eval_amplitude(coeff)
        bits = m.group(1)
        if len(bits) != nqubits:
            raise ValueError(f"ket {m.group()} has {len(bits)} bits, {nqubits} qubits declared")
        amps[int(bits, 2)] += value
        prev = m.end()
    if text[prev:].strip():
        raise ValueError(f"trailing text {text[prev:]!r}")
    return tuple(amps)


def parse_init(text: str, file: str = "<init>", first_line: int = 1) -> InitSpec:
    entry: str | None = None
    args: tuple[Expr, ...] = ()
    groups: list[tuple[tuple[str, ...], tuple[complex, ...] | None]] = []
    asserts: list = []

    for offset, raw in enumerate(text.splitlines()):
        lineno = first_line + offset
        line = raw.split("--", 1)[0].strip()
        if not line:
            continue
        span = SourceSpan(file, lineno, 1, lineno, len(raw) + 1)
        try:
            if line.startswith("entry:"):
                entry, args = _parse_entry(line[len("entry:"):], file, lineno)
            elif line.startswith("qubits:"):
                names = tuple(n.strip() for n in line[len("qubits:"):].split(","))
                _check_names(names)
                groups.append((names, None))
            elif line.startswith("state:"):
                if not groups or groups[-1][1] is not None:
                    raise ValueError("'state:' must follow a 'qubits:' line")
                names = groups[-1][0]
                groups[-1] = (names, parse_state(line[len("state:"):], len(names)))
            elif line.startswith("qubit "):
                name, _, rhs = line[len("qubit "):].partition("=")
                names = (name.strip(),)
                _check_names(names)
                groups.append((names, parse_state(rhs, 1)))
            elif line.startswith("assert "):
                asserts.append(_parse_assert(line[len("assert "):].strip()))
            else:
                raise ValueError(f"unrecognised init line {line!r}")
        except ValueError as exc:
            raise ParseError(span, str(exc)) from None

    seen: set[str] = set()
    final_groups = []
    for names, amps in groups:
        if seen.intersection(names):
            raise ParseError(SourceSpan(file, first_line, 1, first_line, 1),
                             f"qubit declared twice: {sorted(seen.intersection(names))}")
        seen.update(names)
        if amps is None:
            amps = tuple(1 + 0j if k == 0 else 0j for k in range(2 ** len(names)))
        final_groups.append((names, amps))
    return InitSpec(entry, args, tuple(final_groups), tuple(asserts), text)


def _check_names(names: tuple[str, ...]) -> None:
    for n in names:
        if not _IDENT.fullmatch(n) or n in KEYWORDS:
            raise ValueError(f"bad qubit name {n!r}")
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate qubit names in {names}")


def _parse_entry(text: str, file: str, lineno: int) -> tuple[str, tuple[Expr, ...]]:
    p = _Parser(tokenize(text, file))
    name = p.expect_kind("ident").text
    args: tuple[Expr, ...] = ()
    if p.accept("("):
        args = p.expr_list(")")
        p.expect(")")
    p.expect_kind("eof")
    return name, args


def _parse_assert(text: str) -> object:
    if text.startswith("final-state "):
        body = text[len("final-state "):]
        m = re.fullmatch(r"(.+?)\s+equals\s+(.+?)\s+up-to-phase", body)
        if not m:
            raise ValueError("expected 'final-state Q equals STATE up-to-phase'")
        names = tuple(n.strip() for n in m.group(1).split(","))
        _check_names(names)
        return FinalStateAssertion(names, parse_state(m.group(2), len(names)), "assert " + text)
    if text.startswith("outcome-probs "):
        probs = tuple(float(eval_amplitude(p).real)
                      for p in text[len("outcome-probs "):].split(",") if p.strip())
        return OutcomeProbsAssertion(probs, "assert " + text)
    raise ValueError(f"unknown assertion {text!r}")


# ---------------------------------------------------------------------------
# Parser


def _join(a: SourceSpan, b: SourceSpan) -> SourceSpan:
    return SourceSpan(a.file, a.start_line, a.start_col, b.end_line, b.end_col)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("punct", "kw") and t.text == text

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            t = self.tok
            self.pos += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            self.fail(f"'{text}'")
        return t

    def expect_kind(self, kind: str) -> Token:
        t = self.tok
        if t.kind != kind:
            self.fail("an identifier" if kind == "ident" else kind)
        self.pos += 1
        return t

    def fail(self, expected: str) -> None:
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(t.span, f"expected {expected}, found {found}", expected)

    def last_span(self) -> SourceSpan:
        return self.toks[max(self.pos - 1, 0)].span

    # -- program
    def program(self) -> Program:
        defs: dict[str, Definition] = {}
        init = None
        while self.tok.kind != "eof":
            if self.tok.kind == "init":
                if init is not None:
                    raise ParseError(self.tok.span, "more than one init block")
                t = self.tok
                self.pos += 1
                init = parse_init(t.text, t.span.file, t.span.start_line)
                continue
            d = self.definition()
            if d.name in defs:
                raise ParseError(d.span, f"process {d.name} defined twice")
            defs[d.name] = d
        program = Program(defs, init)
        _check_calls(program)
        return program

    def definition(self) -> Definition:
        abstract = self.accept("abstract") is not None
        head = self.expect_kind("ident")
        params: tuple[tuple[str, CqpType], ...] = ()
        if self.accept("("):
            if not self.at(")"):
                params = self.typed_names()
            self.expect(")")
        names = [n for n, _ in params]
        if len(set(names)) != len(names):
            raise ParseError(head.span, f"duplicate parameter names in {head.text}")
        if abstract:
            return Definition(head.text, params, None, _join(head.span, self.last_span()))
        self.expect("=")
        body = self.proc()
        return Definition(head.text, params, body, _join(head.span, self.last_span()))

    def typed_names(self) -> tuple[tuple[str, CqpType], ...]:
        out = []
        while True:
            name = self.expect_kind("ident").text
            self.expect(":")
            out.append((name, self.type()))
            if not self.accept(","):
                return tuple(out)

    # -- types
    def type(self) -> CqpType:
        left = self.type_atom()
        if self.accept("*"):
            return TProd(left, self.type())
        return left

    def type_atom(self) -> CqpType:
        t = self.tok
        if self.accept("Int") or self.accept("Bit"):
            return INT
        if self.accept("Unit"):
            return UNIT
        if self.accept("Qbit"):
            return QBIT
        if self.accept("List"):
            self.expect("[")
            elem = self.type()
            self.expect("]")
            return TList(elem)
        if self.accept("Op"):
            self.expect("(")
            n = int(self.expect_kind("int").text)
            self.expect(")")
            if n < 1:
                raise ParseError(t.span, "operator arity must be >= 1")
            return TOp(n)
        if self.accept("^"):
            self.expect("[")
            payload = [self.type()]
            while self.accept(","):
                payload.append(self.type())
            self.expect("]")
            return TChan(tuple(payload))
        if t.kind == "int":
            # range types such as 0..3 are annotations only
            self.pos += 1
            self.expect("..")
            self.expect_kind("int")
            return INT
        if self.accept("("):
            inner = self.type()
            self.expect(")")
            return inner
        self.fail("a type")
        raise AssertionError

    # -- processes
    def proc(self) -> Proc:
        start = self.tok.span
        left = self.prefix()
        while self.accept("|"):
            right = self.prefix()
            left = Par(left, right, _join(start, self.last_span()))
        return left

    def prefix(self) -> Proc:
        t = self.tok
        if t.kind == "int":
            if t.text != "0":
                self.fail("a process")
            self.pos += 1
            return Nil(t.span)
        if self.at("("):
            nxt = self.peek()
            if nxt.kind == "kw" and nxt.text == "new":
                self.pos += 2
                decls = self.typed_names()
                self.expect(")")
                body = self.prefix()
                for name, ty in reversed(decls):
                    if not isinstance(ty, TChan):
                        raise ParseError(t.span, f"new {name}: {ty} is not a channel type")
                    body = NewChan(name, ty, body, _join(t.span, self.last_span()))
                return body
            if nxt.kind == "kw" and nxt.text == "qbit":
                self.pos += 2
                names = [self.expect_kind("ident").text]
                while self.accept(","):
                    names.append(self.expect_kind("ident").text)
                self.expect(")")
                body = self.prefix()
                for name in reversed(names):
                    body = NewQbit(name, body, _join(t.span, self.last_span()))
                return body
            self.pos += 1
            inner = self.proc()
            self.expect(")")
            return inner
        if self.accept("{"):
            e = self.expr()
            self.expect("}")
            self.expect(".")
            body = self.prefix()
            return Action(e, body, _join(t.span, self.last_span()))
        if self.accept("if"):
            cond = self.expr()
            self.expect("then")
            then = self.prefix()
            self.expect("else")
            orelse = self.prefix()
            return IfProc(cond, then, orelse, _join(t.span, self.last_span()))
        if t.kind == "ident" and not (self.peek().kind == "punct" and self.peek().text in "!?"):
            self.pos += 1
            args: tuple[Expr, ...] = ()
            if self.accept("("):
                args = self.expr_list(")")
                self.expect(")")
            return Call(t.text, args, _join(t.span, self.last_span()))
        if t.kind == "ident" or (t.kind == "kw" and t.text in UNARY_OPS):
            chan = self.atom()
            if self.accept("?"):
                self.expect("[")
                binders = self.typed_names()
                self.expect("]")
                names = [n for n, _ in binders]
                if len(set(names)) != len(names):
                    raise ParseError(t.span, "duplicate input binders")
                body = self.prefix() if self.accept(".") else NIL
                return Input(chan, binders, body, _join(t.span, self.last_span()))
            if self.accept("!"):
                self.expect("[")
                args = self.expr_list("]")
                self.expect("]")
                body = self.prefix() if self.accept(".") else NIL
                return Output(chan, args, body, _join(t.span, self.last_span()))
            self.fail("'?' or '!'")
        self.fail("a process")
        raise AssertionError

    # -- expressions
    def expr_list(self, closer: str) -> tuple[Expr, ...]:
        if self.at(closer):
            return ()
        items = [self.expr()]
        while self.accept(","):
            items.append(self.expr())
        return tuple(items)

    def _transform_ahead(self) -> bool:
        k = 0
        while True:
            if self.peek(k).kind != "ident":
                return False
            nxt = self.peek(k + 1)
            if nxt.kind == "punct" and nxt.text == "*=":
                return True
            if not (nxt.kind == "punct" and nxt.text == ","):
                return False
            k += 2

    def expr(self) -> Expr:
        t = self.tok
        if self.accept("if"):
            cond = self.expr()
            self.expect("then")
            then = self.expr()
            self.expect("else")
            orelse = self.expr()
            return IfExpr(cond, then, orelse, _join(t.span, self.last_span()))
        if self.accept("measure"):
            args = [self.atom()]
            while self.accept(","):
                args.append(self.atom())
            return Measure(tuple(args), _join(t.span, self.last_span()))
        if self._transform_ahead():
            targets = [Var(self.expect_kind("ident").text, t.span)]
            while self.accept(","):
                tt = self.expect_kind("ident")
                targets.append(Var(tt.text, tt.span))
            self.expect("*=")
            gate = self.atom()
            return Transform(tuple(targets), gate, _join(t.span, self.last_span()))
        return self.equality()

    def equality(self) -> Expr:
        t = self.tok
        left = self.append()
        if self.accept("="):
            right = self.append()
            return BinOp("=", left, right, _join(t.span, self.last_span()))
        return left

    def append(self) -> Expr:
        t = self.tok
        left = self.additive()
        if self.accept("@"):
            right = self.append()
            return BinOp("@", left, right, _join(t.span, self.last_span()))
        return left

    def additive(self) -> Expr:
        t = self.tok
        left = self.atom()
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.pos += 1
            right = self.atom()
            left = BinOp(op, left, right, _join(t.span, self.last_span()))
        return left

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.pos += 1
            return IntLit(int(t.text), t.span)
        if t.kind == "punct" and t.text == "-" and self.peek().kind == "int":
            self.pos += 2
            return IntLit(-int(self.toks[self.pos - 1].text), _join(t.span, self.last_span()))
        if t.kind == "ident":
            self.pos += 1
            return Var(t.text, t.span)
        if t.kind == "kw":
            if t.text == "unit":
                self.pos += 1
                return UnitLit(t.span)
            if t.text in GATE_ALIASES:
                self.pos += 1
                return GateConst(GATE_ALIASES[t.text], t.span)
            if t.text == "sigma":
                self.pos += 1
                self.expect("(")
                index = self.expr()
                self.expect(")")
                return PauliIndex(index, _join(t.span, self.last_span()))
            if t.text in UNARY_OPS:
                self.pos += 1
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return UnOp(t.text, arg, _join(t.span, self.last_span()))
        if self.accept("["):
            items = self.expr_list("]")
            self.expect("]")
            return ListLit(items, _join(t.span, self.last_span()))
        if self.accept("("):
            first = self.expr()
            if self.accept(","):
                second = self.expr()
                self.expect(")")
                return PairLit(first, second, _join(t.span, self.last_span()))
            self.expect(")")
            return first
        self.fail("an expression")
        raise AssertionError


def _iter_calls(p: Proc) -> Iterator[Call]:
    stack = [p]
    while stack:
        q = stack.pop()
        if isinstance(q, Call):
            yield q
        elif isinstance(q, Par):
            stack += [q.left, q.right]
        elif isinstance(q, IfProc):
            stack += [q.then, q.orelse]
        elif isinstance(q, (Input, Output, Action, NewChan, NewQbit)):
            stack.append(q.body)


def _check_calls(program: Program) -> None:
    for d in program.definitions.values():
        if d.body is None:
            continue
        for call in _iter_calls(d.body):
            _check_call(program, call.name, len(call.args), call.span or d.span)
    init = program.init
    if init is not None and init.entry is not None:
        span = SourceSpan("<init>", 1, 1, 1, 1)
        if init.entry in program:
            _check_call(program, init.entry, len(init.args), span)


def _check_call(program: Program, name: str, nargs: int, span: SourceSpan) -> None:
    if name not in program:
        raise ParseError(span, f"call of undefined process {name}", "a defined process name")
    want = len(program[name].params)
    if want != nargs:
        raise ParseError(span, f"{name} expects {want} argument(s), given {nargs}")


def parse_program(source: str, file: str = "<input>") -> Program:
    return _Parser(tokenize(source, file)).program()


def parse_proc(source: str, file: str = "<input>") -> Proc:
    p = _Parser(tokenize(source, file))
    proc = p.proc()
    p.expect_kind("eof")
    return proc


def parse_expr(source: str, file: str = "<input>") -> Expr:
    p = _Parser(tokenize(source, file))
    e = p.expr()
    p.expect_kind("eof")
    return e


# ---------------------------------------------------------------------------
# Printer

_LOWEST, _EQ, _APPEND, _ADD, _ATOM = range(5)


def _level(e: Expr) -> int:
    if isinstance(e, (IfExpr, Measure, Transform)):
        return _LOWEST
    if isinstance(e, BinOp):
        return {"=": _EQ, "@": _APPEND, "+": _ADD, "-": _ADD}[e.op]
    if isinstance(e, IntLit) and e.value < 0:
        return _ADD
    return _ATOM


def show_expr(e: Expr, need: int = _LOWEST) -> str:
    s = _show_expr(e)
    return f"({s})" if _level(e) < need else s


def _show_list(items: tuple[Expr, ...]) -> str:
    out = []
    for k, item in enumerate(items):
        last = k == len(items) - 1
        wrap = (
            (isinstance(item, Transform) and len(items) > 1)
            or (isinstance(item, (Measure, IfExpr)) and not last)
        )
        out.append(f"({_show_expr(item)})" if wrap else _show_expr(item))
    return ", ".join(out)


def _show_expr(e: Expr) -> str:
    if isinstance(e, (Var, QubitName, ChannelName)):
        return e.name
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, UnitLit):
        return "unit"
    if isinstance(e, GateConst):
        return e.name
    if isinstance(e, ListLit):
        return "[" + _show_list(e.items) + "]"
    if isinstance(e, PairLit):
        return "(" + _show_list((e.left, e.right)) + ")"
    if isinstance(e, Measure):
        return "measure " + ", ".join(show_expr(a, _ATOM) for a in e.args)
    if isinstance(e, Transform):
        targets = ", ".join(show_expr(t, _ATOM) for t in e.targets)
        return f"{targets} *= {show_expr(e.gate, _ATOM)}"
    if isinstance(e, BinOp):
        if e.op == "=":
            return f"{show_expr(e.left, _APPEND)} = {show_expr(e.right, _APPEND)}"
        if e.op == "@":
            return f"{show_expr(e.left, _ADD)} @ {show_expr(e.right, _APPEND)}"
        return f"{show_expr(e.left, _ADD)} {e.op} {show_expr(e.right, _ATOM)}"
    if isinstance(e, UnOp):
        return f"{e.op}({show_expr(e.arg)})"
    if isinstance(e, IfExpr):
        return f"if {show_expr(e.cond)} then {show_expr(e.then)} else {show_expr(e.orelse)}"
    if isinstance(e, PauliIndex):
        return f"sigma({show_expr(e.index)})"
    raise TypeError(f"not an expression: {e!r}")


def _show_binders(binders: tuple[tuple[str, CqpType], ...]) -> str:
    return ", ".join(f"{n}: {t}" for n, t in binders)


def show_proc(p: Proc, prefix_ctx: bool = False) -> str:
    """Concrete syntax for ``p``; ``prefix_ctx`` parenthesises a top-level ``|``."""
    if isinstance(p, Nil):
        return "0"
    if isinstance(p, Par):
        right = show_proc(p.right, prefix_ctx=True)
        s = f"{show_proc(p.left)} | {right}"
        return f"({s})" if prefix_ctx else s
    if isinstance(p, Input):
        return f"{show_expr(p.chan, _ATOM)}?[{_show_binders(p.binders)}].{show_proc(p.body, True)}"
    if isinstance(p, Output):
        return f"{show_expr(p.chan, _ATOM)}![{_show_list(p.args)}].{show_proc(p.body, True)}"
    if isinstance(p, Action):
        return f"{{{show_expr(p.expr)}}}.{show_proc(p.body, True)}"
    if isinstance(p, NewChan):
        return f"(new {p.name}: {p.type}){show_proc(p.body, True)}"
    if isinstance(p, NewQbit):
        return f"(qbit {p.name}){show_proc(p.body, True)}"
    if isinstance(p, IfProc):
        return (f"if {show_expr(p.cond)} then {show_proc(p.then, True)} "
                f"else {show_proc(p.orelse, True)}")
    if isinstance(p, Call):
        return f"{p.name}({_show_list(p.args)})" if p.args else p.name
    raise TypeError(f"not a process: {p!r}")


def print_program(program: Program) -> str:
    lines = []
    for d in program.definitions.values():
        head = d.name + "(" + _show_binders(d.params) + ")"
        if d.body is None:
            lines.append(f"abstract {head}")
        else:
            lines.append(f"{head} = {show_proc(d.body)}")
    if program.init is not None:
        lines.append("init {" + program.init.source + "}")
    return "\n\n".join(lines) + "\n"
