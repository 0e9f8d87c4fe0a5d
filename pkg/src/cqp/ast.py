"""Abstract syntax of CQP: types, values, expressions, processes, programs.

Terms are immutable.  Source-level programs contain only variables; the
runtime introduces :class:`QubitName` and :class:`ChannelName` values when
``(qbit x)`` and ``(new x:T)`` are executed.

Fully evaluated list and pair literals are values, so there is no separate
value wrapper: :func:`is_value` decides.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

# ---------------------------------------------------------------------------
# Source spans


@dataclass(frozen=True, slots=True)
class SourceSpan:
    file: str
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.file}:{self.start_line}:{self.start_col}"

    def to_json(self) -> dict:
        return {
            "file": self.file,
            "start": [self.start_line, self.start_col],
            "end": [self.end_line, self.end_col],
        }


def _span() -> Any:
    return field(default=None, compare=False, hash=False, repr=False)


# ---------------------------------------------------------------------------
# Types


class CqpType:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class TInt(CqpType):
    def __str__(self) -> str:
        return "Int"


@dataclass(frozen=True, slots=True)
class TUnit(CqpType):
    def __str__(self) -> str:
        return "Unit"


@dataclass(frozen=True, slots=True)
class TQbit(CqpType):
    def __str__(self) -> str:
        return "Qbit"


@dataclass(frozen=True, slots=True)
class TChan(CqpType):
    payload: tuple[CqpType, ...]

    def __post_init__(self) -> None:
        if not self.payload:
            raise ValueError("channel payload must be non-empty")

    def __str__(self) -> str:
        return "^[" + ", ".join(map(str, self.payload)) + "]"


@dataclass(frozen=True, slots=True)
class TOp(CqpType):
    """Unitary operator on ``arity`` qubits."""

    arity: int

    def __post_init__(self) -> None:
        if self.arity < 1:
            raise ValueError("operator arity must be >= 1")

    def __str__(self) -> str:
        return f"Op({self.arity})"


@dataclass(frozen=True, slots=True)
class TList(CqpType):
    elem: CqpType

    def __str__(self) -> str:
        return f"List[{self.elem}]"


@dataclass(frozen=True, slots=True)
class TProd(CqpType):
    left: CqpType
    right: CqpType

    def __str__(self) -> str:
        left = f"({self.left})" if isinstance(self.left, TProd) else str(self.left)
        return f"{left} * {self.right}"


@dataclass(frozen=True, slots=True)
class TUnknown(CqpType):
    """Element type of ``[]`` before it meets a context."""

    def __str__(self) -> str:
        return "?"


INT = TInt()
UNIT = TUnit()
QBIT = TQbit()
UNKNOWN = TUnknown()

# ---------------------------------------------------------------------------
# Expressions and values


class Expr:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class IntLit(Expr):
    value: int
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class UnitLit(Expr):
    span: SourceSpan | None = _span()


GATE_ARITY = {"H": 1, "I": 1, "X": 1, "Y": 1, "Z": 1, "CNot": 2}
GATE_ALIASES = {
    "sigma0": "I",
    "sigma1": "X",
    "sigma2": "Y",
    "sigma3": "Z",
    "H": "H",
    "I": "I",
    "X": "X",
    "Y": "Y",
    "Z": "Z",
    "CNot": "CNot",
}
PAULI_BY_INDEX = ("I", "X", "Y", "Z")


@dataclass(frozen=True, slots=True)
class GateConst(Expr):
    name: str
    span: SourceSpan | None = _span()

    def __post_init__(self) -> None:
        if self.name not in GATE_ARITY:
            raise ValueError(f"unknown gate {self.name!r}")

    @property
    def arity(self) -> int:
        return GATE_ARITY[self.name]


@dataclass(frozen=True, slots=True)
class QubitName(Expr):
    name: str
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class ChannelName(Expr):
    name: str
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class ListLit(Expr):
    items: tuple[Expr, ...]
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class PairLit(Expr):
    left: Expr
    right: Expr
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class Measure(Expr):
    args: tuple[Expr, ...]
    span: SourceSpan | None = _span()

    def __post_init__(self) -> None:
        if not self.args:
            raise ValueError("measure needs at least one argument")


@dataclass(frozen=True, slots=True)
class Transform(Expr):
    targets: tuple[Expr, ...]
    gate: Expr
    span: SourceSpan | None = _span()

    def __post_init__(self) -> None:
        if not self.targets:
            raise ValueError("transform needs at least one target")


BINARY_OPS = ("+", "-", "=", "@")
UNARY_OPS = ("hd", "tl", "length", "fst", "snd")


@dataclass(frozen=True, slots=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class UnOp(Expr):
    op: str
    arg: Expr
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class IfExpr(Expr):
    cond: Expr
    then: Expr
    orelse: Expr
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class PauliIndex(Expr):
    """``sigma(e)``: the Pauli operator selected by an integer 0..3."""

    index: Expr
    span: SourceSpan | None = _span()


_ATOMIC_VALUES = (IntLit, UnitLit, GateConst, QubitName, ChannelName)


def is_value(e: Expr) -> bool:
    if isinstance(e, _ATOMIC_VALUES) or isinstance(e, Var):
        return True
    if isinstance(e, ListLit):
        return all(is_value(i) for i in e.items)
    if isinstance(e, PairLit):
        return is_value(e.left) and is_value(e.right)
    return False


# ---------------------------------------------------------------------------
# Processes


class Proc:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Nil(Proc):
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class Par(Proc):
    left: Proc
    right: Proc
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class Input(Proc):
    chan: Expr
    binders: tuple[tuple[str, CqpType], ...]
    body: Proc
    span: SourceSpan | None = _span()

    def __post_init__(self) -> None:
        names = [n for n, _ in self.binders]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate input binders {names}")


@dataclass(frozen=True, slots=True)
class Output(Proc):
    chan: Expr
    args: tuple[Expr, ...]
    body: Proc
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class Action(Proc):
    expr: Expr
    body: Proc
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class NewChan(Proc):
    name: str
    type: CqpType
    body: Proc
    span: SourceSpan | None = _span()

    def __post_init__(self) -> None:
        if not isinstance(self.type, TChan):
            raise ValueError(f"new {self.name}: {self.type} is not a channel type")


@dataclass(frozen=True, slots=True)
class NewQbit(Proc):
    name: str
    body: Proc
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class IfProc(Proc):
    cond: Expr
    then: Proc
    orelse: Proc
    span: SourceSpan | None = _span()


@dataclass(frozen=True, slots=True)
class Call(Proc):
    name: str
    args: tuple[Expr, ...]
    span: SourceSpan | None = _span()


NIL = Nil()


def par(procs: Iterable[Proc]) -> Proc:
    """Left-nested parallel composition; the empty composition is ``0``."""
    result: Proc | None = None
    for p in procs:
        result = p if result is None else Par(result, p)
    return NIL if result is None else result


def components(p: Proc) -> list[Proc]:
    """Flatten top-level ``|`` into its components, dropping ``0``."""
    out: list[Proc] = []
    stack = [p]
    while stack:
        q = stack.pop()
        if isinstance(q, Par):
            stack.append(q.right)
            stack.append(q.left)
        elif not isinstance(q, Nil):
            out.append(q)
    return out


# ---------------------------------------------------------------------------
# Programs


@dataclass(frozen=True)
class Definition:
    name: str
    params: tuple[tuple[str, CqpType], ...]
    body: Proc | None  # None for an abstract (opaque) process
    span: SourceSpan | None = field(default=None, compare=False, repr=False)

    @property
    def abstract(self) -> bool:
        return self.body is None


@dataclass(frozen=True)
class Program:
    definitions: Mapping[str, Definition]
    init: Any = None  # parser.InitSpec, kept untyped to avoid a cycle

    def __getitem__(self, name: str) -> Definition:
        return self.definitions[name]

    def __contains__(self, name: str) -> bool:
        return name in self.definitions


# ---------------------------------------------------------------------------
# Free names


@dataclass(frozen=True)
class FreeNames:
    variables: frozenset[str]
    qubits: frozenset[str]
    channels: frozenset[str]

    def __iter__(self):
        return iter((self.variables, self.qubits, self.channels))


class _Collector:
    __slots__ = ("vs", "qs", "cs")

    def __init__(self) -> None:
        self.vs: set[str] = set()
        self.qs: set[str] = set()
        self.cs: set[str] = set()

    def expr(self, e: Expr, bound: frozenset[str]) -> None:
        if isinstance(e, Var):
            if e.name not in bound:
                self.vs.add(e.name)
        elif isinstance(e, QubitName):
            self.qs.add(e.name)
        elif isinstance(e, ChannelName):
            self.cs.add(e.name)
        elif isinstance(e, (IntLit, UnitLit, GateConst)):
            pass
        else:
            for sub in _expr_children(e):
                self.expr(sub, bound)

    def proc(self, p: Proc, bound: frozenset[str]) -> None:
        while True:
            if isinstance(p, Nil):
                return
            if isinstance(p, Par):
                self.proc(p.left, bound)
                p = p.right
            elif isinstance(p, Input):
                self.expr(p.chan, bound)
                bound = bound | {n for n, _ in p.binders}
                p = p.body
            elif isinstance(p, Output):
                self.expr(p.chan, bound)
                for a in p.args:
                    self.expr(a, bound)
                p = p.body
            elif isinstance(p, Action):
                self.expr(p.expr, bound)
                p = p.body
            elif isinstance(p, (NewChan, NewQbit)):
                bound = bound | {p.name}
                p = p.body
            elif isinstance(p, IfProc):
                self.expr(p.cond, bound)
                self.proc(p.then, bound)
                p = p.orelse
            elif isinstance(p, Call):
                for a in p.args:
                    self.expr(a, bound)
                return
            else:
                raise TypeError(f"not a process: {p!r}")


def _expr_children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, ListLit):
        return e.items
    if isinstance(e, PairLit):
        return (e.left, e.right)
    if isinstance(e, Measure):
        return e.args
    if isinstance(e, Transform):
        return e.targets + (e.gate,)
    if isinstance(e, BinOp):
        return (e.left, e.right)
    if isinstance(e, UnOp):
        return (e.arg,)
    if isinstance(e, IfExpr):
        return (e.cond, e.then, e.orelse)
    if isinstance(e, PauliIndex):
        return (e.index,)
    return ()


def free_names(term: Proc | Expr) -> FreeNames:
    c = _Collector()
    if isinstance(term, Proc):
        c.proc(term, frozenset())
    else:
        c.expr(term, frozenset())
    return FreeNames(frozenset(c.vs), frozenset(c.qs), frozenset(c.cs))


def fv(term: Proc | Expr) -> frozenset[str]:
    return free_names(term).variables


def fq(term: Proc | Expr) -> frozenset[str]:
    return free_names(term).qubits


def fc(term: Proc | Expr) -> frozenset[str]:
    return free_names(term).channels


# ---------------------------------------------------------------------------
# Substitution


def fresh_name(base: str, avoid: Iterable[str] | set[str]) -> str:
    """``base`` itself if unused, else ``base1``, ``base2``, ..."""
    taken = avoid if isinstance(avoid, (set, frozenset)) else set(avoid)
    if base not in taken:
        return base
    stem = base.rstrip("0123456789") or base
    for k in itertools.count(1):
        cand = f"{stem}{k}"
        if cand not in taken:
            return cand
    raise AssertionError("unreachable")


def subst_expr(e: Expr, subs: Mapping[str, Expr]) -> Expr:
    if isinstance(e, Var):
        return subs.get(e.name, e)
    if isinstance(e, (IntLit, UnitLit, GateConst, QubitName, ChannelName)):
        return e
    if isinstance(e, ListLit):
        return ListLit(tuple(subst_expr(i, subs) for i in e.items), e.span)
    if isinstance(e, PairLit):
        return PairLit(subst_expr(e.left, subs), subst_expr(e.right, subs), e.span)
    if isinstance(e, Measure):
        return Measure(tuple(subst_expr(a, subs) for a in e.args), e.span)
    if isinstance(e, Transform):
        return Transform(
            tuple(subst_expr(t, subs) for t in e.targets),
            subst_expr(e.gate, subs),
            e.span,
        )
    if isinstance(e, BinOp):
        return BinOp(e.op, subst_expr(e.left, subs), subst_expr(e.right, subs), e.span)
    if isinstance(e, UnOp):
        return UnOp(e.op, subst_expr(e.arg, subs), e.span)
    if isinstance(e, IfExpr):
        return IfExpr(
            subst_expr(e.cond, subs),
            subst_expr(e.then, subs),
            subst_expr(e.orelse, subs),
            e.span,
        )
    if isinstance(e, PauliIndex):
        return PauliIndex(subst_expr(e.index, subs), e.span)
    raise TypeError(f"not an expression: {e!r}")


def _enter_binders(
    names: list[str], body: Proc, subs: dict[str, Expr], capture: bool
) -> tuple[list[str], dict[str, Expr]]:
    """Drop shadowed substitutions and rename binders that would capture."""
    subs = {k: v for k, v in subs.items() if k not in names}
    if not capture or not subs:
        return names, subs
    body_fv = fv(body)
    live = {k: v for k, v in subs.items() if k in body_fv}
    danger: set[str] = set()
    for v in live.values():
        danger |= fv(v)
    if not danger.intersection(names):
        return names, live
    avoid = set(danger) | body_fv | set(names) | set(live)
    new_names = []
    for n in names:
        if n in danger:
            m = fresh_name(n, avoid)
            avoid.add(m)
            live[n] = Var(m)
            new_names.append(m)
        else:
            new_names.append(n)
    return new_names, live


def substitute(p: Proc, subs: Mapping[str, Expr]) -> Proc:
    """Capture-avoiding simultaneous substitution of values for variables."""
    subs = dict(subs)
    if not subs:
        return p
    capture = any(fv(v) for v in subs.values())
    return _subst_proc(p, subs, capture)


def _subst_proc(p: Proc, subs: dict[str, Expr], capture: bool) -> Proc:
    if not subs or isinstance(p, Nil):
        return p
    if isinstance(p, Par):
        return Par(_subst_proc(p.left, subs, capture), _subst_proc(p.right, subs, capture), p.span)
    if isinstance(p, Input):
        chan = subst_expr(p.chan, subs)
        names = [n for n, _ in p.binders]
        new_names, inner = _enter_binders(names, p.body, subs, capture)
        binders = tuple((m, t) for m, (_, t) in zip(new_names, p.binders))
        return Input(chan, binders, _subst_proc(p.body, inner, capture), p.span)
    if isinstance(p, Output):
        return Output(
            subst_expr(p.chan, subs),
            tuple(subst_expr(a, subs) for a in p.args),
            _subst_proc(p.body, subs, capture),
            p.span,
        )
    if isinstance(p, Action):
        return Action(subst_expr(p.expr, subs), _subst_proc(p.body, subs, capture), p.span)
    if isinstance(p, NewChan):
        (name,), inner = _enter_binders([p.name], p.body, subs, capture)
        return NewChan(name, p.type, _subst_proc(p.body, inner, capture), p.span)
    if isinstance(p, NewQbit):
        (name,), inner = _enter_binders([p.name], p.body, subs, capture)
        return NewQbit(name, _subst_proc(p.body, inner, capture), p.span)
    if isinstance(p, IfProc):
        return IfProc(
            subst_expr(p.cond, subs),
            _subst_proc(p.then, subs, capture),
            _subst_proc(p.orelse, subs, capture),
            p.span,
        )
    if isinstance(p, Call):
        return Call(p.name, tuple(subst_expr(a, subs) for a in p.args), p.span)
    raise TypeError(f"not a process: {p!r}")


# ---------------------------------------------------------------------------
# Canonical keys: alpha-equivalence and structural congruence


def type_key(t: CqpType) -> tuple:
    if isinstance(t, TChan):
        return ("chan", tuple(type_key(x) for x in t.payload))
    if isinstance(t, TList):
        return ("list", type_key(t.elem))
    if isinstance(t, TProd):
        return ("prod", type_key(t.left), type_key(t.right))
    if isinstance(t, TOp):
        return ("op", t.arity)
    return (type(t).__name__,)


def _expr_key(e: Expr, bound: Mapping[str, int]) -> tuple:
    if isinstance(e, Var):
        if e.name in bound:
            return ("bv", bound[e.name])
        return ("fv", e.name)
    if isinstance(e, IntLit):
        return ("int", e.value)
    if isinstance(e, UnitLit):
        return ("unit",)
    if isinstance(e, GateConst):
        return ("gate", e.name)
    if isinstance(e, QubitName):
        return ("qn", e.name)
    if isinstance(e, ChannelName):
        return ("cn", e.name)
    if isinstance(e, BinOp):
        return ("bin", e.op, _expr_key(e.left, bound), _expr_key(e.right, bound))
    if isinstance(e, UnOp):
        return ("un", e.op, _expr_key(e.arg, bound))
    return (type(e).__name__,) + tuple(_expr_key(c, bound) for c in _expr_children(e))


def proc_key(p: Proc, sort_par: bool = False) -> tuple:
    """Hashable key equal for alpha-equivalent processes.

    With ``sort_par`` the key also identifies processes equal up to the
    unit, commutativity and associativity laws of ``|``.
    """
    return _proc_key(p, {}, 0, sort_par)


def _proc_key(p: Proc, bound: dict[str, int], depth: int, sort_par: bool) -> tuple:
    if isinstance(p, Nil):
        return ("nil",)
    if isinstance(p, Par):
        if sort_par:
            comps = sorted(_proc_key(c, bound, depth, True) for c in components(p))
            if not comps:
                return ("nil",)
            if len(comps) == 1:
                return comps[0]
            return ("par", tuple(comps))
        return (
            "par2",
            _proc_key(p.left, bound, depth, False),
            _proc_key(p.right, bound, depth, False),
        )
    if isinstance(p, Input):
        inner = dict(bound)
        for i, (n, _) in enumerate(p.binders):
            inner[n] = depth + i
        return (
            "in",
            _expr_key(p.chan, bound),
            tuple(type_key(t) for _, t in p.binders),
            _proc_key(p.body, inner, depth + len(p.binders), sort_par),
        )
    if isinstance(p, Output):
        return (
            "out",
            _expr_key(p.chan, bound),
            tuple(_expr_key(a, bound) for a in p.args),
            _proc_key(p.body, bound, depth, sort_par),
        )
    if isinstance(p, Action):
        return ("act", _expr_key(p.expr, bound), _proc_key(p.body, bound, depth, sort_par))
    if isinstance(p, NewChan):
        inner = dict(bound)
        inner[p.name] = depth
        return ("new", type_key(p.type), _proc_key(p.body, inner, depth + 1, sort_par))
    if isinstance(p, NewQbit):
        inner = dict(bound)
        inner[p.name] = depth
        return ("qbit", _proc_key(p.body, inner, depth + 1, sort_par))
    if isinstance(p, IfProc):
        return (
            "if",
            _expr_key(p.cond, bound),
            _proc_key(p.then, bound, depth, sort_par),
            _proc_key(p.orelse, bound, depth, sort_par),
        )
    if isinstance(p, Call):
        return ("call", p.name, tuple(_expr_key(a, bound) for a in p.args))
    raise TypeError(f"not a process: {p!r}")


def alpha_equal(p: Proc, q: Proc) -> bool:
    return proc_key(p) == proc_key(q)
