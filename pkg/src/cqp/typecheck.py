"""Linear type system for CQP.

Qubit variables are linear: a parallel composition splits them between its
branches, and sending a qubit (or passing it to a process call) removes it
from the sender's continuation.  Everything else is freely shared.

One checker implements both judgement forms.  The source-level form
``Γ ⊢ P`` is the runtime form ``Γ; Σ; Φ ⊢ P`` with empty ``Σ`` and ``Φ`` and
runtime names rejected.
"""
from __future__ import annotations

import enum
from typing import Mapping

from .ast import (
    INT,
    QBIT,
    UNIT,
    UNKNOWN,
    Action,
    BinOp,
    Call,
    ChannelName,
    CqpType,
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
    TUnknown,
    Transform,
    UnitLit,
    UnOp,
    Var,
    free_names,
)

TypeEnv = dict[str, CqpType]
ChanEnv = dict[str, TChan]
QubitSet = frozenset[str]


class ErrorKind(str, enum.Enum):
    UNBOUND = "unbound"
    MISMATCH = "mismatch"
    QUBIT_REUSE = "qubit-reuse"
    ENV_SUM_UNDEFINED = "env-sum-undefined"
    NON_CHANNEL_SUBJECT = "non-channel-subject"
    GATE_ARITY = "gate-arity"
    DUPLICATE_QUBIT_ARG = "duplicate-qubit-arg"


class CqpTypeError(Exception):
    def __init__(self, kind: ErrorKind, message: str, span: SourceSpan | None = None):
        super().__init__(f"{span}: {message}" if span else message)
        self.kind = kind
        self.message = message
        self.span = span

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "message": self.message,
            "span": self.span.to_json() if self.span else None,
        }


class ProgramTypeError(Exception):
    """All definition-level errors found by :func:`check_program`."""

    def __init__(self, errors: list[CqpTypeError]):
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = errors


# ---------------------------------------------------------------------------
# Environment addition


def env_add(g: Mapping[str, CqpType], x: str, t: CqpType) -> TypeEnv | None:
    """``Γ + x:T``, or ``None`` where the sum is undefined."""
    if x not in g:
        out = dict(g)
        out[x] = t
        return out
    if t != QBIT and types_match(g[x], t) and g[x] != QBIT:
        return dict(g)
    return None


def env_sum(g1: Mapping[str, CqpType], g2: Mapping[str, CqpType]) -> TypeEnv | None:
    out: TypeEnv | None = dict(g1)
    for x, t in g2.items():
        out = env_add(out, x, t)
        if out is None:
            return None
    return out


# ---------------------------------------------------------------------------
# Type comparison


def unify(a: CqpType, b: CqpType) -> CqpType | None:
    """Most specific common type, treating ``?`` (from ``[]``) as a wildcard."""
    if isinstance(a, TUnknown):
        return b
    if isinstance(b, TUnknown):
        return a
    if isinstance(a, TList) and isinstance(b, TList):
        e = unify(a.elem, b.elem)
        return None if e is None else TList(e)
    if isinstance(a, TProd) and isinstance(b, TProd):
        l, r = unify(a.left, b.left), unify(a.right, b.right)
        return None if l is None or r is None else TProd(l, r)
    return a if a == b else None


def types_match(a: CqpType, b: CqpType) -> bool:
    return unify(a, b) is not None


def _contains_qbit(t: CqpType) -> bool:
    if t == QBIT:
        return True
    if isinstance(t, TList):
        return _contains_qbit(t.elem)
    if isinstance(t, TProd):
        return _contains_qbit(t.left) or _contains_qbit(t.right)
    return False


def _check_declared(t: CqpType, span: SourceSpan | None) -> None:
    """Qubits may not hide inside lists or pairs; channel payloads are checked recursively."""
    if isinstance(t, (TList, TProd)) and _contains_qbit(t):
        raise CqpTypeError(ErrorKind.MISMATCH, f"type {t} stores qubits inside data", span)
    if isinstance(t, TChan):
        for x in t.payload:
            _check_declared(x, span)
    if isinstance(t, TList):
        _check_declared(t.elem, span)


# ---------------------------------------------------------------------------
# The checker


class _Checker:
    def __init__(self, program: Program | None, internal: bool):
        self.program = program
        self.internal = internal

    def err(self, kind: ErrorKind, msg: str, node: object) -> CqpTypeError:
        return CqpTypeError(kind, msg, getattr(node, "span", None))

    # -- qubit references
    def qubit_ref(self, g: TypeEnv, s: QubitSet, e: Expr, what: str) -> tuple[str, str]:
        """A variable or qubit name of type Qbit, as (namespace, name)."""
        if isinstance(e, Var):
            if e.name not in g:
                raise self.err(ErrorKind.UNBOUND, f"unbound variable {e.name}", e)
            if g[e.name] != QBIT:
                raise self.err(ErrorKind.MISMATCH, f"{what}: {e.name} has type {g[e.name]}, expected Qbit", e)
            return ("var", e.name)
        if isinstance(e, QubitName) and self.internal:
            if e.name not in s:
                raise self.err(ErrorKind.UNBOUND, f"qubit {e.name} not owned here", e)
            return ("qubit", e.name)
        raise self.err(ErrorKind.MISMATCH, f"{what}: expected a qubit variable", e)

    def distinct_qubits(self, g: TypeEnv, s: QubitSet, args, what: str) -> list[tuple[str, str]]:
        refs = []
        for a in args:
            r = self.qubit_ref(g, s, a, what)
            if r in refs:
                raise self.err(ErrorKind.DUPLICATE_QUBIT_ARG, f"{what}: qubit {r[1]} used twice", a)
            refs.append(r)
        return refs

    # -- expressions
    def expr(self, g: TypeEnv, s: QubitSet, f: ChanEnv, e: Expr) -> CqpType:
        if isinstance(e, IntLit):
            return INT
        if isinstance(e, UnitLit):
            return UNIT
        if isinstance(e, GateConst):
            return TOp(e.arity)
        if isinstance(e, Var):
            if e.name not in g:
                raise self.err(ErrorKind.UNBOUND, f"unbound variable {e.name}", e)
            return g[e.name]
        if isinstance(e, QubitName):
            if not self.internal:
                raise self.err(ErrorKind.MISMATCH, "runtime qubit name in source term", e)
            if e.name not in s:
                raise self.err(ErrorKind.UNBOUND, f"qubit {e.name} not owned here", e)
            return QBIT
        if isinstance(e, ChannelName):
            if not self.internal:
                raise self.err(ErrorKind.MISMATCH, "runtime channel name in source term", e)
            if e.name not in f:
                raise self.err(ErrorKind.UNBOUND, f"unknown channel {e.name}", e)
            return f[e.name]
        if isinstance(e, Measure):
            self.distinct_qubits(g, s, e.args, "measure")
            return INT
        if isinstance(e, Transform):
            self.distinct_qubits(g, s, e.targets, "transform")
            gt = self.expr(g, s, f, e.gate)
            if not isinstance(gt, TOp):
                raise self.err(ErrorKind.MISMATCH, f"transform by a value of type {gt}", e.gate)
            if gt.arity != len(e.targets):
                raise self.err(
                    ErrorKind.GATE_ARITY,
                    f"operator on {gt.arity} qubit(s) applied to {len(e.targets)}",
                    e,
                )
            return UNIT
        if isinstance(e, BinOp):
            lt = self.expr(g, s, f, e.left)
            rt = self.expr(g, s, f, e.right)
            if e.op in ("+", "-"):
                self.want(lt, INT, e.left)
                self.want(rt, INT, e.right)
                return INT
            if e.op == "=":
                if lt == QBIT or rt == QBIT or not types_match(lt, rt):
                    raise self.err(ErrorKind.MISMATCH, f"cannot compare {lt} with {rt}", e)
                return INT
            # append
            if not isinstance(lt, TList) or not isinstance(rt, TList):
                raise self.err(ErrorKind.MISMATCH, f"'@' needs lists, got {lt} and {rt}", e)
            joined = unify(lt, rt)
            if joined is None:
                raise self.err(ErrorKind.MISMATCH, f"cannot append {lt} and {rt}", e)
            return joined
        if isinstance(e, UnOp):
            at = self.expr(g, s, f, e.arg)
            if e.op in ("hd", "tl", "length"):
                if not isinstance(at, TList):
                    raise self.err(ErrorKind.MISMATCH, f"{e.op} of non-list {at}", e)
                return {"hd": at.elem, "tl": at, "length": INT}[e.op]
            if not isinstance(at, TProd):
                raise self.err(ErrorKind.MISMATCH, f"{e.op} of non-pair {at}", e)
            return at.left if e.op == "fst" else at.right
        if isinstance(e, IfExpr):
            self.want(self.expr(g, s, f, e.cond), INT, e.cond)
            tt = self.expr(g, s, f, e.then)
            et = self.expr(g, s, f, e.orelse)
            joined = unify(tt, et)
            if joined is None:
                raise self.err(ErrorKind.MISMATCH, f"if-branches have types {tt} and {et}", e)
            if _contains_qbit(joined):
                raise self.err(ErrorKind.MISMATCH, "conditional cannot yield a qubit", e)
            return joined
        if isinstance(e, PauliIndex):
            self.want(self.expr(g, s, f, e.index), INT, e.index)
            return TOp(1)
        if isinstance(e, ListLit):
            elem: CqpType = UNKNOWN
            for item in e.items:
                it = self.expr(g, s, f, item)
                joined = unify(elem, it)
                if joined is None:
                    raise self.err(ErrorKind.MISMATCH, f"list mixes {elem} and {it}", item)
                elem = joined
            if _contains_qbit(elem):
                raise self.err(ErrorKind.MISMATCH, "lists cannot hold qubits", e)
            return TList(elem)
        if isinstance(e, PairLit):
            t = TProd(self.expr(g, s, f, e.left), self.expr(g, s, f, e.right))
            if _contains_qbit(t):
                raise self.err(ErrorKind.MISMATCH, "pairs cannot hold qubits", e)
            return t
        raise TypeError(f"not an expression: {e!r}")

    def want(self, got: CqpType, expected: CqpType, node: object) -> None:
        if not types_match(got, expected):
            raise self.err(ErrorKind.MISMATCH, f"expected {expected}, found {got}", node)

    def channel(self, g: TypeEnv, s: QubitSet, f: ChanEnv, e: Expr) -> TChan:
        t = self.expr(g, s, f, e)
        if not isinstance(t, TChan):
            raise self.err(ErrorKind.NON_CHANNEL_SUBJECT, f"subject has type {t}, not a channel type", e)
        return t

    def send_args(
        self, g: TypeEnv, s: QubitSet, f: ChanEnv, formals, args, node, what: str
    ) -> tuple[TypeEnv, QubitSet]:
        """Type an argument tuple against ``formals``; returns the environment
        left after the qubit arguments are handed over."""
        if len(formals) != len(args):
            raise self.err(
                ErrorKind.MISMATCH, f"{what} expects {len(formals)} value(s), given {len(args)}", node
            )
        qubit_args = [a for t, a in zip(formals, args) if t == QBIT]
        refs = self.distinct_qubits(g, s, qubit_args, what)
        sent_vars = {n for kind, n in refs if kind == "var"}
        sent_qubits = frozenset(n for kind, n in refs if kind == "qubit")
        rest_g = {k: v for k, v in g.items() if k not in sent_vars}
        rest_s = s - sent_qubits
        for t, a in zip(formals, args):
            if t == QBIT:
                continue
            fn = free_names(a)
            used = (fn.variables & sent_vars) | (fn.qubits & sent_qubits)
            if used:
                raise self.err(ErrorKind.QUBIT_REUSE, f"{what}: qubit {sorted(used)[0]} is also sent", a)
            at = self.expr(rest_g, rest_s, f, a)
            if at == QBIT or not types_match(at, t):
                raise self.err(ErrorKind.MISMATCH, f"{what}: expected {t}, found {at}", a)
        return rest_g, rest_s

    # -- processes
    def proc(self, g: TypeEnv, s: QubitSet, f: ChanEnv, p: Proc) -> None:
        while True:
            if isinstance(p, Nil):
                return
            if isinstance(p, Par):
                g1, s1, g2, s2 = self.split(g, s, p)
                self.proc(g1, s1, f, p.left)
                g, s, p = g2, s2, p.right
            elif isinstance(p, Input):
                t = self.channel(g, s, f, p.chan)
                if len(t.payload) != len(p.binders):
                    raise self.err(
                        ErrorKind.MISMATCH,
                        f"channel carries {len(t.payload)} value(s), input binds {len(p.binders)}",
                        p,
                    )
                g = dict(g)
                for (name, bt), pt in zip(p.binders, t.payload):
                    _check_declared(bt, p.span)
                    if not types_match(bt, pt):
                        raise self.err(ErrorKind.MISMATCH, f"binder {name}: {bt} but channel carries {pt}", p)
                    g[name] = bt
                p = p.body
            elif isinstance(p, Output):
                t = self.channel(g, s, f, p.chan)
                g2, s2 = self.send_args(g, s, f, t.payload, p.args, p, "output")
                fn = free_names(p.body)
                reused = (fn.variables & (g.keys() - g2.keys())) | (fn.qubits & (s - s2))
                if reused:
                    raise self.err(
                        ErrorKind.QUBIT_REUSE,
                        f"qubit {sorted(reused)[0]} is used after being sent",
                        p.body if getattr(p.body, "span", None) else p,
                    )
                g, s, p = g2, s2, p.body
            elif isinstance(p, Action):
                self.expr(g, s, f, p.expr)
                p = p.body
            elif isinstance(p, NewChan):
                _check_declared(p.type, p.span)
                g = dict(g)
                g[p.name] = p.type
                p = p.body
            elif isinstance(p, NewQbit):
                g = dict(g)
                g[p.name] = QBIT
                p = p.body
            elif isinstance(p, IfProc):
                self.want(self.expr(g, s, f, p.cond), INT, p.cond)
                self.proc(g, s, f, p.then)
                p = p.orelse
            elif isinstance(p, Call):
                self.call(g, s, f, p)
                return
            else:
                raise TypeError(f"not a process: {p!r}")

    def call(self, g: TypeEnv, s: QubitSet, f: ChanEnv, p: Call) -> None:
        if self.program is None or p.name not in self.program:
            raise self.err(ErrorKind.UNBOUND, f"undefined process {p.name}", p)
        d = self.program[p.name]
        self.send_args(g, s, f, [t for _, t in d.params], p.args, p, f"call of {p.name}")

    def split(self, g: TypeEnv, s: QubitSet, p: Par) -> tuple[TypeEnv, QubitSet, TypeEnv, QubitSet]:
        """Give each linear entry to the branch that mentions it."""
        left, right = free_names(p.left), free_names(p.right)
        linear = {x for x, t in g.items() if t == QBIT}
        g_right = {x: t for x, t in g.items() if x not in linear or x in right.variables}
        g_left = {
            x: t for x, t in g.items()
            if x not in linear or x in left.variables or x not in right.variables
        }
        if env_sum(g_left, g_right) is None:
            shared = sorted(linear & left.variables & right.variables)
            raise self.err(
                ErrorKind.ENV_SUM_UNDEFINED,
                f"qubit {shared[0]} is used by both sides of a parallel composition",
                p,
            )
        shared_q = left.qubits & right.qubits
        if shared_q:
            raise self.err(
                ErrorKind.ENV_SUM_UNDEFINED,
                f"qubit {sorted(shared_q)[0]} is owned by both sides of a parallel composition",
                p,
            )
        return g_left, s - right.qubits, g_right, s & right.qubits


def type_expr(g: Mapping[str, CqpType], e: Expr) -> CqpType:
    return _Checker(None, internal=False).expr(dict(g), frozenset(), {}, e)


def type_expr_internal(g: Mapping[str, CqpType], s, f: Mapping[str, TChan], e: Expr) -> CqpType:
    return _Checker(None, internal=True).expr(dict(g), frozenset(s), dict(f), e)


def check_proc(g: Mapping[str, CqpType], p: Proc, defs: Program | None = None) -> None:
    """Raise :class:`CqpTypeError` unless ``Γ ⊢ P``."""
    _Checker(defs, internal=False).proc(dict(g), frozenset(), {}, p)


def check_internal(
    g: Mapping[str, CqpType],
    s,
    f: Mapping[str, TChan],
    p: Proc,
    defs: Program | None = None,
) -> None:
    """Raise :class:`CqpTypeError` unless ``Γ; Σ; Φ ⊢ P``."""
    _Checker(defs, internal=True).proc(dict(g), frozenset(s), dict(f), p)


def program_errors(program: Program) -> list[CqpTypeError]:
    errors = []
    checker = _Checker(program, internal=False)
    for d in program.definitions.values():
        try:
            for _, t in d.params:
                _check_declared(t, d.span)
            if d.body is not None:
                checker.proc(dict(d.params), frozenset(), {}, d.body)
        except CqpTypeError as exc:
            if exc.span is None:
                exc.span = d.span
            errors.append(exc)
    return errors


def check_program(program: Program) -> None:
    errors = program_errors(program)
    if errors:
        raise ProgramTypeError(errors)
