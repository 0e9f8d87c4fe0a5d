"""Probabilistic small-step semantics of CQP.

A configuration ``(σ; φ; P)`` reduces nondeterministically to one of a set of
probability distributions over configurations (:func:`proc_steps`); a
distribution then resolves probabilistically (:func:`prob_resolve`).

Structural congruence is handled by working on the flattened list of
top-level parallel components.  Scheduling order is the order in which the
components appear in the term, so step sets are stable across runs;
:func:`congruence_normalize` gives the canonical form used for merging.
"""
from __future__ import annotations

import dataclasses
import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import quantum as qm
from .ast import (
    PAULI_BY_INDEX,
    Action,
    BinOp,
    Call,
    ChannelName,
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
    Output,
    PairLit,
    PauliIndex,
    Proc,
    Program,
    QubitName,
    TChan,
    Transform,
    UnitLit,
    UnOp,
    Var,
    components,
    fq,
    fresh_name,
    is_value,
    par,
    proc_key,
    substitute,
)
from .parser import show_expr, show_proc
from .quantum import QState

log = logging.getLogger(__name__)

PROB_TOL = 1e-9


# ---------------------------------------------------------------------------
# Configurations and distributions


@dataclass(frozen=True, eq=False)
class Configuration:
    sigma: QState
    phi: Mapping[str, TChan]
    proc: Proc

    def render(self) -> str:
        chans = ", ".join(self.phi) if self.phi else "-"
        return f"{qm.render_state(self.sigma)} ; {chans} ; {show_proc(self.proc)}"


@dataclass(frozen=True)
class Branch:
    probability: float
    config: Configuration
    outcome: int | None = None


@dataclass(frozen=True)
class Distribution:
    branches: tuple[Branch, ...]

    def __post_init__(self) -> None:
        if not self.branches:
            raise ValueError("empty distribution")
        if any(b.probability <= 0 for b in self.branches):
            raise ValueError("branch probabilities must be positive")
        total = sum(b.probability for b in self.branches)
        if abs(total - 1) > PROB_TOL:
            raise ValueError(f"branch probabilities sum to {total}")

    @classmethod
    def point(cls, config: Configuration) -> "Distribution":
        return cls((Branch(1.0, config),))

    @property
    def trivial(self) -> bool:
        return len(self.branches) == 1


def prob_resolve(d: Distribution, u: float) -> tuple[Configuration, float]:
    """Branch ``i`` such that ``u`` falls in the ``i``-th cumulative interval."""
    cum = np.cumsum([b.probability for b in d.branches])
    i = min(int(np.searchsorted(cum, u, side="right")), len(d.branches) - 1)
    return d.branches[i].config, d.branches[i].probability


def congruence_normalize(p: Proc) -> Proc:
    """Canonical representative of ``p`` modulo the monoid laws of ``|``, at every depth."""
    comps = [_normalize_inside(c) for c in components(p)]
    comps.sort(key=lambda c: proc_key(c, sort_par=True))
    return par(comps)


def _normalize_inside(p: Proc) -> Proc:
    if isinstance(p, (Input, Output, Action, NewChan, NewQbit)):
        return dataclasses.replace(p, body=congruence_normalize(p.body))
    if isinstance(p, IfProc):
        return dataclasses.replace(p, then=congruence_normalize(p.then), orelse=congruence_normalize(p.orelse))
    return p


# ---------------------------------------------------------------------------
# Expression reduction


class Stuck(Exception):
    """An expression or process that cannot reduce although it is not a value."""


def _focus(e: Expr) -> tuple[Expr, Callable[[Expr], Expr]]:
    """Leftmost-innermost redex of a non-value ``e`` and the context around it."""
    if isinstance(e, IfExpr):
        if not is_value(e.cond):
            r, plug = _focus(e.cond)
            return r, lambda x: IfExpr(plug(x), e.then, e.orelse, e.span)
        return e, lambda x: x
    kids = _children(e)
    for k, c in enumerate(kids):
        if not is_value(c):
            r, plug = _focus(c)

            def plug_here(x: Expr, k=k, plug=plug) -> Expr:
                new = list(kids)
                new[k] = plug(x)
                return _rebuild(e, new)

            return r, plug_here
    return e, lambda x: x


def _children(e: Expr) -> tuple[Expr, ...]:
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
    if isinstance(e, PauliIndex):
        return (e.index,)
    return ()


def _rebuild(e: Expr, kids: list[Expr]) -> Expr:
    if isinstance(e, ListLit):
        return ListLit(tuple(kids), e.span)
    if isinstance(e, PairLit):
        return PairLit(kids[0], kids[1], e.span)
    if isinstance(e, Measure):
        return Measure(tuple(kids), e.span)
    if isinstance(e, Transform):
        return Transform(tuple(kids[:-1]), kids[-1], e.span)
    if isinstance(e, BinOp):
        return BinOp(e.op, kids[0], kids[1], e.span)
    if isinstance(e, UnOp):
        return UnOp(e.op, kids[0], e.span)
    if isinstance(e, PauliIndex):
        return PauliIndex(kids[0], e.span)
    raise TypeError(f"no children: {e!r}")


@dataclass(frozen=True, eq=False)
class Redex:
    """One reduction of an expression redex.

    ``outcomes`` lists ``(result, probability)``; ``build(result)`` gives
    the new state and expression.  Deterministic rules have one outcome
    with result ``None``.
    """

    rule: str
    detail: str
    outcomes: tuple[tuple[int | None, float], ...] | Callable[[], tuple]
    build: Callable[[int | None], tuple[QState, Expr]]
    measure_site: str | None = None


def _qubit_names(args: Sequence[Expr], what: str) -> list[str]:
    names = []
    for a in args:
        if not isinstance(a, QubitName):
            raise Stuck(f"{what} of non-qubit value {show_expr(a)}")
        names.append(a.name)
    if len(set(names)) != len(names):
        raise Stuck(f"{what} with repeated qubit {names}")
    return names


def _int(v: Expr, what: str) -> int:
    if not isinstance(v, IntLit):
        raise Stuck(f"{what} expects an integer, got {show_expr(v)}")
    return v.value


def _det(rule: str, detail: str, sigma: QState, value: Expr) -> Redex:
    return Redex(rule, detail, ((None, 1.0),), lambda _m: (sigma, value))


def reduce_redex(sigma: QState, r: Expr) -> Redex:
    """Apply the rule for a redex whose strict subterms are values."""
    if isinstance(r, Var):
        raise Stuck(f"free variable {r.name}")
    if isinstance(r, Measure):
        names = _qubit_names(r.args, "measure")
        site = f"{r.span}" if r.span else "measure"
        return Redex(
            "R-Measure",
            "measure " + ",".join(names),
            lambda: tuple(qm.measure_probabilities(sigma, names)),
            lambda m: (qm.collapse(sigma, names, m), IntLit(m)),
            measure_site=site,
        )
    if isinstance(r, Transform):
        names = _qubit_names(r.targets, "transform")
        if not isinstance(r.gate, GateConst):
            raise Stuck(f"transform by non-operator {show_expr(r.gate)}")
        u = qm.builtin_gate(r.gate.name)
        if u.arity != len(names):
            raise Stuck(f"{r.gate.name} acts on {u.arity} qubit(s), given {len(names)}")
        return Redex(
            "R-Trans",
            f"{','.join(names)} *= {r.gate.name}",
            ((None, 1.0),),
            lambda _m: (qm.apply_unitary(sigma, names, u), UnitLit()),
        )
    if isinstance(r, BinOp):
        a, b = r.left, r.right
        if r.op == "+":
            return _det("R-Plus", f"{show_expr(r)}", sigma, IntLit(_int(a, "+") + _int(b, "+")))
        if r.op == "-":
            return _det("R-Minus", f"{show_expr(r)}", sigma, IntLit(_int(a, "-") - _int(b, "-")))
        if r.op == "=":
            return _det("R-Equals", f"{show_expr(r)}", sigma, IntLit(int(a == b)))
        if not isinstance(a, ListLit) or not isinstance(b, ListLit):
            raise Stuck(f"append of non-lists {show_expr(r)}")
        return _det("R-Append", "@", sigma, ListLit(a.items + b.items, r.span))
    if isinstance(r, UnOp):
        v = r.arg
        if r.op in ("hd", "tl", "length"):
            if not isinstance(v, ListLit):
                raise Stuck(f"{r.op} of non-list {show_expr(v)}")
            if r.op == "length":
                return _det("R-Length", "length", sigma, IntLit(len(v.items)))
            if not v.items:
                raise Stuck(f"{r.op} of empty list")
            out = v.items[0] if r.op == "hd" else ListLit(v.items[1:], v.span)
            return _det("R-Hd" if r.op == "hd" else "R-Tl", r.op, sigma, out)
        if not isinstance(v, PairLit):
            raise Stuck(f"{r.op} of non-pair {show_expr(v)}")
        return _det("R-Fst" if r.op == "fst" else "R-Snd", r.op, sigma,
                    v.left if r.op == "fst" else v.right)
    if isinstance(r, IfExpr):
        c = _int(r.cond, "if")
        return _det("R-IfExpr", "then" if c else "else", sigma, r.then if c else r.orelse)
    if isinstance(r, PauliIndex):
        k = _int(r.index, "sigma")
        if not 0 <= k < 4:
            raise Stuck(f"sigma({k}) out of range")
        return _det("R-Sigma", f"sigma({k})", sigma, GateConst(PAULI_BY_INDEX[k]))
    raise Stuck(f"no rule for {show_expr(r)}")


def expr_step(c: Configuration, e: Expr) -> list[tuple[float, QState, Expr]]:
    """One ``->e`` step of ``e`` under ``c.sigma``: branches ``(p, σ', e')``."""
    if is_value(e):
        raise ValueError("expression is already a value")
    r, plug = _focus(e)
    red = reduce_redex(c.sigma, r)
    outcomes = red.outcomes() if callable(red.outcomes) else red.outcomes
    out = []
    for m, p in outcomes:
        s2, v = red.build(m)
        out.append((p, s2, plug(v)))
    return out


# ---------------------------------------------------------------------------
# Process steps


@dataclass(eq=False)
class StepChoice:
    """One enabled redex.  Outcomes and ``result`` are computed on first access."""

    rule: str
    label: str
    components: tuple[int, ...]
    error: str | None = None
    _outcomes: tuple[tuple[int | None, float], ...] | Callable[[], tuple] = field(default=(), repr=False)
    build: Callable[[int | None], Configuration] | None = field(default=None, repr=False)
    measure_site: str | None = None
    _result: Distribution | None = field(default=None, repr=False)

    @property
    def outcomes(self) -> tuple[tuple[int | None, float], ...]:
        """``(result, probability)`` pairs; result is ``None`` for deterministic rules."""
        if callable(self._outcomes):
            self._outcomes = self._outcomes()
        return self._outcomes

    @property
    def probabilistic(self) -> bool:
        return len(self.outcomes) > 1

    @property
    def result(self) -> Distribution:
        if self.error is not None or self.build is None:
            raise ValueError(f"error outcome: {self.error}")
        if self._result is None:
            self._result = Distribution(
                tuple(Branch(p, self.build(m), m) for m, p in self.outcomes)
            )
        return self._result

    def branch(self, k: int) -> Branch:
        """The ``k``-th branch, building only that configuration."""
        if self._result is not None:
            return self._result.branches[k]
        if self.error is not None or self.build is None:
            raise ValueError(f"error outcome: {self.error}")
        m, p = self.outcomes[k]
        return Branch(p, self.build(m), m)

    def resolve(self, u: float) -> Branch:
        cum = np.cumsum([p for _, p in self.outcomes])
        return self.branch(min(int(np.searchsorted(cum, u, side="right")), len(self.outcomes) - 1))


def _communicate(out: Output, inp: Input) -> tuple[Proc, Proc]:
    """Continuations of a sender and receiver after R-Com."""
    subs = {name: v for (name, _), v in zip(inp.binders, out.args)}
    return out.body, substitute(inp.body, subs)


def _expr_slot(p: Proc) -> tuple[Expr, Callable[[Expr], Proc]] | None:
    """The first unevaluated expression position of ``p`` in an F-context."""
    if isinstance(p, Input):
        if not is_value(p.chan):
            return p.chan, lambda x: Input(x, p.binders, p.body, p.span)
        return None
    if isinstance(p, Output):
        if not is_value(p.chan):
            return p.chan, lambda x: Output(x, p.args, p.body, p.span)
        for k, a in enumerate(p.args):
            if not is_value(a):
                return a, lambda x, k=k: Output(p.chan, p.args[:k] + (x,) + p.args[k + 1:], p.body, p.span)
        return None
    if isinstance(p, Action):
        if not is_value(p.expr):
            return p.expr, lambda x: Action(x, p.body, p.span)
        return None
    if isinstance(p, IfProc):
        if not is_value(p.cond):
            return p.cond, lambda x: IfProc(x, p.then, p.orelse, p.span)
        return None
    if isinstance(p, Call):
        for k, a in enumerate(p.args):
            if not is_value(a):
                return a, lambda x, k=k: Call(p.name, p.args[:k] + (x,) + p.args[k + 1:], p.span)
        return None
    return None


def _with(comps: list[Proc], replace: Mapping[int, Proc]) -> Proc:
    return par(replace.get(k, c) for k, c in enumerate(comps))


def _head(p: Proc) -> str:
    """Short description of a component for labels."""
    if isinstance(p, Call):
        return p.name
    text = show_proc(p)
    return text if len(text) <= 40 else text[:37] + "..."


def _local_step(c: Configuration, comps: list[Proc], i: int, program: Program | None) -> StepChoice | None:
    p = comps[i]
    sigma, phi = c.sigma, c.phi
    slot = _expr_slot(p)
    if slot is not None:
        e, plug_proc = slot
        try:
            r, plug = _focus(e)
            red = reduce_redex(sigma, r)
        except Stuck as exc:
            return StepChoice("R-Expr", f"#{i} stuck", (i,), error=str(exc))
        except qm.QuantumError as exc:
            return StepChoice("R-Expr", f"#{i} stuck", (i,), error=str(exc))

        def build(m, red=red, plug=plug, plug_proc=plug_proc) -> Configuration:
            s2, v = red.build(m)
            return Configuration(s2, phi, _with(comps, {i: plug_proc(plug(v))}))

        return StepChoice(
            red.rule, f"#{i} {red.rule} {red.detail}", (i,),
            _outcomes=red.outcomes, build=build, measure_site=red.measure_site,
        )
    det = ((None, 1.0),)
    if isinstance(p, Action):
        return StepChoice(
            "R-Act", f"#{i} R-Act", (i,), _outcomes=det,
            build=lambda _m: Configuration(sigma, phi, _with(comps, {i: p.body})),
        )
    if isinstance(p, NewChan):
        name = fresh_name(p.name, set(phi))

        def build_new(_m) -> Configuration:
            phi2 = dict(phi)
            phi2[name] = p.type
            body = substitute(p.body, {p.name: ChannelName(name)})
            return Configuration(sigma, phi2, _with(comps, {i: body}))

        return StepChoice("R-New", f"#{i} R-New {name}", (i,), _outcomes=det, build=build_new)
    if isinstance(p, NewQbit):
        name = fresh_name(p.name, set(sigma.order))

        def build_qbit(_m) -> Configuration:
            body = substitute(p.body, {p.name: QubitName(name)})
            return Configuration(qm.allocate(sigma, name), phi, _with(comps, {i: body}))

        return StepChoice("R-Qbit", f"#{i} R-Qbit {name}", (i,), _outcomes=det, build=build_qbit)
    if isinstance(p, IfProc):
        if not isinstance(p.cond, IntLit):
            return StepChoice("R-If", f"#{i} stuck", (i,), error=f"condition {show_expr(p.cond)} is not an integer")
        branch = p.then if p.cond.value else p.orelse
        return StepChoice(
            "R-If", f"#{i} R-If {'then' if p.cond.value else 'else'}", (i,), _outcomes=det,
            build=lambda _m: Configuration(sigma, phi, _with(comps, {i: branch})),
        )
    if isinstance(p, Call):
        if program is None or p.name not in program:
            return StepChoice("R-Call", f"#{i} stuck", (i,), error=f"undefined process {p.name}")
        d = program[p.name]
        if d.abstract:
            return None
        if len(d.params) != len(p.args):
            return StepChoice("R-Call", f"#{i} stuck", (i,), error=f"{p.name} called with {len(p.args)} argument(s)")

        def build_call(_m) -> Configuration:
            body = substitute(d.body, {n: a for (n, _), a in zip(d.params, p.args)})
            return Configuration(sigma, phi, _with(comps, {i: body}))

        return StepChoice("R-Call", f"#{i} R-Call {p.name}", (i,), _outcomes=det, build=build_call)
    if isinstance(p, (Input, Output)) and not isinstance(p.chan, ChannelName):
        return StepChoice(
            "R-Com", f"#{i} stuck", (i,),
            error=f"subject {show_expr(p.chan)} is not a channel name",
        )
    return None


def proc_steps(c: Configuration, program: Program | None = None) -> list[StepChoice]:
    """All enabled redexes of ``c``.  An empty list means ``c`` is terminal.

    Local steps come first, by component; communications follow, ordered
    by sender and then by receiver.
    """
    comps = components(c.proc)
    choices = []
    for i in range(len(comps)):
        ch = _local_step(c, comps, i, program)
        if ch is not None:
            choices.append(ch)
    senders = [i for i, p in enumerate(comps) if isinstance(p, Output) and isinstance(p.chan, ChannelName)
               and all(is_value(a) for a in p.args)]
    receivers = [i for i, p in enumerate(comps) if isinstance(p, Input) and isinstance(p.chan, ChannelName)]
    for i in senders:
        out = comps[i]
        for j in receivers:
            inp = comps[j]
            if inp.chan.name != out.chan.name:
                continue
            label = f"#{i}->#{j} R-Com {out.chan.name}"
            if len(inp.binders) != len(out.args):
                choices.append(StepChoice(
                    "R-Com", label, (i, j),
                    error=f"arity mismatch on {out.chan.name}: sends {len(out.args)}, receives {len(inp.binders)}",
                ))
                continue

            def build_com(_m, i=i, j=j, out=out, inp=inp) -> Configuration:
                p1, p2 = _communicate(out, inp)
                return Configuration(c.sigma, c.phi, _with(comps, {i: p1, j: p2}))

            choices.append(StepChoice("R-Com", label, (i, j), _outcomes=((None, 1.0),), build=build_com))
    return choices


# ---------------------------------------------------------------------------
# Invariants


@dataclass(frozen=True)
class InvariantViolation:
    rule: str
    label: str
    branch: int
    check: str
    message: str

    def __str__(self) -> str:
        return f"{self.label} (branch {self.branch}): {self.check}: {self.message}"


def invariant_check(
    before: Configuration, choice: StepChoice, program: Program | None = None
) -> list[InvariantViolation]:
    """Type preservation, unique ownership, unit norm and domain growth after one step."""
    from .typecheck import CqpTypeError, check_internal

    if choice.error is not None:
        return [InvariantViolation(choice.rule, choice.label, -1, "error-outcome", choice.error)]
    out = []
    for k, b in enumerate(choice.result.branches):
        c = b.config

        def bad(check: str, msg: str) -> None:
            out.append(InvariantViolation(choice.rule, choice.label, k, check, msg))

        try:
            check_internal({}, c.sigma.order, c.phi, c.proc, program)
        except CqpTypeError as exc:
            bad("type-preservation", f"{exc.kind.value}: {exc.message}")
        seen: dict[str, int] = {}
        for idx, comp in enumerate(components(c.proc)):
            for q in fq(comp):
                if q in seen:
                    bad("unique-ownership", f"qubit {q} owned by components #{seen[q]} and #{idx}")
                seen[q] = idx
        norm = c.sigma.norm()
        if abs(norm - 1) > 1e-10:
            bad("unit-norm", f"state norm {norm!r}")
        old_q, new_q = before.sigma.order, c.sigma.order
        grow_q = 1 if choice.rule == "R-Qbit" else 0
        if sorted(new_q[: len(old_q)]) != sorted(old_q) or len(new_q) != len(old_q) + grow_q:
            bad("domain", f"qubits {old_q} became {new_q} under {choice.rule}")
        grow_c = 1 if choice.rule == "R-New" else 0
        if any(before.phi.get(n) != t for n, t in c.phi.items() if n in before.phi) \
                or not set(before.phi) <= set(c.phi) or len(c.phi) != len(before.phi) + grow_c:
            bad("domain", f"channels {list(before.phi)} became {list(c.phi)} under {choice.rule}")
    return out


# ---------------------------------------------------------------------------
# Exhaustive exploration


@dataclass
class Edge:
    label: str
    to: int
    p: float | None = None
    rule: str = ""
    outcome: int | None = None


@dataclass
class ExecNode:
    id: int
    config: Configuration
    kind: str  # nondet | prob | terminal | error | truncated
    depth: int
    edges: list[Edge] = field(default_factory=list)
    error: str | None = None


def _state_key(s: QState) -> tuple:
    order = sorted(s.order)
    t = qm.permute(s, order) if tuple(order) != s.order else s
    re_ = np.rint(t.amps.real * 1e9).astype(np.int64)
    im = np.rint(t.amps.imag * 1e9).astype(np.int64)
    return tuple(order), re_.tobytes(), im.tobytes()


def config_key(c: Configuration) -> tuple:
    phi = tuple(sorted((n, str(t)) for n, t in c.phi.items()))
    return _state_key(c.sigma), phi, proc_key(c.proc, sort_par=True)


@dataclass
class ExecutionTree:
    nodes: list[ExecNode]
    truncated: bool = False
    violations: list[InvariantViolation] = field(default_factory=list)
    steps_checked: int = 0

    @property
    def root(self) -> ExecNode:
        return self.nodes[0]

    def leaves(self, kinds: Iterable[str] = ("terminal",)) -> list[ExecNode]:
        kinds = set(kinds)
        return [n for n in self.nodes if n.kind in kinds]

    def _bounds(self, value: Callable[[ExecNode], tuple[float, float]]) -> dict[int, tuple[float, float]]:
        """Min and max over schedulers of the expected leaf value, per node."""
        memo: dict[int, tuple[float, float]] = {}
        on_stack: set[int] = set()
        for start in range(len(self.nodes) - 1, -1, -1):
            if start in memo:
                continue
            stack = [(start, False)]
            while stack:
                nid, expanded = stack.pop()
                node = self.nodes[nid]
                if nid in memo:
                    continue
                if not node.edges:
                    memo[nid] = value(node)
                    continue
                if not expanded:
                    on_stack.add(nid)
                    stack.append((nid, True))
                    for e in node.edges:
                        if e.to not in memo and e.to not in on_stack:
                            stack.append((e.to, False))
                    continue
                on_stack.discard(nid)
                kids = [memo.get(e.to, (0.0, 1.0)) for e in node.edges]
                if node.kind == "prob":
                    lo = sum(e.p * k[0] for e, k in zip(node.edges, kids))
                    hi = sum(e.p * k[1] for e, k in zip(node.edges, kids))
                else:
                    lo = min(k[0] for k in kids)
                    hi = max(k[1] for k in kids)
                memo[nid] = (lo, hi)
        return memo

    def probability_bounds(self, pred: Callable[[ExecNode], bool]) -> tuple[float, float]:
        """Min/max probability, over schedulers, of ending in a leaf satisfying ``pred``.

        Truncated leaves count as unknown (0 for min, 1 for max).
        """
        def value(n: ExecNode) -> tuple[float, float]:
            if n.kind == "truncated":
                return (0.0, 1.0)
            ok = float(pred(n))
            return (ok, ok)

        return self._bounds(value)[0]

    def leaf_probabilities(self) -> dict[int, tuple[float, float]]:
        """Per terminal or error leaf: min/max probability of reaching it."""
        return {
            n.id: self.probability_bounds(lambda m, target=n.id: m.id == target)
            for n in self.leaves(("terminal", "error"))
        }

    def to_json(self) -> dict:
        return {
            "truncated": self.truncated,
            "nodes": [
                {
                    "id": n.id,
                    "state": qm.render_state(n.config.sigma),
                    "phi": {k: str(t) for k, t in n.config.phi.items()},
                    "process": show_proc(n.config.proc),
                    "kind": n.kind,
                    **({"error": n.error} if n.error else {}),
                    "edges": [
                        {"label": e.label, **({"p": e.p} if e.p is not None else {}), "to": e.to}
                        for e in n.edges
                    ],
                }
                for n in self.nodes
            ],
        }

    def render_text(self) -> str:
        lines = []
        for n in self.nodes:
            lines.append(f"node {n.id} [{n.kind}] {n.config.render()}")
            if n.error:
                lines.append(f"  error: {n.error}")
            for e in n.edges:
                p = f" p={qm._fmt(e.p)}" if e.p is not None else ""
                lines.append(f"  -> {e.to}{p} {e.label}")
        return "\n".join(lines) + "\n"


def explore(
    c0: Configuration,
    program: Program | None = None,
    max_depth: int = 1000,
    max_nodes: int = 100_000,
    merge: bool = True,
    check_invariants: bool = False,
) -> ExecutionTree:
    """Breadth-first expansion of the execution graph from ``c0``.

    With ``merge`` congruent configurations share a node, so the result is
    a DAG.  Nodes left unexpanded because of a limit have kind ``truncated``.
    """
    nodes: list[ExecNode] = []
    index: dict[tuple, int] = {}
    tree = ExecutionTree(nodes)

    def add(config: Configuration, depth: int, kind: str = "?") -> int:
        if merge and kind == "?":
            key = config_key(config)
            if key in index:
                return index[key]
        nid = len(nodes)
        nodes.append(ExecNode(nid, config, kind, depth))
        if merge and kind == "?":
            index[key] = nid
        queue.append(nid)
        return nid

    queue: deque[int] = deque()
    add(c0, 0)
    while queue:
        nid = queue.popleft()
        node = nodes[nid]
        if node.kind == "prob":
            continue
        if len(nodes) > max_nodes or node.depth >= max_depth:
            choices = proc_steps(node.config, program)
            node.kind = "truncated" if choices else "terminal"
            tree.truncated |= bool(choices)
            continue
        choices = proc_steps(node.config, program)
        if not choices:
            node.kind = "terminal"
            continue
        node.kind = "nondet"
        for ch in choices:
            if ch.error is not None:
                err = len(nodes)
                nodes.append(ExecNode(err, node.config, "error", node.depth + 1, error=ch.error))
                node.edges.append(Edge(ch.label, err, None, ch.rule))
                continue
            if check_invariants:
                tree.violations.extend(invariant_check(node.config, ch, program))
                tree.steps_checked += 1
            dist = ch.result
            if dist.trivial:
                to = add(dist.branches[0].config, node.depth + 1)
                node.edges.append(Edge(ch.label, to, None, ch.rule))
                continue
            pid = len(nodes)
            nodes.append(ExecNode(pid, node.config, "prob", node.depth + 1))
            node.edges.append(Edge(ch.label, pid, None, ch.rule))
            for b in dist.branches:
                to = add(b.config, node.depth + 1)
                nodes[pid].edges.append(Edge(f"{ch.rule} -> {b.outcome}", to, b.probability, ch.rule, b.outcome))
    return tree


# ---------------------------------------------------------------------------
# Sampling


class ScriptError(Exception):
    pass


class Scheduler:
    """Resolves nondeterministic choices; probabilistic ones use the draw."""

    def choose(self, choices: list[StepChoice], rng: np.random.Generator) -> int:
        raise NotImplementedError

    def resolve(self, choice: StepChoice, rng: np.random.Generator) -> int:
        if len(choice.outcomes) == 1:
            return 0
        u = rng.random()
        cum = np.cumsum([p for _, p in choice.outcomes])
        return min(int(np.searchsorted(cum, u, side="right")), len(cum) - 1)

    def finish(self) -> None:
        pass


class FirstRedex(Scheduler):
    def choose(self, choices, rng) -> int:
        return 0


class UniformRandom(Scheduler):
    def choose(self, choices, rng) -> int:
        return int(rng.integers(len(choices))) if len(choices) > 1 else 0


class Scripted(Scheduler):
    """Takes the next script entry at every point with more than one option."""

    def __init__(self, script: Sequence[int]):
        self.script = list(script)
        self.pos = 0

    def _next(self, n: int, what: str) -> int:
        if self.pos >= len(self.script):
            raise ScriptError(f"script exhausted at a {what} choice among {n} options")
        k = self.script[self.pos]
        self.pos += 1
        if not 0 <= k < n:
            raise ScriptError(f"script entry {self.pos} is {k}; only {n} options")
        return k

    def choose(self, choices, rng) -> int:
        return self._next(len(choices), "scheduling") if len(choices) > 1 else 0

    def resolve(self, choice, rng) -> int:
        return self._next(len(choice.outcomes), "probabilistic") if len(choice.outcomes) > 1 else 0

    def finish(self) -> None:
        if self.pos != len(self.script):
            raise ScriptError(f"{len(self.script) - self.pos} script entries left over")


@dataclass(frozen=True)
class TraceStep:
    rule: str
    label: str
    choice: int
    n_choices: int
    outcome: int | None
    probability: float | None
    config: Configuration
    measure_site: str | None = None


@dataclass
class Trace:
    initial: Configuration
    steps: list[TraceStep]
    final: Configuration
    status: str  # terminal | error | max-steps
    error: str | None = None

    def measurements(self) -> list[tuple[str, int, float]]:
        return [(s.measure_site or s.label, s.outcome, s.probability)
                for s in self.steps if s.rule == "R-Measure"]

    def render(self) -> str:
        lines = [f"start {self.initial.render()}"]
        for k, s in enumerate(self.steps, 1):
            pick = f" [{s.choice}/{s.n_choices}]" if s.n_choices > 1 else ""
            prob = f" p={qm._fmt(s.probability)} m={s.outcome}" if s.probability is not None else ""
            lines.append(f"{k}. {s.label}{pick}{prob}")
            lines.append(f"   {s.config.render()}")
        lines.append(f"end {self.status}" + (f": {self.error}" if self.error else ""))
        return "\n".join(lines) + "\n"


def sample(
    c0: Configuration,
    program: Program | None = None,
    scheduler: Scheduler | None = None,
    seed: int | None = 0,
    max_steps: int = 100_000,
    rng: np.random.Generator | None = None,
    record: bool = True,
) -> Trace:
    """One maximal run.  Reproducible for a fixed seed and scheduler."""
    scheduler = scheduler or UniformRandom()
    rng = rng if rng is not None else np.random.default_rng(seed)
    c = c0
    steps: list[TraceStep] = []
    for _ in range(max_steps):
        choices = proc_steps(c, program)
        if not choices:
            scheduler.finish()
            return Trace(c0, steps, c, "terminal")
        k = scheduler.choose(choices, rng)
        ch = choices[k]
        if ch.error is not None:
            return Trace(c0, steps, c, "error", f"{ch.label}: {ch.error}")
        j = scheduler.resolve(ch, rng)
        b = ch.branch(j)
        prob = b.probability if ch.probabilistic else None
        if record or ch.rule == "R-Measure":
            steps.append(TraceStep(ch.rule, ch.label, k, len(choices), b.outcome, prob,
                                   b.config if record else None, ch.measure_site))
        c = b.config
    return Trace(c0, steps, c, "max-steps", f"no terminal configuration within {max_steps} steps")


# ---------------------------------------------------------------------------
# Verdict helpers


def abstract_calls(p: Proc, program: Program | None) -> list[str]:
    """Rendered calls to opaque processes among the top-level components."""
    out = []
    for comp in components(p):
        if isinstance(comp, Call) and program is not None and comp.name in program \
                and program[comp.name].abstract:
            out.append(show_proc(comp))
    return sorted(out)


def classify(trace: Trace, program: Program | None) -> str:
    if trace.status != "terminal":
        return trace.status
    calls = abstract_calls(trace.final.proc, program)
    return " | ".join(calls) if calls else "0"


def tally(items: Iterator[str] | Iterable[str]) -> dict[str, int]:
    return dict(sorted(Counter(items).items()))


# ---------------------------------------------------------------------------
# Initial configurations

NORM_REJECT = 1e-6
NORM_WARN = 1e-12


class InitError(ValueError):
    pass


def initial_state(groups) -> QState:
    """Tensor product of the declared qubit groups, in declaration order."""
    s = QState.empty()
    for names, amps in groups:
        vec = np.array(amps, dtype=complex)
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1) > NORM_REJECT:
            raise InitError(f"state of {','.join(names)} has norm {norm:.9g}")
        if abs(norm - 1) > NORM_WARN:
            log.warning("renormalising state of %s (norm %.15g)", ",".join(names), norm)
            vec = vec / norm
        s = s.tensor(QState(tuple(names), vec))
    return s


def initial_configuration(program: Program, init=None, entry: str | None = None) -> Configuration:
    """``(σ0; ∅; Entry(args))`` from an init block.

    Entry arguments default to the parameter names.  A variable argument
    naming a declared qubit becomes that qubit; an undeclared variable
    passed for a ``Qbit`` parameter is allocated in ``|0>``.
    """
    from .ast import QBIT

    init = init if init is not None else program.init
    name = entry or (init.entry if init is not None and init.entry else "System")
    if name not in program:
        raise InitError(f"entry process {name} is not defined")
    d = program[name]
    if init is not None and init.entry == name and init.args:
        args = list(init.args)
    else:
        args = [Var(n) for n, _ in d.params]
    if len(args) != len(d.params):
        raise InitError(f"{name} takes {len(d.params)} argument(s), {len(args)} given")
    groups = list(init.groups) if init is not None else []
    declared = {q for names, _ in groups for q in names}
    for a, (_, t) in zip(args, d.params):
        if isinstance(a, Var) and a.name not in declared and t == QBIT:
            groups.append(((a.name,), (1, 0)))
            declared.add(a.name)
    resolved = tuple(QubitName(a.name) if isinstance(a, Var) and a.name in declared else a for a in args)
    return Configuration(initial_state(groups), {}, Call(name, resolved))
