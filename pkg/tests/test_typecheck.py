import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cqp.ast import (
    INT,
    QBIT,
    UNIT,
    UNKNOWN,
    Action,
    ChannelName,
    GateConst,
    Nil,
    Output,
    QubitName,
    TChan,
    TList,
    TOp,
    TProd,
    Transform,
    fc,
    fq,
    fv,
    par,
    components,
)
from cqp.parser import parse_expr, parse_proc, parse_program
from cqp.semantics import explore, initial_configuration
from cqp.typecheck import (
    CqpTypeError,
    ErrorKind,
    ProgramTypeError,
    check_internal,
    check_proc,
    check_program,
    env_add,
    env_sum,
    program_errors,
    type_expr,
    type_expr_internal,
)

from conftest import CORPUS, MAIN_PROGRAMS, load
from strategies import procs

CH_Q = TChan((QBIT,))
CH_I = TChan((INT,))
types = st.sampled_from([INT, QBIT, UNIT, CH_I, CH_Q, TList(INT)])
envs = st.dictionaries(st.sampled_from("abcdef"), types, max_size=4)


def kind_of(fn, *args):
    with pytest.raises(CqpTypeError) as exc:
        fn(*args)
    return exc.value.kind


class TestEnvironments:
    def test_add_fresh(self):
        assert env_add({}, "x", QBIT) == {"x": QBIT}

    def test_shared_classical(self):
        assert env_add({"n": INT}, "n", INT) == {"n": INT}

    def test_qubit_cannot_be_shared(self):
        assert env_add({"q": QBIT}, "q", QBIT) is None

    def test_conflicting_types(self):
        assert env_add({"n": INT}, "n", CH_I) is None

    def test_sum(self):
        assert env_sum({"x": QBIT, "c": CH_Q}, {"y": QBIT, "c": CH_Q}) == {"x": QBIT, "y": QBIT, "c": CH_Q}
        assert env_sum({"x": QBIT}, {"x": QBIT}) is None

    @given(envs, envs)
    def test_sum_commutative(self, g1, g2):
        assert env_sum(g1, g2) == env_sum(g2, g1)

    @given(envs, envs, envs)
    def test_sum_associative(self, g1, g2, g3):
        left = env_sum(g1, g2)
        right = env_sum(g2, g3)
        a = None if left is None else env_sum(left, g3)
        b = None if right is None else env_sum(g1, right)
        assert a == b

    @given(envs)
    def test_empty_is_unit(self, g):
        assert env_sum(g, {}) == g and env_sum({}, g) == g


class TestExpressions:
    @pytest.mark.parametrize("text, expected", [
        ("1 + 2", INT), ("measure x", INT), ("x *= H", UNIT), ("[1, 2]", TList(INT)),
        ("[]", TList(UNKNOWN)), ("(1, [])", TProd(INT, TList(UNKNOWN))), ("hd([1])", INT),
        ("if 1 then 2 else 3", INT), ("sigma(1)", TOp(1)), ("H", TOp(1)), ("CNot", TOp(2)),
        ("unit", UNIT), ("[1] @ []", TList(INT)),
    ])
    def test_types(self, text, expected):
        assert type_expr({"x": QBIT}, parse_expr(text)) == expected

    def test_unbound(self):
        assert kind_of(type_expr, {}, parse_expr("1 + x")) == ErrorKind.UNBOUND

    def test_qubit_in_pair(self):
        assert kind_of(type_expr, {"x": QBIT}, parse_expr("(1, x)")) == ErrorKind.MISMATCH

    def test_gate_arity(self):
        assert kind_of(type_expr, {"x": QBIT, "y": QBIT}, parse_expr("x, y *= H")) == ErrorKind.GATE_ARITY

    def test_duplicate_targets(self):
        e = parse_expr("x, x *= CNot")
        assert kind_of(type_expr, {"x": QBIT}, e) == ErrorKind.DUPLICATE_QUBIT_ARG

    def test_runtime_names_only_internal(self):
        assert kind_of(type_expr, {}, QubitName("q")) == ErrorKind.MISMATCH
        assert type_expr_internal({}, {"q"}, {}, QubitName("q")) == QBIT
        assert type_expr_internal({}, set(), {"k": CH_Q}, ChannelName("k")) == CH_Q

    @given(st.sampled_from(["1 + n", "[n] @ [2]", "if n = 0 then 1 else n", "measure x", "x *= H"]),
           envs)
    def test_weakening(self, text, extra):
        g = {"n": INT, "x": QBIT}
        assume(not set(extra) & set(g))
        e = parse_expr(text)
        assert type_expr({**g, **extra}, e) == type_expr(g, e)


class TestProcesses:
    def test_send_transfers_ownership(self):
        check_proc({"c": CH_Q, "q": QBIT}, parse_proc("c![q].0"))

    def test_reuse_after_send(self):
        p = parse_proc("c![q].{q *= H}.0")
        assert kind_of(check_proc, {"c": CH_Q, "q": QBIT}, p) == ErrorKind.QUBIT_REUSE

    def test_parallel_split(self):
        check_proc({"c": CH_Q, "x": QBIT, "y": QBIT}, parse_proc("c![x].0 | c![y].0"))

    def test_parallel_sharing(self):
        p = parse_proc("c![x].0 | {x *= H}.0")
        assert kind_of(check_proc, {"c": CH_Q, "x": QBIT}, p) == ErrorKind.ENV_SUM_UNDEFINED

    def test_classical_shared(self):
        check_proc({"c": CH_I, "n": INT}, parse_proc("c![n].0 | c![n + 1].0"))

    def test_receive_binds(self):
        check_proc({"c": CH_Q}, parse_proc("c?[y:Qbit].{y *= H}.0"))

    def test_receive_type_mismatch(self):
        p = parse_proc("c?[y:Int].0")
        assert kind_of(check_proc, {"c": CH_Q}, p) == ErrorKind.MISMATCH

    def test_new_and_qbit(self):
        check_proc({}, parse_proc("(new c:^[Qbit])(qbit q)(c![q].0 | c?[z:Qbit].{z *= H}.0)"))

    def test_non_channel_subject(self):
        assert kind_of(check_proc, {"n": INT}, parse_proc("n?[x:Int].0")) == ErrorKind.NON_CHANNEL_SUBJECT

    def test_measure_then_send_result(self):
        check_proc({"c": CH_I, "x": QBIT}, parse_proc("c![measure x].{x *= H}.0"))

    def test_if_branches_share(self):
        check_proc({"c": CH_Q, "q": QBIT, "n": INT}, parse_proc("if n = 0 then c![q].0 else {q *= H}.0"))

    def test_internal_ownership(self):
        p = par([Output(ChannelName("k"), (QubitName("q"),), Nil()),
                 Action(Transform((QubitName("q"),), GateConst("H")), Nil())])
        with pytest.raises(CqpTypeError) as exc:
            check_internal({}, {"q"}, {"k": CH_Q}, p)
        assert exc.value.kind == ErrorKind.ENV_SUM_UNDEFINED

    def test_internal_unknown_qubit(self):
        p = Action(Transform((QubitName("r"),), GateConst("H")), Nil())
        with pytest.raises(CqpTypeError):
            check_internal({}, {"q"}, {}, p)


# Runtime terms over three qubits: each component sends or transforms one qubit.
runtime_components = st.lists(
    st.tuples(st.booleans(), st.sampled_from(["q0", "q1", "q2"])), min_size=1, max_size=4)


def runtime_term(layout):
    comps = [Output(ChannelName("k"), (QubitName(q),), Nil()) if send
             else Action(Transform((QubitName(q),), GateConst("H")), Nil())
             for send, q in layout]
    return par(comps)


class TestInvariants:
    @given(runtime_components)
    def test_unique_ownership(self, layout):
        p = runtime_term(layout)
        owners = [q for _, q in layout]
        try:
            check_internal({}, {"q0", "q1", "q2"}, {"k": CH_Q}, p)
            typed = True
        except CqpTypeError:
            typed = False
        assert typed == (len(set(owners)) == len(owners))
        if typed:
            comps = components(p)
            for i, a in enumerate(comps):
                for b in comps[i + 1:]:
                    assert not fq(a) & fq(b)

    @given(procs)
    @settings(max_examples=300)
    def test_free_names_bounded(self, p):
        g = {"a": CH_I, "b": CH_I, "c": INT, "x": INT}
        try:
            check_proc(g, p)
        except CqpTypeError:
            return
        assert fv(p) <= set(g) and not fq(p) and not fc(p)

    @pytest.mark.parametrize("name", MAIN_PROGRAMS)
    def test_external_implies_internal(self, name):
        program = load(name)
        for d in program.definitions.values():
            if d.body is not None:
                check_proc(dict(d.params), d.body, program)
                check_internal(dict(d.params), set(), {}, d.body, program)

    @pytest.mark.parametrize("name", ["teleport", "coinflip", "teleport_epr"])
    def test_reachable_configurations_bounded(self, name):
        program = load(name)
        tree = explore(initial_configuration(program), program)
        for n in tree.nodes:
            c = n.config
            check_internal({}, c.sigma.order, c.phi, c.proc, program)
            assert fq(c.proc) <= set(c.sigma.order)
            assert fc(c.proc) <= set(c.phi)
            assert not fv(c.proc)


class TestPrograms:
    @pytest.mark.parametrize("name", MAIN_PROGRAMS + ("bitcommit_mismatch",))
    def test_corpus_typechecks(self, name):
        check_program(load(name))

    @pytest.mark.parametrize("path", sorted((CORPUS / "ill_typed").glob("*.cqp")), ids=lambda p: p.stem)
    def test_ill_typed_corpus(self, path):
        text = path.read_text()
        expected = text.splitlines()[0].split("expect:")[1].strip()
        program = parse_program(text, str(path))
        errors = program_errors(program)
        assert [e.kind.value for e in errors] == [expected]
        j = errors[0].to_json()
        assert j["kind"] == expected and j["span"]["file"] == str(path)
        with pytest.raises(ProgramTypeError):
            check_program(program)

    def test_call_arity(self):
        program = parse_program("abstract A(x:Int)\nP() = A(1)")
        check_program(program)
        bad = parse_program("abstract A(x:Qbit)\nP(n:Int) = A(n)")
        assert program_errors(bad)[0].kind == ErrorKind.MISMATCH

    def test_call_consumes_qubit(self):
        bad = parse_program("abstract A(x:Qbit)\nP(x:Qbit) = A(x) | {x *= H}.0")
        assert program_errors(bad)[0].kind == ErrorKind.ENV_SUM_UNDEFINED
