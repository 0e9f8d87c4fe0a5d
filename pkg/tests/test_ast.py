from hypothesis import given, settings
from hypothesis import strategies as st

from cqp.ast import (
    INT,
    Call,
    ChannelName,
    Input,
    IntLit,
    NewChan,
    NewQbit,
    Nil,
    Output,
    Par,
    QubitName,
    TChan,
    Var,
    alpha_equal,
    components,
    free_names,
    fresh_name,
    fv,
    par,
    proc_key,
    substitute,
)
from cqp.parser import parse_proc

from strategies import NAMES, procs, rename_binders, values


class TestFreeNames:
    def test_input_binds_variables(self):
        p = parse_proc("c?[x:Int].d![x, y].0")
        assert free_names(p).variables == {"c", "d", "y"}

    def test_runtime_names_are_separate(self):
        p = Output(ChannelName("k"), (QubitName("q"), Var("v")), Nil())
        fn = free_names(p)
        assert fn.variables == {"v"}
        assert fn.qubits == {"q"}
        assert fn.channels == {"k"}

    def test_restrictions_bind(self):
        p = parse_proc("(new c:^[Qbit])(qbit q)(c![q].0 | e?[z:Qbit].0)")
        assert fv(p) == {"e"}

    def test_call_arguments(self):
        assert fv(Call("P", (Var("a"), IntLit(1)))) == {"a"}


class TestSubstitute:
    def test_replaces_free_occurrence(self):
        p = parse_proc("c![x].0")
        assert substitute(p, {"x": QubitName("q")}) == Output(Var("c"), (QubitName("q"),), Nil())

    def test_respects_shadowing(self):
        p = parse_proc("c?[x:Int].d![x].0")
        assert substitute(p, {"x": IntLit(5)}) == p

    def test_avoids_capture(self):
        p = Input(Var("c"), (("y", INT),), Output(Var("d"), (Var("x"), Var("y")), Nil()))
        q = substitute(p, {"x": Var("y")})
        assert isinstance(q, Input)
        (bound, _), = q.binders
        assert bound != "y"
        assert q.body.args == (Var("y"), Var(bound))

    def test_restriction_renamed_on_capture(self):
        p = NewChan("a", TChan((INT,)), Output(Var("a"), (Var("x"),), Nil()))
        q = substitute(p, {"x": Var("a")})
        assert q.name != "a" and q.body.chan == Var(q.name) and q.body.args == (Var("a"),)

    def test_communication_example(self):
        # receiver body after a qubit arrives on the channel
        out = substitute(parse_proc("s?[y:Qbit, t:^[Qbit]].t![y].0").body, {"y": QubitName("x"), "t": ChannelName("t")})
        assert out == Output(ChannelName("t"), (QubitName("x"),), Nil())

    @given(procs)
    def test_identity_without_free_occurrence(self, p):
        assert substitute(p, {"zz": IntLit(1)}) == p

    @given(procs, st.sampled_from(NAMES), values)
    def test_free_variable_law(self, p, x, v):
        q = substitute(p, {x: v})
        assert fv(q) == fv(p) - {x}
        fn_p, fn_q = free_names(p), free_names(q)
        extra = free_names(v) if x in fv(p) else None
        if extra is None:
            assert fn_q == fn_p
        else:
            assert fn_q.qubits == fn_p.qubits | extra.qubits
            assert fn_q.channels == fn_p.channels | extra.channels

    @given(procs, st.sampled_from(NAMES), st.sampled_from(NAMES))
    def test_substituting_a_variable_never_captures(self, p, x, y):
        q = substitute(p, {x: Var(y)})
        expected = fv(p) - {x} | ({y} if x in fv(p) else set())
        assert fv(q) == expected


class TestAlpha:
    def test_binder_names_irrelevant(self):
        assert alpha_equal(parse_proc("c?[x:Int].d![x].0"), parse_proc("c?[y:Int].d![y].0"))

    def test_free_names_relevant(self):
        assert not alpha_equal(parse_proc("d![x].0"), parse_proc("d![y].0"))

    def test_qbit_binder(self):
        assert alpha_equal(parse_proc("(qbit q)c![q].0"), parse_proc("(qbit r)c![r].0"))

    def test_par_order_matters_without_sorting(self):
        a, b = parse_proc("c![1].0 | d![2].0"), parse_proc("d![2].0 | c![1].0")
        assert not alpha_equal(a, b)
        assert proc_key(a, sort_par=True) == proc_key(b, sort_par=True)

    @given(procs)
    def test_reflexive(self, p):
        assert alpha_equal(p, p)

    @given(procs)
    def test_renamed_binders(self, p):
        q = rename_binders(p)
        assert alpha_equal(p, q) and alpha_equal(q, p)

    @given(procs)
    def test_free_names_invariant(self, p):
        assert free_names(rename_binders(p)) == free_names(p)

    @given(procs, procs)
    @settings(max_examples=50)
    def test_key_consistent_with_equality(self, p, q):
        if p == q:
            assert alpha_equal(p, q)


class TestPar:
    def test_components_flatten_and_drop_nil(self):
        p = Par(Par(Nil(), Call("A", ())), Par(Call("B", ()), Nil()))
        assert components(p) == [Call("A", ()), Call("B", ())]

    def test_par_of_nothing_is_nil(self):
        assert par([]) == Nil()

    @given(procs)
    def test_par_components_round_trip(self, p):
        assert components(par(components(p))) == components(p)


class TestFreshName:
    def test_unused(self):
        assert fresh_name("q", {"r"}) == "q"

    def test_numbered(self):
        assert fresh_name("q", {"q", "q1"}) == "q2"

    def test_new_qbit_example(self):
        assert isinstance(parse_proc("(qbit q)0"), NewQbit)
