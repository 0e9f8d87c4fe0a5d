import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqp.ast import (
    BinOp,
    Call,
    IfExpr,
    Input,
    IntLit,
    Measure,
    NewChan,
    NewQbit,
    Nil,
    Output,
    Par,
    PauliIndex,
    TChan,
    INT,
    Transform,
    Var,
    alpha_equal,
    components,
)
from cqp.parser import (
    ParseError,
    eval_amplitude,
    parse_expr,
    parse_init,
    parse_proc,
    parse_program,
    parse_state,
    print_program,
    show_expr,
    show_proc,
    tokenize,
)

from conftest import CORPUS, load
from strategies import exprs, procs

ALL_CORPUS = sorted(CORPUS.glob("*.cqp")) + sorted((CORPUS / "ill_typed").glob("*.cqp"))


def flat(p):
    """Structure with every ``|`` nesting flattened."""
    if isinstance(p, Par):
        return ("par",) + tuple(flat(c) for c in components(p))
    return p


class TestTokenize:
    def test_kinds(self):
        toks = tokenize("c![x].{x *= H}.0 -- comment\n")
        assert [(t.kind, t.text) for t in toks] == [
            ("ident", "c"), ("punct", "!"), ("punct", "["), ("ident", "x"), ("punct", "]"),
            ("punct", "."), ("punct", "{"), ("ident", "x"), ("punct", "*="), ("kw", "H"),
            ("punct", "}"), ("punct", "."), ("int", "0"), ("eof", ""),
        ]

    def test_spans_track_lines(self):
        toks = tokenize("a\n  bb")
        assert (toks[1].span.start_line, toks[1].span.start_col) == (2, 3)
        assert (toks[1].span.end_line, toks[1].span.end_col) == (2, 5)

    def test_illegal_character(self):
        with pytest.raises(ParseError) as exc:
            tokenize("c![x]$")
        assert exc.value.span.start_col == 6

    def test_init_block_is_one_token(self):
        toks = tokenize("P() = 0\ninit { qubit x = |0> }")
        assert toks[-2].kind == "init" and "qubit x" in toks[-2].text


class TestExpressions:
    @pytest.mark.parametrize("text", [
        "1 + 2 - 3", "hd(xs) = 1", "[1, 2] @ [3]", "(1, measure x)",
        "if r = 2 then 3 else r", "sigma(r)", "x, y *= CNot", "measure z, x",
        "fst((1, 2))", "length([])",
    ])
    def test_print_round_trip(self, text):
        assert show_expr(parse_expr(text)) == text

    def test_left_associative_arithmetic(self):
        assert parse_expr("1 - 2 - 3") == BinOp("-", BinOp("-", IntLit(1), IntLit(2)), IntLit(3))

    def test_transform_and_measure(self):
        assert parse_expr("z, x *= CNot") == Transform((Var("z"), Var("x")), parse_expr("CNot"))
        assert parse_expr("measure z, x") == Measure((Var("z"), Var("x")))

    def test_conditional_and_pauli(self):
        assert isinstance(parse_expr("if r = 2 then 3 else r"), IfExpr)
        assert isinstance(parse_expr("sigma(r)"), PauliIndex)

    @given(exprs)
    def test_round_trip_property(self, e):
        assert parse_expr(show_expr(e)) == e


class TestProcesses:
    def test_par_and_prefixes(self):
        p = parse_proc("c![1].0 | d?[x:Int].0")
        assert p == Par(Output(Var("c"), (IntLit(1),), Nil()), Input(Var("d"), (("x", INT),), Nil()))

    def test_multi_binders_desugar(self):
        assert parse_proc("(qbit a,b)0") == NewQbit("a", NewQbit("b", Nil()))
        assert parse_proc("(new c:^[Int], d:^[Int])0") == \
            NewChan("c", TChan((INT,)), NewChan("d", TChan((INT,)), Nil()))

    def test_range_type_erased(self):
        assert parse_proc("(new c:^[0..3])0") == NewChan("c", TChan((INT,)), Nil())

    def test_zero_arity_call(self):
        assert parse_proc("if x = 0 then 0 else P()").orelse == Call("P", ())
        assert show_proc(Call("P", ())) == "P"

    @given(procs)
    @settings(max_examples=200)
    def test_round_trip_property(self, p):
        q = parse_proc(show_proc(p))
        assert flat(q) == flat(p)


class TestErrors:
    @pytest.mark.parametrize("text, expected, col", [
        ("c![x", "']'", 5),
        ("c?[x].0", "':'", 5),
        ("P(", "an expression", 3),
        ("{x *= }.0", "an expression", 7),
        ("c!x", "'['", 3),
        ("c![1].0 |", "a process", 10),
    ])
    def test_expected_and_position(self, text, expected, col):
        with pytest.raises(ParseError) as exc:
            parse_proc(text)
        err = exc.value
        assert err.expected == expected
        assert (err.span.start_line, err.span.start_col) == (1, col)
        j = err.to_json()
        assert j["kind"] == "parse-error" and j["span"]["start"] == [1, col]

    def test_undefined_call_rejected(self):
        with pytest.raises(ParseError):
            parse_program("P(x:Int) = Q(x)")

    @given(st.lists(st.sampled_from(
        ["c", "x", "!", "?", "[", "]", "(", ")", ".", "|", "0", "1", ":", "Int", "Qbit", "*=", "H",
         "measure", "new", "qbit", "=", "if", "then", "else", "{", "}", ",", "^", "@", "P"]),
        max_size=25))
    @settings(max_examples=300)
    def test_fuzz_tokens_never_crash(self, toks):
        source = " ".join(toks)
        for parse in (parse_program, parse_proc):
            try:
                parse(source)
            except ParseError as err:
                n_lines = source.count("\n") + 1
                assert 1 <= err.span.start_line <= n_lines
                assert 1 <= err.span.start_col <= len(source) + 1

    @given(st.text(max_size=40))
    def test_fuzz_text_never_crash(self, source):
        try:
            parse_program(source)
        except ParseError:
            pass


class TestPrograms:
    @pytest.mark.parametrize("path", ALL_CORPUS, ids=lambda p: p.stem)
    def test_corpus_round_trip(self, path):
        program = parse_program(path.read_text(), str(path))
        again = parse_program(print_program(program))
        assert again.definitions.keys() == program.definitions.keys()
        for name, d in program.definitions.items():
            e = again[name]
            assert e.params == d.params
            assert (e.body is None) == (d.body is None)
            if d.body is not None:
                assert alpha_equal(e.body, d.body)

    def test_teleport_definitions(self):
        program = load("teleport")
        assert set(program.definitions) == {"Alice", "Bob", "System", "Use"}
        assert program["Use"].abstract
        assert [n for n, _ in program["Alice"].params] == ["x", "c", "z"]

    def test_spans_recorded(self):
        program = load("teleport")
        span = program["Bob"].span
        assert span is not None and span.start_line > 1


class TestInit:
    def test_teleport_block(self):
        init = load("teleport").init
        assert init.entry == "System"
        assert [a.name for a in init.args] == ["x", "y", "z"]
        assert init.qubits == ("x", "y", "z")
        (_, amps), (_, zamps) = init.groups
        assert amps == pytest.approx([2 ** -0.5, 0, 0, 2 ** -0.5])
        assert zamps == (0, 1)
        assert len(init.asserts) == 2

    def test_default_state_is_zero(self):
        init = parse_init("qubits: a, b")
        assert init.groups == ((("a", "b"), (1, 0, 0, 0)),)

    def test_duplicate_qubit_rejected(self):
        with pytest.raises(ParseError):
            parse_init("qubit a = |0>\nqubit a = |1>")

    def test_bad_line_reports_line(self):
        with pytest.raises(ParseError) as exc:
            parse_init("qubit a = |0>\nbogus", first_line=10)
        assert exc.value.span.start_line == 11

    @pytest.mark.parametrize("text, value", [
        ("0.6", 0.6), ("-1i", -1j), ("1/sqrt(2)", 2 ** -0.5), ("(1+2i)/3", (1 + 2j) / 3), ("i", 1j),
    ])
    def test_amplitudes(self, text, value):
        assert eval_amplitude(text) == pytest.approx(value)

    def test_amplitude_rejects_names(self):
        with pytest.raises(ValueError):
            eval_amplitude("__import__('os')")

    def test_states(self):
        assert parse_state("|+>", 1) == pytest.approx([2 ** -0.5, 2 ** -0.5])
        assert parse_state("0.6, 0.8", 1) == (0.6, 0.8)
        assert parse_state("|01> - i|10>", 2) == (0, 1, -1j, 0)
        with pytest.raises(ValueError):
            parse_state("|0>", 2)
