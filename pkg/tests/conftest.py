from pathlib import Path

import pytest

from cqp.cli import corpus_path
from cqp.parser import parse_init, parse_program
from cqp.semantics import initial_configuration

CORPUS = corpus_path()
GOLDEN = Path(__file__).parent / "golden"
MAIN_PROGRAMS = ("coinflip", "teleport", "teleport_epr", "bitcommit")

ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


def load(name: str):
    path = CORPUS / f"{name}.cqp"
    return parse_program(path.read_text(), str(path))


def start(name: str, init_text: str | None = None):
    program = load(name)
    init = parse_init(init_text) if init_text is not None else None
    return program, initial_configuration(program, init)


@pytest.fixture
def corpus():
    return load


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep
