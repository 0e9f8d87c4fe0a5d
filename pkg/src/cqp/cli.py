"""``cqp`` command line: check, explore, sample and trace CQP programs.

Exit codes: 0 success, 1 parse or init error, 2 type error, 3 exploration
limit exceeded, 4 trace script under- or overflow, 5 assertion failed,
6 runtime error outcome reached.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import quantum as qm
from .ast import Program
from .parser import FinalStateAssertion, InitSpec, OutcomeProbsAssertion, ParseError, parse_init, parse_program
from .semantics import (
    Configuration,
    ExecutionTree,
    FirstRedex,
    InitError,
    ScriptError,
    Scripted,
    UniformRandom,
    abstract_calls,
    classify,
    explore,
    initial_configuration,
    sample,
    tally,
)
from .typecheck import CqpTypeError, check_internal, program_errors

EXIT_OK, EXIT_PARSE, EXIT_TYPE, EXIT_LIMIT, EXIT_SCRIPT, EXIT_ASSERT, EXIT_RUNTIME = range(7)
ASSERT_TOL = 1e-9

log = logging.getLogger("cqp")


class _Fail(Exception):
    def __init__(self, code: int, payload: dict | str):
        super().__init__(str(payload))
        self.code = code
        self.payload = payload


def corpus_path(name: str = "") -> Path:
    """Location of the bundled example programs."""
    return Path(str(resources.files("cqp") / "corpus")) / name


# ---------------------------------------------------------------------------
# Loading


def _load(path: str) -> Program:
    try:
        source = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _Fail(EXIT_PARSE, {"kind": "io-error", "message": str(exc), "file": path}) from None
    try:
        return parse_program(source, path)
    except ParseError as exc:
        raise _Fail(EXIT_PARSE, exc.to_json()) from None


def _typecheck(program: Program) -> None:
    errors = program_errors(program)
    if errors:
        raise _Fail(EXIT_TYPE, {"errors": [e.to_json() for e in errors]})


def _run_setup(args: argparse.Namespace) -> tuple[Program, InitSpec | None, Configuration]:
    program = _load(args.file)
    _typecheck(program)
    init = program.init
    if args.init:
        try:
            init = parse_init(Path(args.init).read_text(encoding="utf-8"), args.init)
        except OSError as exc:
            raise _Fail(EXIT_PARSE, {"kind": "io-error", "message": str(exc)}) from None
        except ParseError as exc:
            raise _Fail(EXIT_PARSE, exc.to_json()) from None
    try:
        c0 = initial_configuration(program, init, args.entry)
    except (InitError, qm.QuantumError) as exc:
        raise _Fail(EXIT_PARSE, {"kind": "init-error", "message": str(exc)}) from None
    try:
        check_internal({}, c0.sigma.order, c0.phi, c0.proc, program)
    except CqpTypeError as exc:
        raise _Fail(EXIT_TYPE, {"errors": [exc.to_json()]}) from None
    return program, init, c0


# ---------------------------------------------------------------------------
# Assertions


def _check_final_state(a: FinalStateAssertion, tree: ExecutionTree) -> tuple[bool, str]:
    leaves = tree.leaves()
    if not leaves:
        return False, "no terminal leaves"
    target = qm.QState(a.qubits, np.array(a.amps, dtype=complex) / np.linalg.norm(a.amps))
    for n in leaves:
        try:
            sub = qm.extract_subsystem(n.config.sigma, a.qubits, ASSERT_TOL)
        except qm.QuantumError as exc:
            return False, f"leaf {n.id}: {exc}"
        if sub is None:
            return False, f"leaf {n.id}: {','.join(a.qubits)} entangled with other qubits"
        if not qm.states_equal_up_to_phase(sub, target, ASSERT_TOL):
            return False, f"leaf {n.id}: {qm.render_state(sub)}"
    return True, f"{len(leaves)} leaves"


def _check_outcome_probs(a: OutcomeProbsAssertion, tree: ExecutionTree) -> tuple[bool, str]:
    bounds = tree.leaf_probabilities()
    leaves = tree.leaves()
    probs = []
    for n in leaves:
        lo, hi = bounds[n.id]
        if hi - lo > ASSERT_TOL:
            return False, f"leaf {n.id} depends on the scheduler: [{lo:.6g}, {hi:.6g}]"
        probs.append(lo)
    if len(probs) != len(a.probs):
        return False, f"{len(probs)} terminal leaves, {len(a.probs)} probabilities asserted"
    ok = all(abs(x - y) <= ASSERT_TOL for x, y in zip(sorted(probs), sorted(a.probs)))
    return ok, "leaf probabilities " + ", ".join(qm._fmt(p) for p in sorted(probs))


def evaluate_assertions(init: InitSpec | None, tree: ExecutionTree) -> list[dict]:
    out = []
    for a in (init.asserts if init is not None else ()):
        if isinstance(a, FinalStateAssertion):
            ok, detail = _check_final_state(a, tree)
        else:
            ok, detail = _check_outcome_probs(a, tree)
        out.append({"assert": a.describe(), "pass": ok, "detail": detail})
    return out


# ---------------------------------------------------------------------------
# Commands


def cmd_check(args: argparse.Namespace) -> int:
    results = []
    code = EXIT_OK
    for path in args.files:
        try:
            program = _load(path)
            _typecheck(program)
            results.append({"file": path, "ok": True, "errors": []})
        except _Fail as exc:
            errors = exc.payload.get("errors", [exc.payload]) if isinstance(exc.payload, dict) else []
            results.append({"file": path, "ok": False, "errors": errors})
            code = max(code, exc.code)
    if args.json:
        print(json.dumps(results, indent=2))
    else:
        for r in results:
            if r["ok"]:
                print(f"{r['file']}: ok")
            for e in r["errors"]:
                span = e.get("span") or {}
                where = f"{span['file']}:{span['start'][0]}:{span['start'][1]}" if span else r["file"]
                print(f"{where}: {e['kind']}: {e['message']}")
    return code


def _verdict_leaves(tree: ExecutionTree, program: Program) -> list[dict]:
    bounds = tree.leaf_probabilities()
    return [
        {
            "id": n.id,
            "kind": n.kind,
            "p_min": round(bounds[n.id][0], 12),
            "p_max": round(bounds[n.id][1], 12),
            "state": qm.render_state(n.config.sigma),
            "calls": abstract_calls(n.config.proc, program),
            **({"error": n.error} if n.error else {}),
        }
        for n in tree.leaves(("terminal", "error"))
    ]


def cmd_explore(args: argparse.Namespace) -> int:
    program, init, c0 = _run_setup(args)
    tree = explore(c0, program, max_depth=args.max_depth, max_nodes=args.max_nodes,
                   merge=not args.no_merge, check_invariants=args.check_invariants)
    leaves = _verdict_leaves(tree, program)
    asserts = evaluate_assertions(init, tree)
    verdict = {
        "nodes": len(tree.nodes),
        "truncated": tree.truncated,
        "leaves": leaves,
        "asserts": asserts,
    }
    if args.check_invariants:
        verdict["invariant_violations"] = [str(v) for v in tree.violations]
    if args.json:
        print(json.dumps({"tree": tree.to_json(), "verdict": verdict}, indent=2))
    else:
        sys.stdout.write(tree.render_text())
        print("verdict")
        print(f"  nodes {len(tree.nodes)}" + (" (truncated)" if tree.truncated else ""))
        for leaf in leaves:
            p = qm._fmt(leaf["p_min"]) if leaf["p_min"] == leaf["p_max"] else \
                f"[{qm._fmt(leaf['p_min'])}, {qm._fmt(leaf['p_max'])}]"
            tail = f" error: {leaf['error']}" if leaf.get("error") else " ; " + (" | ".join(leaf["calls"]) or "0")
            print(f"  leaf {leaf['id']} {leaf['kind']} p={p} {leaf['state']}{tail}")
        for a in asserts:
            print(f"  {'PASS' if a['pass'] else 'FAIL'} {a['assert']} ({a['detail']})")
        if args.check_invariants:
            print(f"  invariants: {len(tree.violations)} violation(s) over {tree.steps_checked} step(s)")
            for v in tree.violations:
                print(f"    {v}")
    if args.check_invariants and tree.violations:
        return EXIT_RUNTIME
    if any(leaf["kind"] == "error" for leaf in leaves):
        return EXIT_RUNTIME
    if any(not a["pass"] for a in asserts):
        return EXIT_ASSERT
    if tree.truncated:
        return EXIT_LIMIT
    return EXIT_OK


def _scheduler(name: str):
    return {"uniform": UniformRandom, "first": FirstRedex}[name]()


def run_samples(program: Program, c0: Configuration, n: int, seed: int,
                scheduler: str = "uniform", max_steps: int = 100_000) -> dict:
    """Verdict of ``n`` seeded runs: statuses, classifications and measurement tallies."""
    rng = np.random.default_rng(seed)
    statuses, classes = [], []
    outcomes: dict[str, list[str]] = {}
    for _ in range(n):
        tr = sample(c0, program, _scheduler(scheduler), rng=rng, max_steps=max_steps, record=False)
        statuses.append(tr.status)
        classes.append(classify(tr, program))
        for site, m, _p in tr.measurements():
            outcomes.setdefault(site, []).append(str(m))
    return {
        "runs": n,
        "seed": seed,
        "scheduler": scheduler,
        "status": tally(statuses),
        "classifications": tally(classes),
        "measurements": {site: tally(v) for site, v in sorted(outcomes.items())},
    }


def cmd_sample(args: argparse.Namespace) -> int:
    program, _init, c0 = _run_setup(args)
    verdict = run_samples(program, c0, args.n, args.seed, args.scheduler, args.max_steps)
    if args.json:
        print(json.dumps(verdict, indent=2))
    else:
        print(f"runs {verdict['runs']} seed {verdict['seed']} scheduler {verdict['scheduler']}")
        print("status")
        for k, v in verdict["status"].items():
            print(f"  {k}: {v} ({v / args.n:.4f})")
        print("classifications")
        for k, v in verdict["classifications"].items():
            print(f"  {k}: {v} ({v / args.n:.4f})")
        print("measurements")
        for site, counts in verdict["measurements"].items():
            total = sum(counts.values())
            freq = ", ".join(f"{m}: {c} ({c / total:.4f})" for m, c in counts.items())
            print(f"  {site}: {freq}")
    return EXIT_RUNTIME if "error" in verdict["status"] else EXIT_OK


def _parse_script(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad script {text!r}") from None


def cmd_trace(args: argparse.Namespace) -> int:
    program, _init, c0 = _run_setup(args)
    scheduler = Scripted(args.script) if args.script is not None else _scheduler(args.scheduler)
    try:
        tr = sample(c0, program, scheduler, seed=args.seed, max_steps=args.max_steps)
    except ScriptError as exc:
        print(f"script error: {exc}", file=sys.stderr)
        return EXIT_SCRIPT
    sys.stdout.write(tr.render())
    return EXIT_RUNTIME if tr.status == "error" else EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cqp", description="Communicating Quantum Processes toolchain")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse and typecheck programs")
    p.add_argument("files", nargs="+")
    p.add_argument("--json", action="store_true", help="JSON diagnostics")
    p.set_defaults(func=cmd_check)

    def run_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("file")
        p.add_argument("-e", "--entry", help="entry definition (default: from init, else System)")
        p.add_argument("--init", help="init file overriding the program's init block")
        p.add_argument("--json", action="store_true")

    p = sub.add_parser("explore", help="exhaustive execution graph")
    run_args(p)
    p.add_argument("--max-depth", type=int, default=1000)
    p.add_argument("--max-nodes", type=int, default=100_000)
    p.add_argument("--no-merge", action="store_true", help="do not merge congruent configurations")
    p.add_argument("--check-invariants", action="store_true")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("sample", help="Monte-Carlo runs")
    run_args(p)
    p.add_argument("-n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheduler", choices=("uniform", "first"), default="uniform")
    p.add_argument("--max-steps", type=int, default=100_000)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("trace", help="one run, step by step")
    run_args(p)
    p.add_argument("--script", type=_parse_script, help="comma-separated choice indices")
    p.add_argument("--scheduler", choices=("uniform", "first"), default="first")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=100_000)
    p.set_defaults(func=cmd_trace)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fail as exc:
        payload = exc.payload
        if getattr(args, "json", False):
            print(json.dumps(payload, indent=2))
        else:
            for e in payload.get("errors", [payload]) if isinstance(payload, dict) else [payload]:
                span = e.get("span") if isinstance(e, dict) else None
                where = f"{span['file']}:{span['start'][0]}:{span['start'][1]}: " if span else ""
                kind = e.get("kind", "error") if isinstance(e, dict) else "error"
                print(f"{where}{kind}: {e.get('message', e) if isinstance(e, dict) else e}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
