import json

import pytest

from cqp.cli import main

from conftest import CORPUS, GOLDEN


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def corpus(name):
    return str(CORPUS / name)


class TestCheck:
    def test_ok(self, capsys):
        code, out, _ = run(capsys, "check", corpus("teleport.cqp"), corpus("coinflip.cqp"))
        assert code == 0 and out.count(": ok") == 2

    def test_type_error_text(self, capsys):
        path = corpus("ill_typed/parallel_sharing.cqp")
        code, out, _ = run(capsys, "check", path)
        assert code == 2
        assert out.startswith(f"{path}:3:") and "env-sum-undefined" in out

    def test_type_error_json(self, capsys):
        code, out, _ = run(capsys, "check", "--json", corpus("ill_typed/unbound_name.cqp"))
        [result] = json.loads(out)
        assert code == 2 and not result["ok"]
        [err] = result["errors"]
        assert err["kind"] == "unbound"
        assert set(err["span"]) == {"file", "start", "end"}

    def test_parse_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.cqp"
        bad.write_text("P() = c![1\n")
        code, out, _ = run(capsys, "check", "--json", str(bad))
        assert code == 1
        [err] = json.loads(out)[0]["errors"]
        assert err["kind"] == "parse-error" and err["expected"] == "']'"

    def test_missing_file(self, capsys, tmp_path):
        code, _, _ = run(capsys, "check", str(tmp_path / "nope.cqp"))
        assert code == 1


class TestExplore:
    def test_teleport_verdict(self, capsys):
        code, out, _ = run(capsys, "explore", corpus("teleport.cqp"))
        assert code == 0
        assert out.count("PASS") == 2 and "FAIL" not in out
        assert out.count(" terminal p=0.25 ") == 4

    def test_json(self, capsys):
        code, out, _ = run(capsys, "explore", corpus("coinflip.cqp"), "--json", "--check-invariants")
        doc = json.loads(out)
        assert code == 0
        assert doc["verdict"]["invariant_violations"] == []
        assert len(doc["verdict"]["leaves"]) == 2
        assert doc["tree"]["nodes"][0]["kind"] == "nondet"

    def test_limit_exit_code(self, capsys):
        code, out, _ = run(capsys, "explore", corpus("bitcommit.cqp"), "--max-nodes", "50")
        assert code == 3 and "(truncated)" in out

    def test_failed_assertion(self, capsys, tmp_path):
        init = tmp_path / "z0.init"
        init.write_text("entry: System(x,y,z)\nqubits: x, y\nstate: 1/sqrt(2)|00> + 1/sqrt(2)|11>\n"
                        "qubit z = |0>\nassert final-state y equals |1> up-to-phase\n")
        code, out, _ = run(capsys, "explore", corpus("teleport.cqp"), "--init", str(init))
        assert code == 5 and "FAIL" in out

    def test_unnormalised_init(self, capsys, tmp_path):
        init = tmp_path / "bad.init"
        init.write_text("qubit z = 0.7071, 0.7071\n")
        code, _, err = run(capsys, "explore", corpus("teleport.cqp"), "--init", str(init))
        assert code == 1 and "init-error" in err

    def test_runtime_error_exit(self, capsys, tmp_path):
        prog = tmp_path / "stuck.cqp"
        prog.write_text("System() = (new c:^[List[Int]])(c![[]].0 | c?[xs:List[Int]].Out(hd(xs)))\n"
                        "abstract Out(n:Int)\n")
        code, out, _ = run(capsys, "explore", str(prog))
        assert code == 6 and "error:" in out


class TestSample:
    def test_teleport(self, capsys):
        code, out, _ = run(capsys, "sample", corpus("teleport.cqp"), "-n", "400", "--seed", "1", "--json")
        doc = json.loads(out)
        assert code == 0 and doc["status"] == {"terminal": 400}
        [(site, counts)] = doc["measurements"].items()
        assert set(counts) == {"0", "1", "2", "3"} and sum(counts.values()) == 400

    def test_bitcommit_verified(self, capsys):
        code, out, _ = run(capsys, "sample", corpus("bitcommit.cqp"), "-n", "50")
        assert code == 0 and "Verified: 50 (1.0000)" in out

    def test_same_seed_same_output(self, capsys):
        argv = ("sample", corpus("teleport.cqp"), "-n", "100", "--seed", "3")
        assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


class TestTrace:
    @pytest.mark.parametrize("golden, program, script", [
        ("coinflip_left.txt", "coinflip.cqp", "0,0"),
        ("coinflip_right.txt", "coinflip.cqp", "0,1"),
        ("teleport_branch3.txt", "teleport.cqp", "0,0,0,0,0,0,3"),
    ])
    def test_golden(self, capsys, golden, program, script):
        code, out, _ = run(capsys, "trace", corpus(program), "--script", script)
        assert code == 0
        assert out == (GOLDEN / golden).read_text()

    def test_golden_endings(self):
        left = (GOLDEN / "coinflip_left.txt").read_text().splitlines()
        right = (GOLDEN / "coinflip_right.txt").read_text().splitlines()
        tele = (GOLDEN / "teleport_branch3.txt").read_text().splitlines()
        assert left[-2].strip().startswith("x = 1|0>") and right[-2].strip().startswith("x = 1|0>")
        assert "x *= X" in "\n".join(right) and "x *= X" not in "\n".join(left)
        assert tele[-2].strip() == "x,y,z = -1i|111> ; c ; Use(y)"
        assert "p=0.25 m=3" in "\n".join(tele)

    def test_script_overflow(self, capsys):
        code, _, err = run(capsys, "trace", corpus("coinflip.cqp"), "--script", "0,0,1")
        assert code == 4 and "left over" in err

    def test_script_underflow(self, capsys):
        code, _, err = run(capsys, "trace", corpus("coinflip.cqp"), "--script", "0")
        assert code == 4 and "exhausted" in err

    def test_empty_program_trace(self, capsys, tmp_path):
        prog = tmp_path / "nil.cqp"
        prog.write_text("System() = 0\n")
        code, out, _ = run(capsys, "trace", str(prog))
        assert code == 0 and out.startswith("start (no qubits) ; - ; System") and out.endswith("end terminal\n")

    def test_type_error_blocks_run(self, capsys):
        code, _, err = run(capsys, "trace", corpus("ill_typed/qubit_reuse.cqp"), "--entry", "P")
        assert code == 2 and "qubit-reuse" in err
