"""Command-line interface: subcommands, output formats, exit codes."""

import json
import subprocess
import sys

import pytest

from pslvqa.cli import main

from helpers import FIXTURES

RULES = str(FIXTURES / "two_answer" / "rules.psl")
DATA = str(FIXTURES / "two_answer" / "data.jsonl")
BARN = str(FIXTURES / "barn")


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def parse_lines(text):
    return [json.loads(line) for line in text.strip().splitlines() if line]


class TestInfer:
    def test_two_answer_problem(self, capsys):
        code, out, _ = run(capsys, "infer", "--rules", RULES, "--data", DATA)
        assert code == 0
        records = parse_lines(out)
        assert len(records) == 3
        assert records[0]["pred"] == "ans" and records[0]["args"] == ["a"]
        assert records[0]["value"] == pytest.approx(1.0, abs=1e-4)
        assert records[1]["args"] == ["b"]
        assert records[1]["value"] == pytest.approx(0.0, abs=1e-4)
        summary = records[2]
        assert summary["converged"] is True
        assert summary["objective"] == pytest.approx(0.6, abs=1e-4)
        assert summary["iterations"] > 0

    def test_records_precede_a_single_summary(self, capsys):
        _, out, _ = run(capsys, "infer", "--rules", RULES, "--data", DATA)
        lines = out.strip().splitlines()
        assert lines[-1].startswith('{"objective": ')
        assert all(l.startswith('{"pred": ') for l in lines[:-1])

    def test_output_flag_matches_stdout(self, capsys, tmp_path):
        _, out, _ = run(capsys, "infer", "--rules", RULES, "--data", DATA)
        dest = tmp_path / "solution.jsonl"
        code, silent, _ = run(
            capsys, "infer", "--rules", RULES, "--data", DATA, "--output", str(dest)
        )
        assert code == 0
        assert silent == ""
        assert dest.read_text() == out

    def test_dump_grounding(self, capsys, tmp_path):
        dump = tmp_path / "ground.txt"
        code, _, _ = run(
            capsys,
            "infer", "--rules", RULES, "--data", DATA,
            "--dump-grounding", str(dump),
        )
        assert code == 0
        text = dump.read_text()
        assert "| rule" in text
        assert "sum ans <= 1.000000" in text

    def test_iteration_cap_reports_nonconvergence(self, capsys, tmp_path):
        dest = tmp_path / "solution.jsonl"
        code, _, _ = run(
            capsys,
            "infer", "--rules", RULES, "--data", DATA,
            "--max-iterations", "1", "--output", str(dest),
        )
        assert code == 2
        summary = parse_lines(dest.read_text())[-1]
        assert summary["converged"] is False

    def test_flags_override_config_keys(self, capsys, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text('{"max_iterations": 1}')
        code, _, _ = run(
            capsys,
            "infer", "--rules", RULES, "--data", DATA,
            "--config", str(cfg), "--max-iterations", "5000",
        )
        assert code == 0

    def test_program_without_rules_solves_to_zero(self, capsys, tmp_path):
        rules = tmp_path / "r.psl"
        rules.write_text("pred ans/1 open\n")
        data = tmp_path / "d.jsonl"
        data.write_text('{"pred": "ans", "args": ["a"], "target": true}\n')
        code, out, _ = run(capsys, "infer", "--rules", str(rules), "--data", str(data))
        assert code == 0
        records = parse_lines(out)
        assert records[0]["value"] == 0.0
        assert records[-1]["objective"] == 0.0

    def test_threads_flag_accepted(self, capsys):
        code, _, _ = run(
            capsys, "infer", "--rules", RULES, "--data", DATA, "--threads", "4"
        )
        assert code == 0


class TestOracle:
    def test_agrees_with_the_solver(self, capsys):
        _, solver_out, _ = run(capsys, "infer", "--rules", RULES, "--data", DATA)
        code, oracle_out, _ = run(capsys, "oracle", "--rules", RULES, "--data", DATA)
        assert code == 0
        s = parse_lines(solver_out)
        o = parse_lines(oracle_out)
        assert o[0]["value"] == 1.0 and o[1]["value"] == 0.0
        assert abs(s[-1]["objective"] - o[-1]["objective"]) <= 1e-3

    def test_step_flag(self, capsys):
        code, out, _ = run(
            capsys, "oracle", "--rules", RULES, "--data", DATA, "--step", "0.5"
        )
        assert code == 0
        assert parse_lines(out)[-1]["iterations"] == 9


class TestErrors:
    @pytest.mark.parametrize(
        "argv,needle",
        [
            (("infer", "--rules", "/no/such.psl", "--data", DATA), "error:"),
            (("infer", "--rules", RULES, "--data", "/no/such.jsonl"), "error:"),
            (("answer", "--instance", "/no/such/dir"), "instance directory"),
            (
                ("extract", "--parses", "/no/such.conll", "--vocab", "/no/vocab"),
                "error:",
            ),
        ],
    )
    def test_missing_files_exit_one(self, capsys, argv, needle):
        code, _, err = run(capsys, *argv)
        assert code == 1
        assert needle in err

    def test_rule_syntax_errors_exit_one(self, capsys, tmp_path):
        bad = tmp_path / "bad.psl"
        bad.write_text("pred ans/1 open\n1.0: ans(a) <-\n")
        code, _, err = run(capsys, "infer", "--rules", str(bad), "--data", DATA)
        assert code == 1
        assert "line 2" in err

    @pytest.mark.parametrize(
        "body,needle",
        [
            ("{not json", "invalid JSON"),
            ("[1, 2]", "expected a JSON object"),
            ('{"budget": 2}', "unknown keys"),
        ],
    )
    def test_bad_config_exits_one(self, capsys, tmp_path, body, needle):
        cfg = tmp_path / "config.json"
        cfg.write_text(body)
        code, _, err = run(
            capsys, "infer", "--rules", RULES, "--data", DATA, "--config", str(cfg)
        )
        assert code == 1
        assert needle in err


class TestExtract:
    def test_caption_mode_pins_the_fixture(self, capsys):
        d = FIXTURES / "captions"
        code, out, _ = run(
            capsys,
            "extract", "--parses", str(d / "parses.conll"),
            "--vocab", str(d / "vocab.txt"), "--sims", str(d / "sims.txt"),
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert (
            '{"pred": "has_img", "args": ["cars", "parked on", "side"], '
            '"value": 0.810000}' in lines
        )
        assert (
            '{"pred": "has_img", "args": ["trees", "do not have", "leaves"], '
            '"value": 0.950000}' in lines
        )
        assert all(json.loads(l)["pred"] == "has_img" for l in lines)

    def test_question_mode(self, capsys):
        d = FIXTURES / "question"
        code, out, _ = run(
            capsys,
            "extract", "--parses", str(d / "parses.conll"),
            "--vocab", str(d / "vocab.txt"), "--sims", str(d / "sims.txt"),
            "--mode", "question",
        )
        assert code == 0
        assert out == (
            '{"pred": "has_q", "args": ["?x", "is", "building"], "value": 0.900000}\n'
        )

    def test_empty_parse_file(self, capsys, tmp_path):
        parses = tmp_path / "empty.conll"
        parses.write_text("")
        vocab = tmp_path / "vocab.txt"
        vocab.write_text("on\n")
        code, out, _ = run(
            capsys, "extract", "--parses", str(parses), "--vocab", str(vocab)
        )
        assert code == 0
        assert out == ""

    def test_dump_grounding_flag_accepted(self, capsys, tmp_path):
        d = FIXTURES / "question"
        dump = tmp_path / "ground.txt"
        code, _, _ = run(
            capsys,
            "extract", "--parses", str(d / "parses.conll"),
            "--vocab", str(d / "vocab.txt"), "--mode", "question",
            "--dump-grounding", str(dump),
        )
        assert code == 0
        assert dump.exists()


class TestAnswer:
    def test_barn_ranking(self, capsys):
        code, out, _ = run(capsys, "answer", "--instance", BARN)
        assert code == 0
        records = parse_lines(out)
        ranks = [r for r in records if "rank" in r]
        assert [(r["rank"], r["answer"]) for r in ranks] == [(1, "barn"), (2, "church")]
        assert ranks[0]["value"] > ranks[1]["value"]
        assert ranks[0]["prior"] == pytest.approx(0.30)
        assert ranks[1]["prior"] == pytest.approx(0.45)
        summary = [r for r in records if "objective" in r][0]
        assert summary["converged"] is True
        assert summary["objective"] == pytest.approx(0.0, abs=1e-6)

    def test_evidence_flag(self, capsys):
        code, out, _ = run(capsys, "answer", "--instance", BARN, "--evidence", "barn")
        assert code == 0
        evidence = [r for r in parse_lines(out) if "rule" in r]
        assert [e["rule"] for e in evidence] == ["w2", "w1", "w6", "w1"]
        assert all(e["answer"] == "barn" for e in evidence)
        supporting = evidence[1]
        assert any(
            b["atom"] == "has_img(building, behind, horses)"
            for b in supporting["body"]
        )
        assert supporting["score"] == pytest.approx(0.2, abs=1e-4)

    def test_evidence_all_skips_zero_valued_answers(self, capsys):
        code, out, _ = run(capsys, "answer", "--instance", BARN, "--evidence", "all")
        assert code == 0
        evidence = [r for r in parse_lines(out) if "rule" in r]
        assert len(evidence) == 4
        assert {e["answer"] for e in evidence} == {"barn"}

    def test_adversarial_instance_flips_the_ranking(self, capsys):
        code, out, _ = run(
            capsys, "answer", "--instance", str(FIXTURES / "barn_adversarial")
        )
        assert code == 0
        ranks = [r for r in parse_lines(out) if "rank" in r]
        assert [r["answer"] for r in ranks] == ["church", "barn"]

    def test_s_bound_flag_caps_the_winner(self, capsys):
        code, out, _ = run(capsys, "answer", "--instance", BARN, "--s-bound", "0.05")
        assert code == 0
        ranks = [r for r in parse_lines(out) if "rank" in r]
        assert ranks[0]["answer"] == "barn"
        assert ranks[0]["value"] == pytest.approx(0.05, abs=1e-3)

    def test_tau_flag_blocks_weak_similarities(self, capsys):
        code, out, _ = run(capsys, "answer", "--instance", BARN, "--tau", "0.9")
        assert code == 0
        ranks = [r for r in parse_lines(out) if "rank" in r]
        assert [r["answer"] for r in ranks] == ["church", "barn"]
        assert all(r["value"] == 0.0 for r in ranks)


class TestLearn:
    def test_learned_program_is_emitted(self, capsys):
        d = FIXTURES / "learning"
        code, out, _ = run(
            capsys, "learn", "--rules", str(d / "rules.psl"), "--data", str(d / "train.jsonl")
        )
        assert code == 0
        assert "// weight-recovery fixture" in out
        from pslvqa.parser import parse_program

        prog = parse_program(out)
        w1, w2 = prog.rules[0].weight, prog.rules[1].weight
        assert w1 > w2

    def test_output_file_and_config_keys(self, capsys, tmp_path):
        d = FIXTURES / "learning"
        cfg = tmp_path / "config.json"
        cfg.write_text('{"learning_rate": 0.2, "epochs": 5}')
        dest = tmp_path / "learned.psl"
        code, out, _ = run(
            capsys,
            "learn", "--rules", str(d / "rules.psl"), "--data", str(d / "train.jsonl"),
            "--config", str(cfg), "--output", str(dest),
        )
        assert code == 0
        assert out == ""
        assert "<-" in dest.read_text()

    def test_repeatable_data_flag(self, capsys):
        d = FIXTURES / "learning"
        code, _, _ = run(
            capsys,
            "learn", "--rules", str(d / "rules.psl"),
            "--data", str(d / "train.jsonl"), "--data", str(d / "train.jsonl"),
        )
        assert code == 0


class TestMisc:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "pslvqa" in capsys.readouterr().out

    def test_repeated_runs_are_byte_identical(self):
        def invoke(*argv):
            return subprocess.run(
                [sys.executable, "-m", "pslvqa.cli", *argv],
                capture_output=True,
                check=True,
            ).stdout

        infer_args = ("infer", "--rules", RULES, "--data", DATA)
        assert invoke(*infer_args) == invoke(*infer_args)
        answer_args = ("answer", "--instance", BARN, "--evidence", "all")
        assert invoke(*answer_args) == invoke(*answer_args)
