import json

import pytest

from adeqa.cli import EXIT_BACKEND, EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from adeqa.corpus import bundled_excerpt_path

EXCERPT = str(bundled_excerpt_path())


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture
def split_dir(tmp_path):
    out = tmp_path / "split"
    code = run_cli("split", EXCERPT, "--train-size", "25", "--seed", "7", "--out-dir", str(out))
    assert code == EXIT_OK
    return out


class TestStats:
    def test_excerpt_stats(self, tmp_path):
        out = tmp_path / "stats"
        assert run_cli("stats", EXCERPT, "--out-dir", str(out)) == EXIT_OK
        stats = json.loads((out / "stats.json").read_text())
        assert stats["num_records"] == 50
        assert stats["num_texts"] == 35
        assert stats["offset_failed"] == 0
        for name in ("ades_per_text.csv", "suspects_per_text.csv", "pairs_per_text.csv"):
            content = (out / name).read_text().splitlines()
            assert content[0] == "count,num_texts"
            assert sum(int(row.split(",")[1]) for row in content[1:]) == stats["num_texts"]
        assert (out / "manifest.json").exists()

    def test_empty_corpus_zeroed(self, tmp_path):
        empty = tmp_path / "empty.rel"
        empty.write_text("")
        out = tmp_path / "stats"
        assert run_cli("stats", str(empty), "--out-dir", str(out)) == EXIT_OK
        stats = json.loads((out / "stats.json").read_text())
        assert stats["num_texts"] == 0 and stats["num_records"] == 0

    def test_malformed_line_reports_line_number(self, tmp_path, capsys):
        bad = tmp_path / "bad.rel"
        bad.write_text("only|three|fields\n")
        out = tmp_path / "stats"
        assert run_cli("stats", str(bad), "--out-dir", str(out)) == EXIT_DATA
        assert "line 1" in capsys.readouterr().err


class TestSplit:
    def test_outputs_and_sizes(self, split_dir):
        train = (split_dir / "train.jsonl").read_text().splitlines()
        evalset = (split_dir / "eval.jsonl").read_text().splitlines()
        assert len(train) == 25 and len(evalset) == 10
        manifest = json.loads((split_dir / "manifest.json").read_text())
        assert manifest["params"]["seed"] == "7"
        assert len(manifest["inputs"]) == 1

    def test_byte_identical_across_runs(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            run_cli("split", EXCERPT, "--train-size", "25", "--seed", "7", "--out-dir", str(out))
            outs.append(out)
        assert (outs[0] / "train.jsonl").read_bytes() == (outs[1] / "train.jsonl").read_bytes()
        assert (outs[0] / "eval.jsonl").read_bytes() == (outs[1] / "eval.jsonl").read_bytes()

    def test_train_size_too_large(self, tmp_path, capsys):
        code = run_cli("split", EXCERPT, "--train-size", "999", "--out-dir", str(tmp_path / "x"))
        assert code == EXIT_USAGE

    def test_missing_required_flag_is_usage_error(self, tmp_path):
        assert run_cli("split", EXCERPT, "--out-dir", str(tmp_path / "x")) == EXIT_USAGE


class TestPrepare:
    def test_approach1_sample_counts(self, tmp_path):
        corpus_file = tmp_path / "one.rel"
        corpus_file.write_text(
            "10030778|Intravenous azithromycin-induced ototoxicity.|ototoxicity|43|54|azithromycin|22|34\n"
        )
        out = tmp_path / "pairs.jsonl"
        code = run_cli("prepare", str(corpus_file), "--approach", "1", "--out", str(out))
        assert code == EXIT_OK
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(lines) == 3
        assert {l["task"] for l in lines} == {"ade_list", "suspect_list", "pair_confirm"}

    def test_approach2_one_line_per_example(self, split_dir, tmp_path):
        out = tmp_path / "pairs2.jsonl"
        code = run_cli("prepare", str(split_dir), "--approach", "2", "--out", str(out))
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert len(lines) == 25  # train side of the split
        assert all(json.loads(l)["task"] == "joint_pairs" for l in lines)

    def test_unknown_grammar_errors(self, split_dir, tmp_path):
        code = run_cli(
            "prepare", str(split_dir), "--approach", "1",
            "--grammar", "no-such-grammar.json", "--out", str(tmp_path / "x.jsonl"),
        )
        assert code == EXIT_DATA


class TestRun:
    def test_mock_zero_noise_matches_gold(self, split_dir, tmp_path):
        out = tmp_path / "run"
        code = run_cli(
            "run", str(split_dir / "eval.jsonl"), "--approach", "1",
            "--backend", "mock", "--out-dir", str(out),
        )
        assert code == EXIT_OK
        predictions = [json.loads(l) for l in (out / "predictions.jsonl").read_text().splitlines()]
        gold = [json.loads(l) for l in (split_dir / "eval.jsonl").read_text().splitlines()]
        assert len(predictions) == len(gold) == 10
        gold_by_id = {g["id"]: g for g in gold}
        for p in predictions:
            assert sorted(map(tuple, p["pairs"])) == sorted(
                map(tuple, gold_by_id[p["example_id"]]["pairs"])
            )

    def test_rerun_identical_and_concurrency_independent(self, split_dir, tmp_path):
        blobs = []
        for name, workers in (("r1", "1"), ("r2", "4")):
            out = tmp_path / name
            code = run_cli(
                "run", str(split_dir / "eval.jsonl"), "--approach", "2",
                "--backend", "mock", "--noise-drop", "0.3", "--seed", "11",
                "--concurrency", workers, "--out-dir", str(out),
            )
            assert code == EXIT_OK
            blobs.append((out / "predictions.jsonl").read_bytes())
        assert blobs[0] == blobs[1]

    def test_judgments_out(self, split_dir, tmp_path):
        out = tmp_path / "run"
        code = run_cli(
            "run", str(split_dir / "eval.jsonl"), "--approach", "1",
            "--backend", "mock", "--judgments-out", "judgments.jsonl",
            "--out-dir", str(out),
        )
        assert code == EXIT_OK
        judgments = [json.loads(l) for l in (out / "judgments.jsonl").read_text().splitlines()]
        assert judgments and all(j["gold"] == j["predicted"] for j in judgments)

    def test_http_dead_endpoint_exits_backend(self, split_dir, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli(
            "run", str(split_dir / "eval.jsonl"), "--approach", "2",
            "--backend", "http", "--endpoint", "http://127.0.0.1:9",
            "--timeout-ms", "200", "--max-retries", "0", "--out-dir", str(out),
        )
        assert code == EXIT_BACKEND
        assert "skipped" in capsys.readouterr().err

    def test_http_requires_endpoint(self, split_dir, tmp_path, monkeypatch):
        monkeypatch.delenv("ADEQA_ENDPOINT", raising=False)
        code = run_cli(
            "run", str(split_dir / "eval.jsonl"), "--approach", "2",
            "--backend", "http", "--out-dir", str(tmp_path / "x"),
        )
        assert code == EXIT_USAGE


class TestEvaluate:
    @pytest.fixture
    def run_dir(self, split_dir, tmp_path):
        out = tmp_path / "run"
        run_cli(
            "run", str(split_dir / "eval.jsonl"), "--approach", "1",
            "--backend", "mock", "--judgments-out", "judgments.jsonl",
            "--out-dir", str(out),
        )
        return out

    def test_perfect_scores(self, split_dir, run_dir, capsys):
        code = run_cli(
            "evaluate", str(run_dir / "predictions.jsonl"), str(split_dir / "eval.jsonl"),
            "--match", "strict", "--judgments", str(run_dir / "judgments.jsonl"),
        )
        assert code == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        for kind in ("ade", "suspect", "relation"):
            assert report["per_kind"][kind]["f1"] == 1.0
        assert report["confusion"]["gold_yes_pred_no"] == 0
        assert report["confusion"]["gold_no_pred_yes"] == 0

    def test_partial_match_adjective_fixture(self, tmp_path):
        gold = tmp_path / "gold.jsonl"
        gold.write_text(
            json.dumps(
                {"id": "t1", "pmids": ["1"], "text": "ctx.", "pairs": [["fever", "metformin"]]}
            )
            + "\n"
        )
        preds = tmp_path / "preds.jsonl"
        preds.write_text(
            json.dumps(
                {
                    "example_id": "t1",
                    "ades": ["severe fever"],
                    "suspects": ["metformin"],
                    "pairs": [["severe fever", "metformin"]],
                    "backend_calls": 3,
                    "malformed": False,
                }
            )
            + "\n"
        )
        import io
        from contextlib import redirect_stdout

        def score(match):
            buffer = io.StringIO()
            with redirect_stdout(buffer):
                assert run_cli(
                    "evaluate", str(preds), str(gold), "--match", match, "--tau", "0.7"
                ) == EXIT_OK
            return json.loads(buffer.getvalue())

        assert score("partial")["per_kind"]["ade"]["f1"] == 1.0
        assert score("strict")["per_kind"]["ade"]["f1"] == 0.0

    def test_csv_format(self, split_dir, run_dir, capsys):
        code = run_cli(
            "evaluate", str(run_dir / "predictions.jsonl"), str(split_dir / "eval.jsonl"),
            "--format", "csv",
        )
        assert code == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("kind,mode,")
        assert len(lines) == 4

    def test_out_file(self, split_dir, run_dir, tmp_path):
        target = tmp_path / "report.json"
        code = run_cli(
            "evaluate", str(run_dir / "predictions.jsonl"), str(split_dir / "eval.jsonl"),
            "--out", str(target),
        )
        assert code == EXIT_OK
        assert json.loads(target.read_text())["skipped_texts"] == 0

    def test_id_join_failure(self, split_dir, run_dir, tmp_path):
        other_gold = tmp_path / "other.jsonl"
        other_gold.write_text(
            json.dumps({"id": "zzz", "pmids": [], "text": "t.", "pairs": []}) + "\n"
        )
        code = run_cli(
            "evaluate", str(run_dir / "predictions.jsonl"), str(other_gold)
        )
        assert code == EXIT_DATA


def test_composition_end_to_end(tmp_path):
    """stats -> split -> prepare -> run -> evaluate consume each other's outputs."""
    split_out = tmp_path / "split"
    assert run_cli("split", EXCERPT, "--train-size", "28", "--out-dir", str(split_out)) == EXIT_OK
    pairs_out = tmp_path / "pairs" / "pairs.jsonl"
    assert run_cli("prepare", str(split_out), "--approach", "1", "--out", str(pairs_out)) == EXIT_OK
    run_out = tmp_path / "run"
    assert run_cli(
        "run", str(split_out / "eval.jsonl"), "--approach", "2",
        "--backend", "mock", "--out-dir", str(run_out),
    ) == EXIT_OK
    report_out = tmp_path / "report.json"
    assert run_cli(
        "evaluate", str(run_out / "predictions.jsonl"), str(split_out / "eval.jsonl"),
        "--match", "partial", "--out", str(report_out),
    ) == EXIT_OK
    report = json.loads(report_out.read_text())
    assert report["per_kind"]["relation"]["f1"] == 1.0
