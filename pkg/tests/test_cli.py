import csv
import json

import pytest

from modeval.cli import main

from conftest import FIXTURES


def write_config(tmp_path, **overrides):
    config = {
        "corpus": {
            "train": str(FIXTURES / "corpus10.jsonl"),
            "test": str(FIXTURES / "corpus10.jsonl"),
        },
        "provider": {"model_name": "mock-model", "max_inflight": 2,
                     "retry_limit": 1, "retry_backoff": 0.001},
        "limits": {"wall_time": 2.0, "memory": 268435456, "output_cap": 1048576},
        "compare": {"mode": "token", "float_tolerance": 1e-6},
        "ks": [1],
        "max_reflection_rounds": 5,
        "workers": 2,
        "outdir": str(tmp_path / "out"),
        "cache_dir": str(tmp_path / "cache"),
        "mock_provider": str(FIXTURES / "e2e" / "mock"),
        "fail_fast": True,
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def read_csv(path):
    with path.open() as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(["stats", "--config", str(tmp_path / "nope.json")])
        assert rc == 1
        assert "error" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        assert main(["stats", "--config", str(path)]) == 1

    def test_missing_corpus_path(self, tmp_path):
        config = write_config(tmp_path, corpus={"train": str(tmp_path / "missing.jsonl")})
        assert main(["stats", "--config", str(config)]) == 1

    def test_bad_data_type(self, tmp_path):
        config = write_config(tmp_path, data_types=["mot", "weird"])
        assert main(["stats", "--config", str(config)]) == 1

    def test_relative_paths_resolved_against_config_dir(self, tmp_path):
        (tmp_path / "corpus.jsonl").write_text(
            json.dumps({"id": "x", "question": "q", "solutions": ["print(1)"],
                        "input_output": {"inputs": ["\n"], "outputs": ["1\n"]},
                        "difficulty": "unknown", "source": "s"}) + "\n"
        )
        config = write_config(tmp_path, corpus={"train": "corpus.jsonl"},
                              outdir="out", cache_dir=None, mock_provider=None)
        assert main(["stats", "--config", str(config)]) == 0
        assert (tmp_path / "out" / "stats" / "stats.json").exists()


class TestStats:
    def test_stats_outputs(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["stats", "--config", str(config)]) == 0
        out = tmp_path / "out" / "stats"
        summary = json.loads((out / "stats.json").read_text())
        assert summary["train"]["total_problems"] == 10
        assert summary["train"]["untestable"] == 1
        rows = read_csv(out / "stats.csv")
        assert rows[0] == ["split", "source", "difficulty", "count"]
        assert (out / "manifest.json").exists()


class TestTransform:
    def test_transform_pipeline(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["transform", "--config", str(config)]) == 0
        out = tmp_path / "out" / "transform"

        mot = read_jsonl(out / "mot.jsonl")
        clean = read_jsonl(out / "clean.jsonl")
        rejected = read_jsonl(out / "rejected.jsonl")

        # 10 problems; the scripted two-block response kills e2e-repeat's
        # mot rewrite, everything else passes its own tests or is untestable
        assert len(mot) == 9
        assert len(clean) == 10
        assert {r["problem_id"] for r in rejected} == {"e2e-repeat"}
        assert rejected[0]["marker"] == "m3_main_code_count"
        assert all(row["outline"] for row in mot)

        rates = read_csv(out / "filter_rates.csv")
        assert rates[0] == ["source", "data_type", "pre_count", "post_count", "rate_percent"]
        table = {(r[0], r[1]): r for r in rates[1:]}
        assert table[("beta", "mot")][2:] == ["4", "3", "75"]  # the rejected rewrite
        assert table[("alpha", "mot")][2:] == ["6", "6", "100"]
        assert "rate" in capsys.readouterr().out

    def test_empty_corpus(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        config = write_config(tmp_path, corpus={"train": str(empty), "test": str(empty)})
        assert main(["transform", "--config", str(config)]) == 0
        out = tmp_path / "out" / "transform"
        assert read_jsonl(out / "mot.jsonl") == []
        assert read_jsonl(out / "rejected.jsonl") == []

    def test_dedup_against_holdout_split(self, tmp_path):
        # train shares one statement with the holdout; that problem must not
        # be transformed, and the removal is reported
        rows = read_jsonl(FIXTURES / "corpus10.jsonl")
        holdout = tmp_path / "holdout.jsonl"
        holdout.write_text(json.dumps({
            "id": "other-id", "question": rows[0]["question"],
            "solutions": ["print(input())"],
            "input_output": {"inputs": ["a\n"], "outputs": ["a\n"]},
            "difficulty": "unknown", "source": "holdout",
        }) + "\n")
        config = write_config(
            tmp_path,
            corpus={"train": str(FIXTURES / "corpus10.jsonl"), "test": str(holdout)},
            dedup_holdout_split="test",
            data_types=["clean"],
        )
        assert main(["transform", "--config", str(config)]) == 0
        out = tmp_path / "out" / "transform"
        report = read_csv(out / "dedup_report.csv")
        assert report[0] == ["train_id", "holdout_id", "similarity", "reason"]
        assert report[1][:2] == [rows[0]["id"], "other-id"]
        clean = read_jsonl(out / "clean.jsonl")
        assert rows[0]["id"] not in {r["problem_id"] for r in clean}
        assert len(clean) == 9

    def test_provider_error_is_data_not_exit_code(self, tmp_path, monkeypatch):
        from modeval import cli as cli_module
        from modeval.llm_client import MockProvider, ProviderError

        # every call errors: items become rejected rows, the command still
        # exits 0 because nothing infrastructural broke
        def broken_provider(cfg):
            return MockProvider(script=[ProviderError("auth", "nope")] * 100)

        monkeypatch.setattr(cli_module, "_make_provider", broken_provider)
        config = write_config(tmp_path, data_types=["mot"])
        assert main(["transform", "--config", str(config)]) == 0
        out = tmp_path / "out" / "transform"
        rejected = read_jsonl(out / "rejected.jsonl")
        assert len(rejected) == 10
        assert all("provider error" in r["detail"] for r in rejected)
        assert read_jsonl(out / "mot.jsonl") == []


class TestEvaluate:
    def test_reference_solutions_pass(self, tmp_path):
        # feed every testable problem's own reference solution back as the candidate
        corpus_rows = read_jsonl(FIXTURES / "corpus10.jsonl")
        candidates = tmp_path / "cands.jsonl"
        with candidates.open("w") as fh:
            for row in corpus_rows:
                if "input_output" in row:
                    fh.write(json.dumps({"problem_id": row["id"],
                                         "candidates": [row["solutions"][0]]}) + "\n")
        config = write_config(tmp_path)
        assert main(["evaluate", "--config", str(config), "--candidates", str(candidates)]) == 0
        report = json.loads((tmp_path / "out" / "evaluate" / "report.json").read_text())
        assert report["pass_at_k"]["all"]["1"] == 1.0

    def test_fixture_candidates_report(self, tmp_path):
        config = write_config(tmp_path)
        rc = main(["evaluate", "--config", str(config),
                   "--candidates", str(FIXTURES / "e2e" / "candidates.jsonl")])
        assert rc == 0
        out = tmp_path / "out" / "evaluate"
        report = json.loads((out / "report.json").read_text())
        # 5 of 9 problems pass at k=1 given the fixture candidates:
        # echo, sum, sorted, initials pass; max has 1 of 2 candidates correct
        assert report["pass_at_k"]["all"]["1"] == pytest.approx((4 + 0.5) / 9)
        records = read_jsonl(out / "records.jsonl")
        assert len(records) == 10  # 10 candidate programs over 9 problems
        assert read_csv(out / "pass_at_k.csv")[0] == ["difficulty", "k", "pass_at_k"]
        wide = read_csv(out / "pass_at_k_table.csv")
        assert wide[0][0] == "k"
        assert set(wide[0][1:]) == {"introductory", "interview", "competition", "all"}
        assert wide[1][0] == "1"

    def test_missing_candidates_file(self, tmp_path):
        config = write_config(tmp_path)
        rc = main(["evaluate", "--config", str(config),
                   "--candidates", str(tmp_path / "missing.jsonl")])
        assert rc == 1

    def test_unknown_problem_id_nonzero_exit(self, tmp_path, capsys):
        candidates = tmp_path / "cands.jsonl"
        candidates.write_text(json.dumps({"problem_id": "ghost", "candidates": ["x"]}) + "\n")
        config = write_config(tmp_path)
        rc = main(["evaluate", "--config", str(config), "--candidates", str(candidates)])
        assert rc == 1
        assert "ghost" in capsys.readouterr().err

    def test_malformed_candidates_line(self, tmp_path, capsys):
        candidates = tmp_path / "cands.jsonl"
        candidates.write_text("{broken\n")
        config = write_config(tmp_path)
        rc = main(["evaluate", "--config", str(config), "--candidates", str(candidates)])
        assert rc == 1
        assert "line 1" in capsys.readouterr().err

    def test_candidates_must_be_a_list(self, tmp_path, capsys):
        candidates = tmp_path / "cands.jsonl"
        candidates.write_text(json.dumps({"problem_id": "e2e-echo",
                                          "candidates": "print(input())"}) + "\n")
        config = write_config(tmp_path)
        rc = main(["evaluate", "--config", str(config), "--candidates", str(candidates)])
        assert rc == 1
        assert "list" in capsys.readouterr().err

    def test_k_larger_than_candidate_count_is_config_error(self, tmp_path, capsys):
        candidates = tmp_path / "cands.jsonl"
        candidates.write_text(json.dumps({"problem_id": "e2e-echo",
                                          "candidates": ["print(input())"]}) + "\n")
        config = write_config(tmp_path, ks=[1, 5])
        rc = main(["evaluate", "--config", str(config), "--candidates", str(candidates)])
        assert rc == 1
        assert "e2e-echo" in capsys.readouterr().err


def run_evaluate(tmp_path, config):
    rc = main(["evaluate", "--config", str(config),
               "--candidates", str(FIXTURES / "e2e" / "candidates.jsonl")])
    assert rc == 0


class TestReflect:
    def test_requires_prior_evaluate(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["reflect", "--config", str(config)]) == 1

    def test_reflect_fixes_scripted_problems(self, tmp_path):
        config = write_config(tmp_path)
        run_evaluate(tmp_path, config)
        assert main(["reflect", "--config", str(config)]) == 0
        out = tmp_path / "out" / "reflect"
        traces = {t["problem_id"]: t for t in read_jsonl(out / "traces.jsonl")}
        # four failed problems reflected; two get fixed by scripted responses
        assert set(traces) == {"e2e-parity", "e2e-repeat", "e2e-sumlist", "e2e-countdown"}
        assert traces["e2e-parity"]["solved_at"] == 0
        assert traces["e2e-sumlist"]["solved_at"] == 2
        assert traces["e2e-repeat"]["solved_at"] is None
        assert len(traces["e2e-repeat"]["rounds"]) == 5  # cap honored
        assert len(traces["e2e-countdown"]["rounds"]) == 5

        rows = read_csv(out / "comparison.csv")
        assert rows[0] == ["difficulty", "problems", "pass_at_1_before", "pass_at_1_after"]
        table = {r[0]: r for r in rows[1:]}
        before, after = float(table["all"][2]), float(table["all"][3])
        assert after > before

    def test_noop_when_nothing_failed(self, tmp_path):
        corpus_rows = read_jsonl(FIXTURES / "corpus10.jsonl")
        candidates = tmp_path / "cands.jsonl"
        with candidates.open("w") as fh:
            for row in corpus_rows:
                if "input_output" in row:
                    fh.write(json.dumps({"problem_id": row["id"],
                                         "candidates": [row["solutions"][0]]}) + "\n")
        config = write_config(tmp_path)
        assert main(["evaluate", "--config", str(config), "--candidates", str(candidates)]) == 0
        assert main(["reflect", "--config", str(config)]) == 0
        out = tmp_path / "out" / "reflect"
        assert read_jsonl(out / "traces.jsonl") == []
        rows = read_csv(out / "comparison.csv")
        table = {r[0]: r for r in rows[1:]}
        assert table["all"][2] == table["all"][3]

    def test_max_rounds_one_caps_trace(self, tmp_path):
        config = write_config(tmp_path, max_reflection_rounds=1)
        run_evaluate(tmp_path, config)
        assert main(["reflect", "--config", str(config)]) == 0
        traces = read_jsonl(tmp_path / "out" / "reflect" / "traces.jsonl")
        assert all(len(t["rounds"]) <= 1 for t in traces)


class TestAnalyze:
    def test_profiles_emitted(self, tmp_path):
        config = write_config(tmp_path)
        run_evaluate(tmp_path, config)
        assert main(["analyze", "--config", str(config)]) == 0
        out = tmp_path / "out" / "analyze"

        function_rows = read_csv(out / "function_profile.csv")
        assert function_rows[0] == ["difficulty", "function_bin", "count", "accuracy"]
        assert len(function_rows) > 1

        resource_rows = read_csv(out / "resource_profile.csv")
        assert resource_rows[0] == ["difficulty", "passed_count",
                                    "avg_time_seconds", "avg_peak_memory_bytes"]

        mi_rows = read_csv(out / "mi_profile.csv")
        assert mi_rows[0] == ["group", "label", "mean_maintainability"]
        groups = {r[0] for r in mi_rows[1:]}
        assert groups == {"difficulty", "split"}

    def test_no_passed_candidates_absent_means(self, tmp_path):
        config = write_config(tmp_path)
        records = tmp_path / "records.jsonl"
        records.write_text(json.dumps({
            "problem_id": "e2e-echo", "candidate_index": 0, "difficulty": "introductory",
            "split": "test", "passed": False, "first_failure": 0, "matched": [False],
            "statuses": ["ok"], "avg_time": 0.1, "avg_peak_memory": 1000,
            "metrics": {"halstead_volume": 1.0, "cyclomatic": 1, "sloc": 1,
                        "comment_density": 0.0, "maintainability": 100.0,
                        "function_count": 0},
        }) + "\n")
        assert main(["analyze", "--config", str(config), "--records", str(records)]) == 0
        mi_rows = read_csv(tmp_path / "out" / "analyze" / "mi_profile.csv")
        values = [r[2] for r in mi_rows[1:] if r[0] == "difficulty"]
        assert all(v == "" for v in values)

    def test_missing_records_nonzero(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["analyze", "--config", str(config)]) == 1

    def test_malformed_records_line_diagnosed(self, tmp_path, capsys):
        config = write_config(tmp_path)
        records = tmp_path / "records.jsonl"
        records.write_text('{"problem_id": "x"}\n')
        rc = main(["analyze", "--config", str(config), "--records", str(records)])
        assert rc == 1
        assert "line 1" in capsys.readouterr().err


class TestFlagOverrides:
    def test_outdir_flag_wins(self, tmp_path):
        config = write_config(tmp_path)
        other = tmp_path / "elsewhere"
        assert main(["stats", "--config", str(config), "--outdir", str(other)]) == 0
        assert (other / "stats" / "stats.json").exists()

    def test_no_cache_flag(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["stats", "--config", str(config), "--no-cache"]) == 0

    def test_infrastructure_error_exits_nonzero(self, tmp_path, capsys):
        candidates = tmp_path / "cands.jsonl"
        candidates.write_text(json.dumps({"problem_id": "e2e-echo",
                                          "candidates": ["print(input())"]}) + "\n")
        config = write_config(tmp_path)
        rc = main(["evaluate", "--config", str(config), "--candidates", str(candidates),
                   "--runner", "missing-interpreter-zzz {file}", "--no-cache"])
        assert rc == 1
        assert "missing-interpreter-zzz" in capsys.readouterr().err

    def test_top_level_only_changes_function_counts(self, tmp_path):
        nested = "def outer():\n    def inner():\n        return input()\n    return inner()\nprint(outer())"
        candidates = tmp_path / "cands.jsonl"
        candidates.write_text(json.dumps({"problem_id": "e2e-echo",
                                          "candidates": [nested]}) + "\n")
        config = write_config(tmp_path)
        args = ["evaluate", "--config", str(config), "--candidates", str(candidates)]
        assert main([*args, "--no-cache"]) == 0
        all_defs = read_jsonl(tmp_path / "out" / "evaluate" / "records.jsonl")
        assert all_defs[0]["metrics"]["function_count"] == 2
        assert main([*args, "--no-cache", "--top-level-only"]) == 0
        top_only = read_jsonl(tmp_path / "out" / "evaluate" / "records.jsonl")
        assert top_only[0]["metrics"]["function_count"] == 1
