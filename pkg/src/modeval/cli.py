"""Command-line pipeline driver.

Subcommands: ``transform`` (build modular / clean rewrites and filter them),
``evaluate`` (judge candidate programs and compute pass@k plus metrics),
``reflect`` (rerun failed problems through the self-reflection loop),
``analyze`` (emit the function-count / resource / maintainability CSV
profiles), and ``stats`` (corpus summary).

One JSON config file drives everything; command-line flags win over config
values.  All outputs land under ``<outdir>/<command>/`` with a manifest
recording the config hash, and reruns with a warm cache are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import codemetrics, evaluate, promptgen, sandbox, validator
from .corpus import (
    Corpus,
    CorpusError,
    Problem,
    Split,
    corpus_stats,
    dedup_against,
    load_corpus,
    select_solutions,
)
from .evaluate import CandidateResult, GenerationRecord
from .llm_client import (
    HttpProvider,
    MockProvider,
    ProviderConfig,
    ProviderError,
    ResponseCache,
    complete_batch,
)
from .promptgen import ModularSolution, ParseError
from .sandbox import ComparePolicy, InfrastructureError, ResourceLimits, VerdictCache
from .validator import AssessmentResult, FilterRecord, Marker, Verdict

VERSION = "0.1.0"


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    corpus_paths: dict[str, str]
    provider: ProviderConfig
    limits: ResourceLimits
    policy: ComparePolicy
    dedup_threshold: float = 0.9
    dedup_holdout_split: str | None = None
    solution_cap: int = 100
    ks: list[int] = field(default_factory=lambda: [1])
    max_reflection_rounds: int = 5
    outdir: str = "out"
    workers: int = 4
    cache_dir: str | None = ".modeval_cache"
    runner: str | None = None
    keep_scratch: bool = False
    data_types: list[str] = field(default_factory=lambda: ["mot", "clean"])
    transform_split: str = "train"
    eval_split: str = "test"
    fail_fast: bool = False
    all_mode: str = "problems"
    mock_provider: str | None = None
    use_cache: bool = True
    top_level_functions_only: bool = False
    raw: dict = field(default_factory=dict)


def _resolve(path: str, base: Path) -> str:
    p = Path(path)
    return str(p if p.is_absolute() else base / p)


def load_pipeline_config(config_path: str | Path, overrides: argparse.Namespace) -> PipelineConfig:
    config_path = Path(config_path)
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {config_path} is not valid JSON: {exc}") from exc
    base = config_path.parent

    corpus_paths = {
        split: _resolve(p, base)
        for split, p in (raw.get("corpus") or {}).items()
        if p
    }
    for split in corpus_paths:
        if split not in (s.value for s in Split):
            raise ConfigError(f"unknown corpus split {split!r}")
    try:
        provider = ProviderConfig(**(raw.get("provider") or {}))
        limits = ResourceLimits(**(raw.get("limits") or {}))
        policy = ComparePolicy(**(raw.get("compare") or {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    cfg = PipelineConfig(
        corpus_paths=corpus_paths,
        provider=provider,
        limits=limits,
        policy=policy,
        dedup_threshold=raw.get("dedup_threshold", 0.9),
        dedup_holdout_split=raw.get("dedup_holdout_split"),
        solution_cap=raw.get("solution_cap", 100),
        ks=sorted(set(raw.get("ks", [1]))),
        max_reflection_rounds=raw.get("max_reflection_rounds", 5),
        outdir=_resolve(raw.get("outdir", "out"), base),
        workers=raw.get("workers", 4),
        cache_dir=_resolve(raw["cache_dir"], base) if raw.get("cache_dir") else None,
        runner=raw.get("runner"),
        keep_scratch=raw.get("keep_scratch", False),
        data_types=raw.get("data_types", ["mot", "clean"]),
        transform_split=raw.get("transform_split", "train"),
        eval_split=raw.get("eval_split", "test"),
        fail_fast=raw.get("fail_fast", False),
        all_mode=raw.get("all_mode", "problems"),
        mock_provider=_resolve(raw["mock_provider"], base) if raw.get("mock_provider") else None,
        top_level_functions_only=raw.get("top_level_functions_only", False),
        raw=raw,
    )

    # flags win over config values
    if getattr(overrides, "outdir", None):
        cfg.outdir = overrides.outdir
    if getattr(overrides, "workers", None):
        cfg.workers = overrides.workers
    if getattr(overrides, "runner", None):
        cfg.runner = overrides.runner
    if getattr(overrides, "keep_scratch", False):
        cfg.keep_scratch = True
    if getattr(overrides, "mock_provider", None):
        cfg.mock_provider = overrides.mock_provider
    if getattr(overrides, "no_cache", False):
        cfg.use_cache = False
    if getattr(overrides, "per_level_mean", False):
        cfg.all_mode = "difficulty-means"
    if getattr(overrides, "top_level_only", False):
        cfg.top_level_functions_only = True

    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    for dt in cfg.data_types:
        if dt not in ("mot", "clean"):
            raise ConfigError(f"unknown data type {dt!r}")
    for split, path in cfg.corpus_paths.items():
        if not Path(path).exists():
            raise ConfigError(f"corpus path for split {split!r} does not exist: {path}")
    if cfg.mock_provider and not Path(cfg.mock_provider).is_dir():
        raise ConfigError(f"mock provider fixture dir does not exist: {cfg.mock_provider}")
    return cfg


def _make_provider(cfg: PipelineConfig):
    if cfg.mock_provider:
        return MockProvider(fixture_dir=cfg.mock_provider)
    return HttpProvider()


def _caches(cfg: PipelineConfig) -> tuple[ResponseCache | None, VerdictCache | None]:
    if not cfg.use_cache or not cfg.cache_dir:
        return None, None
    root = Path(cfg.cache_dir)
    return ResponseCache(root / "responses"), VerdictCache(root / "verdicts")


def _outdir(cfg: PipelineConfig, command: str) -> Path:
    out = Path(cfg.outdir) / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, cfg: PipelineConfig) -> None:
    config_hash = hashlib.sha256(
        json.dumps(cfg.raw, sort_keys=True).encode("utf-8")
    ).hexdigest()
    manifest = {
        "command": command,
        "config_hash": config_hash,
        "version": VERSION,
        "python": ".".join(str(v) for v in sys.version_info[:3]),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _corpus_for(cfg: PipelineConfig, split: str) -> Corpus:
    if split not in cfg.corpus_paths:
        raise ConfigError(f"no corpus configured for split {split!r}")
    return load_corpus(cfg.corpus_paths[split], Split(split))


# --- transform ---------------------------------------------------------------


def _assess_clean(text: str) -> tuple[AssessmentResult, str | None]:
    blocks = [b for b, _ in promptgen.extract_code_blocks(text) if b.strip()]
    if len(blocks) != 1:
        result = AssessmentResult(
            verdict=Verdict.REJECT,
            marker=Marker.M3_MAIN_CODE_COUNT,
            detail=f"{len(blocks)} code blocks in rewrite response",
        )
        return result, None
    return AssessmentResult(verdict=Verdict.ACCEPT), blocks[0]


def cmd_transform(cfg: PipelineConfig) -> int:
    corpus = _corpus_for(cfg, cfg.transform_split)
    provider = _make_provider(cfg)
    rcache, vcache = _caches(cfg)
    out = _outdir(cfg, "transform")

    if cfg.dedup_holdout_split:
        holdout = _corpus_for(cfg, cfg.dedup_holdout_split)
        corpus, dedup_report = dedup_against(corpus, holdout, cfg.dedup_threshold)
        _write_csv(
            out / "dedup_report.csv",
            ["train_id", "holdout_id", "similarity", "reason"],
            [[r.train_id, r.holdout_id, round(r.similarity, 6), r.reason]
             for r in dedup_report.removed],
        )
        print(
            f"dedup against {cfg.dedup_holdout_split}: removed "
            f"{dedup_report.removed_count}, kept {dedup_report.kept_count}"
        )

    items: list[tuple[Problem, int, str, str]] = []
    for problem in corpus:
        for si, solution in enumerate(select_solutions(problem, cfg.solution_cap)):
            for data_type in cfg.data_types:
                items.append((problem, si, solution, data_type))

    prompts = [
        promptgen.build_mot_prompt(problem, solution)
        if data_type == "mot"
        else promptgen.build_clean_prompt(problem, solution)
        for problem, _, solution, data_type in items
    ]
    completions = complete_batch(prompts, cfg.provider, provider=provider, cache=rcache)

    # structural pass
    staged = []  # (item, assessment, final_code, outline, provider_error)
    for (problem, si, solution, data_type), result in zip(items, completions):
        if isinstance(result, ProviderError):
            staged.append(((problem, si, solution, data_type), None, None, [], str(result)))
            continue
        if data_type == "mot":
            try:
                parsed: ModularSolution | ParseError = promptgen.parse_mot_response(result.text)
            except ParseError as exc:
                parsed = exc
            assessment = validator.assess_structure(parsed)
            final_code = parsed.final_code if isinstance(parsed, ModularSolution) else None
            outline = (
                [{"name": s.name, "header": s.header, "docstring": s.docstring}
                 for s in parsed.outline]
                if isinstance(parsed, ModularSolution)
                else []
            )
        else:
            assessment, final_code = _assess_clean(result.text)
            outline = []
        staged.append(((problem, si, solution, data_type), assessment, final_code, outline, None))

    # functional pass over structurally accepted, testable items
    judge_idx = [
        i for i, (item, assessment, final_code, _, err) in enumerate(staged)
        if err is None and assessment.accepted and final_code is not None
        and not item[0].untestable
    ]
    verdicts = sandbox.judge_batch(
        [(staged[i][2], staged[i][0][0]) for i in judge_idx],
        cfg.limits,
        cfg.policy,
        workers=cfg.workers,
        runner=cfg.runner,
        fail_fast=cfg.fail_fast,
        keep_scratch=cfg.keep_scratch,
        verdict_cache=vcache,
    )
    verdict_by_idx = dict(zip(judge_idx, verdicts))

    records: list[FilterRecord] = []
    accepted_rows: dict[str, list[dict]] = {"mot": [], "clean": []}
    rejected_rows: list[dict] = []
    for i, ((problem, si, solution, data_type), assessment, final_code, outline, err) in enumerate(staged):
        if err is not None:
            rejected_rows.append({
                "problem_id": problem.id, "data_type": data_type,
                "solution_index": si, "marker": None, "detail": f"provider error: {err}",
            })
            continue
        if assessment.accepted and i in verdict_by_idx:
            verdict = verdict_by_idx[i]
            if not verdict.passed:
                idx = verdict.first_failure
                status = verdict.per_test[idx][0].status.value if idx is not None else "unknown"
                assessment = AssessmentResult(
                    verdict=Verdict.REJECT,
                    marker=Marker.M4_TESTS_FAILED,
                    detail=f"first failing test {idx} ({status})",
                )
        elif assessment.accepted and problem.untestable:
            assessment = AssessmentResult(
                verdict=Verdict.ACCEPT, detail="functional check skipped (untestable)"
            )
        records.append(FilterRecord(problem.id, problem.source, data_type, assessment))
        if assessment.accepted:
            row = {
                "problem_id": problem.id,
                "source": problem.source,
                "difficulty": problem.difficulty.value,
                "split": problem.split.value,
                "data_type": data_type,
                "solution_index": si,
                "final_code": final_code,
            }
            if data_type == "mot":
                row["outline"] = outline
            accepted_rows[data_type].append(row)
        else:
            rejected_rows.append({
                "problem_id": problem.id, "data_type": data_type, "solution_index": si,
                "marker": assessment.marker.value, "detail": assessment.detail,
            })

    for data_type in cfg.data_types:
        _write_jsonl(out / f"{data_type}.jsonl", accepted_rows[data_type])
    _write_jsonl(out / "rejected.jsonl", rejected_rows)
    _write_jsonl(
        out / "filter_records.jsonl",
        [
            {
                "problem_id": r.problem_id, "source": r.source, "data_type": r.data_type,
                "verdict": r.result.verdict.value,
                "marker": r.result.marker.value if r.result.marker else None,
                "detail": r.result.detail,
            }
            for r in records
        ],
    )
    table = validator.filter_pass_rate(records)
    _write_csv(
        out / "filter_rates.csv",
        ["source", "data_type", "pre_count", "post_count", "rate_percent"],
        [
            [source, data_type, row.pre_count, row.post_count,
             row.rate_percent if row.rate_percent is not None else ""]
            for (source, data_type), row in table.items()
        ],
    )
    _write_manifest(out, "transform", cfg)
    for line in validator.rate_table_lines(table):
        print(line)
    return 0


# --- evaluate ----------------------------------------------------------------


def _load_candidates(path: Path) -> list[tuple[str, list[str]]]:
    """Candidate programs per problem, file order, from a candidates JSONL.

    Accepts ``{"problem_id", "candidates": [code, ...]}`` lines and transform
    output lines (``{"problem_id", "final_code": code}``) interchangeably.
    """
    if not path.exists():
        raise ConfigError(f"candidates file does not exist: {path}")
    grouped: dict[str, list[str]] = {}
    order: list[str] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            pid = obj["problem_id"]
            if "candidates" in obj:
                if not isinstance(obj["candidates"], list):
                    raise ValueError("'candidates' must be a list")
                codes = list(obj["candidates"])
            elif "final_code" in obj:
                codes = [obj["final_code"]]
            else:
                raise KeyError("candidates")
            if not isinstance(pid, str) or any(not isinstance(c, str) for c in codes):
                raise ValueError("wrong field types")
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: malformed candidates line {lineno}: {exc}") from exc
        if pid not in grouped:
            grouped[pid] = []
            order.append(pid)
        grouped[pid].extend(codes)
    return [(pid, grouped[pid]) for pid in order]


def _build_records(
    cfg: PipelineConfig,
    corpus: Corpus,
    candidates: list[tuple[str, list[str]]],
    vcache: VerdictCache | None,
    workers: int | None = None,
) -> list[GenerationRecord]:
    unknown = sorted({pid for pid, _ in candidates if pid not in corpus})
    if unknown:
        raise ConfigError(f"candidates reference unknown problem ids: {', '.join(unknown)}")

    judged: list[tuple[str, str]] = []
    for pid, codes in candidates:
        problem = corpus.get(pid)
        if problem.untestable:
            print(f"skipping untestable problem {pid}")
            continue
        for code in codes:
            judged.append((pid, code))

    verdicts = sandbox.judge_batch(
        [(code, corpus.get(pid)) for pid, code in judged],
        cfg.limits,
        cfg.policy,
        workers=workers if workers is not None else cfg.workers,
        runner=cfg.runner,
        fail_fast=cfg.fail_fast,
        keep_scratch=cfg.keep_scratch,
        verdict_cache=vcache,
    )

    by_problem: dict[str, list[CandidateResult]] = {}
    order: list[str] = []
    for (pid, code), verdict in zip(judged, verdicts):
        if pid not in by_problem:
            by_problem[pid] = []
            order.append(pid)
        metrics = codemetrics.analyze(
            code, top_level_functions_only=cfg.top_level_functions_only
        )
        by_problem[pid].append(CandidateResult(code=code, verdict=verdict, metrics=metrics))
    return [GenerationRecord(problem_id=pid, candidates=by_problem[pid]) for pid in order]


def _report_to_dict(report: evaluate.EvalReport) -> dict:
    return {
        "pass_at_k": {
            label: {str(k): v for k, v in ks.items()}
            for label, ks in report.pass_at_k.items()
        },
        "function_profile": {
            label: {
                b: {"count": s.count, "accuracy": s.accuracy} for b, s in bins.items()
            }
            for label, bins in report.function_profile.items()
        },
        "resource_profile": {
            label: (
                None if avg is None else {
                    "passed_count": avg.passed_count,
                    "avg_time": avg.avg_time,
                    "avg_peak_memory": avg.avg_peak_memory,
                }
            )
            for label, avg in report.resource_profile.items()
        },
        "mi_profile": report.mi_profile,
        "mi_profile_by_split": report.mi_profile_by_split,
        "problem_count": report.problem_count,
        "candidate_count": report.candidate_count,
    }


def _records_rows(records: list[GenerationRecord], corpus: Corpus) -> list[dict]:
    rows = []
    for record in records:
        problem = corpus.get(record.problem_id)
        for ci, cand in enumerate(record.candidates):
            m = cand.metrics
            rows.append({
                "problem_id": record.problem_id,
                "candidate_index": ci,
                "difficulty": problem.difficulty.value,
                "split": problem.split.value,
                "passed": cand.verdict.passed,
                "first_failure": cand.verdict.first_failure,
                "matched": [bool(ok) for _, ok in cand.verdict.per_test],
                "statuses": [r.status.value for r, _ in cand.verdict.per_test],
                "avg_time": cand.verdict.avg_time,
                "avg_peak_memory": cand.verdict.avg_peak_memory,
                "metrics": {
                    "halstead_volume": m.halstead_volume,
                    "cyclomatic": m.cyclomatic,
                    "sloc": m.sloc,
                    "comment_density": m.comment_density,
                    "maintainability": m.maintainability,
                    "function_count": m.function_count,
                },
            })
    return rows


def cmd_evaluate(cfg: PipelineConfig, candidates_path: str) -> int:
    corpus = _corpus_for(cfg, cfg.eval_split)
    _, vcache = _caches(cfg)
    out = _outdir(cfg, "evaluate")

    candidates = _load_candidates(Path(candidates_path))
    records = _build_records(cfg, corpus, candidates, vcache)
    try:
        report = evaluate.evaluate_corpus(corpus, records, cfg.ks, all_mode=cfg.all_mode)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    (out / "report.json").write_text(
        json.dumps(_report_to_dict(report), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    _write_csv(
        out / "pass_at_k.csv",
        ["difficulty", "k", "pass_at_k"],
        [
            [label, k, rate]
            for label, rates in report.pass_at_k.items()
            for k, rate in sorted(rates.items())
        ],
    )
    # wide companion table: one row per k, one column per difficulty level
    labels = list(report.pass_at_k)
    _write_csv(
        out / "pass_at_k_table.csv",
        ["k"] + labels,
        [
            [k] + [report.pass_at_k[label].get(k, "") for label in labels]
            for k in cfg.ks
        ],
    )
    _write_jsonl(out / "records.jsonl", _records_rows(records, corpus))
    _write_manifest(out, "evaluate", cfg)

    for label, rates in report.pass_at_k.items():
        for k, rate in sorted(rates.items()):
            print(f"pass@{k} {label:<14} {rate:.4f}")
    return 0


# --- reflect -----------------------------------------------------------------


def _load_record_rows(path: Path) -> list[dict]:
    if not path.exists():
        raise ConfigError(f"evaluate records not found: {path} (run evaluate first)")
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            row["problem_id"], row["passed"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: malformed records line {lineno}: {exc}") from exc
        rows.append(row)
    return rows


def cmd_reflect(cfg: PipelineConfig) -> int:
    records_path = Path(cfg.outdir) / "evaluate" / "records.jsonl"
    rows = _load_record_rows(records_path)
    corpus = _corpus_for(cfg, cfg.eval_split)
    out = _outdir(cfg, "reflect")

    per_problem: dict[str, list[dict]] = {}
    order: list[str] = []
    for row in rows:
        pid = row["problem_id"]
        if pid not in per_problem:
            per_problem[pid] = []
            order.append(pid)
        per_problem[pid].append(row)
    unknown = sorted(pid for pid in order if pid not in corpus)
    if unknown:
        raise ConfigError(f"records reference unknown problem ids: {', '.join(unknown)}")

    failed = [
        pid for pid in order
        if not any(r["passed"] for r in per_problem[pid])
        and not corpus.get(pid).untestable
    ]

    provider = _make_provider(cfg)
    rcache, vcache = _caches(cfg)
    traces: list[evaluate.ReflectionTrace] = []
    if failed:
        def reflect_one(pid: str) -> evaluate.ReflectionTrace:
            return evaluate.self_reflect(
                corpus.get(pid),
                cfg.provider,
                cfg.limits,
                cfg.max_reflection_rounds,
                provider=provider,
                cache=rcache,
                policy=cfg.policy,
                runner=cfg.runner,
                keep_scratch=cfg.keep_scratch,
                verdict_cache=vcache,
            )

        if cfg.workers == 1 or len(failed) == 1:
            traces = [reflect_one(pid) for pid in failed]
        else:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                traces = list(pool.map(reflect_one, failed))

    _write_jsonl(
        out / "traces.jsonl",
        [
            {
                "problem_id": t.problem_id,
                "solved_at": t.solved_at,
                "error": t.error,
                "rounds": [
                    {
                        "round": i,
                        "passed": r.verdict.passed,
                        "first_failure": r.verdict.first_failure,
                        "attempt": r.attempt,
                    }
                    for i, r in enumerate(t.rounds)
                ],
            }
            for t in traces
        ],
    )

    solved = {t.problem_id for t in traces if t.solved}
    groups: dict[str, list[str]] = {}
    for pid in order:
        label = corpus.get(pid).difficulty.value
        groups.setdefault(label, []).append(pid)
        groups.setdefault(evaluate.ALL_LABEL, []).append(pid)

    def before(pid: str) -> float:
        rs = per_problem[pid]
        return sum(1 for r in rs if r["passed"]) / len(rs)

    comparison_rows = []
    for label in [d for d in evaluate.DIFFICULTY_ORDER if d in groups] + [evaluate.ALL_LABEL]:
        pids = groups.get(label)
        if not pids:
            continue
        before_rate = sum(before(pid) for pid in pids) / len(pids)
        after_rate = sum(1.0 if pid in solved else before(pid) for pid in pids) / len(pids)
        comparison_rows.append(
            [label, len(pids), round(before_rate, 6), round(after_rate, 6)]
        )
    _write_csv(
        out / "comparison.csv",
        ["difficulty", "problems", "pass_at_1_before", "pass_at_1_after"],
        comparison_rows,
    )
    _write_manifest(out, "reflect", cfg)
    print(f"reflected on {len(failed)} failed problems, solved {len(solved)}")
    return 0


# --- analyze -----------------------------------------------------------------


def _records_from_rows(rows: list[dict], path: Path) -> list[GenerationRecord]:
    by_problem: dict[str, list[CandidateResult]] = {}
    order: list[str] = []
    for lineno, row in enumerate(rows, start=1):
        try:
            m = row["metrics"]
            metrics = codemetrics.CodeMetrics(
                halstead_volume=m["halstead_volume"],
                cyclomatic=m["cyclomatic"],
                sloc=m["sloc"],
                comment_density=m["comment_density"],
                maintainability=m["maintainability"],
                function_count=m["function_count"],
            )
            verdict = sandbox.JudgeVerdict(
                per_test=[],
                passed=row["passed"],
                first_failure=row.get("first_failure"),
                avg_time=row["avg_time"],
                avg_peak_memory=row["avg_peak_memory"],
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: malformed records entry {lineno}: {exc}") from exc
        pid = row["problem_id"]
        if pid not in by_problem:
            by_problem[pid] = []
            order.append(pid)
        by_problem[pid].append(CandidateResult(code="", verdict=verdict, metrics=metrics))
    return [GenerationRecord(problem_id=pid, candidates=by_problem[pid]) for pid in order]


def cmd_analyze(cfg: PipelineConfig, records_path: str | None = None) -> int:
    path = Path(records_path) if records_path else Path(cfg.outdir) / "evaluate" / "records.jsonl"
    rows = _load_record_rows(path)
    corpus = _corpus_for(cfg, cfg.eval_split)
    out = _outdir(cfg, "analyze")

    records = _records_from_rows(rows, path)
    try:
        profile = evaluate.function_accuracy_profile(records, corpus)
        resources = evaluate.resource_profile(records, corpus)
        mi = evaluate.mi_profile(records, corpus)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    _write_csv(
        out / "function_profile.csv",
        ["difficulty", "function_bin", "count", "accuracy"],
        [
            [label, b, stat.count, stat.accuracy]
            for label, bins in profile.items()
            for b, stat in bins.items()
        ],
    )
    _write_csv(
        out / "resource_profile.csv",
        ["difficulty", "passed_count", "avg_time_seconds", "avg_peak_memory_bytes"],
        [
            [label, avg.passed_count if avg else 0,
             avg.avg_time if avg else "", avg.avg_peak_memory if avg else ""]
            for label, avg in resources.items()
        ],
    )
    mi_rows = [["difficulty", label, "" if value is None else value]
               for label, value in mi.by_difficulty.items()]
    mi_rows += [["split", label, "" if value is None else value]
                for label, value in mi.by_split.items()]
    _write_csv(out / "mi_profile.csv", ["group", "label", "mean_maintainability"], mi_rows)
    _write_manifest(out, "analyze", cfg)
    print(f"analysis profiles written to {out}")
    return 0


# --- stats -------------------------------------------------------------------


def cmd_stats(cfg: PipelineConfig) -> int:
    if not cfg.corpus_paths:
        raise ConfigError("no corpus paths configured")
    out = _outdir(cfg, "stats")
    summary: dict[str, dict] = {}
    csv_rows: list[list] = []
    for split in sorted(cfg.corpus_paths):
        corpus = _corpus_for(cfg, split)
        stats = corpus_stats(corpus)
        summary[split] = {
            "total_problems": stats.total_problems,
            "by_source": stats.by_source,
            "by_difficulty": stats.by_difficulty,
            "untestable": stats.untestable_count,
            "total_solutions": stats.total_solutions,
            "total_tests": stats.total_tests,
            "skipped_lines": len(corpus.diagnostics),
        }
        for (source, difficulty, _), count in sorted(stats.by_source_difficulty_split.items()):
            csv_rows.append([split, source, difficulty, count])
        print(
            f"{split}: {stats.total_problems} problems, "
            f"{stats.total_solutions} solutions, {stats.untestable_count} untestable"
        )
    (out / "stats.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _write_csv(out / "stats.csv", ["split", "source", "difficulty", "count"], csv_rows)
    _write_manifest(out, "stats", cfg)
    return 0


# --- entry point -------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--outdir", help="output directory (overrides config)")
    parser.add_argument("--workers", type=int, help="worker count (overrides config)")
    parser.add_argument("--mock-provider", help="mock provider fixture directory")
    parser.add_argument("--runner", help='candidate runner command, e.g. "python3 {file}"')
    parser.add_argument("--keep-scratch", action="store_true", help="keep run scratch dirs")
    parser.add_argument("--no-cache", action="store_true", help="bypass response/verdict caches")
    parser.add_argument("--per-level-mean", action="store_true",
                        help='aggregate the "all" row as the mean of difficulty means')
    parser.add_argument("--top-level-only", action="store_true",
                        help="count only top-level functions in the metrics")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="modeval",
        description="Modular-code transformation and evaluation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("transform", "evaluate", "reflect", "analyze", "stats"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "evaluate":
            p.add_argument("--candidates", required=True, help="candidates JSONL file")
        if name == "analyze":
            p.add_argument("--records", help="records JSONL (default: <outdir>/evaluate/records.jsonl)")

    args = parser.parse_args(argv)
    try:
        cfg = load_pipeline_config(args.config, args)
        if args.command == "transform":
            return cmd_transform(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.candidates)
        if args.command == "reflect":
            return cmd_reflect(cfg)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.records)
        if args.command == "stats":
            return cmd_stats(cfg)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, CorpusError, InfrastructureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
