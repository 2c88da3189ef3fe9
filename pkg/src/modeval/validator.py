"""Acceptance checks for transformed solutions, and filtering-rate reports.

A transformed response is rejected on the first of four markers that fires:

* m1 strategy divergence: the response does not follow the outline-first
  protocol (implementation code appears before the outline region, or the
  step delimiters are missing or out of order);
* m2 no sub-modules: the outline region is empty, or it contains statement
  bodies beyond headers and docstrings (a lone ``pass``/``...`` placeholder
  is allowed);
* m3 main-code count: the final region does not contain exactly one code
  block;
* m4 tests failed: the final program does not pass every test of its problem.

Markers are checked in that fixed order so rejection reasons are stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from . import promptgen, sandbox
from .corpus import Problem
from .promptgen import ModularSolution, ParseError
from .sandbox import ComparePolicy, JudgeVerdict, ResourceLimits


class Verdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class Marker(str, Enum):
    M1_STRATEGY_DIVERGENCE = "m1_strategy_divergence"
    M2_NO_SUBMODULES = "m2_no_submodules"
    M3_MAIN_CODE_COUNT = "m3_main_code_count"
    M4_TESTS_FAILED = "m4_tests_failed"


@dataclass
class AssessmentResult:
    verdict: Verdict
    marker: Marker | None = None
    detail: str = ""

    def __post_init__(self) -> None:
        if self.verdict is Verdict.REJECT and self.marker is None:
            raise ValueError("a rejection must name its marker")
        if self.verdict is Verdict.ACCEPT and self.marker is not None:
            raise ValueError("an acceptance must not carry a marker")

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT


@dataclass
class FilterRecord:
    problem_id: str
    source: str
    data_type: str  # "mot" or "clean"
    result: AssessmentResult


def _reject(marker: Marker, detail: str) -> AssessmentResult:
    return AssessmentResult(verdict=Verdict.REJECT, marker=marker, detail=detail)


def assess_structure(sol: ModularSolution | ParseError) -> AssessmentResult:
    """Structural markers m1-m3 over a parsed response (or its parse error).

    The checks run in the fixed m1 -> m2 -> m3 order even when parsing
    already failed on a later-stage violation, so the first firing marker is
    always the one reported.
    """
    if isinstance(sol, ParseError):
        if sol.kind == "missing_step" or sol.raw is None:
            marker = (
                Marker.M1_STRATEGY_DIVERGENCE
                if sol.kind == "missing_step"
                else Marker.M3_MAIN_CODE_COUNT
            )
            return _reject(marker, sol.message)
        raw = sol.raw
    else:
        raw = sol.raw_response

    split = promptgen.split_steps(raw)
    if "```" in raw[: split.step1_char]:
        return _reject(
            Marker.M1_STRATEGY_DIVERGENCE,
            "code block appears before the outline region",
        )

    entries, strays = promptgen.parse_outline(split.step1)
    if not entries:
        return _reject(Marker.M2_NO_SUBMODULES, "no sub-modules outlined")
    if strays:
        return _reject(
            Marker.M2_NO_SUBMODULES,
            f"outline contains more than headers and docstrings: {strays[0]!r}",
        )

    blocks = [b for b, _ in promptgen.extract_code_blocks(split.step2) if b.strip()]
    if len(blocks) != 1:
        return _reject(
            Marker.M3_MAIN_CODE_COUNT, f"{len(blocks)} code blocks in the final region"
        )
    return AssessmentResult(verdict=Verdict.ACCEPT)


def assess_functional(
    sol: ModularSolution,
    problem: Problem,
    limits: ResourceLimits = ResourceLimits(),
    policy: ComparePolicy = ComparePolicy(),
    *,
    runner: str | None = None,
    scratch_root: str | Path | None = None,
    verdict_cache: sandbox.VerdictCache | None = None,
) -> tuple[AssessmentResult, JudgeVerdict]:
    """Marker m4: the final program must pass every test of its problem.

    Sandbox infrastructure failures (missing interpreter) raise and are not
    an m4 rejection.
    """
    if problem.untestable:
        raise ValueError(f"problem {problem.id!r} is untestable")
    if verdict_cache is not None:
        verdict = verdict_cache.judge(
            sol.final_code, problem, limits, policy, runner=runner, scratch_root=scratch_root
        )
    else:
        verdict = sandbox.judge(
            sol.final_code, problem, limits, policy, runner=runner, scratch_root=scratch_root
        )
    if verdict.passed:
        return AssessmentResult(verdict=Verdict.ACCEPT), verdict
    idx = verdict.first_failure
    status = verdict.per_test[idx][0].status.value if idx is not None else "unknown"
    return (
        _reject(Marker.M4_TESTS_FAILED, f"first failing test {idx} ({status})"),
        verdict,
    )


@dataclass
class RateRow:
    pre_count: int
    post_count: int
    rate_percent: int | None  # whole percent, absent when pre_count is 0


def filter_pass_rate(records: list[FilterRecord]) -> dict[tuple[str, str], RateRow]:
    """Pre/post counts and whole-percent passing rate per (source, data_type)."""
    pre: dict[tuple[str, str], int] = {}
    post: dict[tuple[str, str], int] = {}
    for record in records:
        cell = (record.source, record.data_type)
        pre[cell] = pre.get(cell, 0) + 1
        if record.result.accepted:
            post[cell] = post.get(cell, 0) + 1
    table: dict[tuple[str, str], RateRow] = {}
    for cell, pre_count in sorted(pre.items()):
        post_count = post.get(cell, 0)
        rate = int(post_count * 100 / pre_count + 0.5) if pre_count else None
        table[cell] = RateRow(pre_count=pre_count, post_count=post_count, rate_percent=rate)
    return table


def rate_table_lines(table: dict[tuple[str, str], RateRow]) -> list[str]:
    """Human-readable rate table, one row per (source, data_type)."""
    lines = [f"{'source':<16} {'type':<6} {'pre':>8} {'post':>8} {'rate':>6}"]
    for (source, data_type), row in table.items():
        rate = f"{row.rate_percent}%" if row.rate_percent is not None else "-"
        lines.append(
            f"{source:<16} {data_type:<6} {row.pre_count:>8} {row.post_count:>8} {rate:>6}"
        )
    return lines
