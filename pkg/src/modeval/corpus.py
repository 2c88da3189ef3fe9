"""Problem corpora: JSONL loading, normalization, dedup and summary stats.

A corpus is an ordered list of competitive-programming problems in the
de facto APPS/CodeContests JSONL layout, one problem per line:

    {"id": str, "question": str, "solutions": [str],
     "input_output": {"inputs": [str], "outputs": [str]},
     "difficulty": str, "source": str}

A missing ``input_output`` key marks the problem as untestable.  Loading is
forgiving about malformed lines (they become diagnostics) but strict about
duplicate ids, which indicate a broken export.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path


class Difficulty(str, Enum):
    INTRODUCTORY = "introductory"
    INTERVIEW = "interview"
    COMPETITION = "competition"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, value: str | None) -> "Difficulty":
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            return cls.UNKNOWN


class Split(str, Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


class CorpusError(Exception):
    """Fatal corpus problem: unreadable file or duplicate problem ids."""


@dataclass(frozen=True)
class TestCase:
    input: str
    expected_output: str


@dataclass
class Problem:
    id: str
    statement: str
    solutions: list[str]
    tests: list[TestCase]
    difficulty: Difficulty = Difficulty.UNKNOWN
    source: str = ""
    split: Split = Split.TRAIN
    untestable: bool = False

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("problem id must be nonempty")
        if not self.untestable and not self.tests:
            raise ValueError(f"problem {self.id!r}: no tests but not flagged untestable")


@dataclass
class LineDiagnostic:
    line_number: int
    reason: str


@dataclass
class Corpus:
    problems: list[Problem]
    provenance: str = ""
    diagnostics: list[LineDiagnostic] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen: dict[str, int] = {}
        for i, p in enumerate(self.problems):
            if p.id in seen:
                raise CorpusError(
                    f"duplicate problem id {p.id!r} (entries {seen[p.id]} and {i})"
                )
            seen[p.id] = i
        self._by_id = {p.id: p for p in self.problems}

    def __len__(self) -> int:
        return len(self.problems)

    def __iter__(self):
        return iter(self.problems)

    def get(self, problem_id: str) -> Problem | None:
        return self._by_id.get(problem_id)

    def __contains__(self, problem_id: str) -> bool:
        return problem_id in self._by_id


def _problem_from_obj(obj: dict, split: Split) -> Problem:
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    pid = obj.get("id")
    if not isinstance(pid, str) or not pid:
        raise ValueError("missing or empty 'id'")
    statement = obj.get("question", "")
    if not isinstance(statement, str):
        raise ValueError("'question' is not a string")
    solutions = obj.get("solutions", [])
    if not isinstance(solutions, list) or any(not isinstance(s, str) for s in solutions):
        raise ValueError("'solutions' is not a list of strings")

    io = obj.get("input_output")
    tests: list[TestCase] = []
    untestable = False
    if io is None:
        untestable = True
    else:
        if not isinstance(io, dict):
            raise ValueError("'input_output' is not an object")
        inputs = io.get("inputs", [])
        outputs = io.get("outputs", [])
        if len(inputs) != len(outputs):
            raise ValueError(
                f"input_output length mismatch ({len(inputs)} inputs, {len(outputs)} outputs)"
            )
        for inp, out in zip(inputs, outputs):
            if not isinstance(inp, str) or not isinstance(out, str):
                raise ValueError("test inputs/outputs must be strings")
            tests.append(TestCase(input=inp, expected_output=out))
        if not tests:
            untestable = True

    return Problem(
        id=pid,
        statement=statement,
        solutions=list(solutions),
        tests=tests,
        difficulty=Difficulty.parse(obj.get("difficulty", "unknown")),
        source=str(obj.get("source", "")),
        split=split,
        untestable=untestable,
    )


def load_corpus(path: str | Path, split: Split = Split.TRAIN) -> Corpus:
    """Load a JSONL corpus file.

    Malformed lines are skipped and recorded as diagnostics on the returned
    corpus.  Duplicate ids raise :class:`CorpusError` naming both offending
    line numbers.  An unreadable file raises :class:`CorpusError`.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    problems: list[Problem] = []
    diagnostics: list[LineDiagnostic] = []
    id_lines: dict[str, int] = {}
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            problem = _problem_from_obj(obj, split)
        except (ValueError, TypeError) as exc:
            diagnostics.append(LineDiagnostic(lineno, str(exc)))
            continue
        if problem.id in id_lines:
            raise CorpusError(
                f"duplicate problem id {problem.id!r} at lines "
                f"{id_lines[problem.id]} and {lineno} of {path}"
            )
        id_lines[problem.id] = lineno
        problems.append(problem)

    return Corpus(problems=problems, provenance=str(path), diagnostics=diagnostics)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back out in the same JSONL schema ``load_corpus`` reads."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for p in corpus.problems:
            obj: dict = {
                "id": p.id,
                "question": p.statement,
                "solutions": p.solutions,
            }
            if not p.untestable:
                obj["input_output"] = {
                    "inputs": [t.input for t in p.tests],
                    "outputs": [t.expected_output for t in p.tests],
                }
            obj["difficulty"] = p.difficulty.value
            obj["source"] = p.source
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def select_solutions(problem: Problem, cap: int) -> list[str]:
    """First ``min(cap, len(solutions))`` reference solutions, stored order."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    return problem.solutions[:cap]


_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def normalize_statement(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    return re.sub(r"\s+", " ", text).strip()


def _token_set(normalized: str) -> frozenset[str]:
    return frozenset(normalized.split())


def jaccard_similarity(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


@dataclass
class DedupRemoval:
    train_id: str
    holdout_id: str
    similarity: float
    reason: str  # "exact" or "jaccard"


@dataclass
class DedupReport:
    removed: list[DedupRemoval]
    kept_count: int
    threshold: float

    @property
    def removed_count(self) -> int:
        return len(self.removed)


def dedup_against(
    train: Corpus, holdout: Corpus, jaccard_threshold: float = 0.9
) -> tuple[Corpus, DedupReport]:
    """Drop training problems that leak into the holdout set.

    A training problem is removed when its normalized statement exactly
    equals any holdout statement, or when the word-token Jaccard similarity
    with any holdout statement reaches ``jaccard_threshold``.
    """
    if not (0.0 < jaccard_threshold <= 1.0):
        raise ValueError(f"jaccard_threshold must be in (0, 1], got {jaccard_threshold}")

    holdout_norm = [(p.id, normalize_statement(p.statement)) for p in holdout.problems]
    exact_index: dict[str, str] = {}
    for hid, norm in holdout_norm:
        exact_index.setdefault(norm, hid)
    holdout_tokens = [(hid, _token_set(norm)) for hid, norm in holdout_norm]

    kept: list[Problem] = []
    removed: list[DedupRemoval] = []
    for problem in train.problems:
        norm = normalize_statement(problem.statement)
        hit = exact_index.get(norm)
        if hit is not None:
            removed.append(DedupRemoval(problem.id, hit, 1.0, "exact"))
            continue
        tokens = _token_set(norm)
        best: DedupRemoval | None = None
        for hid, htokens in holdout_tokens:
            sim = jaccard_similarity(tokens, htokens)
            if sim >= jaccard_threshold and (best is None or sim > best.similarity):
                best = DedupRemoval(problem.id, hid, sim, "jaccard")
        if best is not None:
            removed.append(best)
        else:
            kept.append(problem)

    deduped = Corpus(problems=kept, provenance=train.provenance)
    return deduped, DedupReport(removed=removed, kept_count=len(kept), threshold=jaccard_threshold)


@dataclass
class StatsReport:
    total_problems: int
    by_source: dict[str, int]
    by_difficulty: dict[str, int]
    by_split: dict[str, int]
    by_source_difficulty_split: dict[tuple[str, str, str], int]
    untestable_count: int
    total_solutions: int
    total_tests: int


def corpus_stats(corpus: Corpus) -> StatsReport:
    """Count problems per source/difficulty/split plus solution and test totals."""
    by_source: dict[str, int] = {}
    by_difficulty: dict[str, int] = {}
    by_split: dict[str, int] = {}
    by_cell: dict[tuple[str, str, str], int] = {}
    untestable = 0
    solutions = 0
    tests = 0
    for p in corpus.problems:
        by_source[p.source] = by_source.get(p.source, 0) + 1
        by_difficulty[p.difficulty.value] = by_difficulty.get(p.difficulty.value, 0) + 1
        by_split[p.split.value] = by_split.get(p.split.value, 0) + 1
        cell = (p.source, p.difficulty.value, p.split.value)
        by_cell[cell] = by_cell.get(cell, 0) + 1
        untestable += p.untestable
        solutions += len(p.solutions)
        tests += len(p.tests)
    return StatsReport(
        total_problems=len(corpus.problems),
        by_source=by_source,
        by_difficulty=by_difficulty,
        by_split=by_split,
        by_source_difficulty_split=by_cell,
        untestable_count=untestable,
        total_solutions=solutions,
        total_tests=tests,
    )
