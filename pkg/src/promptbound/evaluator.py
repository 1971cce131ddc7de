"""Prompt evaluation: classification, empirical risk, and budget allocation.

A prompt is turned into predictions by composing it with each example through
a template and parsing the backend's output as a yes/no answer. Evaluation
budget is spread over competing candidates bandit-style, so better prompts
accumulate more examples (and hence tighter bounds) than worse ones.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass
from typing import Callable, Sequence

from .dataset import Label, LabeledExample
from .perplexity import LanguageModelBackend, TransportError
from .prompts import Prompt

__all__ = [
    "Parsed",
    "EvalSettings",
    "EvalRecord",
    "CandidateStats",
    "classify",
    "empirical_risk",
    "allocate_and_evaluate",
    "risk_tie_break",
]


class Parsed(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    UNPARSEABLE = "unparseable"


@dataclass(frozen=True)
class EvalSettings:
    """Knobs for classification and budget allocation.

    All of these are recorded in the run log, since allocation constants
    change which candidates get how many examples.
    """

    template: str = "{prompt}\n\nText: {example}\nAnswer:"
    positive_aliases: tuple[str, ...] = ("yes",)
    negative_aliases: tuple[str, ...] = ("no",)
    policy: str = "successive_halving"  # or "ucb"
    batch_size: int = 8
    halving_factor: int = 2
    ucb_exploration: float = math.sqrt(2.0)

    def __post_init__(self) -> None:
        if self.policy not in ("successive_halving", "ucb"):
            raise ValueError(f"unknown allocation policy {self.policy!r}")
        if self.batch_size < 1 or self.halving_factor < 2:
            raise ValueError("batch_size must be >= 1 and halving_factor >= 2")

    def to_dict(self) -> dict:
        return {
            "template": self.template,
            "positive_aliases": list(self.positive_aliases),
            "negative_aliases": list(self.negative_aliases),
            "policy": self.policy,
            "batch_size": self.batch_size,
            "halving_factor": self.halving_factor,
            "ucb_exploration": self.ucb_exploration,
        }


@dataclass(frozen=True)
class EvalRecord:
    """One classification attempt: raw output, parsed answer, 0-1 loss."""

    prompt_id: str
    example_id: str
    raw_output: str
    parsed: Parsed
    loss: int
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "example_id": self.example_id,
            "raw_output": self.raw_output,
            "parsed": self.parsed.value,
            "loss": self.loss,
            "error": self.error,
        }


@dataclass(frozen=True)
class CandidateStats:
    """Accumulated evaluation state for one candidate prompt."""

    prompt_id: str
    n_evaluated: int
    emp_risk: float
    eval_example_ids: tuple[str, ...]


_STRIP_CHARS = " \t\n.,:;!?\"'()[]"


def _parse_answer(
    raw: str, positive: tuple[str, ...], negative: tuple[str, ...]
) -> Parsed:
    # Case-insensitive match on the leading token only; anything else is
    # unparseable and charged as an error.
    tokens = raw.strip().split()
    if not tokens:
        return Parsed.UNPARSEABLE
    head = tokens[0].strip(_STRIP_CHARS).lower()
    if head in positive:
        return Parsed.POSITIVE
    if head in negative:
        return Parsed.NEGATIVE
    return Parsed.UNPARSEABLE


def classify(
    backend: LanguageModelBackend,
    prompt: Prompt,
    example: LabeledExample,
    settings: EvalSettings = EvalSettings(),
) -> EvalRecord:
    """Ask the backend to classify one example under one prompt.

    Transport failures (after the backend's own retries) do not abort a run:
    the record comes back unparseable with loss 1 and the error attached.
    """
    query = settings.template.format(prompt=prompt.text, example=example.text)
    try:
        raw = backend.generate(query)
    except TransportError as exc:
        return EvalRecord(
            prompt_id=prompt.prompt_id,
            example_id=example.id,
            raw_output="",
            parsed=Parsed.UNPARSEABLE,
            loss=1,
            error=str(exc),
        )
    parsed = _parse_answer(raw, settings.positive_aliases, settings.negative_aliases)
    if parsed is Parsed.UNPARSEABLE:
        loss = 1
    else:
        matches = (parsed is Parsed.POSITIVE) == (example.label is Label.POSITIVE)
        loss = 0 if matches else 1
    return EvalRecord(
        prompt_id=prompt.prompt_id,
        example_id=example.id,
        raw_output=raw,
        parsed=parsed,
        loss=loss,
    )


def empirical_risk(records: Sequence[EvalRecord]) -> float:
    """Mean 0-1 loss over evaluation records."""
    if not records:
        raise ValueError("cannot compute empirical risk of zero records")
    return sum(r.loss for r in records) / len(records)


def risk_tie_break(emp_risk: float, prompt: Prompt) -> tuple:
    """Deterministic ordering for equal-risk candidates: shorter, then lexicographic."""
    return (emp_risk, len(prompt.text), prompt.text)


def allocate_and_evaluate(
    candidates: Sequence[Prompt],
    examples: Sequence[LabeledExample],
    backend: LanguageModelBackend,
    budget: int,
    settings: EvalSettings = EvalSettings(),
    seed: int = 0,
    record_sink: Callable[[EvalRecord], None] | None = None,
) -> list[CandidateStats]:
    """Spread an evaluation budget of backend queries across candidates.

    ``successive_halving`` evaluates every survivor on the same seeded batch
    of fresh examples each round, then keeps the best 1/halving_factor by
    empirical risk; the last survivor keeps consuming examples until budget
    or data runs out. ``ucb`` pulls one example at a time for the candidate
    with the lowest optimistic risk estimate.

    Every candidate is evaluated at least once, no example is scored twice
    for the same prompt, total queries never exceed ``budget``, and results
    are deterministic given (seed, backend outputs). Stats are returned in
    input order; ``record_sink`` receives every record as it is produced.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    if len({c.prompt_id for c in candidates}) != len(candidates):
        raise ValueError("duplicate candidate prompt ids")
    if not examples:
        raise ValueError("no evaluation examples")
    if budget < len(candidates):
        raise ValueError(
            f"budget {budget} is below one evaluation per candidate "
            f"({len(candidates)} candidates)"
        )

    rng = random.Random(seed)
    perm = list(examples)
    rng.shuffle(perm)

    records: dict[str, list[EvalRecord]] = {c.prompt_id: [] for c in candidates}

    def run_one(cand: Prompt, example: LabeledExample) -> None:
        rec = classify(backend, cand, example, settings)
        records[cand.prompt_id].append(rec)
        if record_sink is not None:
            record_sink(rec)

    if settings.policy == "successive_halving":
        _successive_halving(candidates, perm, budget, settings, records, run_one)
    else:
        _ucb(candidates, perm, budget, settings, records, run_one)

    stats = []
    for cand in candidates:
        recs = records[cand.prompt_id]
        stats.append(
            CandidateStats(
                prompt_id=cand.prompt_id,
                n_evaluated=len(recs),
                emp_risk=empirical_risk(recs),
                eval_example_ids=tuple(r.example_id for r in recs),
            )
        )
    return stats


def _successive_halving(candidates, perm, budget, settings, records, run_one) -> None:
    survivors = list(candidates)
    budget_left = budget
    pos = 0  # all survivors have consumed the same permutation prefix
    while True:
        batch = min(settings.batch_size, budget_left // len(survivors), len(perm) - pos)
        if batch < 1:
            break
        for cand in survivors:
            for example in perm[pos : pos + batch]:
                run_one(cand, example)
            budget_left -= batch
        pos += batch
        if len(survivors) > 1:
            keep = max(1, math.ceil(len(survivors) / settings.halving_factor))
            survivors.sort(
                key=lambda c: risk_tie_break(empirical_risk(records[c.prompt_id]), c)
            )
            survivors = survivors[:keep]


def _ucb(candidates, perm, budget, settings, records, run_one) -> None:
    budget_left = budget
    pos = {c.prompt_id: 0 for c in candidates}
    for cand in candidates:
        run_one(cand, perm[0])
        pos[cand.prompt_id] = 1
        budget_left -= 1
    while budget_left >= 1:
        pullable = [c for c in candidates if pos[c.prompt_id] < len(perm)]
        if not pullable:
            break
        total = sum(pos.values())

        def score(c: Prompt) -> tuple:
            n = pos[c.prompt_id]
            risk = empirical_risk(records[c.prompt_id])
            optimistic = risk - settings.ucb_exploration * math.sqrt(math.log(total) / n)
            return (optimistic,) + risk_tie_break(risk, c)

        chosen = min(pullable, key=score)
        run_one(chosen, perm[pos[chosen.prompt_id]])
        pos[chosen.prompt_id] += 1
        budget_left -= 1
