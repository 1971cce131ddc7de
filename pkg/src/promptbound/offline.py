"""Deterministic simulated backends for offline runs and tests.

These stand in for a remote LLM wherever a run must be reproducible and
network-free: a keyword classifier whose error rate depends on the prompt
text, and a scripted critic that replays canned rewrite lists.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

from .perplexity import LanguageModelBackend

__all__ = ["KeywordClassifier", "ScriptedCritic", "DEFAULT_GOOD_PHRASES"]

DEFAULT_GOOD_PHRASES = (
    "yes or no",
    "(yes/no)",
    "single word",
    "context",
    "attack",
    "hostile",
)


class KeywordClassifier(LanguageModelBackend):
    """Simulated yes/no classifier driven by keyword presence.

    The composed query is expected to follow the evaluator's default
    template, with the example between ``Text:`` and ``Answer:``. The base
    answer is "Yes" iff the example contains any keyword; a deterministic,
    prompt-dependent fraction of answers is flipped, and the flip rate drops
    as the task prompt picks up phrases from ``good_phrases``. Better-worded
    prompts therefore measurably reduce empirical risk, which gives the
    optimizer a real (but fully reproducible) signal to climb.
    """

    def __init__(
        self,
        keywords: Sequence[str],
        base_error: float = 0.35,
        bonus_per_phrase: float = 0.08,
        min_error: float = 0.02,
        good_phrases: Sequence[str] = DEFAULT_GOOD_PHRASES,
        backend_id: str = "keyword-sim",
    ):
        self.keywords = tuple(kw.lower() for kw in keywords)
        self.base_error = base_error
        self.bonus_per_phrase = bonus_per_phrase
        self.min_error = min_error
        self.good_phrases = tuple(p.lower() for p in good_phrases)
        self.backend_id = backend_id

    def _split_query(self, query: str) -> tuple[str, str]:
        marker = "\nText: "
        end = "\nAnswer:"
        cut = query.rfind(marker)
        if cut < 0 or not query.endswith(end):
            # Treat the whole query as the example with no prompt part.
            return "", query
        prompt_part = query[:cut].strip()
        example = query[cut + len(marker) : -len(end)].strip()
        return prompt_part, example

    def error_rate(self, prompt_part: str) -> float:
        lowered = prompt_part.lower()
        quality = sum(1 for p in self.good_phrases if p in lowered)
        return max(self.min_error, self.base_error - self.bonus_per_phrase * quality)

    def generate(self, prompt: str) -> str:
        prompt_part, example = self._split_query(prompt)
        signal = any(kw in example.lower() for kw in self.keywords)
        digest = hashlib.sha256(
            (prompt_part + "\x1f" + example).encode("utf-8")
        ).digest()
        draw = int.from_bytes(digest[:4], "big") % 1_000_000
        flip = draw < self.error_rate(prompt_part) * 1_000_000
        return "Yes" if signal != flip else "No"


class ScriptedCritic(LanguageModelBackend):
    """Generation backend replaying a fixed sequence of responses.

    Calls past the end of the script repeat the final response, so a short
    recording drives an arbitrarily long run deterministically.
    """

    def __init__(self, responses: Sequence[str], backend_id: str = "scripted-critic"):
        if not responses:
            raise ValueError("responses must be non-empty")
        self.responses = tuple(responses)
        self.backend_id = backend_id
        self.calls: list[str] = []

    def generate(self, prompt: str) -> str:
        index = min(len(self.calls), len(self.responses) - 1)
        self.calls.append(prompt)
        return self.responses[index]
