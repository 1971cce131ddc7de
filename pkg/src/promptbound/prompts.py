"""The prompt candidate type shared by the evaluator and the optimizer."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

__all__ = ["Prompt"]


@dataclass(frozen=True)
class Prompt:
    """An immutable text candidate with identity and provenance.

    The id is a content hash, so equal text is the same candidate regardless
    of how it was produced, and logs can be replayed without a registry.
    """

    prompt_id: str
    text: str
    origin: str = "seed"
    parent_id: str | None = None

    @classmethod
    def from_text(
        cls, text: str, origin: str = "seed", parent_id: str | None = None
    ) -> "Prompt":
        if not text:
            raise ValueError("prompt text must be non-empty")
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]
        return cls(prompt_id=digest, text=text, origin=origin, parent_id=parent_id)
