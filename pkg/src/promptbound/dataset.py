"""Labeled binary-classification data and prior-subset splits.

Datasets are immutable once loaded and order-preserving. The split machinery
carves a uniform subset J out of the sample for learning a data-dependent
prior; the bound formulas then pay 1/(n - |J|) instead of 1/n.
"""

from __future__ import annotations

import csv
import enum
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

__all__ = [
    "Label",
    "EvalPolicy",
    "LabeledExample",
    "LabeledDataset",
    "SplitPlan",
    "load_dataset",
    "make_split",
]


class Label(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class EvalPolicy(str, enum.Enum):
    """Which examples the empirical risk is measured on.

    ``FULL_S`` measures on the whole sample, which is what the data-dependent
    bound literally covers; ``S_MINUS_J`` holds the prior subset out of
    evaluation as the conservative alternative.
    """

    FULL_S = "full_S"
    S_MINUS_J = "S_minus_J"


@dataclass(frozen=True)
class LabeledExample:
    id: str
    text: str
    label: Label

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"example {self.id!r} has empty text")


DEFAULT_POSITIVE_ALIASES = ("yes", "1", "true", "positive")
DEFAULT_NEGATIVE_ALIASES = ("no", "0", "false", "negative")


class LabeledDataset:
    """Ordered, immutable collection of labeled examples with unique ids."""

    def __init__(self, examples: Sequence[LabeledExample]):
        self.examples: tuple[LabeledExample, ...] = tuple(examples)
        self._by_id = {ex.id: ex for ex in self.examples}
        if len(self._by_id) != len(self.examples):
            seen: set[str] = set()
            for ex in self.examples:
                if ex.id in seen:
                    raise ValueError(f"duplicate example id {ex.id!r}")
                seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[LabeledExample]:
        return iter(self.examples)

    def __getitem__(self, i: int) -> LabeledExample:
        return self.examples[i]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(ex.id for ex in self.examples)

    def by_id(self, example_id: str) -> LabeledExample:
        return self._by_id[example_id]

    def positives(self) -> int:
        return sum(1 for ex in self.examples if ex.label is Label.POSITIVE)


def _map_label(raw: object, positive: tuple[str, ...], negative: tuple[str, ...], row: int) -> Label:
    value = str(raw).strip().lower()
    if value in positive:
        return Label.POSITIVE
    if value in negative:
        return Label.NEGATIVE
    raise ValueError(f"row {row}: unmappable label {str(raw).strip()!r}")


def load_dataset(
    path: str | Path,
    format: str,
    field_map: Mapping[str, str],
) -> LabeledDataset:
    """Load a CSV (header row required) or JSONL file into a dataset.

    ``field_map`` names the text and label fields and may override the label
    alias sets and an id field::

        {"text": "comment", "label": "isHate", "positive": "1"}

    Ids default to the 1-based data row index rendered as a string; rows are
    kept in file order. Unmappable labels and duplicate ids are errors that
    name the offending row.
    """
    path = Path(path)
    if "text" not in field_map or "label" not in field_map:
        raise ValueError("field_map must name the 'text' and 'label' fields")
    text_field = field_map["text"]
    label_field = field_map["label"]
    id_field = field_map.get("id")
    positive = _alias_set(field_map.get("positive"), DEFAULT_POSITIVE_ALIASES)
    negative = _alias_set(field_map.get("negative"), DEFAULT_NEGATIVE_ALIASES)

    if format == "csv":
        with path.open(newline="") as fh:
            rows: list[Mapping[str, object]] = list(csv.DictReader(fh))
    elif format == "jsonl":
        rows = []
        for line in path.read_text().splitlines():
            if line.strip():
                rows.append(json.loads(line))
    else:
        raise ValueError(f"unknown dataset format {format!r}; use 'csv' or 'jsonl'")

    examples = []
    for i, row in enumerate(rows, start=1):
        if text_field not in row or label_field not in row:
            raise ValueError(f"row {i}: missing field {text_field!r} or {label_field!r}")
        label = _map_label(row[label_field], positive, negative, i)
        example_id = str(row[id_field]) if id_field else str(i)
        examples.append(LabeledExample(id=example_id, text=str(row[text_field]), label=label))
    return LabeledDataset(examples)


def _alias_set(override: object, defaults: tuple[str, ...]) -> tuple[str, ...]:
    if override is None:
        return defaults
    if isinstance(override, str):
        return (override.strip().lower(),)
    return tuple(str(v).strip().lower() for v in override)


@dataclass(frozen=True)
class SplitPlan:
    """A recorded prior-subset split J of a dataset.

    Fully reproducible from (seed, n, m_prior); ``prior_ids`` is stored
    sorted for canonical form, membership is set semantics.
    """

    n: int
    prior_ids: tuple[str, ...]
    eval_policy: EvalPolicy
    seed: int

    def __post_init__(self) -> None:
        if len(self.prior_ids) >= self.n:
            raise ValueError(
                f"prior subset must be strictly smaller than the dataset: "
                f"|J|={len(self.prior_ids)} >= n={self.n}"
            )

    @property
    def m_prior(self) -> int:
        return len(self.prior_ids)

    def prior_examples(self, dataset: LabeledDataset) -> tuple[LabeledExample, ...]:
        members = frozenset(self.prior_ids)
        return tuple(ex for ex in dataset if ex.id in members)

    def eval_examples(self, dataset: LabeledDataset) -> tuple[LabeledExample, ...]:
        if self.eval_policy is EvalPolicy.FULL_S:
            return dataset.examples
        members = frozenset(self.prior_ids)
        return tuple(ex for ex in dataset if ex.id not in members)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "prior_ids": list(self.prior_ids),
            "eval_policy": self.eval_policy.value,
            "seed": self.seed,
        }


def make_split(
    dataset: LabeledDataset,
    m_prior: int,
    seed: int,
    eval_policy: EvalPolicy = EvalPolicy.FULL_S,
) -> SplitPlan:
    """Sample J uniformly without replacement, reproducibly from ``seed``."""
    n = len(dataset)
    if not 0 <= m_prior < n:
        raise ValueError(f"m_prior must satisfy 0 <= m_prior < n={n}, got {m_prior!r}")
    rng = random.Random(seed)
    chosen = rng.sample(list(dataset.ids), m_prior)
    return SplitPlan(
        n=n,
        prior_ids=tuple(sorted(chosen)),
        eval_policy=EvalPolicy(eval_policy),
        seed=seed,
    )
