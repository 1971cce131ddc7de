"""Shared deterministic fixtures for the test suite."""

import re
from pathlib import Path

import pytest

from promptbound.dataset import Label, LabeledDataset, LabeledExample, load_dataset
from promptbound.offline import KeywordClassifier
from promptbound.optimizer import MutationTable
from promptbound.perplexity import (
    DEFAULT_PROMPT_ALPHABET,
    LanguageModelBackend,
    NgramBackend,
    train_ngram,
)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

TOY_KEYWORDS = (
    "hate", "vermin", "trash", "worthless", "disgusting", "stupid", "awful",
)

# Clauses for meta-prompt search; trailing spaces are significant because the
# character prior conditions on them.
META_MUTATIONS = MutationTable(
    synonyms={},
    insert_clauses=(
        "The prompt text follows: ",
        "Here is the classification prompt: ",
        "We are labeling comments as hateful or not.",
        "Classify the text.",
    ),
    suffix_toggles=(),
    allow_sentence_deletion=True,
)


class RiskScriptedBackend(LanguageModelBackend):
    """Noiseless classifier fixture with a known risk per prompt text.

    Examples must carry an index in their text ("item 17"); a prompt with
    scripted risk r answers wrongly exactly on indices with idx % 10 <
    r * 10. Error sets are nested across prompts, so observed risk ordering
    matches scripted ordering on any shared example set.
    """

    backend_id = "risk-scripted"

    def __init__(self, risk_by_prompt: dict[str, float]):
        self.risk_by_prompt = dict(risk_by_prompt)

    def generate(self, query: str) -> str:
        match = re.search(r"item (\d+)", query)
        idx = int(match.group(1))
        prompt_text = query.split("\n\nText:")[0]
        risk = self.risk_by_prompt[prompt_text]
        wrong = (idx % 10) < risk * 10
        # All fixture examples are labeled negative; wrong answers say Yes.
        return "Yes" if wrong else "No"


def indexed_dataset(n: int, label: Label = Label.NEGATIVE) -> LabeledDataset:
    return LabeledDataset(
        [LabeledExample(id=str(i), text=f"item {i}", label=label) for i in range(n)]
    )


@pytest.fixture
def negatives_40():
    return indexed_dataset(40)


@pytest.fixture
def risk_backend():
    return RiskScriptedBackend(
        {"alpha": 0.1, "bravo": 0.2, "charlie": 0.4, "delta": 0.5}
    )


@pytest.fixture(scope="session")
def toy_dataset():
    return load_dataset(
        DATA_DIR / "toy_comments.csv", "csv", {"text": "text", "label": "label"}
    )


@pytest.fixture
def keyword_classifier():
    return KeywordClassifier(keywords=TOY_KEYWORDS)


@pytest.fixture(scope="session")
def prior_scorer():
    corpus = (DATA_DIR / "prior_corpus.txt").read_text().splitlines()
    model = train_ngram(corpus, order=3, alphabet=DEFAULT_PROMPT_ALPHABET,
                        smoothing_alpha=0.5)
    return NgramBackend(model)
