"""Language-model scoring backends: conditional log-likelihood of text.

The quantity of interest everywhere is log P(target | context) in nats,
summed over the target's symbols. For a point-mass posterior this value,
negated, is exactly the KL term that enters the bounds.

Three interchangeable backends:

* :class:`NgramBackend` -- a local character n-gram model with add-alpha
  smoothing and an explicit end-of-text symbol, so it is a proper
  distribution over variable-length strings and normalization is checkable
  by exhaustive enumeration.
* :class:`StubBackend` -- a fixed lookup table, for tests and scripted runs.
* :class:`RemoteBackend` -- an HTTPS scoring client with retry, exponential
  backoff, bounded in-flight requests, and a persistent response cache.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import string
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

__all__ = [
    "BackendError",
    "TransportError",
    "UnsupportedCapabilityError",
    "PriorSpec",
    "LogLik",
    "LanguageModelBackend",
    "NgramModel",
    "NgramBackend",
    "train_ngram",
    "save_ngram",
    "load_ngram",
    "StubBackend",
    "FunctionBackend",
    "EndpointConfig",
    "RemoteBackend",
    "conditional_log_likelihood",
    "remote_log_likelihood",
    "DEFAULT_EOT",
    "DEFAULT_PROMPT_ALPHABET",
]


class BackendError(Exception):
    """Base class for scoring/generation backend failures."""


class TransportError(BackendError):
    """Network-level failure. Retryable; carries the attempt count."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class UnsupportedCapabilityError(BackendError):
    """The backend cannot provide what was asked (e.g. no log-probs)."""


@dataclass(frozen=True)
class PriorSpec:
    """A prior over prompts: conditioning text ("meta-prompt") plus backend.

    The empty string is the legal "empty prior". The meta-prompt may be
    handcrafted or learned; either way the prior distribution it defines is
    whatever the named backend assigns to text conditioned on it.
    """

    meta_prompt: str = ""
    backend_id: str = ""


@dataclass(frozen=True)
class LogLik:
    """Summed conditional log-likelihood of a target text, in nats."""

    value: float
    token_count: int
    backend_id: str

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"log-likelihood must be finite, got {self.value!r}")
        if self.token_count < 0:
            raise ValueError(f"token_count must be nonnegative, got {self.token_count!r}")


class LanguageModelBackend:
    """Abstract language-model backend.

    Scoring (``conditional_log_likelihood``) is the core capability; text
    generation (``generate``) is optional and used for classification and for
    LLM-critic edit proposals. Backends that lack a capability raise
    :class:`UnsupportedCapabilityError`.
    """

    backend_id: str = "abstract"

    def conditional_log_likelihood(self, context: str, target: str) -> LogLik:
        raise UnsupportedCapabilityError(
            f"backend {self.backend_id!r} does not expose log-probabilities"
        )

    def generate(self, prompt: str) -> str:
        raise UnsupportedCapabilityError(
            f"backend {self.backend_id!r} does not support generation"
        )


def conditional_log_likelihood(
    backend: LanguageModelBackend, context: str, target: str
) -> LogLik:
    """Score ``target`` continued from ``context`` under ``backend``.

    The target must be non-empty; the context may be empty (the empty prior).
    """
    if not target:
        raise ValueError("target must be non-empty")
    return backend.conditional_log_likelihood(context, target)


# ---------------------------------------------------------------------------
# Character n-gram backend
# ---------------------------------------------------------------------------

DEFAULT_EOT = "\x03"
# Every printable ASCII character plus newline; wide enough that any plain
# prompt text is scoreable without alphabet surgery.
DEFAULT_PROMPT_ALPHABET = tuple(
    sorted(set(string.printable) - set("\t\r\x0b\x0c"))
) + (DEFAULT_EOT,)

NGRAM_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NgramModel:
    """Add-alpha smoothed character n-gram model over a fixed alphabet.

    ``order`` is the context length in characters. The alphabet is an ordered
    tuple that includes the reserved end-of-text symbol ``eot``; every
    conditional distribution ranges over the full alphabet, so add-alpha
    smoothing guarantees each context's probabilities sum to one and the
    model assigns positive stopping mass everywhere.
    """

    order: int
    alphabet: tuple[str, ...]
    alpha: float
    eot: str
    counts: Mapping[str, Mapping[str, int]]
    context_totals: Mapping[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order!r}")
        if not self.alpha > 0.0:
            raise ValueError(f"smoothing alpha must be positive, got {self.alpha!r}")
        if self.eot not in self.alphabet:
            raise ValueError("alphabet must include the end-of-text symbol")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet contains duplicate symbols")
        if not self.context_totals:
            totals = {ctx: sum(row.values()) for ctx, row in self.counts.items()}
            object.__setattr__(self, "context_totals", totals)

    def log_prob(self, context: str, symbol: str) -> float:
        """log P(symbol | context) with add-alpha smoothing.

        ``context`` is truncated to the trailing ``order`` characters; unseen
        contexts fall back to the uniform smoothed distribution.
        """
        ctx = context[-self.order:] if self.order else ""
        row = self.counts.get(ctx)
        count = row.get(symbol, 0) if row else 0
        total = self.context_totals.get(ctx, 0)
        v = len(self.alphabet)
        return math.log((count + self.alpha) / (total + self.alpha * v))

    def sequence_log_likelihood(self, context: str, target: str) -> float:
        """Sum of symbol log-probs for ``target`` then end-of-text."""
        symbols = set(self.alphabet)
        for i, ch in enumerate(target):
            if ch == self.eot:
                raise ValueError(f"target[{i}] is the reserved end-of-text symbol")
            if ch not in symbols:
                raise ValueError(f"target[{i}] symbol {ch!r} is outside the alphabet")
        total = 0.0
        text = context + target
        for i in range(len(context), len(text)):
            total += self.log_prob(text[max(0, i - self.order):i], text[i])
        total += self.log_prob(text[max(0, len(text) - self.order):], self.eot)
        return total

    def to_dict(self) -> dict:
        return {
            "version": NGRAM_FORMAT_VERSION,
            "order": self.order,
            "alphabet": list(self.alphabet),
            "alpha": self.alpha,
            "eot": self.eot,
            "counts": {ctx: dict(row) for ctx, row in self.counts.items()},
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "NgramModel":
        version = payload.get("version")
        if version != NGRAM_FORMAT_VERSION:
            raise ValueError(f"unsupported n-gram model version {version!r}")
        return cls(
            order=payload["order"],
            alphabet=tuple(payload["alphabet"]),
            alpha=payload["alpha"],
            eot=payload["eot"],
            counts={ctx: dict(row) for ctx, row in payload["counts"].items()},
        )


def train_ngram(
    corpus: Sequence[str],
    order: int,
    alphabet: Sequence[str],
    smoothing_alpha: float = 1.0,
    eot: str = DEFAULT_EOT,
) -> NgramModel:
    """Count (context, next-symbol) events over a corpus.

    Each text contributes one event per character plus a terminating
    end-of-text event; contexts shorter than ``order`` occur at text starts
    and are counted as-is, so training and scoring see the same windows.
    An empty corpus yields a model where every context backs off to the
    uniform smoothed distribution.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order!r}")
    if not smoothing_alpha > 0.0:
        raise ValueError(f"smoothing alpha must be positive, got {smoothing_alpha!r}")
    alphabet = tuple(alphabet)
    if eot not in alphabet:
        raise ValueError("alphabet must include the end-of-text symbol")
    symbols = set(alphabet)
    counts: dict[str, dict[str, int]] = {}

    def bump(ctx: str, sym: str) -> None:
        row = counts.setdefault(ctx, {})
        row[sym] = row.get(sym, 0) + 1

    for t, text in enumerate(corpus):
        for i, ch in enumerate(text):
            if ch == eot:
                raise ValueError(
                    f"corpus[{t}][{i}] is the reserved end-of-text symbol"
                )
            if ch not in symbols:
                raise ValueError(
                    f"corpus[{t}][{i}] symbol {ch!r} is outside the alphabet"
                )
            bump(text[max(0, i - order):i], ch)
        bump(text[max(0, len(text) - order):], eot)

    return NgramModel(
        order=order, alphabet=alphabet, alpha=smoothing_alpha, eot=eot, counts=counts
    )


def save_ngram(model: NgramModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), ensure_ascii=False))


def load_ngram(path: str | Path) -> NgramModel:
    return NgramModel.from_dict(json.loads(Path(path).read_text()))


class NgramBackend(LanguageModelBackend):
    """Scoring backend wrapping a trained :class:`NgramModel`.

    Immutable after construction; safe for concurrent reads. Context text is
    used only as conditioning history (truncated to the model order), so it
    may contain symbols outside the alphabet; the target may not.
    """

    def __init__(self, model: NgramModel, backend_id: str = "ngram"):
        self.model = model
        self.backend_id = backend_id

    def conditional_log_likelihood(self, context: str, target: str) -> LogLik:
        if not target:
            raise ValueError("target must be non-empty")
        value = self.model.sequence_log_likelihood(context, target)
        return LogLik(value=value, token_count=len(target) + 1, backend_id=self.backend_id)


# ---------------------------------------------------------------------------
# Stub backends
# ---------------------------------------------------------------------------


class StubBackend(LanguageModelBackend):
    """Fixed-table scorer: (context, target) -> log-likelihood."""

    def __init__(
        self,
        table: Mapping[tuple[str, str], float],
        backend_id: str = "stub",
        generations: Mapping[str, str] | None = None,
    ):
        self.table = dict(table)
        self.backend_id = backend_id
        self.generations = dict(generations or {})

    def conditional_log_likelihood(self, context: str, target: str) -> LogLik:
        key = (context, target)
        if key not in self.table:
            raise ValueError(f"no stub entry for context/target pair {key!r}")
        return LogLik(
            value=self.table[key], token_count=len(target), backend_id=self.backend_id
        )

    def generate(self, prompt: str) -> str:
        if prompt not in self.generations:
            raise UnsupportedCapabilityError(
                f"backend {self.backend_id!r} has no scripted generation for this prompt"
            )
        return self.generations[prompt]


class FunctionBackend(LanguageModelBackend):
    """Scorer defined by a callable (context, target) -> log-likelihood."""

    def __init__(
        self,
        loglik_fn: Callable[[str, str], float],
        backend_id: str = "function",
        generate_fn: Callable[[str], str] | None = None,
    ):
        self._loglik_fn = loglik_fn
        self._generate_fn = generate_fn
        self.backend_id = backend_id

    def conditional_log_likelihood(self, context: str, target: str) -> LogLik:
        return LogLik(
            value=float(self._loglik_fn(context, target)),
            token_count=len(target),
            backend_id=self.backend_id,
        )

    def generate(self, prompt: str) -> str:
        if self._generate_fn is None:
            return super().generate(prompt)
        return self._generate_fn(prompt)


# ---------------------------------------------------------------------------
# Remote backend
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EndpointConfig:
    """Remote scoring endpoint description.

    Credentials are never stored inline: ``api_key_env`` names the
    environment variable holding the key. ``request_shape`` selects the wire
    format: ``"completion"`` sends context+target as one prompt with echoed
    per-token log-probs and character offsets; ``"chat"`` sends the context
    as a user message and the target as an explicit continuation to score.
    """

    url: str
    model: str
    api_key_env: str = "PROMPTBOUND_API_KEY"
    request_shape: str = "completion"
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.request_shape not in ("completion", "chat"):
            raise ValueError(f"unknown request_shape {self.request_shape!r}")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")


def _default_send(config: EndpointConfig) -> Callable[[dict], dict]:
    import requests

    def send(body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = requests.post(
                config.url, json=body, headers=headers, timeout=config.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"server returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    return send


class RemoteBackend(LanguageModelBackend):
    """HTTPS log-likelihood scorer with retry, backoff, and a disk cache.

    Bound-regularized search re-scores the same candidates often, so results
    are cached on disk keyed by a content hash of (model, shape, context,
    target). Cache writes are serialized; request concurrency is bounded by
    ``max_in_flight``. The ``send`` parameter exists so tests can inject
    recorded responses; the default uses ``requests`` over the configured URL.
    """

    def __init__(
        self,
        config: EndpointConfig,
        cache_path: str | Path | None = None,
        send: Callable[[dict], dict] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        # The shape is part of the identity: run logs must record whether a
        # raw-continuation or chat-style request produced each score.
        self.backend_id = f"remote:{config.model}:{config.request_shape}"
        self._send = send or _default_send(config)
        self._sleep = sleep
        self._cache_path = Path(cache_path) if cache_path else None
        self._cache: dict[str, tuple[float, int]] = {}
        self._lock = threading.Lock()
        self._slots = threading.Semaphore(config.max_in_flight)
        if self._cache_path and self._cache_path.exists():
            for line in self._cache_path.read_text().splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                self._cache[entry["key"]] = (entry["value"], entry["token_count"])

    def _cache_key(self, context: str, target: str) -> str:
        blob = "\x1f".join(
            [self.config.model, self.config.request_shape, context, target]
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def _build_body(self, context: str, target: str) -> dict:
        if self.config.request_shape == "completion":
            return {
                "model": self.config.model,
                "prompt": context + target,
                "max_tokens": 0,
                "echo": True,
                "logprobs": 0,
            }
        return {
            "model": self.config.model,
            "messages": [{"role": "user", "content": context}],
            "score_continuation": target,
            "logprobs": True,
        }

    def _parse_response(self, response: dict, context: str) -> tuple[float, int]:
        try:
            if self.config.request_shape == "completion":
                lp = response["choices"][0]["logprobs"]
                offsets = lp["text_offset"]
                logprobs = lp["token_logprobs"]
            else:
                scoring = response["scoring"]
                logprobs = scoring["token_logprobs"]
                offsets = None
        except (KeyError, IndexError, TypeError) as exc:
            raise UnsupportedCapabilityError(
                f"response from {self.config.model!r} has no per-token log-probabilities"
            ) from exc
        if offsets is not None:
            picked = [
                lp for off, lp in zip(offsets, logprobs) if off >= len(context)
            ]
        else:
            picked = list(logprobs)
        if not picked or any(lp is None for lp in picked):
            raise UnsupportedCapabilityError(
                f"response from {self.config.model!r} is missing log-probabilities "
                f"for the target span"
            )
        return math.fsum(picked), len(picked)

    def _request_with_retry(self, body: dict) -> dict:
        last: TransportError | None = None
        for attempt in range(1, self.config.max_retries + 1):
            try:
                with self._slots:
                    return self._send(body)
            except TransportError as exc:
                last = exc
                if attempt < self.config.max_retries:
                    self._sleep(self.config.backoff_base * 2 ** (attempt - 1))
        assert last is not None
        raise TransportError(
            f"scoring request failed after {self.config.max_retries} attempts: {last}",
            attempts=self.config.max_retries,
        )

    def conditional_log_likelihood(self, context: str, target: str) -> LogLik:
        if not target:
            raise ValueError("target must be non-empty")
        key = self._cache_key(context, target)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return LogLik(value=hit[0], token_count=hit[1], backend_id=self.backend_id)
        response = self._request_with_retry(self._build_body(context, target))
        value, token_count = self._parse_response(response, context)
        with self._lock:
            self._cache[key] = (value, token_count)
            if self._cache_path:
                with self._cache_path.open("a") as fh:
                    fh.write(
                        json.dumps(
                            {"key": key, "value": value, "token_count": token_count}
                        )
                        + "\n"
                    )
        return LogLik(value=value, token_count=token_count, backend_id=self.backend_id)


def remote_log_likelihood(
    config: EndpointConfig,
    context: str,
    target: str,
    cache_path: str | Path | None = None,
    send: Callable[[dict], dict] | None = None,
) -> LogLik:
    """One-shot remote scoring call (constructs a backend around ``config``)."""
    backend = RemoteBackend(config, cache_path=cache_path, send=send)
    return backend.conditional_log_likelihood(context, target)
