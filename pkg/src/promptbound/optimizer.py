"""Bound-regularized prompt search and data-dependent prior optimization.

The search is an edit-propose-evaluate hill climb: each step proposes
rewrites of the incumbent prompt (from an LLM critic or an offline mutation
table), evaluates them under a bandit allocation, scores each candidate by
the configured objective (a generalization bound, or plain accuracy), and
keeps the incumbent unless a challenger strictly improves. Scoring a prompt
against a bound charges it for its perplexity under the prior, which steers
the search towards prompts the prior finds natural.

Everything evaluated lands in a :class:`RunLog` from which every reported
bound can be recomputed offline.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .bounds import (
    BoundFamily,
    BoundInputs,
    BoundValue,
    compute_bound,
    kl_uniform_posterior,
)
from .dataset import LabeledDataset, LabeledExample, SplitPlan
from .evaluator import (
    CandidateStats,
    EvalRecord,
    EvalSettings,
    allocate_and_evaluate,
    classify,
    empirical_risk,
)
from .perplexity import (
    BackendError,
    LanguageModelBackend,
    PriorSpec,
    conditional_log_likelihood,
)
from .prompts import Prompt

__all__ = [
    "Objective",
    "MutationTable",
    "DEFAULT_MUTATION_TABLE",
    "RunLog",
    "propose_edits",
    "mutate_text",
    "score_objective",
    "objective_value",
    "optimize",
    "optimize_prior",
    "load_runlog",
    "verify_replay",
]


@dataclass(frozen=True)
class Objective:
    """What the search minimizes: a bound family, or raw empirical risk."""

    kind: str = "bound"  # "bound" | "accuracy"
    bound_family: BoundFamily = BoundFamily.TOLSTIKHIN_SELDIN
    delta: float = 0.1
    sigma: float = 0.5
    eta: float = 0.5
    k: int = 1
    prior: PriorSpec = PriorSpec()
    prior_label: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("bound", "accuracy"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.k < 1:
            raise ValueError(f"posterior size k must be >= 1, got {self.k!r}")

    def label(self) -> str:
        if self.prior_label:
            return self.prior_label
        return "empty" if self.prior.meta_prompt == "" else "custom"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "bound_family": BoundFamily(self.bound_family).value,
            "delta": self.delta,
            "sigma": self.sigma,
            "eta": self.eta,
            "k": self.k,
            "prior_meta_prompt": self.prior.meta_prompt,
            "prior_backend_id": self.prior.backend_id,
            "prior_label": self.label(),
        }


# ---------------------------------------------------------------------------
# Edit proposal
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MutationTable:
    """Deterministic templated edits for the offline proposer."""

    synonyms: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    insert_clauses: tuple[str, ...] = ()
    suffix_toggles: tuple[str, ...] = ()
    allow_sentence_deletion: bool = True


DEFAULT_MUTATION_TABLE = MutationTable(
    synonyms={
        "Does": ("Is",),
        "contain": ("include", "express"),
        "hate speech": ("hateful content", "abusive language"),
        "hateful": ("hostile", "abusive"),
        "message": ("statement", "comment"),
        "statement": ("message",),
        "text": ("passage", "message"),
        "this": ("the following",),
    },
    insert_clauses=(
        "Answer Yes or No.",
        "Reply with a single word.",
        "Consider whether a person or group is attacked.",
        "Judge only the given text, not the author.",
    ),
    suffix_toggles=(" (Yes/No)", " Be concise."),
)

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_REWRITE_LINE = re.compile(r"^\s*(?:\d+[.)]|[-*])\s*(.+?)\s*$")

CRITIC_TEMPLATE = (
    "You are improving a classification prompt.\n"
    "Current prompt:\n{prompt}\n\n"
    "It made these mistakes:\n{failures}\n\n"
    "Propose {width} improved rewrites of the prompt, one per line, "
    "as a numbered list. Output only the rewrites."
)


def mutate_text(
    text: str,
    width: int,
    seed: int,
    table: MutationTable = DEFAULT_MUTATION_TABLE,
) -> list[str]:
    """Enumerate templated edits of ``text`` and keep a seeded sample.

    Applicable edits are generated in a fixed order (synonym swaps, clause
    insertions, suffix toggles, sentence deletions), deduplicated, then
    down-sampled to ``width`` with a seeded generator, so identical inputs
    always yield identical proposals.
    """
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width!r}")
    variants: list[str] = []
    for key in sorted(table.synonyms):
        if key and key in text:
            for replacement in table.synonyms[key]:
                variants.append(text.replace(key, replacement, 1))
    for clause in table.insert_clauses:
        if clause not in text:
            # Preserve the clause verbatim (trailing whitespace can be load
            # bearing for character-level priors); only the joint gets a
            # separator when both sides are non-empty.
            sep = " " if text and not text.endswith(" ") else ""
            variants.append(text + sep + clause)
    for suffix in table.suffix_toggles:
        if text.endswith(suffix):
            variants.append(text[: -len(suffix)].rstrip())
        elif suffix.strip() not in text:
            variants.append(text + suffix)
    if table.allow_sentence_deletion:
        sentences = [s for s in _SENTENCE_SPLIT.split(text) if s]
        if len(sentences) >= 2:
            for i in range(len(sentences)):
                kept = sentences[:i] + sentences[i + 1 :]
                variants.append(" ".join(kept).strip())

    seen: set[str] = {text}
    unique = []
    for v in variants:
        if v and v not in seen:
            seen.add(v)
            unique.append(v)
    if len(unique) > width:
        unique = random.Random(seed).sample(unique, width)
    return unique


def _parse_rewrites(response: str) -> list[str]:
    rewrites = []
    for line in response.splitlines():
        match = _REWRITE_LINE.match(line)
        if match:
            rewrites.append(match.group(1).strip("\"' "))
    return rewrites


def propose_edits(
    source: Prompt,
    failure_records: Sequence[EvalRecord],
    proposer: str,
    width: int,
    seed: int,
    critic: LanguageModelBackend | None = None,
    mutation_table: MutationTable = DEFAULT_MUTATION_TABLE,
    example_lookup: Callable[[str], str] | None = None,
) -> list[Prompt]:
    """Propose up to ``width`` novel rewrites of ``source``.

    ``offline_mutation`` uses the deterministic table; ``llm_critic`` asks a
    generation backend to critique the prompt given its recent failures and
    parses the numbered rewrites it returns. Duplicates of the source or of
    each other are dropped; an empty result signals a stagnant step, which
    the caller records and survives.
    """
    if proposer == "offline_mutation":
        texts = mutate_text(source.text, width, seed, mutation_table)
        origin = "offline_mutation"
    elif proposer == "llm_critic":
        if critic is None:
            raise ValueError("llm_critic proposer needs a critic backend")
        lines = []
        for rec in failure_records[:8]:
            example_text = example_lookup(rec.example_id) if example_lookup else rec.example_id
            lines.append(
                f"- input: {example_text!r} -> model said {rec.raw_output!r} (wrong)"
            )
        request = CRITIC_TEMPLATE.format(
            prompt=source.text,
            failures="\n".join(lines) if lines else "(none recorded)",
            width=width,
        )
        texts = _parse_rewrites(critic.generate(request))
        origin = "llm_critic"
    else:
        raise ValueError(f"unknown proposer {proposer!r}")

    seen = {source.text}
    prompts = []
    for text in texts:
        if text and text not in seen:
            seen.add(text)
            prompts.append(
                Prompt.from_text(text, origin=origin, parent_id=source.prompt_id)
            )
        if len(prompts) == width:
            break
    return prompts


# ---------------------------------------------------------------------------
# Objective scoring
# ---------------------------------------------------------------------------


def score_objective(
    candidate: Prompt,
    stats: CandidateStats,
    objective: Objective,
    scorer: LanguageModelBackend | None = None,
    loglik: float | None = None,
    peer_logliks: Sequence[float] = (),
    m_prior: int = 0,
) -> BoundValue | float:
    """Score one evaluated candidate under the objective.

    For a bound objective the posterior is uniform over the candidate plus up
    to k-1 peer prompts (their prior log-likelihoods in ``peer_logliks``);
    with the default k = 1 the KL term is just the candidate's negated prior
    log-likelihood. The bound is computed at the candidate's own sample count,
    which is what the bandit allocation actually measured.
    """
    if stats.n_evaluated < 1:
        raise ValueError("candidate has no evaluations")
    if objective.kind == "accuracy":
        return stats.emp_risk
    if loglik is None:
        if scorer is None:
            raise ValueError("bound objective needs a scorer backend or a loglik")
        loglik = conditional_log_likelihood(
            scorer, objective.prior.meta_prompt, candidate.text
        ).value
    logs = [loglik, *peer_logliks[: objective.k - 1]]
    kl = kl_uniform_posterior(logs)
    family = BoundFamily(objective.bound_family)
    inputs = BoundInputs(
        emp_risk=stats.emp_risk,
        kl=kl,
        m=stats.n_evaluated,
        delta=objective.delta,
        n=stats.n_evaluated if family is BoundFamily.DATA_DEPENDENT else None,
        m_prior=m_prior if family is BoundFamily.DATA_DEPENDENT else 0,
        sigma=objective.sigma,
        eta=objective.eta,
    )
    return compute_bound(inputs, family)


def objective_value(score: BoundValue | float) -> float:
    return score.bound if isinstance(score, BoundValue) else float(score)


def _bound_to_dict(bv: BoundValue) -> dict:
    return {
        "family": bv.family.value,
        "bound": bv.bound,
        "gap_term": bv.gap_term,
        "n_adjusted": bv.n_adjusted,
        "kl": bv.inputs.kl.value,
        "negative_input_warning": bv.inputs.kl.negative_input_warning,
        "emp_risk": bv.inputs.emp_risk,
        "m": bv.inputs.m,
        "n": bv.inputs.n,
        "m_prior": bv.inputs.m_prior,
        "delta": bv.inputs.delta,
        "sigma": bv.inputs.sigma,
        "eta": bv.inputs.eta,
    }


def bound_inputs_from_dict(entry: Mapping) -> BoundInputs:
    from .bounds import KlNats

    return BoundInputs(
        emp_risk=entry["emp_risk"],
        kl=KlNats(entry["kl"], entry.get("negative_input_warning", False)),
        m=entry["m"],
        delta=entry["delta"],
        n=entry.get("n"),
        m_prior=entry.get("m_prior", 0),
        sigma=entry.get("sigma", 0.5),
        eta=entry.get("eta", 0.5),
    )


# ---------------------------------------------------------------------------
# Run log
# ---------------------------------------------------------------------------


@dataclass
class RunLog:
    """Append-only record of everything a search evaluated.

    Contains no wall-clock state, so identical configs with fixture backends
    produce byte-identical logs. Every bound in the log is recomputable from
    the logged inputs alone (see :func:`verify_replay`).
    """

    run_id: str
    config: dict
    steps: list[dict] = field(default_factory=list)
    eval_records: list[dict] = field(default_factory=list)
    final_report: dict = field(default_factory=dict)
    failed: bool = False
    failure: str | None = None

    def best_objective_series(self) -> list[float]:
        return [step["best_objective"] for step in self.steps]

    def write_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            fh.write(json.dumps({"type": "config", "run_id": self.run_id,
                                 "config": self.config}) + "\n")
            for rec in self.eval_records:
                fh.write(json.dumps({"type": "eval_record", **rec}) + "\n")
            for step in self.steps:
                fh.write(json.dumps({"type": "step", **step}) + "\n")
            fh.write(json.dumps({"type": "report", "failed": self.failed,
                                 "failure": self.failure,
                                 "report": self.final_report}) + "\n")


def load_runlog(path: str | Path) -> RunLog:
    run_id = ""
    config: dict = {}
    steps: list[dict] = []
    eval_records: list[dict] = []
    final_report: dict = {}
    failed = False
    failure = None
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        kind = entry.pop("type")
        if kind == "config":
            run_id = entry["run_id"]
            config = entry["config"]
        elif kind == "eval_record":
            eval_records.append(entry)
        elif kind == "step":
            steps.append(entry)
        elif kind == "report":
            final_report = entry["report"]
            failed = entry.get("failed", False)
            failure = entry.get("failure")
        else:
            raise ValueError(f"unknown run-log entry type {kind!r}")
    return RunLog(
        run_id=run_id,
        config=config,
        steps=steps,
        eval_records=eval_records,
        final_report=final_report,
        failed=failed,
        failure=failure,
    )


def verify_replay(runlog: RunLog) -> int:
    """Recompute every logged bound from its logged inputs; exact match required.

    Returns the number of bounds verified; raises ValueError on the first
    mismatch. This is the offline audit: a log is trustworthy iff the numbers
    in it are a pure function of the numbers in it.
    """
    checked = 0
    for step in runlog.steps:
        for cand in step["candidates"]:
            entry = cand.get("bound")
            if entry is None:
                continue
            logs = [cand["loglik"], *cand.get("peer_logliks", ())]
            kl = kl_uniform_posterior(logs)
            if kl.value != entry["kl"]:
                raise ValueError(
                    f"step {step['step']} candidate {cand['prompt_id']}: "
                    f"KL replay mismatch {kl.value!r} != {entry['kl']!r}"
                )
            replayed = compute_bound(
                bound_inputs_from_dict(entry), BoundFamily(entry["family"])
            )
            if replayed.bound != entry["bound"] or replayed.gap_term != entry["gap_term"]:
                raise ValueError(
                    f"step {step['step']} candidate {cand['prompt_id']}: "
                    f"bound replay mismatch {replayed.bound!r} != {entry['bound']!r}"
                )
            checked += 1
    return checked


# ---------------------------------------------------------------------------
# Main search loops
# ---------------------------------------------------------------------------


def _candidate_entry(
    cand: Prompt,
    stats: CandidateStats,
    score: BoundValue | float,
    loglik: float | None,
    peer_logliks: Sequence[float],
) -> dict:
    return {
        "prompt_id": cand.prompt_id,
        "text": cand.text,
        "origin": cand.origin,
        "parent_id": cand.parent_id,
        "n_evaluated": stats.n_evaluated,
        "emp_risk": stats.emp_risk,
        "eval_example_ids": list(stats.eval_example_ids),
        "loglik": loglik,
        "peer_logliks": list(peer_logliks),
        "bound": _bound_to_dict(score) if isinstance(score, BoundValue) else None,
        "objective_value": objective_value(score),
    }


def _selection_key(entry: dict) -> tuple:
    return (entry["objective_value"], len(entry["text"]), entry["text"])


def optimize(
    dataset: LabeledDataset,
    objective: Objective,
    classifier: LanguageModelBackend,
    *,
    steps: int = 200,
    budget_per_step: int = 64,
    proposer: str = "offline_mutation",
    seed: int = 0,
    seed_prompt: str = "Does this text contain hate speech?",
    scorer: LanguageModelBackend | None = None,
    critic: LanguageModelBackend | None = None,
    split: SplitPlan | None = None,
    eval_settings: EvalSettings = EvalSettings(),
    width: int = 4,
    mutation_table: MutationTable = DEFAULT_MUTATION_TABLE,
    early_stop_after: int | None = None,
    test_examples: Sequence[LabeledExample] | None = None,
    config_extra: dict | None = None,
) -> RunLog:
    """Run the bound-regularized search and return its complete log.

    The incumbent is replaced only on strict objective improvement, so the
    best-so-far objective is non-increasing by construction. A backend hard
    failure closes the log with the partial results and a failure marker
    rather than losing the run.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps!r}")
    if budget_per_step < max(1, width):
        raise ValueError(
            f"budget_per_step={budget_per_step} cannot cover one evaluation per "
            f"proposal (width={width})"
        )
    if objective.kind == "bound" and scorer is None:
        raise ValueError("bound objective needs a scorer backend")

    eval_view = split.eval_examples(dataset) if split else dataset.examples
    m_prior = split.m_prior if split else 0
    if (
        objective.kind == "bound"
        and BoundFamily(objective.bound_family) is BoundFamily.DATA_DEPENDENT
    ):
        # Every scored candidate needs n_evaluated > m_prior or its bound is
        # undefined; the first-round batch is the allocation floor.
        floor = min(
            eval_settings.batch_size, budget_per_step // max(width, 1), len(eval_view)
        )
        if floor <= m_prior:
            raise ValueError(
                f"data-dependent objective needs every candidate evaluated on "
                f"more than m_prior={m_prior} examples, but the allocation floor "
                f"is {floor}; raise batch_size/budget_per_step or shrink the "
                f"prior subset"
            )

    config = {
        "objective": objective.to_dict(),
        "eval_settings": eval_settings.to_dict(),
        "steps": steps,
        "budget_per_step": budget_per_step,
        "proposer": proposer,
        "width": width,
        "seed": seed,
        "seed_prompt": seed_prompt,
        "split": split.to_dict() if split else None,
        "dataset_size": len(dataset),
        "classifier_backend": classifier.backend_id,
        "scorer_backend": scorer.backend_id if scorer else None,
        "critic_backend": critic.backend_id if critic else None,
        **(config_extra or {}),
    }
    run_id = hashlib.sha256(
        json.dumps(config, sort_keys=True).encode("utf-8")
    ).hexdigest()[:12]
    runlog = RunLog(run_id=run_id, config=config)

    rng = random.Random(seed)
    local_records: dict[str, list[EvalRecord]] = {}
    peer_pool: list[tuple[float, str, float]] = []  # (value, prompt_id, loglik)

    def record_sink(rec: EvalRecord) -> None:
        runlog.eval_records.append(rec.to_dict())
        local_records.setdefault(rec.prompt_id, []).append(rec)

    def peers_for(prompt_id: str) -> list[float]:
        # Prior log-likelihoods of the best k-1 other prompts scored so far;
        # a prompt re-scored in a later step counts once.
        if objective.k <= 1:
            return []
        out: list[float] = []
        taken = {prompt_id}
        for _, pid, ll in sorted(peer_pool):
            if pid not in taken:
                taken.add(pid)
                out.append(ll)
            if len(out) == objective.k - 1:
                break
        return out

    def note_peer(entry: dict) -> None:
        if objective.k > 1 and entry["loglik"] is not None:
            peer_pool.append(
                (entry["objective_value"], entry["prompt_id"], entry["loglik"])
            )

    def evaluate_and_score(cands: list[Prompt], eval_seed: int) -> list[dict]:
        stats_list = allocate_and_evaluate(
            cands,
            eval_view,
            classifier,
            budget_per_step,
            eval_settings,
            seed=eval_seed,
            record_sink=record_sink,
        )
        entries = []
        for cand, stats in zip(cands, stats_list):
            loglik = None
            if objective.kind == "bound":
                loglik = conditional_log_likelihood(
                    scorer, objective.prior.meta_prompt, cand.text
                ).value
            score = score_objective(
                cand,
                stats,
                objective,
                scorer=scorer,
                loglik=loglik,
                peer_logliks=peers_for(cand.prompt_id),
                m_prior=m_prior,
            )
            entries.append(
                _candidate_entry(cand, stats, score, loglik, peers_for(cand.prompt_id))
            )
        return entries

    incumbent = Prompt.from_text(seed_prompt, origin="seed")
    incumbent_entry: dict | None = None
    stagnant_streak = 0

    try:
        entries = evaluate_and_score([incumbent], rng.randrange(2**32))
        incumbent_entry = entries[0]
        note_peer(incumbent_entry)
        best = incumbent_entry["objective_value"]
        runlog.steps.append(
            {
                "step": 0,
                "candidates": entries,
                "selected_prompt_id": incumbent.prompt_id,
                "incumbent_prompt_id": incumbent.prompt_id,
                "best_objective": best,
                "stagnant": False,
            }
        )

        for step in range(1, steps + 1):
            propose_seed = rng.randrange(2**32)
            eval_seed = rng.randrange(2**32)
            failures = [
                r for r in local_records.get(incumbent.prompt_id, []) if r.loss == 1
            ]
            proposals = propose_edits(
                incumbent,
                failures,
                proposer,
                width,
                propose_seed,
                critic=critic,
                mutation_table=mutation_table,
                example_lookup=lambda eid: dataset.by_id(eid).text,
            )
            if not proposals:
                stagnant_streak += 1
                runlog.steps.append(
                    {
                        "step": step,
                        "candidates": [],
                        "selected_prompt_id": incumbent.prompt_id,
                        "incumbent_prompt_id": incumbent.prompt_id,
                        "best_objective": best,
                        "stagnant": True,
                    }
                )
                if early_stop_after and stagnant_streak >= early_stop_after:
                    break
                continue

            entries = evaluate_and_score(proposals, eval_seed)
            for entry in entries:
                note_peer(entry)
            challenger = min(entries, key=_selection_key)
            improved = challenger["objective_value"] < best
            if improved:
                best = challenger["objective_value"]
                incumbent = next(
                    p for p in proposals if p.prompt_id == challenger["prompt_id"]
                )
                incumbent_entry = challenger
                stagnant_streak = 0
            else:
                stagnant_streak += 1
            runlog.steps.append(
                {
                    "step": step,
                    "candidates": entries,
                    "selected_prompt_id": challenger["prompt_id"],
                    "incumbent_prompt_id": incumbent.prompt_id,
                    "best_objective": best,
                    "stagnant": not improved,
                }
            )
            if early_stop_after and stagnant_streak >= early_stop_after:
                break
    except BackendError as exc:
        # Classification transport errors are absorbed per-record by the
        # evaluator; anything that still escapes (e.g. the scorer giving out)
        # closes the log with partial results instead of losing the run.
        runlog.failed = True
        runlog.failure = str(exc)

    seed_entry = runlog.steps[0]["candidates"][0] if runlog.steps else None
    runlog.final_report = {
        "rows": _report_rows(
            objective,
            seed_entry,
            incumbent_entry,
            classifier,
            eval_settings,
            test_examples,
        )
    }
    return runlog


def _test_error(
    entry: dict,
    classifier: LanguageModelBackend,
    eval_settings: EvalSettings,
    test_examples: Sequence[LabeledExample] | None,
) -> float | None:
    if not test_examples:
        return None
    prompt = Prompt.from_text(entry["text"])
    records = [classify(classifier, prompt, ex, eval_settings) for ex in test_examples]
    return empirical_risk(records)


def _report_rows(
    objective: Objective,
    seed_entry: dict | None,
    best_entry: dict | None,
    classifier: LanguageModelBackend,
    eval_settings: EvalSettings,
    test_examples: Sequence[LabeledExample] | None,
) -> list[dict]:
    method = "optimized (acc)" if objective.kind == "accuracy" else "optimized"
    pairs = [("seed", seed_entry)]
    if best_entry is not None and (
        seed_entry is None or best_entry["prompt_id"] != seed_entry["prompt_id"]
    ):
        pairs.append((method, best_entry))
    rows = []
    for label, entry in pairs:
        if entry is None:
            continue
        rows.append(
            {
                "method": label,
                "prior": objective.label(),
                "prompt_id": entry["prompt_id"],
                "text": entry["text"],
                "train_error": entry["emp_risk"],
                "n": entry["n_evaluated"],
                "loglik": entry["loglik"],
                "test_error": _test_error(entry, classifier, eval_settings, test_examples),
                "bound": entry["bound"],
            }
        )
    return rows


def optimize_prior(
    target_prompts: Sequence[Prompt],
    proposer: str,
    steps: int,
    seed: int,
    backend: LanguageModelBackend,
    *,
    seed_meta_prompt: str = "",
    width: int = 4,
    critic: LanguageModelBackend | None = None,
    mutation_table: MutationTable = DEFAULT_MUTATION_TABLE,
    trace: list | None = None,
) -> PriorSpec:
    """Learn a meta-prompt that maximizes mean log-likelihood of known-good prompts.

    Same propose mechanics as the main search, hill-climbing on
    mean_i log P(target_i | meta_prompt). The returned meta-prompt is never
    worse than the seed under that score; pass ``trace`` to capture the
    per-step best-so-far trajectory. Candidates the backend cannot score
    (e.g. out-of-alphabet symbols) are skipped.
    """
    if not target_prompts:
        raise ValueError("target_prompts must be non-empty")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps!r}")

    def mean_loglik(meta: str) -> float:
        total = 0.0
        for target in target_prompts:
            total += conditional_log_likelihood(backend, meta, target.text).value
        return total / len(target_prompts)

    rng = random.Random(seed)
    incumbent = seed_meta_prompt
    best = mean_loglik(incumbent)
    if trace is not None:
        trace.append({"step": 0, "meta_prompt": incumbent, "mean_loglik": best})

    for step in range(1, steps + 1):
        propose_seed = rng.randrange(2**32)
        if proposer == "offline_mutation":
            texts = mutate_text(incumbent, width, propose_seed, mutation_table)
        elif proposer == "llm_critic":
            if critic is None:
                raise ValueError("llm_critic proposer needs a critic backend")
            request = CRITIC_TEMPLATE.format(
                prompt=incumbent or "(empty)",
                failures="(optimizing prior likelihood, no prediction errors)",
                width=width,
            )
            texts = _parse_rewrites(critic.generate(request))[:width]
        else:
            raise ValueError(f"unknown proposer {proposer!r}")

        scored = []
        for text in texts:
            try:
                scored.append((mean_loglik(text), text))
            except ValueError:
                continue
        if scored:
            # Max mean log-likelihood; ties prefer shorter, then first proposed.
            top = max(scored, key=lambda pair: (pair[0], -len(pair[1])))
            if top[0] > best or (top[0] == best and len(top[1]) < len(incumbent)):
                best, incumbent = top[0], top[1]
        if trace is not None:
            trace.append({"step": step, "meta_prompt": incumbent, "mean_loglik": best})

    return PriorSpec(meta_prompt=incumbent, backend_id=backend.backend_id)
