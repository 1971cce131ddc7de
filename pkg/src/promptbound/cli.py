"""Command-line interface: bounds, perplexity, search, validation, reports.

Configuration for the pipeline commands is a single JSON document; selected
flags override it and the effective merged config is echoed into the run
directory, so a run is always reproducible from its own outputs. API
credentials are only ever referenced by environment-variable name.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from .bounds import (
    BoundFamily,
    BoundInputs,
    KlNats,
    compute_bound,
    kl_uniform_posterior,
    n_adjusted_bound,
)
from .dataset import EvalPolicy, load_dataset, make_split
from .evaluator import EvalSettings
from .offline import DEFAULT_GOOD_PHRASES, KeywordClassifier, ScriptedCritic
from .optimizer import (
    DEFAULT_MUTATION_TABLE,
    MutationTable,
    Objective,
    load_runlog,
    optimize,
    optimize_prior,
    verify_replay,
)
from .perplexity import (
    DEFAULT_PROMPT_ALPHABET,
    EndpointConfig,
    NgramBackend,
    PriorSpec,
    RemoteBackend,
    StubBackend,
    conditional_log_likelihood,
    load_ngram,
    train_ngram,
)
from .prompts import Prompt
from .report import render_runlog_report, report_json_text
from .validator import coverage_trial_suite, make_synthetic_task

FAMILY_ALIASES = {
    "mcallester": BoundFamily.MCALLESTER,
    "ts": BoundFamily.TOLSTIKHIN_SELDIN,
    "tolstikhin-seldin": BoundFamily.TOLSTIKHIN_SELDIN,
    "tolstikhin_seldin": BoundFamily.TOLSTIKHIN_SELDIN,
    "dd": BoundFamily.DATA_DEPENDENT,
    "data-dependent": BoundFamily.DATA_DEPENDENT,
    "data_dependent": BoundFamily.DATA_DEPENDENT,
}


class CliError(Exception):
    """User-facing configuration or flag error (exit code 2)."""


# ---------------------------------------------------------------------------
# compute-bound
# ---------------------------------------------------------------------------


def cmd_compute_bound(args: argparse.Namespace) -> int:
    family = FAMILY_ALIASES[args.family]
    if args.kl is None and args.loglik is None:
        raise CliError("provide --kl or --loglik")
    if args.kl is not None and args.loglik is not None:
        raise CliError("provide only one of --kl / --loglik")
    if args.loglik is not None:
        kl = kl_uniform_posterior([args.loglik])
    else:
        kl = KlNats(args.kl, negative_input_warning=args.kl < 0)
    try:
        inputs = BoundInputs(
            emp_risk=args.emp_risk,
            kl=kl,
            m=args.m,
            delta=args.delta,
            n=args.n,
            m_prior=args.m_prior,
            sigma=args.sigma,
            eta=args.eta,
        )
        value = compute_bound(inputs, family)
        adjusted = (
            n_adjusted_bound(inputs, args.n_adjust, family)
            if args.n_adjust is not None
            else None
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    print(f"family       = {family.value}")
    print(f"bound        = {value.bound!r}")
    print(f"gap_term     = {value.gap_term!r}")
    if adjusted is not None:
        print(f"bound_n_adj  = {adjusted.bound!r}  (n_max={args.n_adjust})")
    print(f"emp_risk     = {inputs.emp_risk!r}")
    print(f"kl           = {inputs.kl.value!r}")
    if inputs.kl.negative_input_warning:
        print("warning      = negative KL from inconsistent log-probability inputs")
    print(f"m            = {inputs.m}")
    if family is BoundFamily.DATA_DEPENDENT:
        print(f"n            = {inputs.n}")
        print(f"m_prior      = {inputs.m_prior}")
        print(f"sigma        = {inputs.sigma!r}")
        print(f"eta          = {inputs.eta!r}")
    print(f"delta        = {inputs.delta!r}")
    return 0


# ---------------------------------------------------------------------------
# perplexity
# ---------------------------------------------------------------------------


def _read_prior_text(args: argparse.Namespace) -> str:
    if getattr(args, "prior_file", None):
        return Path(args.prior_file).read_text()
    return args.prior_text or ""


def cmd_perplexity(args: argparse.Namespace) -> int:
    backend = _build_scorer_from_flags(args)
    context = _read_prior_text(args)
    try:
        result = conditional_log_likelihood(backend, context, args.prompt)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    print(f"value        = {result.value!r}")
    print(f"token_count  = {result.token_count}")
    print(f"backend      = {result.backend_id}")
    return 0


def _build_scorer_from_flags(args: argparse.Namespace):
    if args.backend == "ngram":
        if not args.model_file:
            raise CliError("--backend ngram needs --model-file")
        return NgramBackend(load_ngram(args.model_file))
    if args.backend == "stub":
        if not args.table_file:
            raise CliError("--backend stub needs --table-file")
        raw = json.loads(Path(args.table_file).read_text())
        table = {(e["context"], e["target"]): e["value"] for e in raw}
        return StubBackend(table)
    raise CliError(f"unknown backend {args.backend!r}")


# ---------------------------------------------------------------------------
# config-driven pipelines
# ---------------------------------------------------------------------------


def _load_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise CliError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config file is not valid JSON: {exc}") from exc


def _check_remote_credentials(spec: dict) -> None:
    env = spec.get("api_key_env", "PROMPTBOUND_API_KEY")
    if not os.environ.get(env):
        raise CliError(
            f"remote backend configured but credential variable {env!r} is not set; "
            f"export it before running"
        )


def _build_backend(spec: dict | None, role: str, base_dir: Path):
    if spec is None:
        return None
    kind = spec.get("kind")
    if kind == "keyword_sim":
        return KeywordClassifier(
            keywords=spec["keywords"],
            base_error=spec.get("base_error", 0.35),
            bonus_per_phrase=spec.get("bonus_per_phrase", 0.08),
            min_error=spec.get("min_error", 0.02),
            good_phrases=spec.get("good_phrases", DEFAULT_GOOD_PHRASES),
        )
    if kind == "scripted":
        return ScriptedCritic(spec["responses"])
    if kind == "stub":
        raw = json.loads((base_dir / spec["table_file"]).read_text())
        return StubBackend({(e["context"], e["target"]): e["value"] for e in raw})
    if kind == "ngram":
        if "model_file" in spec:
            model = load_ngram(base_dir / spec["model_file"])
        elif "corpus_file" in spec:
            corpus = (base_dir / spec["corpus_file"]).read_text().splitlines()
            model = train_ngram(
                corpus,
                order=spec.get("order", 3),
                alphabet=DEFAULT_PROMPT_ALPHABET,
                smoothing_alpha=spec.get("alpha", 1.0),
            )
        else:
            raise CliError(f"{role}: ngram backend needs model_file or corpus_file")
        return NgramBackend(model)
    if kind == "remote":
        _check_remote_credentials(spec)
        config = EndpointConfig(
            url=spec["url"],
            model=spec["model"],
            api_key_env=spec.get("api_key_env", "PROMPTBOUND_API_KEY"),
            request_shape=spec.get("request_shape", "completion"),
            timeout=spec.get("timeout", 30.0),
            max_retries=spec.get("max_retries", 3),
            max_in_flight=spec.get("max_in_flight", 4),
        )
        cache = spec.get("cache_file")
        return RemoteBackend(config, cache_path=base_dir / cache if cache else None)
    raise CliError(f"{role}: unknown backend kind {kind!r}")


def _load_config_dataset(spec: dict, base_dir: Path):
    dataset = load_dataset(
        base_dir / spec["path"], spec.get("format", "csv"), spec["field_map"]
    )
    split = None
    if spec.get("m_prior", 0) > 0 or spec.get("eval_policy"):
        split = make_split(
            dataset,
            m_prior=spec.get("m_prior", 0),
            seed=spec.get("split_seed", 0),
            eval_policy=EvalPolicy(spec.get("eval_policy", "full_S")),
        )
    return dataset, split


def _mutation_table_from_config(spec: dict | None) -> MutationTable:
    if spec is None:
        return DEFAULT_MUTATION_TABLE
    return MutationTable(
        synonyms={k: tuple(v) for k, v in spec.get("synonyms", {}).items()},
        insert_clauses=tuple(spec.get("insert_clauses", ())),
        suffix_toggles=tuple(spec.get("suffix_toggles", ())),
        allow_sentence_deletion=spec.get("allow_sentence_deletion", True),
    )


def _eval_settings_from_config(opt: dict) -> EvalSettings:
    defaults = EvalSettings()
    return EvalSettings(
        template=opt.get("template", defaults.template),
        positive_aliases=tuple(opt.get("positive_aliases", defaults.positive_aliases)),
        negative_aliases=tuple(opt.get("negative_aliases", defaults.negative_aliases)),
        policy=opt.get("policy", defaults.policy),
        batch_size=opt.get("batch_size", defaults.batch_size),
        halving_factor=opt.get("halving_factor", defaults.halving_factor),
    )


def cmd_optimize(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    base_dir = Path(args.config).parent
    opt = dict(config.get("optimizer", {}))
    if args.steps is not None:
        opt["steps"] = args.steps
    if args.seed is not None:
        opt["seed"] = args.seed
    out_dir = Path(args.out or config.get("output_dir") or "run_out")

    backends = config.get("backends", {})
    classifier = _build_backend(backends.get("classifier"), "classifier", base_dir)
    if classifier is None:
        raise CliError("config must define backends.classifier")
    scorer = _build_backend(backends.get("scorer"), "scorer", base_dir)
    critic = _build_backend(backends.get("critic"), "critic", base_dir)

    dataset, split = _load_config_dataset(config["dataset"], base_dir)
    test_examples = None
    if "test_dataset" in config:
        test_ds, _ = _load_config_dataset(config["test_dataset"], base_dir)
        test_examples = test_ds.examples

    obj_spec = config.get("objective", {})
    objective = Objective(
        kind=obj_spec.get("kind", "bound"),
        bound_family=FAMILY_ALIASES[obj_spec.get("family", "ts")],
        delta=obj_spec.get("delta", 0.1),
        sigma=obj_spec.get("sigma", 0.5),
        eta=obj_spec.get("eta", 0.5),
        k=obj_spec.get("k", 1),
        prior=PriorSpec(
            meta_prompt=obj_spec.get("prior_meta_prompt", ""),
            backend_id=scorer.backend_id if scorer else "",
        ),
        prior_label=obj_spec.get("prior_label", ""),
    )

    settings = _eval_settings_from_config(opt)
    effective = dict(config)
    effective["optimizer"] = opt
    try:
        runlog = optimize(
            dataset,
            objective,
            classifier,
            steps=opt.get("steps", 200),
            budget_per_step=opt.get("budget_per_step", 64),
            proposer=opt.get("proposer", "offline_mutation"),
            seed=opt.get("seed", 0),
            seed_prompt=opt.get("seed_prompt", "Does this text contain hate speech?"),
            scorer=scorer,
            critic=critic,
            split=split,
            eval_settings=settings,
            width=opt.get("width", 4),
            mutation_table=_mutation_table_from_config(config.get("mutation")),
            test_examples=test_examples,
            config_extra={"config_path": str(args.config), "file_config": effective},
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(effective, indent=2, sort_keys=True) + "\n")
    runlog.write_jsonl(out_dir / "runlog.jsonl")
    (out_dir / "report.txt").write_text(render_runlog_report(runlog))
    (out_dir / "report.json").write_text(report_json_text(runlog))
    print(f"run {runlog.run_id} complete: {len(runlog.steps)} steps")
    print(f"outputs in {out_dir}")
    if runlog.failed:
        print(f"run closed early after backend failure: {runlog.failure}")
        return 1
    return 0


def cmd_optimize_prior(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    base_dir = Path(args.config).parent
    opt = dict(config.get("prior_optimizer", {}))
    if args.steps is not None:
        opt["steps"] = args.steps
    if args.seed is not None:
        opt["seed"] = args.seed
    out_dir = Path(args.out or config.get("output_dir") or "prior_out")

    backends = config.get("backends", {})
    scorer = _build_backend(backends.get("scorer"), "scorer", base_dir)
    if scorer is None:
        raise CliError("config must define backends.scorer")
    critic = _build_backend(backends.get("critic"), "critic", base_dir)

    if "target_prompts" in config:
        targets = [Prompt.from_text(t) for t in config["target_prompts"]]
    elif "targets_file" in config:
        raw = json.loads((base_dir / config["targets_file"]).read_text())
        targets = [Prompt.from_text(t) for t in raw]
    else:
        raise CliError("config must define target_prompts or targets_file")

    trace: list = []
    try:
        prior = optimize_prior(
            targets,
            opt.get("proposer", "offline_mutation"),
            opt.get("steps", 50),
            opt.get("seed", 0),
            scorer,
            seed_meta_prompt=opt.get("seed_meta_prompt", ""),
            width=opt.get("width", 4),
            critic=critic,
            mutation_table=_mutation_table_from_config(config.get("mutation")),
            trace=trace,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "meta_prompt": prior.meta_prompt,
        "backend_id": prior.backend_id,
        "trace": trace,
    }
    (out_dir / "prior.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"best meta-prompt ({len(prior.meta_prompt)} chars): {prior.meta_prompt!r}")
    print(f"mean log-likelihood: {trace[-1]['mean_loglik']!r}")
    print(f"outputs in {out_dir}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    family = FAMILY_ALIASES[args.family]
    task = make_synthetic_task(
        n_examples=args.examples, n_hypotheses=args.hypotheses, seed=args.task_seed
    )
    uniform = -math.log(len(task.hypothesis_ids))
    prior = {h: uniform for h in task.hypothesis_ids}
    try:
        report = coverage_trial_suite(
            task,
            family,
            prior,
            m=args.m,
            delta=args.delta,
            trials=args.trials,
            seed=args.seed,
            m_prior=args.m_prior,
            eta=args.eta,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    level = args.eta if family is BoundFamily.DATA_DEPENDENT else args.delta
    lines = [
        f"family        : {report.family}",
        f"trials        : {report.trials}",
        f"violations    : {report.violations}",
        f"coverage      : {report.coverage:.4f}",
        f"target        : >= {1 - level:.4f}",
        f"mean slack    : {report.mean_slack:.4f}",
    ]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "coverage_report.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n"
        )
        (out_dir / "coverage_report.txt").write_text(text)
        if args.csv:
            rows = ["trial,selected,emp_risk,true_risk,bound,kl,violated"]
            for r in report.rows:
                rows.append(
                    f"{r['trial']},{r['selected']},{r['emp_risk']!r},"
                    f"{r['true_risk']!r},{r['bound']!r},{r['kl']!r},{int(r['violated'])}"
                )
            (out_dir / "coverage_trials.csv").write_text("\n".join(rows) + "\n")
        print(f"outputs in {out_dir}")
    return 0 if report.coverage >= 1 - level else 1


def cmd_report(args: argparse.Namespace) -> int:
    runlog = load_runlog(args.runlog)
    if args.verify:
        checked = verify_replay(runlog)
        print(f"replay verified: {checked} bound computations match exactly")
    text = render_runlog_report(runlog)
    if args.out:
        Path(args.out).write_text(text)
        print(f"report written to {args.out}")
    else:
        print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptbound",
        description="Generalization bounds and bound-regularized search for prompts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute-bound", help="evaluate one bound from its inputs")
    p.add_argument("--family", choices=sorted(FAMILY_ALIASES), required=True)
    p.add_argument("--emp-risk", type=float, required=True)
    p.add_argument("--kl", type=float, default=None)
    p.add_argument("--loglik", type=float, default=None,
                   help="prior log-likelihood of the prompt; KL for a point posterior")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m-prior", type=int, default=0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--n-adjust", type=int, default=None,
                   help="also print the bound recomputed at this sample size")
    p.set_defaults(func=cmd_compute_bound)

    p = sub.add_parser("perplexity", help="score a prompt under a prior backend")
    p.add_argument("--backend", choices=["ngram", "stub"], required=True)
    p.add_argument("--model-file", default=None, help="serialized n-gram model")
    p.add_argument("--table-file", default=None, help="stub table JSON")
    p.add_argument("--prior-text", default="")
    p.add_argument("--prior-file", default=None)
    p.add_argument("--prompt", required=True)
    p.set_defaults(func=cmd_perplexity)

    p = sub.add_parser("optimize", help="run bound-regularized prompt search")
    p.add_argument("--config", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("optimize-prior", help="learn a meta-prompt prior from target prompts")
    p.add_argument("--config", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_optimize_prior)

    p = sub.add_parser("validate", help="Monte-Carlo coverage check on a synthetic task")
    p.add_argument("--family", choices=sorted(FAMILY_ALIASES), default="mcallester")
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task-seed", type=int, default=0)
    p.add_argument("--hypotheses", type=int, default=16)
    p.add_argument("--examples", type=int, default=8)
    p.add_argument("--m-prior", type=int, default=0)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="re-render the comparison table from a run log")
    p.add_argument("--runlog", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--verify", action="store_true",
                   help="recompute every logged bound before rendering")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
