#!/usr/bin/env python3
"""End-to-end offline demo: bound-regularized search, then prior optimization.

Runs entirely on the bundled toy data with deterministic simulated backends,
so it finishes in seconds and reproduces byte-identically. Artifacts land
under runs/demo and runs/prior.
"""

import json
import sys
from pathlib import Path

from promptbound.cli import main

ROOT = Path(__file__).resolve().parent.parent


def run() -> int:
    demo_out = ROOT / "runs" / "demo"
    prior_out = ROOT / "runs" / "prior"

    print("== bound-regularized prompt search (20 steps, TS bound, empty prior) ==")
    code = main([
        "optimize",
        "--config", str(ROOT / "data" / "demo_config.json"),
        "--out", str(demo_out),
    ])
    if code != 0:
        return code

    print()
    print("== report (with full bound replay) ==")
    code = main([
        "report",
        "--runlog", str(demo_out / "runlog.jsonl"),
        "--verify",
    ])
    if code != 0:
        return code

    print()
    print("== data-dependent prior optimization over three known-good prompts ==")
    code = main([
        "optimize-prior",
        "--config", str(ROOT / "data" / "demo_prior_config.json"),
        "--out", str(prior_out),
    ])
    if code != 0:
        return code

    trace = json.loads((prior_out / "prior.json").read_text())["trace"]
    print()
    print(f"empty-prior mean log-likelihood    : {trace[0]['mean_loglik']:.4f}")
    print(f"optimized-prior mean log-likelihood: {trace[-1]['mean_loglik']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
