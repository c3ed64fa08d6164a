#!/usr/bin/env python3
"""Smoke test for the memgate Python extension.

Builds nothing itself: it locates the compiled cdylib under target/
(release preferred), exposes it as an importable module, and drives the
main surfaces end to end: reward math, uncertainty statistics, the
abstention boundary, bank generation and loading, retrieval, and the
gate/feedback loop of the controller.

Usage:
    cargo build -p memgate-py --release
    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_memgate():
    candidates = [
        os.path.join(REPO_ROOT, "target", "release", "libmemgate.so"),
        os.path.join(REPO_ROOT, "target", "debug", "libmemgate.so"),
        os.path.join(REPO_ROOT, "target", "release", "libmemgate.dylib"),
        os.path.join(REPO_ROOT, "target", "debug", "libmemgate.dylib"),
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        sys.exit("build the extension first: cargo build -p memgate-py --release")
    stage = tempfile.mkdtemp(prefix="memgate_py_")
    shutil.copy(built, os.path.join(stage, "memgate.so"))
    sys.path.insert(0, stage)
    import memgate

    return memgate


def check(name, condition):
    status = "ok" if condition else "FAIL"
    print(f"  {status}: {name}")
    if not condition:
        sys.exit(1)


def main():
    mg = import_memgate()
    print("reward math")
    check("verified reward is 2.0", mg.reward("verified") == 2.0)
    check("accepted reward is 1.0", mg.reward("accepted") == 1.0)
    check("correct abstain reward is 0.5", mg.reward("correct_abstain") == 0.5)
    check("false positive reward is -4.0", mg.reward("false_positive") == -4.0)
    check("rejected reward is -1.0", mg.reward("rejected") == -1.0)
    check(
        "false positive with costs is exactly -5.01",
        mg.reward("false_positive", latency_ms=10.0, token_cost=100.0) == -5.01,
    )

    print("uncertainty statistics")
    pi = mg.score_distribution([3.0, 1.0])
    check("distribution sums to one", abs(sum(pi) - 1.0) < 1e-12)
    check("distribution is ~(0.75, 0.25)", abs(pi[0] - 0.75) < 1e-5)
    check(
        "uniform entropy is ln 3",
        abs(mg.score_entropy([1 / 3, 1 / 3, 1 / 3]) - math.log(3)) < 1e-12,
    )
    check("margin of (0.9, 0.3) is 0.6", abs(mg.score_margin([0.9, 0.3]) - 0.6) < 1e-12)

    print("abstention boundary")
    e_inject, e_abstain, dominates = mg.abstention_boundary(0.0, 0.0, 1.0, 0.0, 0.0)
    check("pure-fp injection expects -4.0", e_inject == -4.0)
    check("abstention dominates on pure fp", dominates)
    _, _, dominates = mg.abstention_boundary(1.0, 0.0, 0.0, 0.0, 0.0)
    check("verified injection is not dominated", not dominates)

    print("benchmark generation")
    data_dir = tempfile.mkdtemp(prefix="memgate_data_")
    counts = mg.generate_benchmark(1337, data_dir)
    check("16 bank records", counts["bank_records"] == 16)
    check("24 canonical queries", counts["canonical_queries"] == 24)
    check("96 paraphrases", counts["paraphrases"] == 96)
    check("32 hard negatives", counts["hard_negatives"] == 32)
    check("80 replay events over two seeds", counts["replay_events"] == 80)
    check("dataset validates", mg.validate_benchmark(data_dir) == [])

    print("bank and retrieval")
    bank = mg.Bank.load(os.path.join(data_dir, "memory_bank.jsonl"))
    check("bank has 16 records", len(bank) == 16)
    check("bank has 32 variants", bank.variant_count == 32)
    check("bank validates", bank.validate() == [])
    profile = mg.normalize_context(
        "ModuleNotFoundError: No module named app",
        session_id="smoke",
    )
    check("tokens normalized", "modulenotfounderror" in profile.tokens)
    votes = profile.family_votes
    check(
        "confusable families both voted",
        votes.get("wrong_virtualenv", 0) > 0 and votes.get("wrong_pythonpath", 0) > 0,
    )
    candidates = mg.retrieve_candidates(profile, bank, mode="standard", k=3)
    check("retrieval returns candidates", len(candidates) == 3)
    check("scores are sorted", candidates[0]["score"] >= candidates[1]["score"])

    print("controller gate and feedback")
    controller = mg.Controller()
    decision = controller.gate(
        bank,
        "SQLite OperationalError: database is locked (busy timeout expired "
        "during write transaction) lingering connection holds the wal session "
        "open release it first",
        stack_excerpt="cursor / execute / commit",
        command="pytest tests/db -k locking",
        paths=["app/data/app.db"],
        env={"DATABASE_URL": "sqlite:///app.db"},
        session_id="smoke",
    )
    check("gate returns a known action", decision["action"] in mg.actions())
    check("state has 16 features", len(decision["state"]) == 16)
    check("audit line is emitted", decision["audit_line"].startswith("{"))
    reward = controller.feedback(
        decision["action"], decision["state"], "verified", session_id="smoke"
    )
    check("feedback returns the reward", reward == 2.0)
    check("feedback counted", controller.total_feedback == 1)
    check(
        "action quality tracked",
        controller.action_quality(decision["action"]) == 2.0,
    )

    print("offline replay through the harness")
    metrics = mg.replay_policy("full_rscb_mc", data_dir)
    check("controller replay has zero fp", metrics["fp_rate"] == 0.0)
    static = mg.replay_policy("static_hybrid", data_dir)
    check(
        "controller beats static hybrid",
        metrics["success_rate"] > static["success_rate"],
    )
    check("ten policy kinds exposed", len(mg.policy_kinds()) == 10)
    check("sixteen feature names", len(mg.feature_names()) == 16)

    print("all smoke checks passed")


if __name__ == "__main__":
    main()
