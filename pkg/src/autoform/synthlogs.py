"""Deterministic synthetic metrics streams replaying archived-run totals.

These builders produce JSONL event streams with the exact aggregate counts
of the corpus runs they stand in for, so the accounting reconstruction can
be exercised end to end without the original environments. Legacy streams
(schema version 1) carry no explicit verifier-check or oracle-result
events: their totals are reconstructed from per-item repair counters.
"""

from __future__ import annotations

import json
from pathlib import Path

_TS = "2026-01-14T00:00:00+00:00"


def _record(run_id: str, event: str, data: dict) -> dict:
    return {"ts": _TS, "run_id": run_id, "event": event, "data": data}


def legacy_stage1_events(
    run_id: str, attempts: list[int], data_file: str = "synthetic.json"
) -> list[dict]:
    """Schema-1 statement run: item_end carries the bounded repair counter."""
    events = [
        _record(
            run_id,
            "run_start",
            {"pipeline": "statement", "stage": 1, "schema_version": 1, "data_file": data_file},
        )
    ]
    for i, b in enumerate(attempts, start=1):
        events.append(_record(run_id, "item_start", {"index": i, "label": f"Block {i}"}))
        events.append(
            _record(
                run_id,
                "item_end",
                {"index": i, "label": f"Block {i}", "status": "compiled", "b_attempts": b},
            )
        )
    events.append(_record(run_id, "project_check", {"ok": True, "errors": 0}))
    events.append(
        _record(
            run_id,
            "run_end",
            {
                "pipeline": "statement",
                "processed_items": len(attempts),
                "next_index": len(attempts) + 1,
                "total_b_attempts": sum(attempts),
            },
        )
    )
    return events


def _spread(total: int, buckets: int, minimum: int) -> list[int]:
    """Deterministic allocation of ``total`` across ``buckets`` with a floor."""
    if buckets == 0:
        return []
    extra = total - minimum * buckets
    if extra < 0:
        raise ValueError(f"cannot allocate {total} across {buckets} with floor {minimum}")
    base, rem = divmod(extra, buckets)
    return [minimum + base + (1 if i < rem else 0) for i in range(buckets)]


def stage2_events(
    run_id: str,
    targets: int,
    solved: int,
    verifier_calls: int,
    oracle_calls: int,
    data_file: str = "synthetic.json",
) -> list[dict]:
    """Schema-2 proof run with exact verifier/oracle event totals."""
    events = [
        _record(
            run_id,
            "run_start",
            {"pipeline": "proof", "stage": 2, "schema_version": 2, "data_file": data_file},
        )
    ]
    checks = _spread(verifier_calls, targets, 1)
    oracles = _spread(oracle_calls, targets, 1)
    for i in range(1, targets + 1):
        label = f"Target {i}"
        status = "solved" if i <= solved else "unsolved"
        events.append(
            _record(
                run_id,
                "item_start",
                {"index": i, "label": label, "lean_file": "Chapters/Chap01/section01.lean",
                 "nonempty_lines": 20 + (i % 7)},
            )
        )
        for k in range(checks[i - 1]):
            events.append(
                _record(
                    run_id,
                    "lean_check",
                    {"lean_file": "Chapters/Chap01/section01.lean", "ok": k == checks[i - 1] - 1,
                     "errors": 0 if k == checks[i - 1] - 1 else 1, "warnings": 0},
                )
            )
        for k in range(oracles[i - 1]):
            agent = "c" if k == 0 else "a"
            events.append(
                _record(
                    run_id,
                    "oracle_result",
                    {"kind": "plan" if k == 0 else "propose_proof_patch", "agent": agent,
                     "ok": True, "task_id": str(i)},
                )
            )
        events.append(
            _record(
                run_id,
                "item_end",
                {
                    "index": i,
                    "label": label,
                    "status": status,
                    "verifier_calls": checks[i - 1],
                    "a_attempts": max(oracles[i - 1] - 1, 0),
                    "c_plans": 1,
                    "lean_file": "Chapters/Chap01/section01.lean",
                },
            )
        )
    events.append(_record(run_id, "project_check", {"ok": True, "errors": 0}))
    events.append(
        _record(
            run_id,
            "run_end",
            {
                "pipeline": "proof",
                "processed_items": targets,
                "solved": solved,
                "next_index": targets + 1,
                "total_verifier_calls": verifier_calls,
                "total_oracle_calls": oracle_calls,
            },
        )
    )
    return events


# Aggregate totals of the archived corpus runs these fixtures replay.
REAL_ANALYSIS_STAGE1 = {"items": 416, "attempts_total": 176}
CONVEX_ANALYSIS_STAGE1 = {"items": 560, "attempts_total": 45}
RESEARCH_PAPER_STAGE1 = {"items": 67, "attempts_total": 14}
REAL_ANALYSIS_STAGE2 = {"targets": 339, "solved": 339, "verifier_calls": 628, "oracle_calls": 1263}
FATEH_AUTO_STAGE2 = {"targets": 100, "solved": 96, "verifier_calls": 283, "oracle_calls": 339}


def stage1_attempt_profile(items: int, attempts_total: int, cap: int = 3) -> list[int]:
    """Per-item repair counts summing to the corpus total, none above the cap."""
    attempts = [0] * items
    remaining = attempts_total
    i = 0
    while remaining > 0:
        if attempts[i % items] < cap:
            attempts[i % items] += 1
            remaining -= 1
        i += 1
    return attempts


def real_analysis_stage1_fixture(run_id: str = "statement_stage1_synthetic_ra") -> list[dict]:
    profile = stage1_attempt_profile(**REAL_ANALYSIS_STAGE1)
    return legacy_stage1_events(run_id, profile, data_file="real-analysis.json")


def convex_analysis_stage1_fixture(run_id: str = "statement_stage1_synthetic_ca") -> list[dict]:
    profile = stage1_attempt_profile(**CONVEX_ANALYSIS_STAGE1)
    return legacy_stage1_events(run_id, profile, data_file="convex-analysis.json")


def research_paper_stage1_fixture(run_id: str = "statement_stage1_synthetic_rp") -> list[dict]:
    profile = stage1_attempt_profile(**RESEARCH_PAPER_STAGE1)
    return legacy_stage1_events(run_id, profile, data_file="research-paper.json")


def real_analysis_stage2_fixture(run_id: str = "proof_stage2_synthetic_ra") -> list[dict]:
    return stage2_events(run_id, data_file="real-analysis.json", **REAL_ANALYSIS_STAGE2)


def fateh_auto_stage2_fixture(run_id: str = "proof_stage2_synthetic_fateh") -> list[dict]:
    return stage2_events(run_id, data_file="fateh.json", **FATEH_AUTO_STAGE2)


def write_events(path: str | Path, events: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev, ensure_ascii=False) + "\n")
