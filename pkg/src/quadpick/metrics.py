"""Trial metrics records and their newline-delimited file format.

The file holds one record object per line followed by a trailing
summary line; floats use Python's shortest round-trip repr, so
write -> read -> write is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

from .mission import MetricsRecord

VALID_STATUSES = ("success", "fail-slip", "fail-drop", "fail-plan")


def summarize(records: list[MetricsRecord]) -> dict:
    trials = len(records)
    successes = sum(1 for r in records if r.status == "success")
    per_class: dict[str, dict] = {}
    failures: dict[str, int] = {}
    for r in records:
        stats = per_class.setdefault(r.object_class, {"trials": 0, "successes": 0})
        stats["trials"] += 1
        stats["successes"] += r.status == "success"
        if r.status != "success":
            failures[r.status] = failures.get(r.status, 0) + 1
    for stats in per_class.values():
        stats["success_rate"] = stats["successes"] / stats["trials"] if stats["trials"] else None
    return {
        "trials": trials,
        "successes": successes,
        "success_rate": successes / trials if trials else None,
        "per_class": per_class,
        "failures": failures,
    }


def write_metrics(records: list[MetricsRecord], path) -> dict:
    """Write records plus a summary block; returns the summary."""
    for r in records:
        if r.status not in VALID_STATUSES:
            raise ValueError(f"invalid grasp status {r.status!r}")
    summary = summarize(records)
    lines = [json.dumps({"record": r.to_dict()}, sort_keys=True) for r in records]
    lines.append(json.dumps({"summary": summary}, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return summary


def read_metrics(path) -> tuple[list[MetricsRecord], dict]:
    records: list[MetricsRecord] = []
    summary: dict = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if "record" in obj:
            rec = obj["record"]
            records.append(
                MetricsRecord(
                    trial=rec["trial"],
                    object_class=rec["object_class"],
                    method=rec["method"],
                    duration=rec["duration"],
                    status=rec["status"],
                    final_position=tuple(rec["final_position"]),
                )
            )
        elif "summary" in obj:
            summary = obj["summary"]
    return records, summary
