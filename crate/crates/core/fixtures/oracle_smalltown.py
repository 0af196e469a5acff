#!/usr/bin/env python3
"""Independent expectations for smalltown.jsonl, computed by plain line scans.

Writes smalltown.oracle.json next to the fixture.
"""
import json
from collections import Counter

rows = [json.loads(line) for line in open("smalltown.jsonl", encoding="utf-8")]
ops = [r for r in rows if r["type"] == "op"]

party = sorted(
    ([r["t"], r["agent"], r["op_index"]] for r in ops
     if r["op_kind"] == "memory" and "party" in r["text"].lower()),
    key=lambda k: (k[0], k[1]),
)
decision = next(r for r in ops if r["text"].startswith("Ayesha decides to mention the party"))
isabella_100_120 = sum(1 for r in ops if r["agent"] == "isabella" and 100 <= r["t"] < 120)

out = {
    "records": dict(Counter(r["type"] for r in rows)),
    "ops_per_agent": dict(sorted(Counter(r["agent"] for r in ops).items())),
    "last_tick": max(r["t"] for r in rows if "t" in r),
    "party_memory_hits": party,
    "ayesha_decision": [decision["t"], decision["agent"], decision["op_index"]],
    "ayesha_decision_causes": [[c["t"], c["agent"], c["op_index"]] for c in decision["causes"]],
    "explicit_edges": sum(len(r.get("causes", [])) for r in ops),
    "isabella_ops_100_120": isabella_100_120,
    "distinct_op_texts": len({r["text"] for r in ops}),
}
with open("smalltown.oracle.json", "w", encoding="utf-8", newline="\n") as f:
    json.dump(out, f, indent=2)
    f.write("\n")
print(json.dumps(out))
