#!/usr/bin/env python3
"""Generates smalltown.jsonl, a three-agent, 200-tick town log.

Run from this directory:  python3 gen_smalltown.py
The output is committed; rerunning must reproduce it byte for byte.
"""
import json
import random

TICKS = 200
TOTAL_OPS = 412
rng = random.Random(20230214)

LOCATIONS = [
    ("hobbs_cafe", "Hobbs Cafe", [0, 0, 9, 9]),
    ("isabella_apartment", "Isabella's apartment", [20, 0, 29, 9]),
    ("moore_house", "Moore family house", [0, 20, 9, 29]),
    ("ayesha_dorm", "Oak Hill College dorm", [20, 20, 29, 29]),
    ("johnson_park", "Johnson Park", [10, 10, 19, 19]),
    ("library", "Oak Hill Public Library", [30, 10, 39, 19]),
]

AGENTS = [
    ("isabella", "Isabella Rodriguez",
     "Cafe owner at Hobbs Cafe; friendly, outgoing and hospitable. Plans a Valentine's Day party at the cafe."),
    ("ayesha", "Ayesha Khan",
     "College student writing a senior thesis on the use of language in Shakespeare's plays."),
    ("sam", "Sam Moore",
     "Aspiring novelist who likes quiet mornings and long walks; usually keeps to himself."),
]

records = []
ops = {}  # (t, agent) -> list of op dicts


def state(t, agent, location, position):
    records.append({"type": "state", "t": t, "agent": agent, "location": location, "position": position})


def op(t, agent, task, kind, op_kind, text, **more):
    cell = ops.setdefault((t, agent), [])
    rec = {"type": "op", "t": t, "agent": agent, "task_id": task, "task_kind": kind,
           "op_index": len(cell), "op_kind": op_kind, "text": text}
    rec.update(more)
    cell.append(rec)
    return {"t": t, "agent": agent, "op_index": rec["op_index"]}


def pick(pool):
    return rng.choice(pool)


# ---- environment -----------------------------------------------------------
records.append({"type": "env", "t": 0, "attrs": {"weather": "clear", "day": "2023-02-13"}})
records.append({"type": "env", "t": 100, "attrs": {"weather": "light rain", "day": "2023-02-13"}})
records.append({"type": "env", "t": 170, "attrs": {"weather": "clear", "day": "2023-02-13"}})

# ---- sam: five planted phases ------------------------------------------------
SAM_PHASES = [
    (0, 40, "sleep", "act", "moore_house", [2, 24], [
        "Sam is sleeping in his bedroom",
        "Sam sleeps soundly under a thick blanket",
        "Sam is asleep and snoring quietly",
        "Sam turns over in his sleep",
    ]),
    (40, 70, "morning_routine", "act", "moore_house", [5, 22], [
        "Sam brushes his teeth and showers",
        "Sam makes toast and eggs for breakfast",
        "Sam drinks a glass of orange juice in the kitchen",
        "Sam gets dressed and tidies his room",
    ]),
    (70, 100, "review_work", "think", "library", [33, 14], [
        "Sam reviews yesterday's notes at a library desk",
        "Sam rereads his notebook and marks weak passages",
        "Sam checks reference books about small towns",
        "Sam compares his notes with a borrowed biography",
    ]),
    (100, 170, "write_novel", "act", "hobbs_cafe", [3, 4], None),
    (170, 200, "walk", "act", "johnson_park", [14, 15], [
        "Sam walks along the pond in Johnson Park",
        "Sam strolls under the oak trees",
        "Sam watches ducks at the park pond",
        "Sam takes a slow walk around the park loop",
    ]),
]

WRITING_SUBPHASES = [
    (100, 114, [
        "Sam gathers ideas for the novel in a notebook",
        "Sam collects ideas from overheard cafe gossip for the novel",
        "Sam lists loose ideas about the novel's heroine",
    ]),
    (114, 128, [
        "Sam brainstorms plot twists for the novel",
        "Sam brainstorms possible villains and motives for the novel",
        "Sam sketches a brainstorm map of novel subplots",
    ]),
    (128, 142, [
        "Sam outlines chapter structure for the novel",
        "Sam arranges index cards into a novel outline",
        "Sam outlines the ending of the novel",
    ]),
    (142, 156, [
        "Sam drafts the opening scene of the novel",
        "Sam keeps writing a rough draft of chapter one",
        "Sam drafts dialogue for the novel's first chapter",
    ]),
    (156, 170, [
        "Sam revises awkward sentences in the novel draft",
        "Sam edits and revises the draft chapter",
        "Sam revises the pacing of the novel draft",
    ]),
]

for start, end, task, kind, loc, pos, pool in SAM_PHASES:
    state(start, "sam", loc, pos)
    for t in range(start, end):
        if pool is None:
            sub = next(p for s, e, p in WRITING_SUBPHASES if s <= t < e)
            op(t, "sam", task, kind, "environment", pick(sub))
        else:
            op(t, "sam", task, kind, "environment", pick(pool))

# ---- isabella: regular cafe life every third tick ---------------------------
state(0, "isabella", "isabella_apartment", [24, 4])
state(30, "isabella", "hobbs_cafe", [6, 6])
ISABELLA_DAY = [
    (0, 30, "sleep", "act", [
        "Isabella is sleeping", "Isabella sleeps in her apartment", "Isabella is asleep in bed"]),
    (30, 50, "open_cafe", "act", [
        "Isabella unlocks the cafe and turns on the lights",
        "Isabella brews the first pot of coffee",
        "Isabella wipes down the counter"]),
    (50, 150, "serve_customers", "act", [
        "Isabella serves coffee to a customer",
        "Isabella chats with a regular at the counter",
        "Isabella restocks pastries in the display",
        "Isabella takes an order for two lattes"]),
    (150, 200, "close_cafe", "act", [
        "Isabella counts the register",
        "Isabella stacks chairs onto tables",
        "Isabella sweeps the cafe floor"]),
]
for start, end, task, kind, pool in ISABELLA_DAY:
    for t in range(start, end):
        if t % 3 == 1:
            op(t, "isabella", task, kind, "environment", pick(pool))

party_plan = op(31, "isabella", "plan_party", "think", "memory",
                "Isabella plans to host a Valentine's Day party at Hobbs Cafe on February 14th")
op(34, "isabella", "plan_party", "think", "decision",
   "Isabella decides to invite every regular customer she sees today",
   prompt="Isabella Rodriguez is planning a Valentine's Day party at Hobbs Cafe. "
          "Who should she invite, and how?",
   response="Invite regular customers in person while serving them today.",
   causes=[party_plan])

# ---- ayesha ----------------------------------------------------------------
state(0, "ayesha", "ayesha_dorm", [24, 24])
state(50, "ayesha", "hobbs_cafe", [5, 5])
state(60, "ayesha", "johnson_park", [12, 12])
state(80, "ayesha", "ayesha_dorm", [26, 22])
state(145, "ayesha", "johnson_park", [17, 11])
state(150, "ayesha", "hobbs_cafe", [5, 6])
state(158, "ayesha", "ayesha_dorm", [24, 24])
AYESHA_DAY = [
    (0, 35, "sleep", "act", ["Ayesha is sleeping", "Ayesha sleeps in her dorm room"]),
    (35, 50, "study", "think", [
        "Ayesha reads a chapter of Hamlet",
        "Ayesha takes notes on Shakespeare's wordplay"]),
    (60, 80, "stroll", "act", [
        "Ayesha walks through Johnson Park", "Ayesha sits on a park bench and reads"]),
    (80, 145, "thesis", "think", [
        "Ayesha writes a paragraph of her thesis",
        "Ayesha looks up a quotation from Macbeth",
        "Ayesha reorganizes her thesis outline",
        "Ayesha rereads her thesis introduction"]),
    (145, 150, "stroll", "act", ["Ayesha walks toward Hobbs Cafe"]),
    (158, 200, "thesis", "think", [
        "Ayesha writes a paragraph of her thesis",
        "Ayesha rereads her thesis introduction"]),
]
for start, end, task, kind, pool in AYESHA_DAY:
    for t in range(start, end):
        if t % 2 == 0:
            op(t, "ayesha", task, kind, "environment", pick(pool))

# ---- the conversation at the cafe, [50, 60) --------------------------------
invite = op(50, "isabella", "chat", "act", "environment",
            "Isabella invites Ayesha to the Valentine's Day party tomorrow evening",
            causes=[party_plan], extra={"chat_with": "ayesha"})
op(51, "ayesha", "chat", "act", "environment",
   "Ayesha thanks Isabella and says she will try to come", extra={"chat_with": "isabella"})
op(52, "isabella", "remember_chat", "perceive", "memory",
   "Isabella remembers inviting Ayesha to the party")
ayesha_learns = op(53, "ayesha", "remember_chat", "perceive", "memory",
                   "Ayesha learns that Isabella is hosting a Valentine's Day party at Hobbs Cafe")
op(54, "ayesha", "chat", "act", "environment",
   "Ayesha orders a cappuccino from Isabella", extra={"chat_with": "isabella"})
op(55, "isabella", "chat", "act", "environment",
   "Isabella tells Ayesha the cappuccino is on the house", extra={"chat_with": "ayesha"})
op(58, "ayesha", "reflect", "think", "memory",
   "Ayesha wonders whether her friends would enjoy the party too")

# ---- later memories ----------------------------------------------------------
op(90, "isabella", "plan_party", "think", "memory",
   "Isabella recalls that the party still needs paper hearts and candles",
   causes=[party_plan])
op(120, "ayesha", "reflect", "think", "memory",
   "Ayesha thinks about what to wear to the party")
op(149, "ayesha", "plan_visit", "think", "decision",
   "Ayesha decides to mention the party to Isabella when she visits the cafe",
   prompt="Ayesha Khan is heading to Hobbs Cafe. What should she talk about with Isabella?",
   response="Mention the Valentine's Day party and ask whether she can bring friends.",
   causes=[ayesha_learns])

# ---- second conversation, [150, 158), with sam at the next table -----------
op(150, "ayesha", "chat", "act", "environment",
   "Ayesha asks Isabella if she can bring two friends tomorrow", extra={"chat_with": "isabella"})
op(151, "isabella", "chat", "act", "environment",
   "Isabella tells Ayesha her friends are very welcome", extra={"chat_with": "ayesha"})
op(151, "isabella", "remember_chat", "perceive", "memory",
   "Isabella is glad that Ayesha and her friends are coming to the party")
overheard = op(152, "sam", "overhear", "perceive", "memory",
               "Sam overhears two women at the next table talking about a Valentine's Day party")
op(153, "sam", "consider_joining", "think", "decision",
   "Sam decides not to join the conversation and keeps working on his novel",
   prompt="Sam Moore is writing at Hobbs Cafe and overhears a conversation about a party. "
          "Should he join in?",
   response="No. Sam is shy and wants to finish his chapter; he keeps writing.",
   causes=[overheard])
op(154, "ayesha", "chat", "act", "environment",
   "Ayesha promises to help Isabella hang decorations", extra={"chat_with": "isabella"})
op(155, "ayesha", "remember_chat", "perceive", "memory",
   "Ayesha remembers promising to help decorate for the party")
op(157, "isabella", "chat", "act", "environment",
   "Isabella hands Ayesha a box of paper hearts", extra={"chat_with": "ayesha"})

# ---- top up to the planned op count with ayesha's thesis reading ------------
filler = [
    "Ayesha highlights a line in her annotated Othello",
    "Ayesha checks a footnote in her Shakespeare anthology",
]
slots = [t for t in list(range(35, 50)) + list(range(81, 145)) if t % 2 == 1]
while sum(len(c) for c in ops.values()) < TOTAL_OPS:
    op(slots.pop(0), "ayesha", "thesis", "think", "environment", pick(filler))
assert sum(len(c) for c in ops.values()) == TOTAL_OPS

# ---- write ------------------------------------------------------------------
meta = {
    "type": "meta",
    "version": 1,
    "agents": [{"id": a, "name": n, "characteristics": c} for a, n, c in AGENTS],
    "locations": [{"id": i, "name": n, "bounds": b} for i, n, b in LOCATIONS],
    "time_unit": "10 min",
}
lines = [meta]
lines += sorted((r for r in records if r["type"] == "env"), key=lambda r: r["t"])
lines += sorted((r for r in records if r["type"] == "state"), key=lambda r: (r["t"], r["agent"]))
for key in sorted(ops):
    lines += ops[key]

with open("smalltown.jsonl", "w", encoding="utf-8", newline="\n") as f:
    for rec in lines:
        f.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")

with open("smalltown.planted.json", "w", encoding="utf-8", newline="\n") as f:
    json.dump({
        "sam_phase_boundaries": [s for s, *_ in SAM_PHASES[1:]],
        "sam_writing_range": [100, 170],
        "sam_writing_boundaries": [s for s, _, _ in WRITING_SUBPHASES[1:]],
        "conversation_range": [50, 60],
        "conversation_agents": ["ayesha", "isabella"],
        "eavesdropper": "sam",
        "eavesdrop_time": 152,
        "sam_position_at_120": [3, 4],
        "sam_location_at_120": "hobbs_cafe",
    }, f, indent=2)
    f.write("\n")
