"""Deterministic multi-node simulation harness.

A scenario declares nodes, accounts, verification records, and an ordered
event list; a seed fixes the delivery order of every in-flight message and
claim-window expiry. Between scenario events the network drains to
quiescence, so scripted flows always observe a settled system, while the
seeded scheduler shuffles everything that races inside a phase — most
importantly concurrent win claims and block announcements. Identical
(scenario, seed) pairs produce byte-identical ledgers and reports.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .canonical import canonical_json_bytes
from .funding import FundingError, STATE_FROZEN
from .ledger import chain_to_bytes
from .node import MemoryStore, NodeCore
from .registry import Registry, RegistryConfig, RegistryError, VerificationRecord

EVENT_TYPES = (
    "deposit",
    "submit_application",
    "verify",
    "pledge",
    "partition_hint",
    "inject_concurrent_claims",
)

DEFAULT_MESSAGE_BUDGET = 1_000_000


class ScenarioError(Exception):
    def __init__(self, reason: str, line: Optional[int] = None):
        self.line = line
        self.reason = reason
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")


class ParseError(ScenarioError):
    pass


class UnknownEventType(ScenarioError):
    pass


class DanglingReference(ScenarioError):
    pass


class NonQuiescent(Exception):
    """Message budget exhausted before the network settled: a protocol bug."""


@dataclass
class Scenario:
    nodes: list[str]
    accounts: list[dict]
    records: list[VerificationRecord]
    config: dict
    events: list[dict]
    name: str = "scenario"


# -- scenario text scanning (line numbers for event diagnostics) -----------------


def _string_end(text: str, start: int) -> int:
    i = start + 1
    while i < len(text):
        c = text[i]
        if c == "\\":
            i += 2
            continue
        if c == '"':
            return i + 1
        i += 1
    return i


def _event_offsets(text: str) -> list[int]:
    """Byte offsets where each element of the top-level "events" array starts."""
    i, depth = 0, 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == '"':
            end = _string_end(text, i)
            content = text[i + 1 : end - 1]
            j = end
            while j < n and text[j] in " \t\r\n":
                j += 1
            if depth == 1 and j < n and text[j] == ":" and content == "events":
                k = j + 1
                while k < n and text[k] in " \t\r\n":
                    k += 1
                if k < n and text[k] == "[":
                    return _array_element_offsets(text, k)
            i = end
            continue
        if c in "{[":
            depth += 1
        elif c in "}]":
            depth -= 1
        i += 1
    return []


def _array_element_offsets(text: str, open_idx: int) -> list[int]:
    offsets = []
    i, n = open_idx + 1, len(text)
    while True:
        while i < n and text[i] in " \t\r\n":
            i += 1
        if i >= n or text[i] == "]":
            return offsets
        offsets.append(i)
        depth = 0
        while i < n:
            c = text[i]
            if c == '"':
                i = _string_end(text, i)
                continue
            if c in "{[":
                depth += 1
            elif c == "]" and depth == 0:
                return offsets
            elif c in "}]":
                depth -= 1
            elif c == "," and depth == 0:
                i += 1
                break
            i += 1


def _line_of(text: str, offset: int) -> int:
    return text.count("\n", 0, offset) + 1


# -- parsing -----------------------------------------------------------------------


def parse_scenario_text(text: str, name: str = "scenario") -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ParseError("scenario must be a JSON object")

    nodes = raw.get("nodes")
    if not isinstance(nodes, list) or not nodes or len(set(nodes)) != len(nodes):
        raise ParseError("'nodes' must be a nonempty list of unique fundraiser ids")
    for node in nodes:
        if not isinstance(node, str) or not node:
            raise ParseError("node ids must be nonempty strings")

    accounts = raw.get("accounts", [])
    students: set[str] = set()
    sponsors: set[str] = set()
    for acc in accounts:
        if not isinstance(acc, dict):
            raise ParseError("accounts must be objects")
        role = acc.get("role")
        account_id = acc.get("account_id")
        if role not in ("Student", "Sponsor"):
            raise ParseError(f"scenario accounts are Student or Sponsor, got {role!r}")
        if not account_id or not isinstance(account_id, str):
            raise ParseError("scenario accounts need an explicit account_id")
        if account_id in students | sponsors or account_id in nodes:
            raise ParseError(f"duplicate account id {account_id!r}")
        (students if role == "Student" else sponsors).add(account_id)

    records = []
    for rec in raw.get("verification_records", []):
        try:
            records.append(
                VerificationRecord(
                    name=rec["name"],
                    institute=rec["institute"],
                    high_school_score=int(rec["high_school_score"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad verification record {rec!r}: {exc}") from exc

    config = raw.get("config", {})
    allowed_config = {"min_score", "max_income_cents", "benefit_percent_bp", "benefit_period_months"}
    if not isinstance(config, dict) or set(config) - allowed_config:
        raise ParseError(f"config keys must be within {sorted(allowed_config)}")

    events = raw.get("events", [])
    if not isinstance(events, list):
        raise ParseError("'events' must be a list")
    offsets = _event_offsets(text)
    lines = [_line_of(text, off) for off in offsets]
    applied: set[str] = set()

    def line_for(i: int) -> Optional[int]:
        return lines[i] if i < len(lines) else None

    def need(event: dict, i: int, key: str, kind=str):
        value = event.get(key)
        if kind is int:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ParseError(f"event {i}: {key!r} must be an integer", line_for(i))
        elif not isinstance(value, kind) or (kind is str and not value):
            raise ParseError(f"event {i}: {key!r} must be a nonempty {kind.__name__}", line_for(i))
        return value

    def check_positive(event: dict, i: int, key: str):
        value = need(event, i, key, int)
        if value <= 0:
            raise ParseError(f"event {i}: {key!r} must be positive", line_for(i))
        return value

    def check_ref(value: str, pool: set, what: str, i: int):
        if value not in pool:
            raise DanglingReference(f"event {i}: unknown {what} {value!r}", line_for(i))

    for i, event in enumerate(events):
        if not isinstance(event, dict):
            raise ParseError(f"event {i} must be an object", line_for(i))
        etype = event.get("type")
        if etype not in EVENT_TYPES:
            raise UnknownEventType(f"event {i}: unknown event type {etype!r}", line_for(i))
        if "node" in event:
            check_ref(event["node"], set(nodes), "node", i)
        if etype == "deposit":
            check_ref(need(event, i, "sponsor_id"), sponsors, "sponsor", i)
            check_positive(event, i, "amount_cents")
        elif etype == "submit_application":
            sid = need(event, i, "student_id")
            check_ref(sid, students, "student", i)
            need(event, i, "program_name")
            need(event, i, "institute_name")
            need(event, i, "high_school_score", int)
            need(event, i, "family_income_cents", int)
            check_positive(event, i, "target_amount_cents")
            check_positive(event, i, "program_duration_months")
            applied.add(sid)
        elif etype == "verify":
            sid = need(event, i, "student_id")
            check_ref(sid, students, "student", i)
            if sid not in applied:
                raise DanglingReference(
                    f"event {i}: verify before any application for {sid!r}", line_for(i)
                )
        elif etype == "pledge":
            check_ref(need(event, i, "sponsor_id"), sponsors, "sponsor", i)
            check_ref(need(event, i, "student_id"), students, "student", i)
            check_ref(need(event, i, "fundraiser_id"), set(nodes), "fundraiser", i)
            check_positive(event, i, "amount_cents")
        elif etype == "partition_hint":
            groups = event.get("groups")
            if not isinstance(groups, list):
                raise ParseError(f"event {i}: 'groups' must be a list", line_for(i))
            seen: set[str] = set()
            for group in groups:
                if not isinstance(group, list):
                    raise ParseError(f"event {i}: each group must be a list", line_for(i))
                for node in group:
                    check_ref(node, set(nodes), "node", i)
                    if node in seen:
                        raise ParseError(f"event {i}: node {node!r} in two groups", line_for(i))
                    seen.add(node)
        elif etype == "inject_concurrent_claims":
            check_ref(need(event, i, "student_id"), students, "student", i)
            pledges = event.get("pledges")
            if not isinstance(pledges, list) or not pledges:
                raise ParseError(f"event {i}: 'pledges' must be a nonempty list", line_for(i))
            for p in pledges:
                if not isinstance(p, dict):
                    raise ParseError(f"event {i}: pledges must be objects", line_for(i))
                check_ref(p.get("sponsor_id"), sponsors, "sponsor", i)
                check_ref(p.get("fundraiser_id"), set(nodes), "fundraiser", i)
                amount = p.get("amount_cents")
                if not isinstance(amount, int) or isinstance(amount, bool) or amount <= 0:
                    raise ParseError(f"event {i}: pledge amount_cents must be positive", line_for(i))

    return Scenario(
        nodes=list(nodes),
        accounts=list(accounts),
        records=records,
        config=dict(config),
        events=list(events),
        name=name,
    )


def parse_scenario(path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    return parse_scenario_text(text, name=Path(path).stem)


# -- the harness ---------------------------------------------------------------------


@dataclass
class SimReport:
    node_ids: list[str]
    ledgers: dict[str, bytes]
    converged: bool
    safety_ok: bool
    conservation_ok: bool
    message_count: int
    timer_count: int
    funded_students: list[str]
    safety_problems: list[str] = field(default_factory=list)
    conservation_problems: list[str] = field(default_factory=list)
    skipped_events: list[dict] = field(default_factory=list)
    nodes: dict = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return self.converged and self.safety_ok and self.conservation_ok

    def to_json(self) -> dict:
        return {
            "node_ids": self.node_ids,
            "ledger_sha256": {
                n: hashlib.sha256(data).hexdigest() for n, data in self.ledgers.items()
            },
            "blocks_per_node": {n: data.count(b"\n") for n, data in self.ledgers.items()},
            "converged": self.converged,
            "safety_ok": self.safety_ok,
            "conservation_ok": self.conservation_ok,
            "message_count": self.message_count,
            "timer_count": self.timer_count,
            "funded_students": self.funded_students,
            "safety_problems": self.safety_problems,
            "conservation_problems": self.conservation_problems,
            "skipped_events": self.skipped_events,
        }

    def to_json_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_json()) + b"\n"


class _Network:
    """The pending-message pool plus partition holds, owned by the scheduler."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.pool: list[tuple] = []
        self.held: list[tuple] = []
        self.groups: Optional[list[set[str]]] = None

    def _crosses(self, src: str, dst: str) -> bool:
        if self.groups is None:
            return False
        src_group = dst_group = None
        for i, group in enumerate(self.groups):
            if src in group:
                src_group = i
            if dst in group:
                dst_group = i
        return src_group != dst_group

    def set_partition(self, groups: Optional[list[set[str]]]) -> None:
        self.groups = groups
        items = self.pool + self.held
        self.pool = [i for i in items if not (i[0] == "msg" and self._crosses(i[1], i[2]))]
        self.held = [i for i in items if i[0] == "msg" and self._crosses(i[1], i[2])]

    def offer(self, item: tuple) -> None:
        if item[0] == "msg" and self._crosses(item[1], item[2]):
            self.held.append(item)
        else:
            self.pool.append(item)

    def take(self) -> tuple:
        """Pick the next delivery uniformly among the eligible items.

        A claim-window expiry ("timer") is eligible only while no message
        is pending for its node: the tie-break window outlasts in-flight
        traffic, so competing claims always land before a node mines.
        Messages themselves are always eligible.
        """
        pending_dests = {i[2] for i in self.pool if i[0] == "msg"}
        eligible = [
            k
            for k, item in enumerate(self.pool)
            if item[0] == "msg" or item[1] not in pending_dests
        ]
        return self.pool.pop(eligible[self.rng.randrange(len(eligible))])


def run_simulation(
    scenario: Scenario, seed: int, message_budget: int = DEFAULT_MESSAGE_BUDGET
) -> SimReport:
    rng = random.Random(seed)
    registry_config = RegistryConfig(**scenario.config) if scenario.config else RegistryConfig()
    nodes: dict[str, NodeCore] = {}
    for node_id in scenario.nodes:
        peers = [n for n in scenario.nodes if n != node_id]
        node = NodeCore(node_id, peers, store=MemoryStore(), registry_config=registry_config)
        node.registry.set_records(scenario.records)
        nodes[node_id] = node

    # Fundraiser and scenario accounts exist identically on every node.
    for node in nodes.values():
        for fid in scenario.nodes:
            node.register_account(
                "Fundraiser",
                {
                    "account_id": fid,
                    "name": f"Fundraiser {fid}",
                    "email": f"{fid.lower()}@fundraisers.example",
                    "business_identification_number": f"BIZ-{fid}",
                },
            )
        for acc in scenario.accounts:
            details = dict(acc)
            role = details.pop("role")
            if role == "Sponsor":
                details.setdefault("financial_info", "declared in scenario")
            details.setdefault("email", f"{details['account_id'].lower()}@accounts.example")
            details.setdefault("name", details["account_id"])
            node.register_account(role, details)
        node.take_actions()  # registry setup sends nothing

    network = _Network(rng)
    counters = {"msg": 0, "timer": 0}
    skipped: list[dict] = []

    def collect(node: NodeCore) -> None:
        for action in node.take_actions():
            if action[0] == "timer":
                network.offer(("timer", node.node_id, action[1]))
            else:
                _, peer, message = action
                network.offer(("msg", node.node_id, peer, message))

    def drain() -> None:
        while network.pool:
            if counters["msg"] + counters["timer"] >= message_budget:
                raise NonQuiescent(
                    f"budget of {message_budget} deliveries exhausted with "
                    f"{len(network.pool)} still pending"
                )
            item = network.take()
            if item[0] == "timer":
                _, node_id, student_id = item
                counters["timer"] += 1
                nodes[node_id].window_expired(student_id)
                collect(nodes[node_id])
            else:
                _, _src, dst, message = item
                counters["msg"] += 1
                nodes[dst].handle_message(message)
                collect(nodes[dst])

    def run_event(index: int, event: dict) -> None:
        etype = event["type"]
        try:
            if etype == "deposit":
                targets = [event["node"]] if "node" in event else scenario.nodes
                for node_id in targets:
                    nodes[node_id].deposit(event["sponsor_id"], event["amount_cents"])
                    collect(nodes[node_id])
            elif etype == "submit_application":
                application = {
                    k: event[k]
                    for k in (
                        "program_name",
                        "institute_name",
                        "high_school_score",
                        "family_income_cents",
                        "target_amount_cents",
                        "program_duration_months",
                    )
                }
                for node in nodes.values():
                    node.submit_application(event["student_id"], application)
                    collect(node)
            elif etype == "verify":
                node = nodes[event.get("node", scenario.nodes[0])]
                app = node.registry.application_for_student(event["student_id"])
                if app is None or app.status != "Pending":
                    raise RegistryError(f"no pending application for {event['student_id']!r}")
                node.verify_application(app.application_id)
                collect(node)
            elif etype == "pledge":
                node = nodes[event["fundraiser_id"]]
                node.place_pledge(
                    event["sponsor_id"],
                    event["student_id"],
                    event["fundraiser_id"],
                    event["amount_cents"],
                )
                collect(node)
            elif etype == "inject_concurrent_claims":
                for p in event["pledges"]:
                    node = nodes[p["fundraiser_id"]]
                    try:
                        node.place_pledge(
                            p["sponsor_id"],
                            event["student_id"],
                            p["fundraiser_id"],
                            p["amount_cents"],
                        )
                    except (FundingError, RegistryError) as exc:
                        skipped.append(
                            {"event": index, "reason": f"{type(exc).__name__}: {exc}"}
                        )
                    collect(node)
            elif etype == "partition_hint":
                groups = [set(g) for g in event["groups"] if g]
                grouped = set().union(*groups) if groups else set()
                rest = [n for n in scenario.nodes if n not in grouped]
                if rest and groups:
                    groups.append(set(rest))
                network.set_partition(groups if len(groups) > 1 else None)
        except (FundingError, RegistryError) as exc:
            skipped.append({"event": index, "reason": f"{type(exc).__name__}: {exc}"})

    for index, event in enumerate(scenario.events):
        run_event(index, event)
        drain()
    network.set_partition(None)
    drain()

    ledgers = {node_id: chain_to_bytes(node.chain) for node_id, node in nodes.items()}
    ledger_values = list(ledgers.values())
    converged = all(data == ledger_values[0] for data in ledger_values)

    safety_problems: list[str] = []
    conservation_problems: list[str] = []
    for node_id, node in nodes.items():
        report = node.verify_json()
        if not report["valid"]:
            safety_problems.append(f"{node_id}: chain invalid: {report['reason']}")
        students_with_blocks: set[str] = set()
        for block in node.chain.contract_blocks():
            sid = block.payload["terms"]["student_id"]
            if sid in students_with_blocks:
                safety_problems.append(f"{node_id}: student {sid} funded twice")
            students_with_blocks.add(sid)
        for student_id, record in node.engine.students.items():
            if record.state == STATE_FROZEN:
                safety_problems.append(f"{node_id}: student {student_id} still frozen")
        for problem in node.engine.conservation_violations():
            conservation_problems.append(f"{node_id}: {problem}")

    first = nodes[scenario.nodes[0]]
    funded = sorted(b.payload["terms"]["student_id"] for b in first.chain.contract_blocks())

    return SimReport(
        node_ids=list(scenario.nodes),
        ledgers=ledgers,
        converged=converged,
        safety_ok=not safety_problems,
        conservation_ok=not conservation_problems,
        message_count=counters["msg"],
        timer_count=counters["timer"],
        funded_students=funded,
        safety_problems=safety_problems,
        conservation_problems=conservation_problems,
        skipped_events=skipped,
        nodes=nodes,
    )


def write_outputs(report: SimReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for node_id, data in report.ledgers.items():
        (out / f"ledger.{node_id}.jsonl").write_bytes(data)
    (out / "report.json").write_bytes(report.to_json_bytes())
