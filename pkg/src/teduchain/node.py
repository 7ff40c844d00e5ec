"""One fundraiser node: command stream, mining, persistence, documents.

:class:`NodeCore` is the deterministic heart shared by the live service and
the simulator. Every mutation — API calls, peer messages, claim-window
expiries — is a command applied to the core one at a time; commands queue
up side effects (messages to send, timers to arm) that the embedding
driver executes. The core itself never touches sockets or clocks, which is
what makes whole multi-node runs replayable from a seed.

Mining here is the funding race: when a pledge completes a student's
target through this fundraiser, the node freezes the student, broadcasts a
win claim, and after a tie-break window settles the pledges into contract
terms, renders the contract document, hashes it into a new block, and
announces the block to its peers.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .canonical import EncodingError, canonical_json_bytes
from .consensus import (
    MSG_BLOCK_ANNOUNCE,
    MSG_CHAIN_REQUEST,
    MSG_CHAIN_RESPONSE,
    MSG_STUDENT_ACTIVATED,
    MSG_WIN_CLAIM,
    InvalidRemote,
    Message,
    WinClaim,
    fan_out,
    fork_choice,
    resolve_win_conflict,
)
from .funding import (
    AlreadyWon,
    FundingEngine,
    NotComplete,
    STATE_ACTIVE,
    STATE_WON,
    UnknownSponsor,
    UnknownStudent,
)
from .ledger import (
    Block,
    Chain,
    ContactInfo,
    ContractTerms,
    KIND_CONTRACT,
    LedgerError,
    append_contract_block,
    chain_to_bytes,
    compute_block_hash,
    effective_contract,
    hash_document,
    make_amendment_block,
    parse_ledger_bytes,
    verify_chain,
)
from .registry import Registry, RegistryConfig

log = logging.getLogger(__name__)


class NodeError(Exception):
    pass


class WrongFundraiser(NodeError):
    """Pledge routed to a node that does not act for that fundraiser."""


class CorruptLedger(Exception):
    def __init__(self, first_bad_index: Optional[int], reason: str):
        super().__init__(f"ledger invalid at index {first_bad_index}: {reason}")
        self.first_bad_index = first_bad_index
        self.reason = reason


@dataclass(frozen=True)
class PeerAddress:
    node_id: str
    host: str
    port: int


@dataclass
class NodeConfig:
    node_id: str
    data_dir: str
    api_host: str = "127.0.0.1"
    api_port: int = 8150
    peer_host: str = "127.0.0.1"
    peer_port: int = 9150
    peers: list[PeerAddress] = field(default_factory=list)
    outbox_dir: str = ""
    records_csv: str = ""
    min_score: int = 700
    max_income_cents: int = 5_000_000
    benefit_percent_bp: int = 500
    benefit_period_months: int = 24
    claim_window_ms: int = 250
    sweep_interval_ms: int = 1000

    def __post_init__(self):
        if not self.node_id:
            raise NodeError("node_id must be nonempty")
        peer_ids = [p.node_id for p in self.peers]
        if self.node_id in peer_ids or len(set(peer_ids)) != len(peer_ids):
            raise NodeError("node_id must be unique among peers")
        if not self.outbox_dir:
            self.outbox_dir = str(Path(self.data_dir) / "outbox")


def load_config(path) -> NodeConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    peers = [PeerAddress(p["node_id"], p["host"], int(p["port"])) for p in raw.get("peers", [])]
    known = {f.name for f in NodeConfig.__dataclass_fields__.values()}
    unknown = set(raw) - known
    if unknown:
        raise NodeError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {k: v for k, v in raw.items() if k in known and k != "peers"}
    if "node_id" not in kwargs or "data_dir" not in kwargs:
        raise NodeError("config requires node_id and data_dir")
    return NodeConfig(peers=peers, **kwargs)


# --------------------------------------------------------------------------
# Contract documents and chain persistence


def render_contract_document(terms: ContractTerms, contacts: list[ContactInfo]) -> bytes:
    """The legal-style document emailed to the parties, as canonical JSON.

    Rendering depends only on the terms and contacts stored in the block,
    so every replica regenerates byte-identical documents whose SHA-256
    matches the block's stored document hash.
    """
    obj = {
        "document_kind": "TEDUCHAIN-CONTRACT",
        "terms": terms.to_json(),
        "parties": [c.to_json() for c in contacts],
        "benefit_clause": (
            f"The investors are jointly owed {terms.benefit_percent_bp} basis points "
            f"of {terms.student_id}'s post-graduation income, split pro rata by "
            f"contribution, for {terms.benefit_period_months} months."
        ),
    }
    return canonical_json_bytes(obj) + b"\n"


def persist_chain(chain: Chain, path) -> None:
    data = chain_to_bytes(chain)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_chain(path) -> Chain:
    data = Path(path).read_bytes()
    chain, bad_index, reason = parse_ledger_bytes(data)
    if chain is None:
        raise CorruptLedger(bad_index, reason)
    report = verify_chain(chain)
    if not report.valid:
        raise CorruptLedger(report.first_bad_index, report.reason)
    return chain


# --------------------------------------------------------------------------
# Stores: where a node keeps its chain, pledge log, registry, and outbox


class MemoryStore:
    """In-memory store for simulated nodes; captures the log and outbox."""

    def __init__(self):
        self.events: list[dict] = []
        self.outbox: dict[str, bytes] = {}
        self.registry_bytes: bytes = b""

    def load_chain(self) -> Optional[Chain]:
        return None

    def load_events(self) -> list[dict]:
        return []

    def load_registry(self) -> Optional[Registry]:
        return None

    def append_event(self, event: dict) -> None:
        self.events.append(event)

    def append_block(self, block: Block) -> None:
        pass

    def rewrite_chain(self, chain: Chain) -> None:
        pass

    def save_registry(self, data: bytes) -> None:
        self.registry_bytes = data

    def write_outbox(self, name: str, data: bytes) -> None:
        self.outbox[name] = data


class DiskStore:
    """Append-only files under one data directory; safe against abrupt kills.

    Layout: ``ledger.jsonl`` (one block per line), ``pledges.jsonl`` (the
    funding event log), ``registry.json``, and ``outbox/`` for rendered
    contract documents. Appends open-write-close per record so a killed
    process never leaves buffered state behind.
    """

    def __init__(self, data_dir, outbox_dir=None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.ledger_path = self.data_dir / "ledger.jsonl"
        self.pledges_path = self.data_dir / "pledges.jsonl"
        self.registry_path = self.data_dir / "registry.json"
        self.outbox_dir = Path(outbox_dir) if outbox_dir else self.data_dir / "outbox"
        self.outbox_dir.mkdir(parents=True, exist_ok=True)

    def load_chain(self) -> Optional[Chain]:
        if not self.ledger_path.exists():
            return None
        return load_chain(self.ledger_path)

    def load_events(self) -> list[dict]:
        if not self.pledges_path.exists():
            return []
        events = []
        with open(self.pledges_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events

    def load_registry(self) -> Optional[Registry]:
        if not self.registry_path.exists():
            return None
        return Registry.load(self.registry_path)

    def append_event(self, event: dict) -> None:
        with open(self.pledges_path, "ab") as fh:
            fh.write(canonical_json_bytes(event) + b"\n")

    def append_block(self, block: Block) -> None:
        with open(self.ledger_path, "ab") as fh:
            fh.write(canonical_json_bytes(block.to_json_obj()) + b"\n")

    def rewrite_chain(self, chain: Chain) -> None:
        persist_chain(chain, self.ledger_path)

    def save_registry(self, data: bytes) -> None:
        tmp = self.registry_path.with_suffix(".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, self.registry_path)

    def write_outbox(self, name: str, data: bytes) -> None:
        (self.outbox_dir / name).write_bytes(data)


# --------------------------------------------------------------------------


class NodeCore:
    """Deterministic state machine for one fundraiser node.

    Commands mutate state and push actions — ``("send", peer, Message)``
    and ``("timer", student_id)`` — onto an internal list the driver drains
    with :meth:`take_actions` after each command.
    """

    def __init__(
        self,
        node_id: str,
        peer_ids: list[str],
        store=None,
        registry_config: Optional[RegistryConfig] = None,
        records_csv: str = "",
    ):
        self.node_id = node_id
        self.peer_ids = list(peer_ids)
        self.store = store if store is not None else MemoryStore()
        self.pending_actions: list[tuple] = []
        self.pending_claims: dict[str, WinClaim] = {}
        self.lamport = 0

        fundraisers = [node_id] + self.peer_ids
        loaded_chain = self.store.load_chain()
        self.chain = loaded_chain if loaded_chain is not None else Chain()
        if loaded_chain is None:
            self.store.rewrite_chain(self.chain)  # genesis line exists from boot
        loaded_registry = self.store.load_registry()
        self.registry = loaded_registry if loaded_registry is not None else Registry(
            registry_config or RegistryConfig()
        )
        events = self.store.load_events()
        if events:
            self.engine = FundingEngine.rebuild(events, fundraiser_ids=fundraisers)
            self.lamport = max((ev.get("at", 0) for ev in events), default=0)
        else:
            self.engine = FundingEngine(fundraiser_ids=fundraisers)
        self.engine.event_sink = self.store.append_event
        if records_csv:
            self.registry.load_records_csv(records_csv)
        if loaded_chain is not None:
            self._recover_from_disk()

    # -- plumbing ---------------------------------------------------------

    def _tick(self) -> int:
        self.lamport += 1
        return self.lamport

    def take_actions(self) -> list[tuple]:
        actions, self.pending_actions = self.pending_actions, []
        return actions

    def _broadcast(self, msg_type: str, body: dict) -> None:
        message = Message(type=msg_type, sender=self.node_id, lamport=self._tick(), body=body)
        self.pending_actions.extend(("send", peer, m) for peer, m in fan_out(message, self.peer_ids))

    def _send_to(self, peer: str, msg_type: str, body: dict) -> None:
        message = Message(type=msg_type, sender=self.node_id, lamport=self._tick(), body=body)
        self.pending_actions.append(("send", peer, message))

    def _save_registry(self) -> None:
        self.store.save_registry(self.registry.to_json_bytes())

    def _recover_from_disk(self):
        """After a restart: documents re-rendered, finished races re-claimed."""
        for block in self.chain.contract_blocks():
            self._write_contract_document(block)
        for student_id, record in self.engine.students.items():
            if record.state == STATE_ACTIVE:
                self._maybe_claim(student_id)

    # -- registry-side commands ----------------------------------------------

    def register_account(self, role: str, details: dict) -> dict:
        at = self._tick()
        account_id = self.registry.register_account(role, details)
        if role == "Sponsor":
            self.engine.create_wallet(account_id, at)
        self._save_registry()
        return self.registry.account(account_id).to_json()

    def submit_application(self, student_id: str, application: dict) -> dict:
        self._tick()
        app_id = self.registry.submit_application(student_id, application)
        self._save_registry()
        return self.registry.application(app_id).to_json()

    def verify_application(self, application_id: str) -> dict:
        at = self._tick()
        app = self.registry.verify_eligibility(application_id, at=at)
        self._save_registry()
        if app.status == "Eligible":
            self.engine.activate_student(
                app.student_id,
                app.target_amount_cents,
                app.program_name,
                app.institute_name,
                app.program_duration_months,
                at=at,
            )
            self._broadcast(
                MSG_STUDENT_ACTIVATED,
                {
                    "student_id": app.student_id,
                    "target_amount": app.target_amount_cents,
                    "program_name": app.program_name,
                    "institute_name": app.institute_name,
                    "program_duration_months": app.program_duration_months,
                    "activated_at": at,
                },
            )
        return app.to_json()

    # -- funding-side commands --------------------------------------------------

    def deposit(self, sponsor_id: str, amount: int) -> dict:
        at = self._tick()
        return self.engine.deposit(sponsor_id, amount, at=at).to_json()

    def place_pledge(self, sponsor_id: str, student_id: str, fundraiser_id: str, amount: int) -> dict:
        if fundraiser_id != self.node_id:
            raise WrongFundraiser(
                f"this node collects for {self.node_id!r}, not {fundraiser_id!r}"
            )
        at = self._tick()
        pledge = self.engine.place_pledge(sponsor_id, student_id, fundraiser_id, amount, at=at)
        self._maybe_claim(student_id)
        return pledge.to_json()

    def _maybe_claim(self, student_id: str) -> None:
        candidate = self.engine.check_completion(self.node_id, student_id, at=self.lamport)
        if candidate is None:
            return
        at = self._tick()
        claim = WinClaim(
            student_id=student_id,
            fundraiser_id=self.node_id,
            lamport_time=at,
            collected=candidate.collected,
        )
        self.engine.freeze_student(student_id, at=at)
        self._consider_claim(claim)
        self._broadcast(MSG_WIN_CLAIM, claim.to_body())
        self.pending_actions.append(("timer", student_id))

    def _consider_claim(self, claim: WinClaim) -> None:
        current = self.pending_claims.get(claim.student_id)
        best = claim if current is None else resolve_win_conflict(current, claim)
        self.pending_claims[claim.student_id] = best

    def window_expired(self, student_id: str) -> None:
        """Tie-break window over: mine if our claim still stands."""
        at = self._tick()
        claim = self.pending_claims.get(student_id)
        if claim is None or claim.fundraiser_id != self.node_id:
            return
        record = self.engine.students.get(student_id)
        if record is None or record.state == STATE_WON:
            return
        try:
            terms = self.engine.settle_win(
                student_id,
                self.node_id,
                self.registry.config.benefit_percent_bp,
                self.registry.config.benefit_period_months,
                at=at,
            )
        except (NotComplete, AlreadyWon) as exc:
            log.info("%s: not mining %s after window: %s", self.node_id, student_id, exc)
            return
        self._mine_contract(terms, at)

    def _mine_contract(self, terms: ContractTerms, at: int) -> None:
        contacts = [self.registry.contact_for(terms.student_id)]
        contacts += [self.registry.contact_for(s.sponsor_id) for s in terms.shares]
        document = render_contract_document(terms, contacts)
        block = append_contract_block(
            self.chain,
            terms,
            contacts,
            hash_document(document),
            self.node_id,
            timestamp_ms=at,
        )
        self._after_commit(block)
        self._broadcast(MSG_BLOCK_ANNOUNCE, {"block": block.to_json_obj()})

    def _after_commit(self, block: Block) -> None:
        self.store.append_block(block)
        if block.kind != KIND_CONTRACT:
            return
        terms = ContractTerms.from_json(block.payload["terms"])
        self.engine.record_block_committed(block.index, terms, at=self.lamport)
        self.registry.mark_won(terms.student_id)
        self._save_registry()
        self.pending_claims.pop(terms.student_id, None)
        self._write_contract_document(block)

    def _write_contract_document(self, block: Block) -> None:
        terms = ContractTerms.from_json(block.payload["terms"])
        contacts = [ContactInfo.from_json(c) for c in block.payload["contacts"]]
        document = render_contract_document(terms, contacts)
        self.store.write_outbox(f"{terms.student_id}.contract.json", document)

    # -- peer messages -------------------------------------------------------------

    def handle_message(self, message: Message) -> None:
        self.lamport = max(self.lamport, message.lamport) + 1
        if message.type == MSG_STUDENT_ACTIVATED:
            self._on_student_activated(message.body)
        elif message.type == MSG_WIN_CLAIM:
            self._on_win_claim(message.body)
        elif message.type == MSG_BLOCK_ANNOUNCE:
            self._on_block_announce(message.body, message.sender)
        elif message.type == MSG_CHAIN_REQUEST:
            self._send_to(
                message.sender,
                MSG_CHAIN_RESPONSE,
                {"blocks": [b.to_json_obj() for b in self.chain.blocks]},
            )
        elif message.type == MSG_CHAIN_RESPONSE:
            self._on_chain_response(message.body)
        else:
            log.warning("%s: dropping unknown message type %r", self.node_id, message.type)

    def _on_student_activated(self, body: dict) -> None:
        at = self.lamport
        self.registry.note_remote_activation(
            body["student_id"],
            body["target_amount"],
            body["program_name"],
            body["institute_name"],
            body["program_duration_months"],
            at=body["activated_at"],
        )
        self._save_registry()
        self.engine.activate_student(
            body["student_id"],
            body["target_amount"],
            body["program_name"],
            body["institute_name"],
            body["program_duration_months"],
            at=at,
        )

    def _on_win_claim(self, body: dict) -> None:
        try:
            claim = WinClaim.from_body(body)
        except (KeyError, TypeError) as exc:
            log.warning("%s: dropping malformed win claim: %s", self.node_id, exc)
            return
        record = self.engine.students.get(claim.student_id)
        if record is None:
            log.info("%s: claim for unknown student %s ignored", self.node_id, claim.student_id)
            return
        if record.state == STATE_WON:
            return
        if claim.collected != record.target_amount:
            log.warning(
                "%s: dropping claim with collected %s != target %s",
                self.node_id,
                claim.collected,
                record.target_amount,
            )
            return
        if record.state == STATE_ACTIVE:
            self.engine.freeze_student(claim.student_id, at=self.lamport)
        self._consider_claim(claim)

    def _on_block_announce(self, body: dict, sender: str) -> None:
        try:
            block = Block.from_json_obj(body["block"])
            if compute_block_hash(block) != block.hash:
                log.warning("%s: announced block hash does not recompute", self.node_id)
                return
        except (EncodingError, KeyError) as exc:
            log.warning("%s: dropping malformed block announce: %s", self.node_id, exc)
            return
        tip = self.chain.tip
        if block.prev_hash == tip.hash and block.index == tip.index + 1:
            candidate = Chain(blocks=self.chain.blocks + [block])
            report = verify_chain(candidate)
            if not report.valid:
                log.warning(
                    "%s: rejecting announced block %d: %s",
                    self.node_id,
                    block.index,
                    report.reason,
                )
                return
            self.chain.blocks.append(block)
            self._after_commit(block)
            return
        if block.index < len(self.chain.blocks) and self.chain.blocks[block.index].hash == block.hash:
            return  # duplicate delivery
        prev_index = self._index_of_hash(block.prev_hash)
        if prev_index is not None:
            candidate = Chain(blocks=self.chain.blocks[: prev_index + 1] + [block])
            self._consider_remote_chain(candidate)
            return
        self._send_to(sender, MSG_CHAIN_REQUEST, {})

    def _index_of_hash(self, digest: bytes) -> Optional[int]:
        for i, block in enumerate(self.chain.blocks):
            if block.hash == digest:
                return i
        return None

    def _on_chain_response(self, body: dict) -> None:
        try:
            blocks = [Block.from_json_obj(obj) for obj in body["blocks"]]
        except (EncodingError, KeyError) as exc:
            log.warning("%s: dropping malformed chain response: %s", self.node_id, exc)
            return
        self._consider_remote_chain(Chain(blocks=blocks))

    def _consider_remote_chain(self, remote: Chain) -> None:
        try:
            winner = fork_choice(self.chain, remote)
        except InvalidRemote as exc:
            log.warning("%s: discarding remote chain: %s", self.node_id, exc)
            return
        if winner is not self.chain:
            self._adopt_chain(winner)

    def _adopt_chain(self, new_chain: Chain) -> None:
        at = self._tick()
        outcomes = []
        for block in new_chain.contract_blocks():
            terms = block.payload["terms"]
            outcomes.append(
                {
                    "student_id": terms["student_id"],
                    "fundraiser_id": terms["fundraiser_id"],
                    "program_cost": terms["program_cost"],
                    "program_name": terms["program_name"],
                    "institute_name": terms["institute_name"],
                    "program_duration_months": terms["program_duration_months"],
                }
            )
        self.engine.record_chain_adopted(
            outcomes, tip_index=new_chain.tip.index, tip_hash_hex=new_chain.tip.hash.hex(), at=at
        )
        self.chain = new_chain
        self.store.rewrite_chain(self.chain)
        won = {o["student_id"] for o in outcomes}
        self.registry.sync_won_students(won)
        self._save_registry()
        for block in new_chain.contract_blocks():
            self._write_contract_document(block)
        for student_id in list(self.pending_claims):
            if student_id in won:
                del self.pending_claims[student_id]
        # Races thawed by the adoption pick right back up: re-freeze students
        # with surviving claims, re-arm our own windows, re-claim completions.
        for student_id, claim in self.pending_claims.items():
            record = self.engine.students.get(student_id)
            if record is not None and record.state == STATE_ACTIVE:
                self.engine.freeze_student(student_id, at=at)
            if claim.fundraiser_id == self.node_id:
                self.pending_actions.append(("timer", student_id))
        for student_id, record in self.engine.students.items():
            if record.state == STATE_ACTIVE:
                self._maybe_claim(student_id)

    # -- amendments -------------------------------------------------------------------

    def amend_contacts(self, original_index: int, updated_contacts: list) -> dict:
        at = self._tick()
        original = self.chain.block_at(original_index)
        block = make_amendment_block(
            self.chain, (original_index, original.hash), updated_contacts, self.node_id, at
        )
        self.store.append_block(block)
        self._broadcast(MSG_BLOCK_ANNOUNCE, {"block": block.to_json_obj()})
        return block.to_json_obj()

    # -- read-side snapshots ------------------------------------------------------------

    def wallet_json(self, sponsor_id: str) -> dict:
        wallet = self.engine.wallets.get(sponsor_id)
        if wallet is None:
            raise UnknownSponsor(f"no wallet for sponsor {sponsor_id!r}")
        return wallet.to_json()

    def active_students_json(self) -> list[dict]:
        entries = []
        for app in self.registry.active_list():
            record = self.engine.students.get(app.student_id)
            collected = dict(record.collected) if record else {}
            entries.append(
                {
                    "student_id": app.student_id,
                    "program_name": app.program_name,
                    "institute_name": app.institute_name,
                    "target_amount_cents": app.target_amount_cents,
                    "program_duration_months": app.program_duration_months,
                    "eligible_at": app.eligible_at,
                    "state": record.state if record else "Unknown",
                    "collected": collected,
                    "remaining_cents": (
                        app.target_amount_cents - collected.get(self.node_id, 0)
                    ),
                }
            )
        return entries

    def student_status_json(self, student_id: str) -> dict:
        app = self.registry.application_for_student(student_id)
        record = self.engine.students.get(student_id)
        if app is None and record is None:
            raise UnknownStudent(f"unknown student {student_id!r}")
        contract_index = self.chain.contract_index_for(student_id)
        return {
            "student_id": student_id,
            "application": app.to_json() if app else None,
            "funding": record.to_json() if record else None,
            "contract_index": contract_index,
            "contract_url": f"/contracts/{student_id}" if contract_index is not None else None,
        }

    def pledges_json(self, sponsor_id: Optional[str] = None) -> list[dict]:
        pledges = self.engine.pledges.values()
        return [p.to_json() for p in pledges if sponsor_id is None or p.sponsor_id == sponsor_id]

    def chain_json(self) -> list[dict]:
        return [b.to_json_obj() for b in self.chain.blocks]

    def verify_json(self) -> dict:
        return verify_chain(self.chain).to_json()

    def block_json(self, index: int) -> dict:
        return self.chain.block_at(index).to_json_obj()

    def contract_json(self, student_id: str) -> dict:
        return effective_contract(self.chain, student_id).to_json()

    def snapshot(self) -> dict:
        """Comparable full-node state (engine + chain tip + registry hash)."""
        return {
            "node_id": self.node_id,
            "engine": self.engine.snapshot(),
            "chain_length": len(self.chain),
            "tip_hash": self.chain.tip.hash.hex(),
            "won_students": sorted(
                b.payload["terms"]["student_id"] for b in self.chain.contract_blocks()
            ),
        }
