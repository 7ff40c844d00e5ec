"""Hash-chained contract ledger: blocks, canonical encoding, verification.

The chain holds three block kinds. A single genesis constant anchors every
replica; a contract block binds one student to their investors and the
winning fundraiser; an amendment block re-issues only the contact details
of an earlier contract while the financial terms stay byte-for-byte intact
in the original block.

Block hashes are SHA-256 over a fixed binary layout (see
:func:`canonical_encode`), never over the JSON transport form, so every
replica agrees on hashes bit-exactly.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional

from .canonical import (
    ZERO_HASH,
    EncodingError,
    canonical_json_bytes,
    hash_to_hex,
    hex_to_hash,
    require_uint64,
)

KIND_GENESIS = "genesis"
KIND_CONTRACT = "contract"
KIND_AMENDMENT = "amendment"
_KIND_TAGS = {KIND_GENESIS: 0, KIND_CONTRACT: 1, KIND_AMENDMENT: 2}

GENESIS_TAG = "TEDUCHAIN-GENESIS"
GENESIS_MINER = "GENESIS"

# Financial fields are sealed at contract time; amendments may never carry them.
TERM_FIELDS = frozenset(
    {
        "student_id",
        "program_name",
        "institute_name",
        "program_cost",
        "program_duration_months",
        "shares",
        "benefit_percent_bp",
        "benefit_period_months",
        "fundraiser_id",
    }
)
CONTACT_FIELDS = frozenset({"party_id", "address", "email", "phone"})


class LedgerError(Exception):
    """Base class for ledger construction errors."""


class DuplicateStudentContract(LedgerError):
    pass


class InvalidTerms(LedgerError):
    pass


class TermsImmutable(LedgerError):
    pass


class UnknownReference(LedgerError):
    pass


class UnknownParty(LedgerError):
    pass


class NotFound(LedgerError):
    pass


@dataclass(frozen=True)
class InvestorShare:
    """One investor's contribution, in integer cents."""

    sponsor_id: str
    amount: int

    def to_json(self) -> dict:
        return {"sponsor_id": self.sponsor_id, "amount": self.amount}

    @classmethod
    def from_json(cls, obj: dict) -> "InvestorShare":
        return cls(sponsor_id=_req_str(obj, "sponsor_id"), amount=_req_int(obj, "amount"))


@dataclass(frozen=True)
class ContractTerms:
    """The immutable financial binding between student, investors, fundraiser.

    ``program_cost`` and share amounts are integer cents; ``benefit_percent_bp``
    is basis points of post-graduation income owed to investors for
    ``benefit_period_months`` months.
    """

    student_id: str
    program_name: str
    institute_name: str
    program_cost: int
    program_duration_months: int
    shares: tuple[InvestorShare, ...]
    benefit_percent_bp: int
    benefit_period_months: int
    fundraiser_id: str

    def validate(self) -> None:
        for name in ("student_id", "fundraiser_id"):
            if not getattr(self, name):
                raise InvalidTerms(f"{name} must be nonempty")
        if not self.shares:
            raise InvalidTerms("contract must carry at least one investor share")
        for share in self.shares:
            if not share.sponsor_id:
                raise InvalidTerms("share sponsor_id must be nonempty")
            if share.amount <= 0:
                raise InvalidTerms(f"share amount must be positive, got {share.amount}")
        total = sum(share.amount for share in self.shares)
        if total != self.program_cost:
            raise InvalidTerms(
                f"share sum {total} does not equal program cost {self.program_cost}"
            )
        if self.program_duration_months <= 0:
            raise InvalidTerms("program_duration_months must be positive")
        if self.benefit_period_months <= 0:
            raise InvalidTerms("benefit_period_months must be positive")

    def parties(self) -> set[str]:
        ids = {self.student_id, self.fundraiser_id}
        ids.update(share.sponsor_id for share in self.shares)
        return ids

    def to_json(self) -> dict:
        return {
            "student_id": self.student_id,
            "program_name": self.program_name,
            "institute_name": self.institute_name,
            "program_cost": self.program_cost,
            "program_duration_months": self.program_duration_months,
            "shares": [share.to_json() for share in self.shares],
            "benefit_percent_bp": self.benefit_percent_bp,
            "benefit_period_months": self.benefit_period_months,
            "fundraiser_id": self.fundraiser_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ContractTerms":
        if not isinstance(obj, dict) or set(obj) != set(cls.__dataclass_fields__):
            raise EncodingError("malformed contract terms object")
        shares = obj["shares"]
        if not isinstance(shares, list):
            raise EncodingError("terms shares must be a list")
        return cls(
            student_id=_req_str(obj, "student_id"),
            program_name=_req_str(obj, "program_name"),
            institute_name=_req_str(obj, "institute_name"),
            program_cost=_req_int(obj, "program_cost"),
            program_duration_months=_req_int(obj, "program_duration_months"),
            shares=tuple(InvestorShare.from_json(s) for s in shares),
            benefit_percent_bp=_req_int(obj, "benefit_percent_bp"),
            benefit_period_months=_req_int(obj, "benefit_period_months"),
            fundraiser_id=_req_str(obj, "fundraiser_id"),
        )


@dataclass(frozen=True)
class ContactInfo:
    """Reachable details for one contract party; the only amendable data."""

    party_id: str
    address: str = ""
    email: str = ""
    phone: str = ""

    def to_json(self) -> dict:
        return {
            "party_id": self.party_id,
            "address": self.address,
            "email": self.email,
            "phone": self.phone,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ContactInfo":
        if not isinstance(obj, dict) or set(obj) != CONTACT_FIELDS:
            raise EncodingError("malformed contact object")
        contact = cls(
            party_id=_req_str(obj, "party_id"),
            address=_req_str(obj, "address", allow_empty=True),
            email=_req_str(obj, "email", allow_empty=True),
            phone=_req_str(obj, "phone", allow_empty=True),
        )
        return contact


@dataclass(frozen=True)
class Block:
    """One ledger entry. ``hash`` is None until the block is sealed."""

    index: int
    timestamp_ms: int
    kind: str
    prev_hash: bytes
    miner_id: str
    payload: Any
    document_hash: bytes
    amends: Optional[tuple[int, bytes]] = None
    hash: Optional[bytes] = None

    def to_json_obj(self) -> dict:
        """Ledger-file form: hashes as lowercase hex, one object per line."""
        if self.hash is None:
            raise EncodingError("cannot serialize an unsealed block")
        obj = {
            "index": self.index,
            "timestamp_ms": self.timestamp_ms,
            "kind": self.kind,
            "prev_hash": hash_to_hex(self.prev_hash),
            "miner_id": self.miner_id,
            "payload": self.payload,
            "document_hash": hash_to_hex(self.document_hash),
            "hash": hash_to_hex(self.hash),
        }
        if self.amends is not None:
            obj["amends"] = {"index": self.amends[0], "hash": hash_to_hex(self.amends[1])}
        return obj

    @classmethod
    def from_json_obj(cls, obj: Any) -> "Block":
        if not isinstance(obj, dict):
            raise EncodingError("block must be a JSON object")
        required = {
            "index",
            "timestamp_ms",
            "kind",
            "prev_hash",
            "miner_id",
            "payload",
            "document_hash",
            "hash",
        }
        keys = set(obj)
        if not required <= keys or keys - required - {"amends"}:
            raise EncodingError(f"unexpected block keys {sorted(keys ^ required)}")
        amends = None
        if "amends" in obj:
            ref = obj["amends"]
            if not isinstance(ref, dict) or set(ref) != {"index", "hash"}:
                raise EncodingError("malformed amends reference")
            amends = (_req_int(ref, "index"), hex_to_hash(_req_str(ref, "hash")))
        kind = _req_str(obj, "kind")
        if kind not in _KIND_TAGS:
            raise EncodingError(f"unknown block kind {kind!r}")
        return cls(
            index=_req_int(obj, "index"),
            timestamp_ms=_req_int(obj, "timestamp_ms"),
            kind=kind,
            prev_hash=hex_to_hash(_req_str(obj, "prev_hash")),
            miner_id=_req_str(obj, "miner_id"),
            payload=obj["payload"],
            document_hash=hex_to_hash(_req_str(obj, "document_hash")),
            amends=amends,
            hash=hex_to_hash(_req_str(obj, "hash")),
        )


def _req_str(obj: dict, key: str, allow_empty: bool = False) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or (not allow_empty and not value):
        raise EncodingError(f"field {key!r} must be a nonempty string")
    return value


def _req_int(obj: dict, key: str) -> int:
    value = obj.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise EncodingError(f"field {key!r} must be an integer")
    return value


def canonical_encode(block: Block) -> bytes:
    """Bit-exact byte layout hashed by every replica; ignores ``block.hash``.

    Layout, concatenated: index and timestamp_ms as 8-byte big-endian
    unsigned; kind as 1 byte (0 genesis / 1 contract / 2 amendment);
    prev_hash raw; miner_id and canonical-JSON payload each 4-byte
    big-endian length prefixed; document_hash raw; amends as 8-byte index
    plus 32-byte hash, or 40 zero bytes when absent.
    """
    index = require_uint64(block.index, "index")
    timestamp = require_uint64(block.timestamp_ms, "timestamp_ms")
    if block.kind not in _KIND_TAGS:
        raise EncodingError(f"unknown block kind {block.kind!r}")
    if len(block.prev_hash) != 32 or len(block.document_hash) != 32:
        raise EncodingError("prev_hash and document_hash must be 32 raw bytes")
    if not isinstance(block.miner_id, str):
        raise EncodingError("miner_id must be a string")
    miner = block.miner_id.encode("utf-8")
    payload = canonical_json_bytes(block.payload)
    parts = [
        struct.pack(">Q", index),
        struct.pack(">Q", timestamp),
        bytes([_KIND_TAGS[block.kind]]),
        bytes(block.prev_hash),
        struct.pack(">I", len(miner)),
        miner,
        struct.pack(">I", len(payload)),
        payload,
        bytes(block.document_hash),
    ]
    if block.amends is None:
        parts.append(b"\x00" * 40)
    else:
        ref_index, ref_hash = block.amends
        require_uint64(ref_index, "amends.index")
        if len(ref_hash) != 32:
            raise EncodingError("amends hash must be 32 raw bytes")
        parts.append(struct.pack(">Q", ref_index))
        parts.append(bytes(ref_hash))
    return b"".join(parts)


def compute_block_hash(block: Block) -> bytes:
    return hashlib.sha256(canonical_encode(block)).digest()


def seal(block: Block) -> Block:
    """Return the block with its hash filled in from the canonical encoding."""
    return replace(block, hash=compute_block_hash(block))


def hash_document(document_bytes: bytes) -> bytes:
    """SHA-256 of the exact document bytes stored alongside a contract."""
    return hashlib.sha256(bytes(document_bytes)).digest()


def make_genesis() -> Block:
    """The fixed block 0 every replica starts from."""
    return seal(
        Block(
            index=0,
            timestamp_ms=0,
            kind=KIND_GENESIS,
            prev_hash=ZERO_HASH,
            miner_id=GENESIS_MINER,
            payload=GENESIS_TAG,
            document_hash=ZERO_HASH,
            amends=None,
        )
    )


GENESIS = make_genesis()


@dataclass
class Chain:
    """Ordered block list starting at the genesis constant."""

    blocks: list[Block] = field(default_factory=lambda: [GENESIS])

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def __len__(self) -> int:
        return len(self.blocks)

    def block_at(self, index: int) -> Block:
        if not 0 <= index < len(self.blocks):
            raise NotFound(f"no block at index {index}")
        return self.blocks[index]

    def contract_index_for(self, student_id: str) -> Optional[int]:
        for block in self.blocks:
            if block.kind == KIND_CONTRACT and block.payload["terms"]["student_id"] == student_id:
                return block.index
        return None

    def contract_blocks(self) -> list[Block]:
        return [b for b in self.blocks if b.kind == KIND_CONTRACT]

    def copy(self) -> "Chain":
        return Chain(blocks=list(self.blocks))


@dataclass(frozen=True)
class VerificationReport:
    valid: bool
    first_bad_index: Optional[int] = None
    reason: str = "ok"

    def to_json(self) -> dict:
        obj: dict[str, Any] = {"valid": self.valid, "reason": self.reason}
        if self.first_bad_index is not None:
            obj["first_bad_index"] = self.first_bad_index
        return obj


@dataclass(frozen=True)
class ContractView:
    """A contract resolved to its current contact state; terms never change."""

    terms: ContractTerms
    contacts: tuple[ContactInfo, ...]
    contract_index: int
    contract_hash: bytes
    document_hash: bytes
    amendment_indices: tuple[int, ...]

    def to_json(self) -> dict:
        return {
            "student_id": self.terms.student_id,
            "terms": self.terms.to_json(),
            "contacts": [c.to_json() for c in self.contacts],
            "contract_index": self.contract_index,
            "contract_hash": hash_to_hex(self.contract_hash),
            "document_hash": hash_to_hex(self.document_hash),
            "amendment_indices": list(self.amendment_indices),
        }


def contract_payload(terms: ContractTerms, contacts: Iterable[ContactInfo]) -> dict:
    return {
        "terms": terms.to_json(),
        "contacts": [c.to_json() for c in contacts],
    }


def append_contract_block(
    chain: Chain,
    terms: ContractTerms,
    contacts: Iterable[ContactInfo],
    document_hash: bytes,
    miner_id: str,
    timestamp_ms: int,
) -> Block:
    """Seal the winning race into a new tip block."""
    terms.validate()
    if chain.contract_index_for(terms.student_id) is not None:
        raise DuplicateStudentContract(
            f"student {terms.student_id!r} already has a contract block"
        )
    tip = chain.tip
    block = seal(
        Block(
            index=tip.index + 1,
            timestamp_ms=timestamp_ms,
            kind=KIND_CONTRACT,
            prev_hash=tip.hash,
            miner_id=miner_id,
            payload=contract_payload(terms, contacts),
            document_hash=document_hash,
            amends=None,
        )
    )
    chain.blocks.append(block)
    return block


def _resolve_root_contract(chain: Chain, index: int) -> Block:
    """Follow amendment references down to the original contract block."""
    block = chain.blocks[index]
    seen = 0
    while block.kind == KIND_AMENDMENT:
        ref_index, ref_hash = block.amends
        if ref_index >= block.index:
            raise UnknownReference("amendment must reference an earlier block")
        target = chain.blocks[ref_index]
        if target.hash != ref_hash or target.kind not in (KIND_CONTRACT, KIND_AMENDMENT):
            raise UnknownReference("amendment reference does not resolve")
        block = target
        seen += 1
        if seen > len(chain.blocks):
            raise UnknownReference("amendment reference cycle")
    return block


def make_amendment_block(
    chain: Chain,
    original_ref: tuple[int, bytes],
    updated_contacts: Iterable[Any],
    miner_id: str,
    timestamp_ms: int,
) -> Block:
    """Append a contact-only re-issue of an earlier contract.

    ``updated_contacts`` entries may be :class:`ContactInfo` or plain dicts
    (as received over the API); a dict carrying any sealed financial field
    is refused with :class:`TermsImmutable` rather than silently dropped.
    """
    ref_index, ref_hash = original_ref
    if not 0 <= ref_index < len(chain.blocks):
        raise UnknownReference(f"no block at index {ref_index}")
    target = chain.blocks[ref_index]
    if target.hash != ref_hash:
        raise UnknownReference("reference hash does not match the block at that index")
    if target.kind not in (KIND_CONTRACT, KIND_AMENDMENT):
        raise UnknownReference("amendments may only reference contract or amendment blocks")
    root = _resolve_root_contract(chain, ref_index)
    parties = ContractTerms.from_json(root.payload["terms"]).parties()

    contacts: list[ContactInfo] = []
    for entry in updated_contacts:
        if isinstance(entry, ContactInfo):
            contact = entry
        elif isinstance(entry, dict):
            sealed = set(entry) & TERM_FIELDS
            if sealed:
                raise TermsImmutable(
                    f"contract terms are immutable; cannot amend {sorted(sealed)}"
                )
            extra = set(entry) - CONTACT_FIELDS
            if extra:
                raise TermsImmutable(f"amendments carry contact fields only, not {sorted(extra)}")
            contact = ContactInfo(
                party_id=str(entry.get("party_id", "")),
                address=str(entry.get("address", "")),
                email=str(entry.get("email", "")),
                phone=str(entry.get("phone", "")),
            )
        else:
            raise EncodingError(f"cannot amend with {type(entry).__name__}")
        if not contact.party_id:
            raise UnknownParty("contact party_id must be nonempty")
        if contact.party_id not in parties:
            raise UnknownParty(f"{contact.party_id!r} is not a party to the contract")
        contacts.append(contact)

    tip = chain.tip
    block = seal(
        Block(
            index=tip.index + 1,
            timestamp_ms=timestamp_ms,
            kind=KIND_AMENDMENT,
            prev_hash=tip.hash,
            miner_id=miner_id,
            payload={"contacts": [c.to_json() for c in contacts]},
            document_hash=ZERO_HASH,
            amends=(ref_index, ref_hash),
        )
    )
    chain.blocks.append(block)
    return block


def _check_block_payload(chain_prefix: list[Block], block: Block, students_seen: set[str]) -> Optional[str]:
    """Structural checks beyond hashing; returns a failure reason or None."""
    if block.kind == KIND_CONTRACT:
        payload = block.payload
        if not isinstance(payload, dict) or set(payload) != {"terms", "contacts"}:
            return "malformed contract payload"
        try:
            terms = ContractTerms.from_json(payload["terms"])
            terms.validate()
            if not isinstance(payload["contacts"], list):
                raise EncodingError("contacts must be a list")
            for entry in payload["contacts"]:
                ContactInfo.from_json(entry)
        except (EncodingError, InvalidTerms) as exc:
            return f"invalid terms: {exc}"
        if terms.student_id in students_seen:
            return f"duplicate contract for student {terms.student_id!r}"
        students_seen.add(terms.student_id)
        if block.amends is not None:
            return "contract blocks must not carry an amends reference"
    elif block.kind == KIND_AMENDMENT:
        payload = block.payload
        if not isinstance(payload, dict) or set(payload) != {"contacts"}:
            return "amendment payload must carry contacts only"
        if block.amends is None:
            return "amendment block missing its reference"
        ref_index, ref_hash = block.amends
        if not 0 <= ref_index < block.index:
            return "amendment must reference an earlier block"
        target = chain_prefix[ref_index]
        if target.hash != ref_hash:
            return "amendment reference hash mismatch"
        if target.kind not in (KIND_CONTRACT, KIND_AMENDMENT):
            return "amendment references a non-contract block"
        try:
            probe = Chain(blocks=chain_prefix[: block.index + 1])
            root = _resolve_root_contract(probe, ref_index)
            parties = ContractTerms.from_json(root.payload["terms"]).parties()
            if not isinstance(payload["contacts"], list):
                raise EncodingError("contacts must be a list")
            for entry in payload["contacts"]:
                contact = ContactInfo.from_json(entry)
                if contact.party_id not in parties:
                    return f"amended party {contact.party_id!r} unknown to the contract"
        except (EncodingError, UnknownReference) as exc:
            return f"bad amendment: {exc}"
    elif block.kind == KIND_GENESIS:
        return "genesis kind outside index 0"
    return None


def verify_chain(chain: Chain) -> VerificationReport:
    """Recompute every hash and link over an untrusted chain.

    Failures are reported, never raised; ``first_bad_index`` is the smallest
    index at which the chain stops being trustworthy.
    """
    if not chain.blocks:
        return VerificationReport(False, 0, "empty chain")
    if chain.blocks[0] != GENESIS:
        return VerificationReport(False, 0, "genesis block does not match the constant")
    students_seen: set[str] = set()
    for i, block in enumerate(chain.blocks):
        if i == 0:
            continue
        if block.index != i:
            return VerificationReport(False, i, f"index {block.index} at position {i}")
        if block.prev_hash != chain.blocks[i - 1].hash:
            return VerificationReport(False, i, "prev_hash does not link to the previous block")
        try:
            recomputed = compute_block_hash(block)
        except EncodingError as exc:
            return VerificationReport(False, i, f"unencodable block: {exc}")
        if block.hash != recomputed:
            return VerificationReport(False, i, "stored hash does not match recomputed hash")
        reason = _check_block_payload(chain.blocks, block, students_seen)
        if reason is not None:
            return VerificationReport(False, i, reason)
    return VerificationReport(True)


def effective_contract(chain: Chain, student_id: str) -> ContractView:
    """Original terms plus the most recent contact info per party, in chain order."""
    contract_index = chain.contract_index_for(student_id)
    if contract_index is None:
        raise NotFound(f"no contract block for student {student_id!r}")
    contract = chain.blocks[contract_index]
    terms = ContractTerms.from_json(contract.payload["terms"])
    contacts: dict[str, ContactInfo] = {}
    for entry in contract.payload["contacts"]:
        contact = ContactInfo.from_json(entry)
        contacts[contact.party_id] = contact
    amendment_indices: list[int] = []
    for block in chain.blocks[contract_index + 1 :]:
        if block.kind != KIND_AMENDMENT:
            continue
        root = _resolve_root_contract(chain, block.index)
        if root.index != contract_index:
            continue
        amendment_indices.append(block.index)
        for entry in block.payload["contacts"]:
            contact = ContactInfo.from_json(entry)
            contacts[contact.party_id] = contact
    return ContractView(
        terms=terms,
        contacts=tuple(contacts.values()),
        contract_index=contract_index,
        contract_hash=contract.hash,
        document_hash=contract.document_hash,
        amendment_indices=tuple(amendment_indices),
    )


def chain_to_bytes(chain: Chain) -> bytes:
    """Ledger file form: one canonical JSON object per line, trailing newline."""
    lines = [canonical_json_bytes(block.to_json_obj()) for block in chain.blocks]
    return b"\n".join(lines) + b"\n"


def parse_ledger_bytes(data: bytes) -> tuple[Optional[Chain], Optional[int], str]:
    """Parse ledger-file bytes; returns (chain, first_bad_index, reason).

    A line that fails to parse or decode marks the chain invalid at that
    line's position, matching how verification indexes blocks.
    """
    import json as _json

    blocks: list[Block] = []
    text_lines = data.split(b"\n")
    if text_lines and text_lines[-1] == b"":
        text_lines.pop()
    if not text_lines:
        return None, 0, "empty ledger file"
    for i, raw in enumerate(text_lines):
        try:
            obj = _json.loads(raw.decode("utf-8"))
            blocks.append(Block.from_json_obj(obj))
        except (ValueError, EncodingError) as exc:
            return None, i, f"unparseable ledger line: {exc}"
    return Chain(blocks=blocks), None, "ok"


def verify_ledger_bytes(data: bytes) -> VerificationReport:
    """Verify a ledger file end to end, treating parse failures as tampering."""
    chain, bad_index, reason = parse_ledger_bytes(data)
    if chain is None:
        return VerificationReport(False, bad_index, reason)
    return verify_chain(chain)
