"""Inter-fundraiser protocol pieces: claims, messages, fork choice.

Consensus here is the funding race itself: the fundraiser that first
collects a student's full target wins the right to mine that student's
block. "First" is decided identically on every node by Lamport time with
the fundraiser id as the tie-breaker, never by wall clocks. Concurrent
claims can still fork the chain briefly; the deterministic fork-choice
rule (longer chain, then smaller tip hash) reconverges every replica.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

from .canonical import canonical_json_bytes
from .ledger import Chain, verify_chain

MSG_STUDENT_ACTIVATED = "STUDENT_ACTIVATED"
MSG_WIN_CLAIM = "WIN_CLAIM"
MSG_BLOCK_ANNOUNCE = "BLOCK_ANNOUNCE"
MSG_CHAIN_REQUEST = "CHAIN_REQUEST"
MSG_CHAIN_RESPONSE = "CHAIN_RESPONSE"

MESSAGE_TYPES = (
    MSG_STUDENT_ACTIVATED,
    MSG_WIN_CLAIM,
    MSG_BLOCK_ANNOUNCE,
    MSG_CHAIN_REQUEST,
    MSG_CHAIN_RESPONSE,
)

MAX_FRAME_BYTES = 16 * 1024 * 1024


class DecodeError(ValueError):
    pass


class MismatchedStudent(ValueError):
    pass


class InvalidRemote(ValueError):
    pass


@dataclass(frozen=True)
class WinClaim:
    """A fundraiser's assertion of full collection; also the stop signal."""

    student_id: str
    fundraiser_id: str
    lamport_time: int
    collected: int

    def sort_key(self) -> tuple:
        return (self.lamport_time, self.fundraiser_id)

    def to_body(self) -> dict:
        return {
            "student_id": self.student_id,
            "fundraiser_id": self.fundraiser_id,
            "lamport_time": self.lamport_time,
            "collected": self.collected,
        }

    @classmethod
    def from_body(cls, body: dict) -> "WinClaim":
        return cls(
            student_id=body["student_id"],
            fundraiser_id=body["fundraiser_id"],
            lamport_time=body["lamport_time"],
            collected=body["collected"],
        )


@dataclass(frozen=True)
class Message:
    type: str
    sender: str
    lamport: int
    body: dict

    def to_json(self) -> dict:
        return {
            "type": self.type,
            "sender": self.sender,
            "lamport": self.lamport,
            "body": self.body,
        }


# Minimal structural schema per message type: field -> required type.
_BODY_SCHEMAS: dict[str, dict[str, type]] = {
    MSG_STUDENT_ACTIVATED: {
        "student_id": str,
        "target_amount": int,
        "program_name": str,
        "institute_name": str,
        "program_duration_months": int,
        "activated_at": int,
    },
    MSG_WIN_CLAIM: {
        "student_id": str,
        "fundraiser_id": str,
        "lamport_time": int,
        "collected": int,
    },
    MSG_BLOCK_ANNOUNCE: {"block": dict},
    MSG_CHAIN_REQUEST: {},
    MSG_CHAIN_RESPONSE: {"blocks": list},
}


def validate_body(msg_type: str, body) -> None:
    schema = _BODY_SCHEMAS.get(msg_type)
    if schema is None:
        raise DecodeError(f"unknown message type {msg_type!r}")
    if not isinstance(body, dict):
        raise DecodeError("message body must be an object")
    if set(body) != set(schema):
        raise DecodeError(
            f"{msg_type} body keys {sorted(body)} != expected {sorted(schema)}"
        )
    for key, expected in schema.items():
        value = body[key]
        if not isinstance(value, expected) or isinstance(value, bool):
            raise DecodeError(f"{msg_type} body field {key!r} must be {expected.__name__}")


def encode_message(message: Message) -> bytes:
    """Length-prefixed frame: 4-byte big-endian size, then canonical JSON."""
    validate_body(message.type, message.body)
    payload = canonical_json_bytes(message.to_json())
    if len(payload) > MAX_FRAME_BYTES:
        raise DecodeError(f"frame too large: {len(payload)} bytes")
    return struct.pack(">I", len(payload)) + payload


def decode_message(data: bytes) -> Message:
    """Parse one full frame; anything malformed or truncated is rejected."""
    if len(data) < 4:
        raise DecodeError("truncated frame header")
    (size,) = struct.unpack(">I", data[:4])
    if size > MAX_FRAME_BYTES:
        raise DecodeError(f"frame too large: {size} bytes")
    if len(data) != 4 + size:
        raise DecodeError(f"frame length {len(data) - 4} does not match header {size}")
    try:
        obj = json.loads(data[4:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"unparseable frame: {exc}") from exc
    if not isinstance(obj, dict) or set(obj) != {"type", "sender", "lamport", "body"}:
        raise DecodeError("frame must carry type, sender, lamport, body")
    msg_type = obj["type"]
    if msg_type not in MESSAGE_TYPES:
        raise DecodeError(f"unknown message type {msg_type!r}")
    if not isinstance(obj["sender"], str) or not obj["sender"]:
        raise DecodeError("sender must be a nonempty string")
    if not isinstance(obj["lamport"], int) or isinstance(obj["lamport"], bool):
        raise DecodeError("lamport must be an integer")
    validate_body(msg_type, obj["body"])
    return Message(type=msg_type, sender=obj["sender"], lamport=obj["lamport"], body=obj["body"])


def resolve_win_conflict(a: WinClaim, b: WinClaim) -> WinClaim:
    """Deterministic total order: smaller (lamport_time, fundraiser_id) wins."""
    if a.student_id != b.student_id:
        raise MismatchedStudent(f"{a.student_id!r} vs {b.student_id!r}")
    return a if a.sort_key() <= b.sort_key() else b


def fork_choice(local: Chain, remote: Chain) -> Chain:
    """Pick between two verified chains: longer wins, ties by smaller tip hash.

    The remote chain is re-verified here since it arrived off the wire;
    an unverifiable remote is an error, not a fork-choice loss.
    """
    report = verify_chain(remote)
    if not report.valid:
        raise InvalidRemote(
            f"remote chain invalid at {report.first_bad_index}: {report.reason}"
        )
    if len(remote) > len(local):
        return remote
    if len(remote) < len(local):
        return local
    if remote.tip.hash < local.tip.hash:
        return remote
    return local


def fan_out(message: Message, peers: list[str]) -> list[tuple[str, Message]]:
    """One delivery intent per peer; the sender never addresses itself."""
    return [(peer, message) for peer in peers if peer != message.sender]
