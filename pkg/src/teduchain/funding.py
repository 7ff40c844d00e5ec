"""Sponsor wallets and pledge escrow for the funding races.

One engine instance models one node's view of every race: sponsors deposit
virtual money, pledges move it from ``available`` to ``reserved``, and a
race ends either in settlement (the winning fundraiser's pledges leave the
wallets and become contract shares) or rollback (losing pledges are
credited back automatically).

Every mutation is appended to an event log. Replaying the log against the
outcomes recorded from the chain reconstructs the exact engine state; that
is how nodes restart and how they rebuild after adopting a competing chain,
where settlements from abandoned blocks must unwind without ever editing
history.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

from .ledger import ContractTerms, InvestorShare

STATE_ACTIVE = "Active"
STATE_FROZEN = "Frozen"
STATE_WON = "Won"

PLEDGE_ACTIVE = "Active"
PLEDGE_WON = "Won"
PLEDGE_ROLLED_BACK = "RolledBack"


class FundingError(Exception):
    pass


class NonPositiveAmount(FundingError):
    pass


class UnknownSponsor(FundingError):
    pass


class UnknownStudent(FundingError):
    pass


class UnknownFundraiser(FundingError):
    pass


class InsufficientFunds(FundingError):
    pass


class ExceedsRemaining(FundingError):
    pass


class StudentNotActive(FundingError):
    pass


class NotComplete(FundingError):
    pass


class AlreadyWon(FundingError):
    pass


@dataclass
class Wallet:
    sponsor_id: str
    available: int = 0
    reserved: int = 0

    def to_json(self) -> dict:
        return {
            "sponsor_id": self.sponsor_id,
            "available": self.available,
            "reserved": self.reserved,
        }


@dataclass
class Pledge:
    pledge_id: str
    sponsor_id: str
    student_id: str
    fundraiser_id: str
    amount: int
    status: str = PLEDGE_ACTIVE
    placed_at: int = 0

    def to_json(self) -> dict:
        return {
            "pledge_id": self.pledge_id,
            "sponsor_id": self.sponsor_id,
            "student_id": self.student_id,
            "fundraiser_id": self.fundraiser_id,
            "amount": self.amount,
            "status": self.status,
            "placed_at": self.placed_at,
        }


@dataclass
class ActiveStudentRecord:
    """A node's working record of one student still being raced for."""

    student_id: str
    target_amount: int
    program_name: str
    institute_name: str
    program_duration_months: int
    state: str = STATE_ACTIVE
    activated_at: int = 0
    collected: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "student_id": self.student_id,
            "target_amount": self.target_amount,
            "program_name": self.program_name,
            "institute_name": self.institute_name,
            "program_duration_months": self.program_duration_months,
            "state": self.state,
            "activated_at": self.activated_at,
            "collected": dict(self.collected),
        }


@dataclass(frozen=True)
class WinCandidate:
    student_id: str
    fundraiser_id: str
    collected: int
    claim_time: int


class FundingEngine:
    """Deterministic escrow state machine driven by one command stream."""

    def __init__(
        self,
        fundraiser_ids: Iterable[str] = (),
        event_sink: Optional[Callable[[dict], None]] = None,
    ):
        self.wallets: dict[str, Wallet] = {}
        self.pledges: dict[str, Pledge] = {}
        self.students: dict[str, ActiveStudentRecord] = {}
        self.fundraisers: dict[str, bool] = {f: True for f in fundraiser_ids}
        self.deposited: dict[str, int] = {}
        self.settled: dict[str, int] = {}
        self.events: list[dict] = []
        self.event_sink = event_sink
        self._pledges_by_student: dict[str, list[str]] = {}
        self._next_pledge = 1
        self._replaying = False

    # -- event plumbing --------------------------------------------------

    def _emit(self, event: dict) -> None:
        if self._replaying:
            return
        self.events.append(event)
        if self.event_sink is not None:
            self.event_sink(event)

    # -- lookups -----------------------------------------------------------

    def register_fundraiser(self, fundraiser_id: str) -> None:
        self.fundraisers[fundraiser_id] = True

    def _wallet(self, sponsor_id: str) -> Wallet:
        wallet = self.wallets.get(sponsor_id)
        if wallet is None:
            raise UnknownSponsor(f"no wallet for sponsor {sponsor_id!r}")
        return wallet

    def _student(self, student_id: str) -> ActiveStudentRecord:
        record = self.students.get(student_id)
        if record is None:
            raise UnknownStudent(f"unknown student {student_id!r}")
        return record

    def student_pledges(self, student_id: str) -> list[Pledge]:
        return [self.pledges[pid] for pid in self._pledges_by_student.get(student_id, [])]

    def collected(self, fundraiser_id: str, student_id: str) -> int:
        return self._student(student_id).collected.get(fundraiser_id, 0)

    def _recompute_collected(self, student_id: str) -> None:
        record = self.students[student_id]
        totals: dict[str, int] = {f: 0 for f in record.collected}
        for pledge in self.student_pledges(student_id):
            if pledge.status in (PLEDGE_ACTIVE, PLEDGE_WON):
                totals[pledge.fundraiser_id] = totals.get(pledge.fundraiser_id, 0) + pledge.amount
        record.collected = totals

    # -- wallet operations -------------------------------------------------

    def create_wallet(self, sponsor_id: str, at: int = 0) -> Wallet:
        """Idempotent: a sponsor gets exactly one wallet per node."""
        wallet = self.wallets.get(sponsor_id)
        if wallet is not None:
            return wallet
        wallet = Wallet(sponsor_id=sponsor_id)
        self.wallets[sponsor_id] = wallet
        self.deposited.setdefault(sponsor_id, 0)
        self.settled.setdefault(sponsor_id, 0)
        self._emit({"event": "wallet_created", "sponsor_id": sponsor_id, "at": at})
        return wallet

    def deposit(self, sponsor_id: str, amount: int, at: int = 0) -> Wallet:
        if not isinstance(amount, int) or amount <= 0:
            raise NonPositiveAmount(f"deposit amount must be positive, got {amount}")
        wallet = self._wallet(sponsor_id)
        wallet.available += amount
        self.deposited[sponsor_id] = self.deposited.get(sponsor_id, 0) + amount
        self._emit({"event": "deposit", "sponsor_id": sponsor_id, "amount": amount, "at": at})
        return wallet

    # -- race lifecycle ------------------------------------------------------

    def activate_student(
        self,
        student_id: str,
        target_amount: int,
        program_name: str,
        institute_name: str,
        program_duration_months: int,
        at: int = 0,
    ) -> ActiveStudentRecord:
        existing = self.students.get(student_id)
        if existing is not None:
            return existing
        record = ActiveStudentRecord(
            student_id=student_id,
            target_amount=target_amount,
            program_name=program_name,
            institute_name=institute_name,
            program_duration_months=program_duration_months,
            activated_at=at,
        )
        self.students[student_id] = record
        self._pledges_by_student.setdefault(student_id, [])
        self._emit(
            {
                "event": "student_activated",
                "student_id": student_id,
                "target_amount": target_amount,
                "program_name": program_name,
                "institute_name": institute_name,
                "program_duration_months": program_duration_months,
                "at": at,
            }
        )
        return record

    def place_pledge(
        self, sponsor_id: str, student_id: str, fundraiser_id: str, amount: int, at: int = 0
    ) -> Pledge:
        if not isinstance(amount, int) or amount <= 0:
            raise NonPositiveAmount(f"pledge amount must be positive, got {amount}")
        if fundraiser_id not in self.fundraisers:
            raise UnknownFundraiser(f"unknown fundraiser {fundraiser_id!r}")
        wallet = self._wallet(sponsor_id)
        record = self._student(student_id)
        if record.state != STATE_ACTIVE:
            raise StudentNotActive(f"student {student_id!r} is {record.state}")
        remaining = record.target_amount - record.collected.get(fundraiser_id, 0)
        if amount > remaining:
            raise ExceedsRemaining(
                f"pledge {amount} exceeds remaining {remaining} via {fundraiser_id!r}"
            )
        if amount > wallet.available:
            raise InsufficientFunds(
                f"pledge {amount} exceeds available {wallet.available}"
            )
        pledge = self._place(sponsor_id, student_id, fundraiser_id, amount, at)
        return pledge

    def _place(self, sponsor_id, student_id, fundraiser_id, amount, at) -> Pledge:
        pledge = Pledge(
            pledge_id=f"P{self._next_pledge}",
            sponsor_id=sponsor_id,
            student_id=student_id,
            fundraiser_id=fundraiser_id,
            amount=amount,
            placed_at=at,
        )
        self._next_pledge += 1
        self.pledges[pledge.pledge_id] = pledge
        self._pledges_by_student.setdefault(student_id, []).append(pledge.pledge_id)
        wallet = self.wallets[sponsor_id]
        wallet.available -= amount
        wallet.reserved += amount
        record = self.students[student_id]
        record.collected[fundraiser_id] = record.collected.get(fundraiser_id, 0) + amount
        self._emit(
            {
                "event": "pledge_placed",
                "pledge_id": pledge.pledge_id,
                "sponsor_id": sponsor_id,
                "student_id": student_id,
                "fundraiser_id": fundraiser_id,
                "amount": amount,
                "at": at,
            }
        )
        return pledge

    def check_completion(
        self, fundraiser_id: str, student_id: str, at: int = 0
    ) -> Optional[WinCandidate]:
        if fundraiser_id not in self.fundraisers:
            raise UnknownFundraiser(f"unknown fundraiser {fundraiser_id!r}")
        record = self._student(student_id)
        if record.state != STATE_ACTIVE:
            return None
        collected = record.collected.get(fundraiser_id, 0)
        if collected != record.target_amount:
            return None
        return WinCandidate(
            student_id=student_id,
            fundraiser_id=fundraiser_id,
            collected=collected,
            claim_time=at,
        )

    def freeze_student(self, student_id: str, at: int = 0) -> ActiveStudentRecord:
        """Stop collecting for a student; repeat freezes are no-ops."""
        record = self._student(student_id)
        if record.state == STATE_WON:
            raise AlreadyWon(f"student {student_id!r} already has a contract")
        if record.state == STATE_ACTIVE:
            record.state = STATE_FROZEN
            self._emit({"event": "student_frozen", "student_id": student_id, "at": at})
        return record

    def settle_win(
        self,
        student_id: str,
        fundraiser_id: str,
        benefit_percent_bp: int,
        benefit_period_months: int,
        at: int = 0,
    ) -> ContractTerms:
        """Turn a complete collection into contract terms; funds leave escrow."""
        if fundraiser_id not in self.fundraisers:
            raise UnknownFundraiser(f"unknown fundraiser {fundraiser_id!r}")
        record = self._student(student_id)
        if record.state == STATE_WON:
            raise AlreadyWon(f"student {student_id!r} already won")
        if record.collected.get(fundraiser_id, 0) != record.target_amount:
            raise NotComplete(
                f"collected {record.collected.get(fundraiser_id, 0)} of {record.target_amount}"
            )
        shares: dict[str, int] = {}
        settled_ids = []
        for pledge in self.student_pledges(student_id):
            if pledge.status != PLEDGE_ACTIVE or pledge.fundraiser_id != fundraiser_id:
                continue
            pledge.status = PLEDGE_WON
            wallet = self.wallets[pledge.sponsor_id]
            wallet.reserved -= pledge.amount
            self.settled[pledge.sponsor_id] = self.settled.get(pledge.sponsor_id, 0) + pledge.amount
            shares[pledge.sponsor_id] = shares.get(pledge.sponsor_id, 0) + pledge.amount
            settled_ids.append(pledge.pledge_id)
        record.state = STATE_WON
        self._recompute_collected(student_id)
        self._emit(
            {
                "event": "pledges_settled",
                "student_id": student_id,
                "fundraiser_id": fundraiser_id,
                "pledge_ids": settled_ids,
                "at": at,
            }
        )
        return ContractTerms(
            student_id=student_id,
            program_name=record.program_name,
            institute_name=record.institute_name,
            program_cost=record.target_amount,
            program_duration_months=record.program_duration_months,
            shares=tuple(InvestorShare(s, amt) for s, amt in shares.items()),
            benefit_percent_bp=benefit_percent_bp,
            benefit_period_months=benefit_period_months,
            fundraiser_id=fundraiser_id,
        )

    def rollback_pledges(
        self, student_id: str, winning_fundraiser_id: str, at: int = 0
    ) -> list[str]:
        """Credit every losing sponsor back; safe to repeat."""
        self._student(student_id)
        rolled = self._rollback_losers(student_id, winning_fundraiser_id)
        if rolled:
            self._emit(
                {
                    "event": "pledges_rolled_back",
                    "student_id": student_id,
                    "winner_fundraiser_id": winning_fundraiser_id,
                    "pledge_ids": rolled,
                    "at": at,
                }
            )
        return rolled

    def _rollback_losers(self, student_id: str, winner: str) -> list[str]:
        rolled = []
        for pledge in self.student_pledges(student_id):
            if pledge.status != PLEDGE_ACTIVE or pledge.fundraiser_id == winner:
                continue
            pledge.status = PLEDGE_ROLLED_BACK
            wallet = self.wallets[pledge.sponsor_id]
            wallet.reserved -= pledge.amount
            wallet.available += pledge.amount
            rolled.append(pledge.pledge_id)
        if rolled:
            self._recompute_collected(student_id)
        return rolled

    # -- chain-driven outcomes ----------------------------------------------

    def record_block_committed(self, index: int, terms: ContractTerms, at: int = 0) -> list[str]:
        """A contract block landed on this node's chain; apply its outcome."""
        self._emit(
            {
                "event": "block_committed",
                "index": index,
                "student_id": terms.student_id,
                "fundraiser_id": terms.fundraiser_id,
                "program_cost": terms.program_cost,
                "program_name": terms.program_name,
                "institute_name": terms.institute_name,
                "program_duration_months": terms.program_duration_months,
                "at": at,
            }
        )
        return self._apply_contract_outcome(
            terms.student_id,
            terms.fundraiser_id,
            terms.program_cost,
            terms.program_name,
            terms.institute_name,
            terms.program_duration_months,
            at,
        )

    def _apply_contract_outcome(
        self, student_id, winner, cost, program, institute, duration, at
    ) -> list[str]:
        record = self.students.get(student_id)
        if record is None:
            record = ActiveStudentRecord(
                student_id=student_id,
                target_amount=cost,
                program_name=program,
                institute_name=institute,
                program_duration_months=duration,
                activated_at=at,
            )
            self.students[student_id] = record
            self._pledges_by_student.setdefault(student_id, [])
        for pledge in self.student_pledges(student_id):
            if pledge.status == PLEDGE_ACTIVE and pledge.fundraiser_id == winner:
                pledge.status = PLEDGE_WON
                wallet = self.wallets[pledge.sponsor_id]
                wallet.reserved -= pledge.amount
                self.settled[pledge.sponsor_id] = (
                    self.settled.get(pledge.sponsor_id, 0) + pledge.amount
                )
        rolled = self._rollback_losers(student_id, winner)
        record.state = STATE_WON
        self._recompute_collected(student_id)
        return rolled

    def record_chain_adopted(
        self, outcomes: list[dict], tip_index: int, tip_hash_hex: str, at: int = 0
    ) -> None:
        """The node adopted a competing chain; normalize to its outcome set.

        Reaches exactly the state that replaying the pledge log against the
        adopted chain would: pledges for students with a surviving contract
        block settle or roll back per that block's winner, everything else
        returns to reserved escrow.
        """
        self._emit(
            {
                "event": "chain_adopted",
                "tip_index": tip_index,
                "tip_hash": tip_hash_hex,
                "outcomes": outcomes,
                "at": at,
            }
        )
        self._apply_chain_adopted(outcomes, at)

    def _apply_chain_adopted(self, outcomes: list[dict], at: int) -> None:
        outcome_map = {o["student_id"]: o for o in outcomes}
        for o in outcomes:
            if o["student_id"] not in self.students:
                self._apply_contract_outcome(
                    o["student_id"],
                    o["fundraiser_id"],
                    o["program_cost"],
                    o["program_name"],
                    o["institute_name"],
                    o["program_duration_months"],
                    at,
                )
        for student_id, record in self.students.items():
            outcome = outcome_map.get(student_id)
            winner = outcome["fundraiser_id"] if outcome else None
            for pledge in self.student_pledges(student_id):
                if outcome is None:
                    target = PLEDGE_ACTIVE
                elif pledge.fundraiser_id == winner:
                    target = PLEDGE_WON
                else:
                    target = PLEDGE_ROLLED_BACK
                self._transition(pledge, target)
            record.state = STATE_WON if outcome else STATE_ACTIVE
            self._recompute_collected(student_id)

    def _transition(self, pledge: Pledge, target: str) -> None:
        if pledge.status == target:
            return
        wallet = self.wallets[pledge.sponsor_id]
        amount = pledge.amount
        # Undo the wallet effect of the current status...
        if pledge.status == PLEDGE_ACTIVE:
            wallet.reserved -= amount
        elif pledge.status == PLEDGE_WON:
            self.settled[pledge.sponsor_id] -= amount
        elif pledge.status == PLEDGE_ROLLED_BACK:
            wallet.available -= amount
        # ...then apply the target's.
        if target == PLEDGE_ACTIVE:
            wallet.reserved += amount
        elif target == PLEDGE_WON:
            self.settled[pledge.sponsor_id] = self.settled.get(pledge.sponsor_id, 0) + amount
        elif target == PLEDGE_ROLLED_BACK:
            wallet.available += amount
        pledge.status = target

    # -- replay ---------------------------------------------------------------

    @classmethod
    def rebuild(cls, events: Iterable[dict], fundraiser_ids: Iterable[str] = ()) -> "FundingEngine":
        """Reconstruct engine state from its own event log.

        Only base facts (wallets, deposits, activations, pledges) and
        chain-driven outcomes are replayed; audit events and transient
        freezes are skipped. Guards are not re-checked: the log records
        operations that already passed them.
        """
        engine = cls(fundraiser_ids=fundraiser_ids)
        engine._replaying = True
        try:
            for ev in events:
                kind = ev.get("event")
                at = ev.get("at", 0)
                if kind == "wallet_created":
                    engine.create_wallet(ev["sponsor_id"], at)
                elif kind == "deposit":
                    wallet = engine.wallets.get(ev["sponsor_id"])
                    if wallet is None:
                        wallet = engine.create_wallet(ev["sponsor_id"], at)
                    wallet.available += ev["amount"]
                    engine.deposited[ev["sponsor_id"]] = (
                        engine.deposited.get(ev["sponsor_id"], 0) + ev["amount"]
                    )
                elif kind == "student_activated":
                    engine.activate_student(
                        ev["student_id"],
                        ev["target_amount"],
                        ev["program_name"],
                        ev["institute_name"],
                        ev["program_duration_months"],
                        at,
                    )
                elif kind == "pledge_placed":
                    engine._place(
                        ev["sponsor_id"],
                        ev["student_id"],
                        ev["fundraiser_id"],
                        ev["amount"],
                        at,
                    )
                elif kind == "block_committed":
                    engine._apply_contract_outcome(
                        ev["student_id"],
                        ev["fundraiser_id"],
                        ev["program_cost"],
                        ev["program_name"],
                        ev["institute_name"],
                        ev["program_duration_months"],
                        at,
                    )
                elif kind == "chain_adopted":
                    engine._apply_chain_adopted(ev["outcomes"], at)
        finally:
            engine._replaying = False
        engine.events = list(events)
        return engine

    # -- inspection ------------------------------------------------------------

    def snapshot(self) -> dict:
        """Deterministic full-state view used for equality checks and reports."""
        return {
            "wallets": {s: w.to_json() for s, w in sorted(self.wallets.items())},
            "pledges": {p: pl.to_json() for p, pl in sorted(self.pledges.items())},
            "students": {s: r.to_json() for s, r in sorted(self.students.items())},
            "deposited": dict(sorted(self.deposited.items())),
            "settled": dict(sorted(self.settled.items())),
        }

    def conservation_violations(self) -> list[str]:
        """Exact integer conservation: deposits == available + reserved + settled."""
        problems = []
        reserved_by_sponsor: dict[str, int] = {s: 0 for s in self.wallets}
        for pledge in self.pledges.values():
            if pledge.status == PLEDGE_ACTIVE:
                reserved_by_sponsor[pledge.sponsor_id] = (
                    reserved_by_sponsor.get(pledge.sponsor_id, 0) + pledge.amount
                )
        for sponsor_id, wallet in self.wallets.items():
            total = wallet.available + wallet.reserved + self.settled.get(sponsor_id, 0)
            if total != self.deposited.get(sponsor_id, 0):
                problems.append(
                    f"{sponsor_id}: deposits {self.deposited.get(sponsor_id, 0)} != "
                    f"available {wallet.available} + reserved {wallet.reserved} + "
                    f"settled {self.settled.get(sponsor_id, 0)}"
                )
            if wallet.reserved != reserved_by_sponsor.get(sponsor_id, 0):
                problems.append(
                    f"{sponsor_id}: reserved {wallet.reserved} != active pledge sum "
                    f"{reserved_by_sponsor.get(sponsor_id, 0)}"
                )
            if wallet.available < 0 or wallet.reserved < 0:
                problems.append(f"{sponsor_id}: negative balance {wallet.to_json()}")
        for student_id, record in self.students.items():
            totals: dict[str, int] = {}
            for pledge in self.student_pledges(student_id):
                if pledge.status in (PLEDGE_ACTIVE, PLEDGE_WON):
                    totals[pledge.fundraiser_id] = totals.get(pledge.fundraiser_id, 0) + pledge.amount
            for fundraiser_id, amount in totals.items():
                if record.collected.get(fundraiser_id, 0) != amount:
                    problems.append(
                        f"{student_id}: collected[{fundraiser_id}] "
                        f"{record.collected.get(fundraiser_id, 0)} != pledge sum {amount}"
                    )
                if amount > record.target_amount:
                    problems.append(
                        f"{student_id}: collected {amount} exceeds target {record.target_amount}"
                    )
        return problems
