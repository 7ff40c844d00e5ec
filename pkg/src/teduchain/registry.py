"""Accounts, student applications, and eligibility verification.

The traditional side of the platform: a relational-style store that
registers the three participant roles, takes student funding applications,
and verifies them against records preloaded by an administrator. Eligible
students enter the active list that fundraiser and sponsor dashboards
watch. Everything persists as one canonical JSON file so a save/load/save
round trip is byte-identical.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .canonical import canonical_json_bytes
from .ledger import ContactInfo

log = logging.getLogger(__name__)

ROLE_STUDENT = "Student"
ROLE_FUNDRAISER = "Fundraiser"
ROLE_SPONSOR = "Sponsor"
ROLES = (ROLE_STUDENT, ROLE_FUNDRAISER, ROLE_SPONSOR)

APP_PENDING = "Pending"
APP_ELIGIBLE = "Eligible"
APP_REJECTED = "Rejected"
APP_WON = "Won"

REJECT_NO_RECORD = "NoRecord"
REJECT_SCORE = "ScoreBelowMin"
REJECT_INCOME = "IncomeAboveCap"

_ROLE_PREFIX = {ROLE_STUDENT: "ST", ROLE_FUNDRAISER: "F", ROLE_SPONSOR: "SP"}

_APPLICATION_FIELDS = (
    "program_name",
    "institute_name",
    "high_school_score",
    "family_income_cents",
    "target_amount_cents",
    "program_duration_months",
)


class RegistryError(Exception):
    pass


class DuplicateEmail(RegistryError):
    pass


class DuplicateAccountId(RegistryError):
    pass


class MissingBusinessId(RegistryError):
    pass


class MissingFinancialInfo(RegistryError):
    pass


class MissingField(RegistryError):
    pass


class DuplicateApplication(RegistryError):
    pass


class UnknownAccount(RegistryError):
    pass


class UnknownApplication(RegistryError):
    pass


@dataclass
class Account:
    account_id: str
    role: str
    name: str
    email: str
    address: str = ""
    phone: str = ""
    business_identification_number: str = ""
    financial_info: str = ""

    def contact(self) -> ContactInfo:
        return ContactInfo(
            party_id=self.account_id,
            address=self.address,
            email=self.email,
            phone=self.phone,
        )

    def to_json(self) -> dict:
        return {
            "account_id": self.account_id,
            "role": self.role,
            "name": self.name,
            "email": self.email,
            "address": self.address,
            "phone": self.phone,
            "business_identification_number": self.business_identification_number,
            "financial_info": self.financial_info,
        }


@dataclass
class StudentApplication:
    application_id: str
    student_id: str
    program_name: str
    institute_name: str
    high_school_score: int
    family_income_cents: int
    target_amount_cents: int
    program_duration_months: int
    status: str = APP_PENDING
    reject_reason: str = ""
    eligible_at: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "application_id": self.application_id,
            "student_id": self.student_id,
            "program_name": self.program_name,
            "institute_name": self.institute_name,
            "high_school_score": self.high_school_score,
            "family_income_cents": self.family_income_cents,
            "target_amount_cents": self.target_amount_cents,
            "program_duration_months": self.program_duration_months,
            "status": self.status,
            "reject_reason": self.reject_reason,
            "eligible_at": self.eligible_at,
        }


@dataclass(frozen=True)
class VerificationRecord:
    """One administrator-preloaded identity: (name, institute, score)."""

    name: str
    institute: str
    high_school_score: int

    def key(self) -> tuple:
        return (self.name, self.institute, self.high_school_score)


@dataclass
class RegistryConfig:
    min_score: int = 700
    max_income_cents: int = 5_000_000
    benefit_percent_bp: int = 500
    benefit_period_months: int = 24


class Registry:
    def __init__(self, config: Optional[RegistryConfig] = None):
        self.config = config or RegistryConfig()
        self.accounts: dict[str, Account] = {}
        self.applications: dict[str, StudentApplication] = {}
        self.records: list[VerificationRecord] = []
        self._record_keys: set[tuple] = set()
        self._counters: dict[str, int] = {"ST": 0, "F": 0, "SP": 0, "APP": 0}
        self.notifications: list[dict] = []

    # -- accounts ---------------------------------------------------------

    def register_account(self, role: str, details: dict) -> str:
        """Create an account; required details depend on the role."""
        if role not in ROLES:
            raise RegistryError(f"unknown role {role!r}")
        name = str(details.get("name", "")).strip()
        email = str(details.get("email", "")).strip()
        if not name or not email:
            raise MissingField("name and email are required")
        if role == ROLE_FUNDRAISER and not details.get("business_identification_number"):
            raise MissingBusinessId("fundraisers must provide a business identification number")
        if role == ROLE_SPONSOR and not details.get("financial_info"):
            raise MissingFinancialInfo("sponsors must provide financial information")
        for account in self.accounts.values():
            if account.email == email:
                raise DuplicateEmail(f"email {email!r} already registered")
        account_id = details.get("account_id") or self._next_id(_ROLE_PREFIX[role])
        if account_id in self.accounts:
            raise DuplicateAccountId(f"account {account_id!r} already exists")
        account = Account(
            account_id=account_id,
            role=role,
            name=name,
            email=email,
            address=str(details.get("address", "")),
            phone=str(details.get("phone", "")),
            business_identification_number=str(
                details.get("business_identification_number", "")
            ),
            financial_info=str(details.get("financial_info", "")),
        )
        self.accounts[account_id] = account
        return account_id

    def _next_id(self, prefix: str) -> str:
        while True:
            self._counters[prefix] += 1
            candidate = f"{prefix}-{self._counters[prefix]:04d}"
            if candidate not in self.accounts:
                return candidate

    def account(self, account_id: str) -> Account:
        account = self.accounts.get(account_id)
        if account is None:
            raise UnknownAccount(f"unknown account {account_id!r}")
        return account

    def contact_for(self, account_id: str) -> ContactInfo:
        account = self.accounts.get(account_id)
        if account is None:
            # Parties learned from remote blocks may have no local account.
            return ContactInfo(party_id=account_id)
        return account.contact()

    # -- applications ---------------------------------------------------------

    def submit_application(self, student_id: str, application: dict) -> str:
        account = self.account(student_id)
        if account.role != ROLE_STUDENT:
            raise RegistryError(f"{student_id!r} is not a student account")
        for app in self.applications.values():
            if app.student_id == student_id and app.status != APP_REJECTED:
                raise DuplicateApplication(
                    f"student {student_id!r} already has a live application"
                )
        for name in _APPLICATION_FIELDS:
            value = application.get(name)
            if value is None or value == "":
                raise MissingField(f"application field {name!r} is required")
        for name in _APPLICATION_FIELDS[2:]:
            if not isinstance(application[name], int) or isinstance(application[name], bool):
                raise MissingField(f"application field {name!r} must be an integer")
        self._counters["APP"] += 1
        app = StudentApplication(
            application_id=f"APP-{self._counters['APP']:04d}",
            student_id=student_id,
            program_name=str(application["program_name"]),
            institute_name=str(application["institute_name"]),
            high_school_score=application["high_school_score"],
            family_income_cents=application["family_income_cents"],
            target_amount_cents=application["target_amount_cents"],
            program_duration_months=application["program_duration_months"],
        )
        self.applications[app.application_id] = app
        return app.application_id

    def application(self, application_id: str) -> StudentApplication:
        app = self.applications.get(application_id)
        if app is None:
            raise UnknownApplication(f"unknown application {application_id!r}")
        return app

    def application_for_student(self, student_id: str) -> Optional[StudentApplication]:
        live = None
        for app in self.applications.values():
            if app.student_id == student_id and app.status != APP_REJECTED:
                live = app
        return live

    def verify_eligibility(self, application_id: str, at: int = 0) -> StudentApplication:
        """Check an application against preloaded records and thresholds."""
        app = self.application(application_id)
        if app.status != APP_PENDING:
            raise RegistryError(f"application {application_id!r} is {app.status}, not Pending")
        account = self.account(app.student_id)
        key = (account.name, app.institute_name, app.high_school_score)
        if key not in self._record_keys:
            app.status = APP_REJECTED
            app.reject_reason = REJECT_NO_RECORD
        elif app.high_school_score < self.config.min_score:
            app.status = APP_REJECTED
            app.reject_reason = REJECT_SCORE
        elif app.family_income_cents > self.config.max_income_cents:
            app.status = APP_REJECTED
            app.reject_reason = REJECT_INCOME
        else:
            app.status = APP_ELIGIBLE
            app.eligible_at = at
        self.notify(app.student_id, f"application {app.application_id}: {app.status}")
        return app

    def note_remote_activation(
        self,
        student_id: str,
        target_amount: int,
        program_name: str,
        institute_name: str,
        program_duration_months: int,
        at: int,
    ) -> StudentApplication:
        """Mirror an activation another node verified."""
        app = self.application_for_student(student_id)
        if app is None:
            self._counters["APP"] += 1
            app = StudentApplication(
                application_id=f"APP-R{self._counters['APP']:04d}",
                student_id=student_id,
                program_name=program_name,
                institute_name=institute_name,
                high_school_score=0,
                family_income_cents=0,
                target_amount_cents=target_amount,
                program_duration_months=program_duration_months,
            )
            self.applications[app.application_id] = app
        if app.status == APP_PENDING:
            app.status = APP_ELIGIBLE
            app.eligible_at = at
        elif app.status == APP_ELIGIBLE and app.eligible_at is None:
            app.eligible_at = at
        return app

    def mark_won(self, student_id: str) -> None:
        app = self.application_for_student(student_id)
        if app is not None and app.status == APP_ELIGIBLE:
            app.status = APP_WON

    def sync_won_students(self, won: set[str]) -> None:
        """Align Won/Eligible statuses with the set the chain actually holds."""
        for app in self.applications.values():
            if app.status == APP_WON and app.student_id not in won:
                app.status = APP_ELIGIBLE
            elif app.status == APP_ELIGIBLE and app.student_id in won:
                app.status = APP_WON

    def active_list(self) -> list[StudentApplication]:
        """Eligible, not-yet-won students; eligibility FIFO, ties by id."""
        eligible = [a for a in self.applications.values() if a.status == APP_ELIGIBLE]
        return sorted(eligible, key=lambda a: (a.eligible_at or 0, a.student_id))

    # -- verification records ----------------------------------------------------

    def set_records(self, records: list[VerificationRecord]) -> None:
        self.records = list(records)
        self._record_keys = {r.key() for r in self.records}

    def load_records_csv(self, path) -> int:
        """Load `name,institute,high_school_score` rows; returns the count."""
        loaded = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            expected = ["name", "institute", "high_school_score"]
            if reader.fieldnames != expected:
                raise RegistryError(
                    f"verification CSV header must be {','.join(expected)}"
                )
            for row in reader:
                loaded.append(
                    VerificationRecord(
                        name=row["name"],
                        institute=row["institute"],
                        high_school_score=int(row["high_school_score"]),
                    )
                )
        self.set_records(loaded)
        return len(loaded)

    # -- housekeeping stubs --------------------------------------------------------

    def notify(self, account_id: str, message: str) -> None:
        # Email delivery is out of scope; keep an in-memory trace instead.
        self.notifications.append({"account_id": account_id, "message": message})
        log.info("notify %s: %s", account_id, message)

    def request_password_reset(self, account_id: str) -> None:
        self.notify(account_id, "password reset requested (not implemented)")

    def report_conflict(self, account_id: str, description: str) -> None:
        self.notify(account_id, f"conflict reported: {description}")

    # -- persistence ------------------------------------------------------------------

    def to_json_bytes(self) -> bytes:
        state = {
            "config": {
                "min_score": self.config.min_score,
                "max_income_cents": self.config.max_income_cents,
                "benefit_percent_bp": self.config.benefit_percent_bp,
                "benefit_period_months": self.config.benefit_period_months,
            },
            "accounts": {a: acc.to_json() for a, acc in sorted(self.accounts.items())},
            "applications": {a: app.to_json() for a, app in sorted(self.applications.items())},
            "records": [
                {"name": r.name, "institute": r.institute, "high_school_score": r.high_school_score}
                for r in self.records
            ],
            "counters": dict(sorted(self._counters.items())),
        }
        return canonical_json_bytes(state) + b"\n"

    @classmethod
    def from_json_bytes(cls, data: bytes) -> "Registry":
        import json

        state = json.loads(data.decode("utf-8"))
        cfg = state.get("config", {})
        registry = cls(
            RegistryConfig(
                min_score=cfg.get("min_score", 700),
                max_income_cents=cfg.get("max_income_cents", 5_000_000),
                benefit_percent_bp=cfg.get("benefit_percent_bp", 500),
                benefit_period_months=cfg.get("benefit_period_months", 24),
            )
        )
        for obj in state.get("accounts", {}).values():
            registry.accounts[obj["account_id"]] = Account(**obj)
        for obj in state.get("applications", {}).values():
            registry.applications[obj["application_id"]] = StudentApplication(**obj)
        registry.set_records(
            [
                VerificationRecord(
                    name=r["name"],
                    institute=r["institute"],
                    high_school_score=r["high_school_score"],
                )
                for r in state.get("records", [])
            ]
        )
        registry._counters.update(state.get("counters", {}))
        return registry

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_json_bytes())

    @classmethod
    def load(cls, path) -> "Registry":
        return cls.from_json_bytes(Path(path).read_bytes())
