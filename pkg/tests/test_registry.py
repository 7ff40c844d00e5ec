import pytest

from teduchain.registry import (
    DuplicateApplication,
    DuplicateEmail,
    MissingBusinessId,
    MissingField,
    MissingFinancialInfo,
    Registry,
    RegistryConfig,
    UnknownApplication,
    VerificationRecord,
)


@pytest.fixture
def registry():
    reg = Registry(RegistryConfig(min_score=700, max_income_cents=2_000_000))
    reg.set_records(
        [
            VerificationRecord("Ann Lee", "USP", 850),
            VerificationRecord("Bob Rau", "USP", 650),
            VerificationRecord("Cy Tuis", "FNU", 900),
        ]
    )
    return reg


def student(reg, name="Ann Lee", email=None, account_id=None):
    return reg.register_account(
        "Student",
        {
            "name": name,
            "email": email or f"{name.replace(' ', '').lower()}@example.edu",
            "address": "1 Campus Way",
            "phone": "+679-1",
            "account_id": account_id,
        },
    )


def application(score=850, income=1_000_000, institute="USP"):
    return {
        "program_name": "BSc CS",
        "institute_name": institute,
        "high_school_score": score,
        "family_income_cents": income,
        "target_amount_cents": 500_000,
        "program_duration_months": 36,
    }


# --- accounts --------------------------------------------------------------


def test_fundraiser_requires_business_id(registry):
    with pytest.raises(MissingBusinessId):
        registry.register_account("Fundraiser", {"name": "Agency", "email": "a@b.c"})
    fid = registry.register_account(
        "Fundraiser",
        {"name": "Agency", "email": "a@b.c", "business_identification_number": "BIZ-9"},
    )
    assert registry.account(fid).business_identification_number == "BIZ-9"


def test_sponsor_requires_financial_info(registry):
    with pytest.raises(MissingFinancialInfo):
        registry.register_account("Sponsor", {"name": "Phil", "email": "p@b.c"})
    sid = registry.register_account(
        "Sponsor", {"name": "Phil", "email": "p@b.c", "financial_info": "bank ok"}
    )
    assert registry.account(sid).role == "Sponsor"


def test_student_registration_returns_id(registry):
    sid = student(registry)
    assert sid.startswith("ST-")
    assert registry.account(sid).name == "Ann Lee"


def test_duplicate_email_rejected(registry):
    student(registry, email="same@example.edu")
    with pytest.raises(DuplicateEmail):
        student(registry, name="Other One", email="same@example.edu")


# --- applications ------------------------------------------------------------


def test_submit_complete_application(registry):
    sid = student(registry)
    app_id = registry.submit_application(sid, application())
    assert registry.application(app_id).status == "Pending"


def test_missing_field_rejected(registry):
    sid = student(registry)
    incomplete = application()
    del incomplete["family_income_cents"]
    with pytest.raises(MissingField):
        registry.submit_application(sid, incomplete)


def test_second_live_application_rejected(registry):
    sid = student(registry)
    registry.submit_application(sid, application())
    with pytest.raises(DuplicateApplication):
        registry.submit_application(sid, application())


def test_rejected_application_can_be_replaced(registry):
    sid = student(registry, name="Nobody Known")
    app_id = registry.submit_application(sid, application())
    registry.verify_eligibility(app_id, at=1)
    assert registry.application(app_id).status == "Rejected"
    registry.submit_application(sid, application())  # allowed now


# --- eligibility ---------------------------------------------------------------


def test_matching_record_and_thresholds_eligible(registry):
    sid = student(registry)
    app_id = registry.submit_application(sid, application(score=850))
    app = registry.verify_eligibility(app_id, at=5)
    assert app.status == "Eligible"
    assert app.eligible_at == 5


def test_no_matching_record_rejected(registry):
    sid = student(registry, name="Ghost Person")
    app_id = registry.submit_application(sid, application())
    app = registry.verify_eligibility(app_id)
    assert (app.status, app.reject_reason) == ("Rejected", "NoRecord")


def test_score_below_minimum_rejected(registry):
    sid = student(registry, name="Bob Rau", email="bob@example.edu")
    app_id = registry.submit_application(sid, application(score=650))
    app = registry.verify_eligibility(app_id)
    assert (app.status, app.reject_reason) == ("Rejected", "ScoreBelowMin")


def test_income_above_cap_rejected(registry):
    sid = student(registry)
    app_id = registry.submit_application(sid, application(income=9_000_000))
    app = registry.verify_eligibility(app_id)
    assert (app.status, app.reject_reason) == ("Rejected", "IncomeAboveCap")


def test_unknown_application(registry):
    with pytest.raises(UnknownApplication):
        registry.verify_eligibility("APP-9999")


def test_verification_is_deterministic(registry):
    sid = student(registry)
    app_id = registry.submit_application(sid, application())
    first = registry.verify_eligibility(app_id, at=3).status
    # Same inputs, fresh registry: same outcome.
    other = Registry(RegistryConfig(min_score=700, max_income_cents=2_000_000))
    other.set_records([VerificationRecord("Ann Lee", "USP", 850)])
    sid2 = student(other)
    app2 = other.submit_application(sid2, application())
    assert other.verify_eligibility(app2, at=3).status == first == "Eligible"


# --- active list ------------------------------------------------------------------


def test_active_list_fifo_with_id_ties(registry):
    a = student(registry, name="Ann Lee", account_id="ST-A")
    c = student(registry, name="Cy Tuis", email="cy@example.edu", account_id="ST-C")
    app_a = registry.submit_application(a, application())
    app_c = registry.submit_application(c, application(score=900, institute="FNU"))
    registry.verify_eligibility(app_c, at=1)
    registry.verify_eligibility(app_a, at=2)
    assert [x.student_id for x in registry.active_list()] == ["ST-C", "ST-A"]
    # Same timestamp orders by student id.
    registry.application(app_a).eligible_at = 1
    assert [x.student_id for x in registry.active_list()] == ["ST-A", "ST-C"]


def test_won_student_leaves_active_list(registry):
    a = student(registry, name="Ann Lee", account_id="ST-A")
    c = student(registry, name="Cy Tuis", email="cy@example.edu", account_id="ST-C")
    registry.verify_eligibility(registry.submit_application(a, application()), at=1)
    registry.verify_eligibility(
        registry.submit_application(c, application(score=900, institute="FNU")), at=2
    )
    registry.mark_won("ST-A")
    assert [x.student_id for x in registry.active_list()] == ["ST-C"]


def test_empty_active_list(registry):
    assert registry.active_list() == []


# --- persistence ------------------------------------------------------------------


def test_persistence_round_trip_is_byte_identical(registry, tmp_path):
    sid = student(registry)
    app_id = registry.submit_application(sid, application())
    registry.verify_eligibility(app_id, at=9)
    path = tmp_path / "registry.json"
    registry.save(path)
    loaded = Registry.load(path)
    loaded.save(path.with_suffix(".again"))
    assert path.read_bytes() == path.with_suffix(".again").read_bytes()
    assert loaded.application(app_id).status == "Eligible"


def test_records_csv_loading(tmp_path):
    csv_path = tmp_path / "records.csv"
    csv_path.write_text("name,institute,high_school_score\nAnn Lee,USP,850\n")
    reg = Registry()
    assert reg.load_records_csv(csv_path) == 1
    assert reg.records[0] == VerificationRecord("Ann Lee", "USP", 850)
