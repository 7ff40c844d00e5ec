import random

import pytest
from hypothesis import given, settings, strategies as st

from teduchain.funding import (
    AlreadyWon,
    ExceedsRemaining,
    FundingEngine,
    InsufficientFunds,
    NonPositiveAmount,
    NotComplete,
    StudentNotActive,
    UnknownSponsor,
    UnknownStudent,
)

import replay_oracle


def engine_with(student_target=10000, fundraisers=("F1", "F2")):
    engine = FundingEngine(fundraiser_ids=fundraisers)
    engine.create_wallet("SP1", at=1)
    engine.create_wallet("SP2", at=1)
    engine.activate_student("ST1", student_target, "BSc", "Inst", 36, at=2)
    return engine


# --- deposits -----------------------------------------------------------------


def test_deposit_into_empty_wallet():
    engine = engine_with()
    wallet = engine.deposit("SP1", 10000, at=3)
    assert wallet.available == 10000
    assert wallet.reserved == 0


def test_deposit_zero_rejected():
    engine = engine_with()
    with pytest.raises(NonPositiveAmount):
        engine.deposit("SP1", 0)


def test_deposits_accumulate():
    engine = engine_with()
    engine.deposit("SP1", 5000)
    engine.deposit("SP1", 2500)
    assert engine.wallets["SP1"].available == 7500


def test_deposit_unknown_sponsor():
    engine = engine_with()
    with pytest.raises(UnknownSponsor):
        engine.deposit("SP404", 100)


# --- pledges ------------------------------------------------------------------


def test_pledge_moves_available_to_reserved():
    engine = engine_with()
    engine.deposit("SP1", 10000)
    engine.place_pledge("SP1", "ST1", "F1", 4000, at=5)
    wallet = engine.wallets["SP1"]
    assert (wallet.available, wallet.reserved) == (6000, 4000)
    assert engine.collected("F1", "ST1") == 4000


def test_pledge_over_remaining_rejected():
    engine = engine_with()
    engine.deposit("SP1", 20000)
    engine.place_pledge("SP1", "ST1", "F1", 4000)
    with pytest.raises(ExceedsRemaining):
        engine.place_pledge("SP1", "ST1", "F1", 7000)


def test_pledge_over_available_rejected():
    engine = engine_with()
    engine.deposit("SP1", 3000)
    with pytest.raises(InsufficientFunds):
        engine.place_pledge("SP1", "ST1", "F1", 4000)


def test_pledge_same_student_via_two_fundraisers_reserves_both():
    engine = engine_with()
    engine.deposit("SP1", 20000)
    engine.place_pledge("SP1", "ST1", "F1", 10000)
    engine.place_pledge("SP1", "ST1", "F2", 6000)
    wallet = engine.wallets["SP1"]
    assert (wallet.available, wallet.reserved) == (4000, 16000)
    assert engine.collected("F1", "ST1") == 10000
    assert engine.collected("F2", "ST1") == 6000


# --- completion ---------------------------------------------------------------


def test_completion_at_exact_target():
    engine = engine_with()
    engine.deposit("SP1", 10000)
    engine.place_pledge("SP1", "ST1", "F1", 10000)
    candidate = engine.check_completion("F1", "ST1", at=9)
    assert candidate is not None
    assert candidate.collected == 10000
    assert candidate.claim_time == 9


def test_no_completion_below_target():
    engine = engine_with()
    engine.deposit("SP1", 9900)
    engine.place_pledge("SP1", "ST1", "F1", 9900)
    assert engine.check_completion("F1", "ST1") is None


def test_no_completion_after_win():
    engine = engine_with()
    engine.deposit("SP1", 10000)
    engine.place_pledge("SP1", "ST1", "F1", 10000)
    engine.settle_win("ST1", "F1", 750, 24)
    assert engine.check_completion("F1", "ST1") is None


def test_unknown_ids_raise():
    engine = engine_with()
    with pytest.raises(UnknownStudent):
        engine.check_completion("F1", "ST404")


# --- settlement ---------------------------------------------------------------


def test_settle_two_sponsors_shares_sum_to_target():
    engine = engine_with()
    engine.deposit("SP1", 6000)
    engine.deposit("SP2", 4000)
    engine.place_pledge("SP1", "ST1", "F1", 6000, at=5)
    engine.place_pledge("SP2", "ST1", "F1", 4000, at=6)
    terms = engine.settle_win("ST1", "F1", 750, 24, at=7)
    assert [(s.sponsor_id, s.amount) for s in terms.shares] == [("SP1", 6000), ("SP2", 4000)]
    assert sum(s.amount for s in terms.shares) == 10000
    assert terms.program_cost == 10000
    assert terms.fundraiser_id == "F1"
    # Funds left the wallets entirely.
    assert engine.wallets["SP1"].to_json() == {"sponsor_id": "SP1", "available": 0, "reserved": 0}
    assert engine.settled["SP1"] == 6000
    assert engine.students["ST1"].state == "Won"


def test_settle_single_sponsor_full_funding():
    engine = engine_with()
    engine.deposit("SP1", 10000)
    engine.place_pledge("SP1", "ST1", "F1", 10000)
    terms = engine.settle_win("ST1", "F1", 750, 24)
    assert len(terms.shares) == 1
    assert terms.shares[0].amount == terms.program_cost == 10000


def test_settle_aggregates_repeat_sponsor_into_one_share():
    engine = engine_with()
    engine.deposit("SP1", 10000)
    engine.place_pledge("SP1", "ST1", "F1", 3000, at=1)
    engine.place_pledge("SP1", "ST1", "F1", 7000, at=2)
    terms = engine.settle_win("ST1", "F1", 750, 24)
    assert [(s.sponsor_id, s.amount) for s in terms.shares] == [("SP1", 10000)]


def test_settle_incomplete_rejected():
    engine = engine_with()
    engine.deposit("SP1", 9000)
    engine.place_pledge("SP1", "ST1", "F1", 9000)
    with pytest.raises(NotComplete):
        engine.settle_win("ST1", "F1", 750, 24)


def test_settle_twice_rejected():
    engine = engine_with()
    engine.deposit("SP1", 10000)
    engine.place_pledge("SP1", "ST1", "F1", 10000)
    engine.settle_win("ST1", "F1", 750, 24)
    with pytest.raises(AlreadyWon):
        engine.settle_win("ST1", "F1", 750, 24)


# --- rollback -------------------------------------------------------------------


def test_rollback_restores_losing_sponsors_exactly():
    engine = engine_with()
    engine.deposit("SP1", 10000)
    engine.deposit("SP2", 5000)
    engine.place_pledge("SP1", "ST1", "F1", 10000)
    engine.place_pledge("SP2", "ST1", "F2", 1000)
    engine.place_pledge("SP2", "ST1", "F2", 2000)
    engine.settle_win("ST1", "F1", 750, 24)
    rolled = engine.rollback_pledges("ST1", "F1")
    assert len(rolled) == 2
    assert engine.wallets["SP2"].to_json() == {"sponsor_id": "SP2", "available": 5000, "reserved": 0}
    statuses = {p.pledge_id: p.status for p in engine.pledges.values()}
    assert list(statuses.values()).count("RolledBack") == 2


def test_rollback_with_no_losers_is_empty():
    engine = engine_with()
    engine.deposit("SP1", 10000)
    engine.place_pledge("SP1", "ST1", "F1", 10000)
    engine.settle_win("ST1", "F1", 750, 24)
    assert engine.rollback_pledges("ST1", "F1") == []


def test_rollback_is_idempotent():
    engine = engine_with()
    engine.deposit("SP1", 10000)
    engine.deposit("SP2", 2000)
    engine.place_pledge("SP1", "ST1", "F1", 10000)
    engine.place_pledge("SP2", "ST1", "F2", 2000)
    engine.settle_win("ST1", "F1", 750, 24)
    first = engine.rollback_pledges("ST1", "F1")
    assert len(first) == 1
    assert engine.rollback_pledges("ST1", "F1") == []


# --- freezing -------------------------------------------------------------------


def test_freeze_blocks_new_pledges():
    engine = engine_with()
    engine.deposit("SP1", 10000)
    engine.freeze_student("ST1")
    assert engine.students["ST1"].state == "Frozen"
    with pytest.raises(StudentNotActive):
        engine.place_pledge("SP1", "ST1", "F1", 100)


def test_freeze_then_settle_by_winner():
    engine = engine_with()
    engine.deposit("SP1", 10000)
    engine.place_pledge("SP1", "ST1", "F1", 10000)
    engine.freeze_student("ST1")
    terms = engine.settle_win("ST1", "F1", 750, 24)
    assert terms.program_cost == 10000
    assert engine.students["ST1"].state == "Won"


def test_freeze_unknown_and_won():
    engine = engine_with()
    with pytest.raises(UnknownStudent):
        engine.freeze_student("ST404")
    engine.deposit("SP1", 10000)
    engine.place_pledge("SP1", "ST1", "F1", 10000)
    engine.settle_win("ST1", "F1", 750, 24)
    with pytest.raises(AlreadyWon):
        engine.freeze_student("ST1")


# --- conservation properties ------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.sampled_from(["deposit", "pledge", "settle", "rollback", "freeze"]),
            st.integers(min_value=1, max_value=5000),
        ),
        max_size=40,
    )
)
def test_conservation_under_arbitrary_small_sequences(ops):
    engine = FundingEngine(fundraiser_ids=("F1", "F2"))
    engine.create_wallet("SP1")
    engine.activate_student("ST1", 8000, "BSc", "Inst", 12)
    for op, amount in ops:
        try:
            if op == "deposit":
                engine.deposit("SP1", amount)
            elif op == "pledge":
                engine.place_pledge("SP1", "ST1", "F1", amount)
            elif op == "settle":
                engine.settle_win("ST1", "F1", 500, 12)
            elif op == "rollback":
                engine.rollback_pledges("ST1", "F1")
            elif op == "freeze":
                engine.freeze_student("ST1")
        except Exception:
            pass
        assert engine.conservation_violations() == []


def test_long_random_operation_sequence_matches_replay_oracle():
    rng = random.Random(20260809)
    fundraisers = ["F1", "F2", "F3"]
    engine = FundingEngine(fundraiser_ids=fundraisers)
    sponsors = [f"SP{i}" for i in range(8)]
    for i, sponsor in enumerate(sponsors):
        engine.create_wallet(sponsor, at=i)
    students: list[str] = []
    next_student = 0
    ops_done = 0
    attempts = 0
    while ops_done < 10_000 and attempts < 60_000:
        attempts += 1
        roll = rng.random()
        try:
            if roll < 0.30:
                engine.deposit(rng.choice(sponsors), rng.randrange(1, 5000), at=attempts)
            elif roll < 0.38 or not students:
                sid = f"ST{next_student}"
                next_student += 1
                students.append(sid)
                engine.activate_student(sid, rng.randrange(1000, 20001), "BSc", "Inst", 24, at=attempts)
            elif roll < 0.80:
                engine.place_pledge(
                    rng.choice(sponsors),
                    rng.choice(students),
                    rng.choice(fundraisers),
                    rng.randrange(1, 8000),
                    at=attempts,
                )
            elif roll < 0.88:
                sid = rng.choice(students)
                record = engine.students[sid]
                winner = None
                for f in fundraisers:
                    if engine.check_completion(f, sid, at=attempts):
                        winner = f
                        break
                if winner is None:
                    continue
                terms = engine.settle_win(sid, winner, 750, 24, at=attempts)
                # A mined block would record the outcome right after settling.
                engine.record_block_committed(len(students), terms, at=attempts)
                assert sum(s.amount for s in terms.shares) == record.target_amount
            elif roll < 0.94:
                sid = rng.choice(students)
                if engine.students[sid].state == "Won":
                    engine.rollback_pledges(
                        sid, engine.students[sid].collected and max(engine.students[sid].collected) or "F1",
                        at=attempts,
                    )
            else:
                sid = rng.choice(students)
                if engine.students[sid].state == "Active":
                    engine.freeze_student(sid, at=attempts)
                    # Freezes without a winning block thaw again in this model.
                    engine.students[sid].state = "Active"
        except Exception:
            continue
        ops_done += 1
        # O(1) conservation identity for every wallet after every operation;
        # the full cross-check (reserved == active pledge sums, oracle replay)
        # runs periodically and at the end.
        for sponsor in sponsors:
            wallet = engine.wallets[sponsor]
            assert (
                wallet.available + wallet.reserved + engine.settled.get(sponsor, 0)
                == engine.deposited.get(sponsor, 0)
            ), f"conservation broken for {sponsor} after op {ops_done}"
            assert wallet.available >= 0 and wallet.reserved >= 0
        if ops_done % 250 == 0:
            assert engine.conservation_violations() == []
    assert ops_done >= 10_000
    assert engine.conservation_violations() == []
    replay_oracle.assert_engine_matches(engine)


def test_rebuild_reaches_identical_state():
    engine = engine_with()
    engine.deposit("SP1", 10000, at=3)
    engine.deposit("SP2", 7000, at=4)
    engine.place_pledge("SP1", "ST1", "F1", 10000, at=5)
    engine.place_pledge("SP2", "ST1", "F2", 3000, at=6)
    terms = engine.settle_win("ST1", "F1", 750, 24, at=7)
    engine.record_block_committed(1, terms, at=8)
    rebuilt = FundingEngine.rebuild(engine.events, fundraiser_ids=("F1", "F2"))
    assert rebuilt.snapshot() == engine.snapshot()
    replay_oracle.assert_engine_matches(rebuilt)


def test_chain_adoption_unwinds_abandoned_settlement():
    engine = engine_with()
    engine.deposit("SP1", 10000, at=3)
    engine.place_pledge("SP1", "ST1", "F1", 10000, at=4)
    terms = engine.settle_win("ST1", "F1", 750, 24, at=5)
    engine.record_block_committed(1, terms, at=6)
    assert engine.settled["SP1"] == 10000

    # The adopted competing chain has no contract for ST1: escrow returns.
    engine.record_chain_adopted([], tip_index=1, tip_hash_hex="ab" * 32, at=7)
    wallet = engine.wallets["SP1"]
    assert (wallet.available, wallet.reserved) == (0, 10000)
    assert engine.settled["SP1"] == 0
    assert engine.students["ST1"].state == "Active"
    assert engine.pledges["P1"].status == "Active"
    assert engine.conservation_violations() == []
    replay_oracle.assert_engine_matches(engine)

    # Re-settling after the race re-runs converges to the same terms.
    terms2 = engine.settle_win("ST1", "F1", 750, 24, at=8)
    assert terms2 == terms


def test_chain_adoption_flips_winner():
    engine = engine_with()
    engine.deposit("SP1", 10000, at=3)
    engine.deposit("SP2", 10000, at=3)
    engine.place_pledge("SP1", "ST1", "F1", 10000, at=4)
    engine.place_pledge("SP2", "ST1", "F2", 10000, at=5)
    terms = engine.settle_win("ST1", "F1", 750, 24, at=6)
    engine.record_block_committed(1, terms, at=7)

    outcome = {
        "student_id": "ST1",
        "fundraiser_id": "F2",
        "program_cost": 10000,
        "program_name": "BSc",
        "institute_name": "Inst",
        "program_duration_months": 36,
    }
    engine.record_chain_adopted([outcome], tip_index=1, tip_hash_hex="cd" * 32, at=8)
    assert engine.pledges["P1"].status == "RolledBack"
    assert engine.pledges["P2"].status == "Won"
    assert engine.wallets["SP1"].to_json()["available"] == 10000
    assert engine.settled == {"SP1": 0, "SP2": 10000}
    assert engine.conservation_violations() == []
    replay_oracle.assert_engine_matches(engine)
