"""Shared fixture builders for the test suite."""

from teduchain.ledger import (
    Chain,
    ContactInfo,
    ContractTerms,
    InvestorShare,
    append_contract_block,
    hash_document,
)


def make_terms(
    student_id="ST-100",
    program_cost=250000,
    shares=None,
    fundraiser_id="F1",
    **overrides,
):
    if shares is None:
        shares = (
            InvestorShare("SP-7", 150000),
            InvestorShare("SP-9", 100000),
        )
    fields = dict(
        student_id=student_id,
        program_name="BSc Computing",
        institute_name="Pacific Institute of Technology",
        program_cost=program_cost,
        program_duration_months=36,
        shares=tuple(shares),
        benefit_percent_bp=750,
        benefit_period_months=24,
        fundraiser_id=fundraiser_id,
    )
    fields.update(overrides)
    return ContractTerms(**fields)


def make_contacts(terms):
    contacts = [
        ContactInfo(
            party_id=terms.student_id,
            address="12 Reef Rd",
            email=f"{terms.student_id.lower()}@example.edu",
            phone="+679-555-0100",
        )
    ]
    for share in terms.shares:
        contacts.append(
            ContactInfo(
                party_id=share.sponsor_id,
                address="8 Harbour Way",
                email=f"{share.sponsor_id.lower()}@example.org",
                phone="",
            )
        )
    return contacts


def chain_with_contracts(n=1, start=100):
    """Genesis plus n contract blocks for distinct students."""
    chain = Chain()
    for i in range(n):
        terms = make_terms(student_id=f"ST-{start + i}")
        append_contract_block(
            chain,
            terms,
            make_contacts(terms),
            hash_document(f"doc-{i}".encode()),
            "F1",
            timestamp_ms=10 + i,
        )
    return chain
