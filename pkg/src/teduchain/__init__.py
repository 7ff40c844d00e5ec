"""TEduChain: crowdfunded education contracts on a replicated hash chain.

Fundraiser nodes race to collect a student's full program cost from sponsor
pledges; the first to finish mines an immutable contract block onto a
SHA-256 hash chain shared by every node. The package splits into:

- :mod:`teduchain.ledger` — blocks, canonical hashing, verification
- :mod:`teduchain.funding` — wallets, pledge escrow, settlement, rollback
- :mod:`teduchain.registry` — accounts, applications, eligibility
- :mod:`teduchain.consensus` — win claims, tie-breaking, fork choice, wire format
- :mod:`teduchain.node` — one fundraiser node wired together
- :mod:`teduchain.service` — live HTTP API and peer transport
- :mod:`teduchain.sim` — deterministic multi-node simulator
- :mod:`teduchain.cli` — ``teduchain run | sim | verify | inspect``
"""

__version__ = "0.1.0"
