import json
import subprocess
import sys
from pathlib import Path

import pytest

from teduchain.cli import main
from teduchain.ledger import GENESIS

SCENARIOS = Path(__file__).parent.parent / "scenarios"


@pytest.fixture
def simulated_ledger(tmp_path):
    out = tmp_path / "out"
    code = main(
        [
            "sim",
            "--scenario",
            str(SCENARIOS / "contested_rollback.json"),
            "--seed",
            "5",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    return out / "ledger.F1.jsonl"


def test_sim_writes_ledgers_and_report(simulated_ledger, capsys):
    out = simulated_ledger.parent
    assert (out / "ledger.F2.jsonl").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["converged"] is True
    assert report["safety_ok"] is True
    assert report["conservation_ok"] is True


def test_verify_valid_ledger_exits_zero(simulated_ledger, capsys):
    assert main(["verify", "--ledger", str(simulated_ledger)]) == 0
    assert "valid" in capsys.readouterr().out


def test_verify_tampered_ledger_exits_one(simulated_ledger, capsys, tmp_path):
    data = bytearray(simulated_ledger.read_bytes())
    # Corrupt one byte in the middle of the second line.
    second = data.index(b"\n") + 1
    data[second + 40] ^= 0x01
    tampered = tmp_path / "tampered.jsonl"
    tampered.write_bytes(bytes(data))
    assert main(["verify", "--ledger", str(tampered)]) == 1
    out = capsys.readouterr().out
    assert "invalid at index" in out


def test_verify_missing_file_exits_two(tmp_path, capsys):
    assert main(["verify", "--ledger", str(tmp_path / "absent.jsonl")]) == 2


def test_inspect_genesis(simulated_ledger, capsys):
    assert main(["inspect", "--ledger", str(simulated_ledger), "--index", "0"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == GENESIS.to_json_obj()


def test_inspect_contract_block_shows_exact_shares(simulated_ledger, capsys):
    assert main(["inspect", "--ledger", str(simulated_ledger), "--index", "1"]) == 0
    printed = json.loads(capsys.readouterr().out)
    terms = printed["payload"]["terms"]
    assert sum(s["amount"] for s in terms["shares"]) == terms["program_cost"]


def test_inspect_out_of_range(simulated_ledger, capsys):
    assert main(["inspect", "--ledger", str(simulated_ledger), "--index", "99"]) == 1
    assert "out of range" in capsys.readouterr().err


def test_inspect_shows_amendment_linkage(tmp_path, capsys):
    from teduchain.ledger import ContactInfo, make_amendment_block
    from teduchain.node import persist_chain
    from helpers import chain_with_contracts

    chain = chain_with_contracts(1)
    make_amendment_block(
        chain, (1, chain.blocks[1].hash), [ContactInfo("ST-100", address="Moved")], "F1", 9
    )
    path = tmp_path / "ledger.jsonl"
    persist_chain(chain, path)
    assert main(["inspect", "--ledger", str(path), "--index", "2"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["kind"] == "amendment"
    assert printed["amends"] == {"index": 1, "hash": chain.blocks[1].hash.hex()}


def test_sim_rejects_bad_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"nodes": []}')
    assert main(["sim", "--scenario", str(bad), "--seed", "1", "--out", str(tmp_path / "o")]) == 1
    assert "bad scenario" in capsys.readouterr().err


def test_sim_missing_scenario_exits_two(tmp_path):
    assert (
        main(["sim", "--scenario", str(tmp_path / "nope.json"), "--seed", "1",
              "--out", str(tmp_path / "o")])
        == 2
    )


def test_run_rejects_bad_config(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text("{}")
    assert main(["run", "--config", str(config)]) == 1


def test_console_entry_point_works():
    result = subprocess.run(
        [sys.executable, "-m", "teduchain", "verify", "--ledger", "/definitely/missing"],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 2
