import json
import math
from pathlib import Path

import pytest

from cli.main import main
from core.schemas.market import MarketFile

MARKETS = Path(__file__).resolve().parents[1] / "data" / "markets"
MARKET_A = str(MARKETS / "instance_a.json")
MARKET_B = str(MARKETS / "instance_b.json")


@pytest.fixture
def arbitrage_file(tmp_path, arbitrage_tree):
    path = tmp_path / "arbitrage.json"
    path.write_text(MarketFile.from_market(arbitrage_tree, []).model_dump_json())
    return str(path)


def _json_out(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


def test_solve_reports_closed_form(capsys):
    code = main(["solve", "--market", MARKET_B, "--x", "1", "--q", "1", "--format", "json"])
    assert code == 0
    report = _json_out(capsys)
    assert report["schema_version"] == "1.0"
    assert report["command"] == "solve"
    results = report["results"]
    assert results["u"] == pytest.approx(math.log(2.0) / 3.0, abs=1e-10)
    assert results["y"] == pytest.approx(5.0 / 6.0, abs=1e-9)
    assert results["utility_based_price"] == pytest.approx([0.2], abs=1e-9)
    assert results["certainty_equivalent"] == pytest.approx((16.0 / 9.0) ** (1.0 / 3.0) - 1.0, abs=1e-9)
    assert all(check["passed"] for check in report["checks"])
    assert "timing" not in report


def test_solve_outside_cone_exits_3(capsys):
    code = main(["solve", "--market", MARKET_B, "--x", str(1.0 / 3.0), "--q", "-1"])
    assert code == 3
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "NotInKError"
    assert error["details"]["minimal_capital"] == pytest.approx(1.0 / 3.0)


def test_arbitrage_market_exits_2(capsys, arbitrage_file):
    assert main(["solve", "--market", arbitrage_file]) == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "NoEMMError"
    assert error["details"]["arbitrage"]["holdings"]["root"][0] > 0


def test_price_reports_intervals(capsys):
    assert main(["price", "--market", MARKET_B, "--q", "1", "--format", "json"]) == 0
    results = _json_out(capsys)["results"]
    call = results["claims"]["call"]
    assert call["interval"] == pytest.approx([0.0, 1.0 / 3.0], abs=1e-12)
    assert call["replicable"] is False
    assert results["interior_measure"] == pytest.approx([0.25, 0.25, 0.5], abs=1e-12)
    assert results["price_set_witness"]["inside"] is True
    assert results["differentiability"]["unique_price"] is True


def test_text_output(capsys):
    assert main(["solve", "--market", MARKET_A, "--format", "text", "--timing"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("solve (schema 1.0)")
    assert "PASSED" in out
    assert "timing:" in out


def test_csv_only_for_verify(capsys):
    assert main(["solve", "--market", MARKET_A, "--format", "csv"]) == 1
    assert "csv output is only available for verify" in capsys.readouterr().err


def test_verify_market_as_csv(capsys):
    code = main(["verify", "--market", MARKET_A, "--q", "1", "--format", "csv"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "check,status,residual,tolerance,detail"
    assert all(",FAIL," not in line for line in lines[1:])


def test_verify_with_injected_fault_fails(capsys):
    code = main(["verify", "--market", MARKET_A, "--q", "0", "--inject-fault", "--format", "json"])
    assert code == 1
    checks = _json_out(capsys)["checks"]
    failed = [c["name"] for c in checks if not c["passed"]]
    assert any(name.endswith("dual equals marginal utility") for name in failed)


def test_gen_is_deterministic(capsys, tmp_path):
    out = tmp_path / "market.json"
    assert main(["gen", "--seed", "7", "--out", str(out)]) == 0
    assert main(["gen", "--seed", "7"]) == 0
    assert capsys.readouterr().out == out.read_text()
    market = MarketFile.model_validate_json(out.read_text())
    assert market.metadata["seed"] == 7


def test_gen_fixture_matches_shipped_file(capsys):
    assert main(["gen", "--fixture", "B"]) == 0
    assert capsys.readouterr().out == Path(MARKET_B).read_text()


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--market", "missing.json"],
        ["solve", "--market", MARKET_B, "--q", "1,2"],
        ["solve"],
        ["solve", "--market", MARKET_B, "--utility", "exp"],
        ["solve", "--market", MARKET_B, "--tol-grad", "0"],
    ],
)
def test_usage_errors_exit_1(capsys, argv):
    assert main(argv) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["exit_code"] == 1


def test_unknown_command_is_rejected():
    with pytest.raises(SystemExit):
        main(["hedge"])
