import math

from poreflow import studies
from poreflow.studies import OracleResult, check_elliptic, check_gauss, run_validation


def test_elliptic_oracle_runs_and_passes() -> None:
    result = check_elliptic()

    assert result.passed, result.detail
    assert result.value <= 1e-12


def test_validation_records_a_raising_oracle_as_failed(monkeypatch) -> None:
    def broken() -> OracleResult:
        raise ValueError("tolerance rejected")

    monkeypatch.setattr(studies, "ORACLES", (check_gauss, broken))
    results = run_validation()

    assert [result.name for result in results] == ["gauss_exactness", "broken"]
    assert results[0].passed
    assert not results[1].passed
    assert math.isnan(results[1].value)
    assert results[1].detail == "ValueError: tolerance rejected"
