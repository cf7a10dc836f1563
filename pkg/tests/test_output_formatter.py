"""
Tests for CSV/JSON formatting and CSV read-back.
"""

import numpy as np
import pytest

from chain_diagnostics import OccupationProfile
from chain_mapping import ChainCoefficients
from errors import ChainInstabilityError, ConfigValidationError, DomainError, QuadratureError
from observables import TimeSeries
from output_formatter import OutputFormatter, exit_code_for


@pytest.fixture
def series():
    times = np.array([0.0, 2.5e-4, 5e-4])
    return TimeSeries(
        times=times,
        columns={"coherence": np.array([0.5, 1 / 3, np.pi * 1e-17]), "energy": np.array([0.0, -1e300, 2.0 / 7])},
        discarded_weight=np.array([0.0, 1e-15, 3.3e-14]),
        max_bond_dim=np.array([1, 4, 7]),
        warnings=["budget exceeded"],
    )


class TestTimeSeriesCsv:
    def test_header(self, series):
        text = OutputFormatter().format_time_series(series)
        assert text.splitlines()[0] == "t_ps,coherence,energy,discarded_weight,max_bond_dim"
        assert len(text.splitlines()) == 4

    def test_lossless_read_back(self, series, tmp_path):
        formatter = OutputFormatter()
        path = formatter.write_text(formatter.format_time_series(series), tmp_path / "series.csv")
        times, columns = formatter.read_csv(path)
        np.testing.assert_array_equal(times, series.times)
        np.testing.assert_array_equal(columns["coherence"], series.columns["coherence"])
        np.testing.assert_array_equal(columns["energy"], series.columns["energy"])
        np.testing.assert_array_equal(columns["discarded_weight"], series.discarded_weight)
        np.testing.assert_array_equal(columns["max_bond_dim"], [1, 4, 7])

    def test_read_requires_time_column(self, tmp_path):
        path = tmp_path / "coeffs.csv"
        path.write_text("n,omega_n,kappa_n\n0,1,2\n", encoding="utf-8")
        with pytest.raises(DomainError):
            OutputFormatter().read_csv(path)

    def test_read_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(DomainError):
            OutputFormatter().read_csv(path)

    def test_summary(self, series):
        summary = OutputFormatter().format_summary(series)
        assert "coherence" in summary
        assert "最大键维数: 7" in summary
        assert "budget exceeded" in summary


class TestOtherTables:
    def test_coefficients(self):
        coeffs = ChainCoefficients(np.array([1.5, 2.0]), np.array([3.0, 0.25]))
        lines = OutputFormatter().format_coefficients(coeffs).splitlines()
        assert lines == ["n,omega_n,kappa_n", "0,1.5,3", "1,2,0.25"]

    def test_occupation(self):
        profile = OccupationProfile(np.array([0.0, 0.6]), 300.0, np.array([100.0, 200.0]))
        lines = OutputFormatter().format_occupation(profile).splitlines()
        assert lines[0] == "n,occupation,min_local_dim"
        assert lines[1] == "0,0,2"
        assert lines[2].endswith(",4")


class TestRecords:
    def test_exit_codes(self):
        assert exit_code_for(DomainError("x")) == 2
        assert exit_code_for(ConfigValidationError("d_max", "bad")) == 2
        assert exit_code_for(ChainInstabilityError(4)) == 3
        assert exit_code_for(RuntimeError("x")) == 1

    def test_error_record_fields(self):
        formatter = OutputFormatter()
        record = formatter.format_error_record("chain_coefficients", ChainInstabilityError(4, 1e-20), 300.0)
        assert record["stage"] == "chain_coefficients"
        assert record["type"] == "ChainInstabilityError"
        assert record["exit_code"] == 3
        assert record["fields"]["index"] == 4
        assert record["temperature"] == 300.0

        record = formatter.format_error_record("config", ConfigValidationError("temperatures", "negative"))
        assert record["fields"]["field"] == "temperatures"
        assert record["exit_code"] == 2

        record = formatter.format_error_record("evolution", QuadratureError("no convergence", 1e-6))
        assert record["fields"]["achieved_error"] == 1e-6

    def test_manifest(self, series):
        coeffs = ChainCoefficients(np.array([1.0]), np.array([2.0]), {"support": [0.0, 350.0]})
        manifest = OutputFormatter().format_manifest(
            config={"preset": "dephasing-wscp"},
            model={"kind": "dephasing"},
            temperature=77.0,
            chain_length=1,
            local_dims=[2, 3],
            coefficients=[coeffs],
            series=series,
            wall_time=0.5,
            outputs={},
        )
        assert manifest["schema_version"] == "1.0"
        assert manifest["coefficients"][0]["checksum"] == coeffs.checksum()
        assert manifest["discarded_weight"]["final"] == 3.3e-14
        assert manifest["max_bond_dim"] == 7
        assert manifest["warnings"] == ["budget exceeded"]
