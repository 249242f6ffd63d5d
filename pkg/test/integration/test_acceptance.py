"""Desk-scale simulation studies checked against their expected outcomes.

These take from minutes to hours; run them with ``pytest -m slow``.
"""

import os

import numpy as np
import pytest

from integrated_abundance.calibration import run_calibration
from integrated_abundance.mcmc import McmcConfig
from integrated_abundance.study import run_grid, run_pointcount_sweep, sweep_table

pytestmark = [pytest.mark.integration, pytest.mark.slow]

WORKERS = min(4, os.cpu_count() or 1)
EXPECTED_BETA0_WIDTHS = [0.41, 0.34, 0.28, 0.27, 0.24]


def _rows(result, parameter):
    return {(row.scenario, row.variant): row for row in result.aggregates if row.parameter == parameter}


def _median(rows, variant, column):
    return float(np.nanmedian([getattr(row, column) for (_, v), row in rows.items() if v == variant]))


class TestCalibration:
    """Test posterior rank uniformity."""

    def test_ranks_uniform(self):
        """Test 200 prior-drawn ACV replicates on 10 sites."""
        result = run_calibration(replicates=200, config=McmcConfig.desk(seed=1), seed=1, workers=WORKERS)
        assert result.parameters == ["lambda", "delta", "omega", "p"]
        for name, test in result.tests.items():
            assert test.passes(), f"{name}: p={test.pvalue:.4f}"


class TestPointCountSweep:
    """Test how the number of point-count sites drives beta0 precision."""

    def test_widths_shrink(self):
        """Test beta0 widths against the expected values and beta1 bias at 50 counts."""
        result = run_pointcount_sweep(25, config=McmcConfig.desk(), workers=WORKERS)
        table = sweep_table(result.aggregates)
        widths = [row["beta0_ci_width"] for row in table]
        assert [row["point_counts"] for row in table] == [5, 10, 20, 30, 50]
        assert all(a > b for a, b in zip(widths, widths[1:]))
        assert widths[0] >= 1.4 * widths[-1]
        for width, expected in zip(widths, EXPECTED_BETA0_WIDTHS):
            assert width == pytest.approx(expected, rel=0.35)
        assert abs(table[-1]["beta1_re_pct"]) <= 3.0


class TestIntegrationBenefit:
    """Test that adding acoustic data helps at low detection."""

    @pytest.fixture(scope="class")
    def low_detection(self):
        return run_grid(
            25,
            variants=["C", "AC", "ACV"],
            config=McmcConfig.desk(),
            scenario_filter="total_sites=50,layout=R=I,alpha1=1.2",
            workers=WORKERS,
        )

    def test_width_ordering(self, low_detection):
        """Test that AC is narrower than C and ACV no wider than AC."""
        rows = _rows(low_detection, "lambda")
        assert len({scenario for scenario, _ in rows}) == 4
        width = {v: _median(rows, v, "median_ci_width") for v in ("C", "AC", "ACV")}
        assert width["AC"] < width["C"]
        assert width["ACV"] <= width["AC"] + 0.05

    def test_bias(self, low_detection):
        """Test small median absolute relative bias for the integrated models."""
        rows = _rows(low_detection, "lambda")
        for variant in ("AC", "ACV"):
            assert _median(rows, variant, "median_abs_rel_bias_pct") <= 5.0

    def test_coverage(self, low_detection):
        """Test 95% interval coverage of lambda for the integrated models."""
        for variant in ("AC", "ACV"):
            fits = [r for r in low_detection.records if r.variant == variant and r.converged]
            covered = [r.summaries["lambda"].covers(r.truth["lambda"]) for r in fits]
            assert np.mean(covered) >= 0.90


class TestConvergenceRates:
    """Test that integrated models converge at least as often."""

    def test_ordering(self):
        """Test ACV >= AC >= max(AV, C) - 0.05 on six scenarios."""
        result = run_grid(
            25, config=McmcConfig.desk(), scenario_filter="total_sites=50,T=3,lambda=3", workers=WORKERS,
        )
        rate = {}
        for variant in ("AV", "C", "AC", "ACV"):
            fits = [r for r in result.records if r.variant == variant]
            assert len(fits) == 6 * 25
            rate[variant] = np.mean([r.converged for r in fits])
        assert rate["ACV"] >= rate["AC"] >= max(rate["AV"], rate["C"]) - 0.05
