import numpy as np
import pytest

from assetval.curve import CurveParams
from assetval.ingest import Category, RunConfig
from assetval.synthetic import make_asset, midpoint_params

# criterion lines collected by test_acceptance.py and printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def config():
    return RunConfig()


@pytest.fixture
def growing_asset():
    """Still climbing: last YoY growth well above 5%."""
    return make_asset("grow", midpoint_params(4000.0, 0.9, 9.0), 7, first_year=2015,
                      ip_expiry_year=2026, category=Category.CANCER)


@pytest.fixture
def saturated_asset():
    """Plateau reached around 2011 and observed flat through 2016."""
    return make_asset("flat", CurveParams(1000.0, 3.0, -1.0, 30.0), 12, first_year=2005,
                      ip_expiry_year=2025)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
