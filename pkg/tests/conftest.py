import datetime as dt
import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from countyimpact.core import DEFAULT_EVENTS, CountyEvent, CountyRef
from countyimpact.gazetteer import Gazetteer

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=1000,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]
MINI = ROOT / "data" / "mini"


@pytest.fixture(scope="session")
def gazetteer() -> Gazetteer:
    return Gazetteer.bundled()


@pytest.fixture(scope="session")
def mini_dir() -> Path:
    if not (MINI / "config.ini").exists():
        pytest.skip("data/mini missing; run scripts/make_mini_dataset.py")
    return MINI


def county_event(fips="06037", name="Los Angeles County", state="CA", event_id=9) -> CountyEvent:
    return CountyEvent(CountyRef(fips, name, state), DEFAULT_EVENTS[event_id])


def day(y, m, d) -> dt.date:
    return dt.date(y, m, d)


# criterion number -> (title, "PASS" | "FAIL", detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, verdict, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{verdict} [{n:2d}] {title}" + (f": {detail}" if detail else ""))
