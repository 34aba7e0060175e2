import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def textured(rng, h, w, c=1, lo=20, hi=235):
    return rng.integers(lo, hi, size=(h, w, c)).astype(np.uint8)


# acceptance criteria report: one PASS/FAIL line per @pytest.mark.criterion test
def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    item.config._criteria[number] = (call.excinfo is None, title, detail)


def pytest_terminal_summary(terminalreporter, config):
    rows = getattr(config, "_criteria", {})
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(rows):
        ok, title, detail = rows[number]
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
