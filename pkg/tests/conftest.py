import numpy as np
import pytest

from charge_eq.model import ClosedFormChargingTime, ModelParams, RateChargingTime, RateCurve


@pytest.fixture
def params_exo():
    """Charging-characteristics case: c=0.2, tau=1, r_t=1, w_A=0.5, w_B=0."""
    return ModelParams(c=0.2, tau=1.0, r_t=1.0, w_a_x=0.5, w_b_x=0.0)


@pytest.fixture
def params_endo():
    """Endogenous flat/decreasing-rate case: w_A=1, w_B=0, eps=1."""
    return ModelParams(c=0.2, tau=1.0, r_t=1.0, w_a_x=1.0, w_b_x=0.0, epsilon=1.0)


@pytest.fixture
def flat():
    return ClosedFormChargingTime("affine")


@pytest.fixture
def quadratic():
    return ClosedFormChargingTime("quadratic")


def random_rate_curve(rng, max_knots=8):
    """Non-increasing, strictly positive piecewise-linear rate curve."""
    n = int(rng.integers(2, max_knots + 1))
    soc = np.concatenate([[0.0], np.sort(rng.uniform(0.02, 0.98, n - 2)), [1.0]])
    soc = np.unique(soc)
    start = rng.uniform(0.5, 3.0)
    drops = rng.uniform(0.0, 1.0, len(soc) - 1)
    drops *= rng.uniform(0.0, 0.9) * start / max(drops.sum(), 1e-12)
    power = start - np.concatenate([[0.0], np.cumsum(drops)])
    return RateCurve.from_arrays(soc, power, monotone=True)


def random_params(rng, **fixed):
    c = rng.uniform(0.05, 0.5)
    r_t = rng.uniform(c + 0.1, 1.0)
    values = dict(
        c=c,
        tau=rng.uniform(0.2, 2.0),
        r_t=r_t,
        w_a_x=rng.uniform(0.0, 1.5),
        w_b_x=rng.uniform(0.0, 1.5),
        epsilon=rng.uniform(0.0, 1.5),
        capacity_e=rng.uniform(0.3, 2.0),
    )
    values.update(fixed)
    return ModelParams(**values)


def random_charging_time(rng, params):
    curve = random_rate_curve(rng)
    return RateChargingTime(curve, params.capacity_e, params.r_t)


# --- acceptance reporting ----------------------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and not report.failed):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True})
    entry["ok"] &= not report.failed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {entry['title']}")
