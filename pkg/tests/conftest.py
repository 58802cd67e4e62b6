import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cmcg.controllability import CmcgOptions, prepare
from cmcg.scenarios import ScatteringSpec, neumann_1d, sound_hard_1d, sound_soft_1d

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def soft_p2():
    """Sound-soft 1D problem, P2, RK4 on 16 elements."""
    p = sound_soft_1d(16)
    system, stepper = prepare(p, CmcgOptions(order=2, scheme="rk4"))
    return p, system, stepper


@pytest.fixture(scope="session")
def soft_p2_leapfrog():
    p = sound_soft_1d(16)
    system, stepper = prepare(p, CmcgOptions(order=2, scheme="leapfrog"))
    return p, system, stepper


@pytest.fixture(scope="session")
def neumann_p2():
    p = neumann_1d(16)
    system, stepper = prepare(p, CmcgOptions(order=2, scheme="rk4"))
    return p, system, stepper


@pytest.fixture(scope="session")
def hard_p2():
    p = sound_hard_1d(16)
    system, stepper = prepare(p, CmcgOptions(order=2, scheme="rk4"))
    return p, system, stepper


@pytest.fixture(scope="session")
def square_small():
    """Coarse 2D square-obstacle scattering problem (P1, leapfrog, lumped)."""
    p = ScatteringSpec(box=3.0, obstacle="square", size=1.0, h=0.125).build()
    system, stepper = prepare(p, CmcgOptions(order=1, scheme="leapfrog"))
    return p, system, stepper


# one PASS/FAIL line per acceptance criterion in the terminal summary ---------------------


_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    num, title = props["criterion"]
    entry = _CRITERIA.setdefault(num, {"title": title, "ok": True, "details": []})
    entry["ok"] &= report.passed
    if props.get("detail"):
        entry["details"].append(props["detail"])


def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", tuple(m.args)))


def pytest_terminal_summary(terminalreporter, config):
    crit = _CRITERIA
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(crit):
        e = crit[num]
        line = f"criterion {num:2d} {'PASS' if e['ok'] else 'FAIL'}  {e['title']}"
        if e["details"]:
            line += "  [" + "; ".join(e["details"]) + "]"
        terminalreporter.write_line(line)
