import pytest

import badgeforge as bf

DISTRIBUTIONS = {
    "uniform": bf.Uniform01(),
    "power2": bf.Power(2.0),
    "power5": bf.Power(5.0),
    "longtail3": bf.LongTail(3.0),
    "longtail100": bf.LongTail(100.0),
}

CONVEX_N = 64

# (status, population size) pairs; the convex law is used at its reference size.
STATUSES = {
    "linear": (bf.Linear(), bf.LARGE),
    "linear64": (bf.Linear(), 64),
    "concave": (bf.ConcavePower(0.5), bf.LARGE),
    "concave64": (bf.ConcavePower(0.5), 64),
    "convex": (bf.ConvexReciprocal(CONVEX_N), CONVEX_N),
}


@pytest.fixture(params=sorted(DISTRIBUTIONS))
def dist(request):
    return DISTRIBUTIONS[request.param]


@pytest.fixture(params=sorted(STATUSES))
def status_n(request):
    return STATUSES[request.param]


@pytest.fixture
def uniform_linear():
    return bf.Setting(bf.Uniform01(), bf.Linear(), bf.LARGE)


# Acceptance criterion results, printed once at the end of the session.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
