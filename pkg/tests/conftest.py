from __future__ import annotations

import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# -- acceptance report ------------------------------------------------------------
import contextlib  # noqa: E402

import pytest  # noqa: E402

_LINES = pytest.StashKey[list]()


class _Criterion:
    def __init__(self) -> None:
        self.detail = ""
        self.warning = False


@pytest.fixture
def criterion(request):
    """``with criterion("C3", "title") as c:`` records PASS, FAIL or WARN."""
    lines = request.config.stash.setdefault(_LINES, [])

    @contextlib.contextmanager
    def record(cid: str, title: str):
        c = _Criterion()
        try:
            yield c
        except BaseException as exc:
            lines.append(f"FAIL {cid} {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            raise
        status = "WARN" if c.warning else "PASS"
        lines.append(f"{status} {cid} {title}" + (f" ({c.detail})" if c.detail else ""))
        print(lines[-1])

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
