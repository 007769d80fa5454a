from __future__ import annotations

import numpy as np
import pytest

from teq.alerts import RawAlert


def make_alert(i: int, t: int, machine: str = "m0", customer: str = "c0", sensor: str = "s0",
               severity: float = 1.0, body: dict | None = None) -> RawAlert:
    return RawAlert(f"a{i:05d}", t, customer, machine, sensor, severity, body or {})


def random_stream(n: int, seed: int, span: int = 86400, customers: int = 5, machines: int = 40,
                  sensors: int = 8) -> list[RawAlert]:
    """Chronological stream with bursty ties and random severities."""
    rng = np.random.default_rng(seed)
    times = np.sort(rng.integers(0, span, size=n))
    cust = rng.integers(0, customers, size=n)
    mach = rng.integers(0, machines, size=n)
    sens = rng.integers(0, sensors, size=n)
    sev = np.round(rng.uniform(0, 10, size=n), 3)
    return [
        RawAlert(f"a{i:05d}", int(times[i]), f"c{cust[i]}", f"c{cust[i]}-m{mach[i]}", f"s{sens[i]}",
                 float(sev[i]), {})
        for i in range(n)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
