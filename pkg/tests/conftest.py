from __future__ import annotations

import pytest

from cgolab.grid import DomainSpec, PotentialDescriptor, sample_potential

# Filled by test_acceptance.py; printed once at the end of the session.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def gaussian(amplitude, center, width) -> dict:
    return {"type": "gaussian", "amplitude": amplitude, "center": list(center), "width": width}


def potential(dom: DomainSpec, *terms, N: float = 1e3):
    return sample_potential(PotentialDescriptor.from_dict({"terms": list(terms), "s": 2.5, "N": N}), dom)


@pytest.fixture(scope="session")
def cube16() -> DomainSpec:
    return DomainSpec(0.5, 1.0, 1.3, 16)


@pytest.fixture(scope="session")
def thin16() -> DomainSpec:
    return DomainSpec(0.1, 1.0, 1.01, 16)


@pytest.fixture(scope="session")
def cube_pair(cube16):
    q1 = potential(cube16, gaussian(1.0, (0.0, 0.0, -0.5), 0.15))
    q2 = potential(cube16, gaussian(1.0, (0.0, 0.0, -0.5), 0.15), gaussian(0.8, (0.1, -0.1, -0.45), 0.12))
    return q1, q2


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
