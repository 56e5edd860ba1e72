import numpy as np
import pytest

from d2dmarket import validate_scenario

ALPHA_A = [1.0, 0.95, 0.90, 0.85, 0.80]
BUYER_INTERESTS = [0.95, 0.90, 0.85, 0.80, 0.75]


def scenario_a_doc(interest=1.0, n_users=1):
    return {
        "sizes": [100] * 5,
        "freshness": ALPHA_A,
        "users": [{"interests": [interest] * 5, "offpeak_load": 0}] * n_users,
        "connectivity": 0,
        "beta": 0.75,
        "price_cap": 1.0,
    }


def two_user_doc(omega=1.0):
    return {
        "sizes": [100] * 5,
        "freshness": [0.9] * 5,
        "users": [
            {"interests": [1.0] * 5, "offpeak_load": 0},
            {"interests": BUYER_INTERESTS, "offpeak_load": 0},
        ],
        "connectivity": omega,
        "beta": 0.75,
        "price_cap": 1.0,
    }


@pytest.fixture
def scenario_a():
    return validate_scenario(scenario_a_doc())


@pytest.fixture
def two_users():
    return validate_scenario(two_user_doc())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def single(size=100.0, alpha=0.9, p=1.0, load=0.0, beta=0.75, cap=1.0):
    return validate_scenario(
        {
            "sizes": [size],
            "freshness": [alpha],
            "users": [{"interests": [p], "offpeak_load": load}],
            "beta": beta,
            "price_cap": cap,
        }
    )


_ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    _ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(_ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[number])
