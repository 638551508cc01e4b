import numpy as np
import pytest

from momsens import build_moment_system, load_model
from momsens.sobol import ParameterBox, evaluate_design, sample_design

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def birthdeath():
    return load_model("birthdeath")


@pytest.fixture(scope="session")
def dimerization():
    return load_model("dimerization")


@pytest.fixture(scope="session")
def bd_system(birthdeath):
    return build_moment_system(birthdeath)


@pytest.fixture(scope="session")
def dm_system(dimerization):
    return build_moment_system(dimerization)


@pytest.fixture(scope="session")
def grid():
    return np.linspace(0.0, 10.0, 101)


@pytest.fixture(scope="session")
def sobol_outputs(bd_system, dm_system, grid):
    """Design outputs at n=15000, seed=1 for both shipped models, evaluated once."""
    out = {}
    for name, system in (("birthdeath", bd_system), ("dimerization", dm_system)):
        design = sample_design(ParameterBox.from_network(system.network), 15000, 1)
        out[name] = evaluate_design(design, system, grid)
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
