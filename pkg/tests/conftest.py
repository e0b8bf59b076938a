import pytest

from vnodesim.engine import run
from vnodesim.scenario import builtin_scenario_path, parse_scenario


@pytest.fixture(scope="session")
def paper_baseline():
    return parse_scenario(builtin_scenario_path("paper_baseline"))


@pytest.fixture(scope="session")
def paper_partitioned():
    return parse_scenario(builtin_scenario_path("paper_partitioned"))


@pytest.fixture(scope="session")
def oracle_baseline():
    return parse_scenario(builtin_scenario_path("oracle_baseline"))


@pytest.fixture(scope="session")
def oracle_partitioned():
    return parse_scenario(builtin_scenario_path("oracle_partitioned"))


@pytest.fixture(scope="session")
def baseline_run(paper_baseline):
    return run(paper_baseline, check_invariants=1)


@pytest.fixture(scope="session")
def partitioned_run(paper_partitioned):
    return run(paper_partitioned, check_invariants=1)


@pytest.fixture(scope="session")
def scaled_baseline_run(oracle_baseline):
    return run(oracle_baseline, check_invariants=2)


@pytest.fixture(scope="session")
def scaled_partitioned_run(oracle_partitioned):
    return run(oracle_partitioned, check_invariants=2)
