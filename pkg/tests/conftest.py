from importlib import resources

import pytest

from magic_energy.device import default_params
from magic_energy.program import parse_netlist, parse_simpler


def data_text(name: str) -> str:
    return resources.files("magic_energy").joinpath("data", name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def params():
    return default_params()


@pytest.fixture(scope="session")
def half_adder_text():
    return data_text("half_adder.json")


@pytest.fixture(scope="session")
def half_adder(half_adder_text):
    return parse_simpler(half_adder_text)


@pytest.fixture(scope="session")
def half_adder_net():
    return parse_netlist(data_text("half_adder.net"))
