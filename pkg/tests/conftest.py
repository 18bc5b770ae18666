from pathlib import Path

import pytest

from tmkit.parser import parse
from tmkit.scenario import parse_scenario

REPO = Path(__file__).resolve().parent.parent
MODELS = REPO / "models"
SCENARIOS = MODELS / "scenarios"


def load_model(name: str):
    path = MODELS / f"{name}.tm"
    return parse(path.read_text(encoding="utf-8"), str(path))


def load_scenario(name: str):
    path = SCENARIOS / f"{name}.scenario"
    return parse_scenario(path.read_text(encoding="utf-8"), str(path))


@pytest.fixture(scope="session")
def login_model():
    return load_model("login_shapes")


@pytest.fixture(scope="session")
def home_model():
    return load_model("digital_home")


@pytest.fixture
def login_text():
    return (MODELS / "login_shapes.tm").read_text(encoding="utf-8")


@pytest.fixture
def home_text():
    return (MODELS / "digital_home.tm").read_text(encoding="utf-8")
