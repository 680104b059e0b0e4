import json
from pathlib import Path

import pytest

from hearth.admin import load_policy
from hearth.model import load_home_config

REPO = Path(__file__).resolve().parent.parent
DEMO = REPO / "demo"


@pytest.fixture(scope="session")
def config():
    return load_home_config(DEMO / "home.json")


@pytest.fixture(scope="session")
def home_doc():
    return json.loads((DEMO / "home.json").read_text())


@pytest.fixture()
def bundle():
    # fresh per test: the script manager mutates policy-owned state
    return load_policy(DEMO / "policy.json")


@pytest.fixture(scope="session")
def registry(config):
    return config.registry


@pytest.fixture(scope="session")
def demo_script():
    return (DEMO / "script.rules").read_text()
