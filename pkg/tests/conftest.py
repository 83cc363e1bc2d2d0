import json
import os

import pytest

_HERE = os.path.dirname(__file__)


@pytest.fixture(scope="session")
def baselines() -> dict:
    with open(os.path.join(_HERE, "baselines.json"), "r", encoding="utf-8") as fh:
        return json.load(fh)
