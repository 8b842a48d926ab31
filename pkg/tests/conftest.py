from __future__ import annotations

import pytest

from freqmark.lm.base import LogitsModel
from freqmark.lm.reference import ReferenceModel, bundled_human_path
from freqmark.signal import sinusoidal_signal


@pytest.fixture(scope="session")
def ref_model():
    return ReferenceModel()


@pytest.fixture(scope="session")
def human_text():
    return bundled_human_path().read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def signal10():
    return sinusoidal_signal(10, 1, 5)


def uniform_model(n: int, k_max: int = 5) -> LogitsModel:
    return LogitsModel([f"w{i}" for i in range(n)], lambda ctx: [0.0] * n, k_max=min(k_max, n))
