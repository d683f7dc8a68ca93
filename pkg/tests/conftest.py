from __future__ import annotations

import logging

import numpy as np
import pytest

from cvbell.fock import FockTensor
from cvbell.states import StateSpec, build


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger("cvbell")
    for handler in root.handlers:
        handler.close()
    root.handlers.clear()
    root.setLevel(logging.NOTSET)


@pytest.fixture
def gen() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def tmss_half() -> FockTensor:
    return build(StateSpec("tmss", r=0.5))


@pytest.fixture
def single_photon_quarter() -> FockTensor:
    return build(StateSpec("single_photon", theta=np.pi / 4, phi=0.0))


@pytest.fixture
def ghz_three() -> FockTensor:
    return build(StateSpec("ghz_vacuum", modes=3, k=1))
