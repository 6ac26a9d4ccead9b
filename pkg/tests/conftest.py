import copy

import numpy as np
import pytest
from hypothesis import settings

from conley_switch import corpus
from conley_switch.switching import validate_system

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

TOGGLE = {
    "gamma": ["1", "1"],
    "xi": [{"value": "1", "tag": 2}],
    "eta": [{"value": "1", "tag": 1}],
    "lambda": {"0,0": ["2", "2"], "1,0": ["2", "0.5"], "0,1": ["0.5", "2"], "1,1": ["0.5", "0.5"]},
}
NEG_FEEDBACK = {
    "gamma": ["1", "1"],
    "xi": [{"value": "1", "tag": 2}],
    "eta": [{"value": "1", "tag": 1}],
    "lambda": {"0,0": ["2", "0.5"], "1,0": ["2", "2"], "1,1": ["0.5", "2"], "0,1": ["0.5", "0.5"]},
}
SINGLE = {"gamma": ["1", "1"], "xi": [], "eta": [], "lambda": {"0,0": ["1", "1"]}}


def spec(base, **changes):
    out = copy.deepcopy(base)
    out.update(changes)
    return out


@pytest.fixture
def ts():
    return validate_system(TOGGLE)


@pytest.fixture
def nf():
    return validate_system(NEG_FEEDBACK)


@pytest.fixture
def single():
    return validate_system(SINGLE)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def corpus_systems():
    """Valid corpus systems with at least one finite threshold."""
    out = []
    for name in corpus.names():
        sf = corpus.load(name)
        if sf.system.I + sf.system.J > 0:
            out.append((name, sf.system))
    return out
