import itertools
import math

import pytest
from hypothesis import settings

from gratinglab.forward import MediumCoefficients
from gratinglab.inverse import SearchFamily, SearchSpace
from gratinglab.modes import IncidentWave
from gratinglab.profile import validate_profile

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

PI = math.pi


@pytest.fixture
def medium():
    # k1^2 = 2.25 = lambda * k2^2: on the boundary of the uniqueness condition
    return MediumCoefficients(1.5, 1.0, 2.25)


@pytest.fixture
def wave():
    return IncidentWave(1.5, 0.0)


@pytest.fixture
def binary():
    return validate_profile([0.0, PI], [1.0, 2.0])


def desk_space() -> SearchSpace:
    """81 candidates: the binary family on {0, pi} plus distractor topologies."""
    h5 = (0.5, 1.0, 1.5, 2.0, 2.5)
    h4 = (1.0, 1.5, 2.0, 2.5)

    def distinct(hs):
        return tuple(a for a in itertools.product(hs, repeat=2) if a[0] != a[1])

    return SearchSpace((
        SearchFamily((0.0, PI), h5),
        SearchFamily((0.0, PI / 2), assignments=distinct(h5)),
        SearchFamily((PI / 2, 3 * PI / 2), assignments=distinct(h5)),
        SearchFamily((PI / 4, 5 * PI / 4), assignments=distinct(h4)),
        SearchFamily((0.0, PI / 2, PI, 3 * PI / 2), assignments=(
            (1.0, 2.0, 1.0, 2.0), (2.0, 1.0, 2.0, 1.0), (1.0, 1.5, 1.0, 1.5), (1.5, 1.0, 1.5, 1.0),
        )),
    ))
