import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mohillvallea.problems import get_problem


@pytest.fixture(scope="session")
def mindist2():
    return get_problem("mindist2")


@pytest.fixture(scope="session")
def mindist2_reference(mindist2):
    return mindist2.reference_set(2000)


@pytest.fixture(scope="session")
def sympart1():
    return get_problem("sym-part1")


@pytest.fixture(scope="session")
def sympart1_reference(sympart1):
    return sympart1.reference_set(5000)
