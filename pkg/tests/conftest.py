import sys

import numpy as np
import pytest

from privbandit.geometry import Hypercube, L1Ball, L2Ball, PartitionMatroidBase, Simplex
from privbandit.randomness import RandomSource


@pytest.fixture
def src():
    return RandomSource(12345)


ALL_DOMAINS = [
    Simplex(4),
    Hypercube(3),
    Hypercube(3, side=2.0, low=-1.0),
    L1Ball(4, radius=1.5),
    L2Ball(3, radius=2.0),
    PartitionMatroidBase([2, 3], [1, 2]),
]


@pytest.fixture(params=ALL_DOMAINS, ids=lambda d: repr(d))
def domain(request):
    return request.param



def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
