import sys
from pathlib import Path

import pytest

from gridcast import tensor as T

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(autouse=True)
def fresh_tape():
    T.reset_tape()
    yield
    T.reset_tape()
