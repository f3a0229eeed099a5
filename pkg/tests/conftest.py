import sys
from pathlib import Path

import pytest

from lendsim.fixedpoint import to_wad
from lendsim.ledger import Token

TESTS = Path(__file__).parent
ROOT = TESTS.parent
sys.path.insert(0, str(TESTS))


@pytest.fixture
def scenarios_dir():
    return ROOT / "scenarios"


@pytest.fixture
def fixtures_dir():
    return TESTS / "fixtures"


def w(x) -> int:
    return to_wad(x)


TOKENS = {
    0: Token(0, "ETH"),
    1: Token(1, "DAI", is_stablecoin=True),
    2: Token(2, "USDC", is_stablecoin=True),
    3: Token(3, "COMP"),
}
