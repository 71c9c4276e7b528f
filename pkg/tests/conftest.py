import pathlib
import sys

_HERE = pathlib.Path(__file__).resolve().parent
sys.path.insert(0, str(_HERE))  # for the oracles module
_SRC = _HERE.parent / "src"
if _SRC.exists():
    sys.path.insert(0, str(_SRC))  # run against the tree without installing

import pytest

from bgcosim.network import build_ieee33


@pytest.fixture(scope="session")
def ieee33():
    return build_ieee33()


@pytest.fixture(scope="session")
def ieee33_with_ties():
    return build_ieee33(include_tie_lines=True)
