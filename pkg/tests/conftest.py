import pytest

from otomo.marginals import PauliSet

#: nine four-qubit settings covering all two-body Pauli assignments,
#: with exactly one constant row
MAIN4 = PauliSet(
    4, ("XXXX", "ZYYX", "YZZX", "YYXY", "XZYY", "ZXZY", "ZZXZ", "YXYZ", "XYZZ")
)

#: first three columns of MAIN4: a nine-setting pair-complete set on 3 qubits
MAIN3 = PauliSet(3, tuple(s[:3] for s in MAIN4.settings))


@pytest.fixture
def main4() -> PauliSet:
    return MAIN4


@pytest.fixture
def main3() -> PauliSet:
    return MAIN3
