import pytest
from fractions import Fraction

from treesplit.model import (
    Deterministic,
    Mixture,
    SplittingSpec,
    Symmetric,
    make_qary_spec,
)


@pytest.fixture
def knuth_spec():
    """Binary splits with fair coin routing, stop below 2."""
    return make_qary_spec(2, 2)


@pytest.fixture
def asym_spec():
    """Binary splits with fixed (1/3, 2/3) routing; non-lattice support."""
    return SplittingSpec(
        threshold=2,
        branch=((2, Fraction(1)),),
        weight_laws={2: Deterministic(weights=(Fraction(1, 3), Fraction(2, 3)))},
    )


@pytest.fixture
def g23_spec():
    """Equiprobable fair 2-way or 3-way splits; non-lattice support."""
    return SplittingSpec(
        threshold=2,
        branch=((2, Fraction(1, 2)), (3, Fraction(1, 2))),
        weight_laws={2: Symmetric(), 3: Symmetric()},
    )


@pytest.fixture
def mixture_spec():
    """Binary splits whose routing vector is drawn from two cases."""
    return SplittingSpec(
        threshold=2,
        branch=((2, Fraction(1)),),
        weight_laws={
            2: Mixture(
                cases=(
                    (Fraction(1, 2), (Fraction(1, 4), Fraction(3, 4))),
                    (Fraction(1, 2), (Fraction(1, 16), Fraction(15, 16))),
                )
            )
        },
    )
