import pytest

from pmstair import Affine, Step, minimize_dpmf

FORCINGS = {
    "affine_1_0": lambda: Affine(1.0, 0.0),
    "affine_2_0": lambda: Affine(2.0, 0.0),
    "step_half": lambda: Step(0.0, ((0.5, 1.0),)),
}


@pytest.fixture(scope="session")
def solved():
    """Session cache of pipeline solves keyed by (forcing name, beta, n)."""
    cache = {}

    def get(forcing_name: str, beta: float, n: int):
        key = (forcing_name, beta, n)
        if key not in cache:
            cache[key] = minimize_dpmf(FORCINGS[forcing_name](), beta, n)
        return cache[key]

    return get
