import pytest

from szegolift import build_chart, generate_algebra, lifted_fields


class LiftedModel:
    """One k-value worth of shared symbolic machinery."""

    def __init__(self, k):
        self.k = k
        self.spec, self.realization = generate_algebra(k)
        self.chart = build_chart(self.spec)
        self.X1t, self.X2t = lifted_fields(self.chart)


@pytest.fixture(scope="session")
def model_k2():
    return LiftedModel(2)


@pytest.fixture(scope="session")
def model_k3():
    return LiftedModel(3)
