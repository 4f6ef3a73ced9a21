import numpy as np
import pytest

from ftns.controller import GainSet
from ftns.dither import DitherSpec
from ftns.flows import FlowParams
from ftns.plant import QuadraticCost

# Reference experiment: 2-d quadratic map probed by the (150, 200) pair.
REF_HSTAR = np.array([[60.0, 25.0], [25.0, 30.0]])
REF_XSTAR = np.array([1.0, 2.0])
REF_YSTAR = 1.0
REF_OMEGAS = np.array([150.0, 200.0])


@pytest.fixture(scope="session")
def ref_cost() -> QuadraticCost:
    return QuadraticCost(hstar=REF_HSTAR, xstar=REF_XSTAR, ystar=REF_YSTAR)


@pytest.fixture(scope="session")
def ref_dither() -> DitherSpec:
    return DitherSpec(a=1.0, omegas=REF_OMEGAS)


@pytest.fixture(scope="session")
def ref_flow() -> FlowParams:
    return FlowParams.from_q(3.0, 1.5, 1.0, 1e-4)


@pytest.fixture(scope="session")
def ref_gains() -> GainSet:
    return GainSet(k=5.0, K=10.0, K2=100.0)
