import numpy as np
import pytest

from vnfscale.dataset import build_internet2, make_dataset
from vnfscale.model import LinkSpec, NetworkTopology, NodeSpec, SfcRequest, VnfType
from vnfscale.solver import SolverConfig


@pytest.fixture(scope="session")
def internet2():
    return build_internet2()


@pytest.fixture(scope="session")
def line3():
    # 0 -- 1 -- 2, 10 ms per hop, all deployable
    return NetworkTopology(
        tuple(NodeSpec(i, True) for i in range(3)),
        (LinkSpec(0, 1, 10.0), LinkSpec(1, 2, 10.0)),
        name="line3",
    )


@pytest.fixture(scope="session")
def triangle():
    # 3-cycle with distinct latencies, node 2 not deployable
    return NetworkTopology(
        (NodeSpec(0, True), NodeSpec(1, True), NodeSpec(2, False)),
        (LinkSpec(0, 1, 5.0), LinkSpec(1, 2, 7.0), LinkSpec(0, 2, 20.0)),
        name="triangle",
    )


@pytest.fixture(scope="session")
def tiny_dataset(internet2):
    cfg = SolverConfig(mode="local_search", alpha=0.2)
    return make_dataset(internet2, 10, 3, cfg, seed=5)


def make_request(ingress, egress, chain, sla=None, rid=0):
    types = tuple(
        VnfType.from_label(v) if isinstance(v, str) else VnfType(v) for v in chain
    )
    return SfcRequest(rid, ingress, egress, types, sla)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
