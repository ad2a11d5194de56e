from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from steplearn.fixtures import desk_tree7, ieee33_network, two_bus_network
from steplearn.grid import ScenarioTree, TreeNode

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def ieee33():
    return ieee33_network()


@pytest.fixture(scope="session")
def desk7():
    return desk_tree7()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_tree(voll: float = 15_000.0, reliability: float = 1.0, rate: float = 0.0,
               annuity: float = 1.0) -> ScenarioTree:
    """Root plus two children (stage 1) and one grandchild under the first child."""
    nodes = (TreeNode("R", None, 0, 0, 1.0),
             TreeNode("a", "R", 1, 1, 0.6, 1.0),
             TreeNode("b", "R", 1, 1, 0.4, 1.0),
             TreeNode("a2", "a", 2, 2, 0.6, 1.0))
    return ScenarioTree(nodes, discount_rate=rate, voll=voll, reliability=reliability,
                        annuity_factor=annuity, name="small")


def chain_tree(stages: int = 2, **kw) -> ScenarioTree:
    nodes = [TreeNode("s0", None, 0, 0, 1.0)]
    for k in range(1, stages):
        nodes.append(TreeNode(f"s{k}", f"s{k - 1}", k, k, 1.0))
    kw.setdefault("discount_rate", 0.0)
    kw.setdefault("annuity_factor", 1.0)
    return ScenarioTree(tuple(nodes), name="chain", **kw)


__all__ = ["small_tree", "chain_tree", "two_bus_network"]
