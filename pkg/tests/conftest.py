import numpy as np
import pytest

from walklab.chain import MarkedSet, StochasticMatrix, build_reversible
from walklab.graphs import (
    StarSpec,
    complete_graph_chain,
    lazy_cycle_chain,
    path_chain,
    segmented_star_chain,
    torus_chain,
)


@pytest.fixture(scope="session")
def two_state_chain():
    """P = [[0.7, 0.3], [0.1, 0.9]]; pi = (1/4, 3/4)."""
    return build_reversible(StochasticMatrix.from_dense([[0.7, 0.3], [0.1, 0.9]]))


@pytest.fixture(scope="session")
def torus4():
    return torus_chain(4)


@pytest.fixture(scope="session")
def torus8():
    return torus_chain(8)


@pytest.fixture(scope="session")
def star3():
    return segmented_star_chain(StarSpec(3))


def random_reversible_chain(n: int, seed: int, density: float = 0.3):
    """Random walk on a random connected weighted graph with self-loops."""
    rng = np.random.default_rng(seed)
    weights = np.zeros((n, n))
    for i in range(1, n):  # random spanning tree keeps it connected
        j = int(rng.integers(0, i))
        weights[i, j] = weights[j, i] = rng.uniform(0.2, 1.0)
    extra = np.triu((rng.random((n, n)) < density)
                    * rng.uniform(0.2, 1.0, size=(n, n)), 1)
    weights += extra + extra.T
    weights[np.diag_indices(n)] = rng.uniform(0.2, 1.0, size=n)
    p = weights / weights.sum(axis=1, keepdims=True)
    pi = weights.sum(axis=1) / weights.sum()
    return build_reversible(StochasticMatrix.from_dense(p), pi)


SMALL_CHAIN_BUILDERS = {
    "two-state": lambda: (
        build_reversible(StochasticMatrix.from_dense([[0.7, 0.3], [0.1, 0.9]])),
        [1],
    ),
    "lazy-3-cycle": lambda: (lazy_cycle_chain(3), [0]),
    "torus-2": lambda: (torus_chain(2), [0]),
    "path-5": lambda: (path_chain(5), [4]),
    "complete-6": lambda: (complete_graph_chain(6), [1, 3]),
    "path-8": lambda: (path_chain(8), [0, 7]),
}


def marked_for(chain, indices):
    return MarkedSet.from_indices(indices, chain)
