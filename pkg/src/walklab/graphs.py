"""Builders for the chain families under study: the lazy torus walk, the
segmented star, structured torus marked sets, and the bipartite double cover.

Vertex orderings are deterministic and documented per builder so that
serialized chains are reproducible byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .chain import (
    FULL_CHECK_LIMIT,
    MarkedSet,
    ReversibleChain,
    StochasticMatrix,
    build_reversible,
    is_strongly_connected,
)
from .errors import ResultNotErgodic, SpecViolation


@dataclass(frozen=True)
class TorusSpec:
    """Marked-grid parameters on an N x N torus.

    The marked set is the union of a dense k1 x k1 subgrid with spacing d1
    anchored at the origin and a sparse global subgrid with spacing d.
    Requires d1 | d, d | N (condition C4) and k1*d1 <= N.
    """

    side: int
    d1: int
    k1: int
    d: int

    def __post_init__(self):
        if self.side < 2:
            raise SpecViolation("torus side must be >= 2")
        if min(self.d1, self.k1, self.d) < 1:
            raise SpecViolation("d1, k1, d must be positive")
        if self.d % self.d1 != 0:
            raise SpecViolation(f"d1={self.d1} must divide d={self.d}")
        if self.side % self.d != 0:
            raise SpecViolation(f"d={self.d} must divide N={self.side}")
        if self.k1 * self.d1 > self.side:
            raise SpecViolation(
                f"k1*d1={self.k1 * self.d1} exceeds N={self.side}"
            )

    @property
    def overlap_side(self) -> int:
        """Side length k of the overlap grid between the two subgrids."""
        return -(-self.k1 * self.d1 // self.d)  # ceil

    @property
    def marked_count(self) -> int:
        return self.k1**2 + (self.side // self.d) ** 2 - self.overlap_side**2

    def asymptotic_ratios(self) -> dict:
        """Ratios behind the asymptotic conditions C1-C3, reported without
        pass/fail semantics (they only constrain families, not fixed specs)."""
        n_side = self.side
        return {
            "k1*d1/N": self.k1 * self.d1 / n_side,
            "N/(k1*d)": n_side / (self.k1 * self.d),
            "d^2*log(d)/N^2": self.d**2 * math.log(max(self.d, 2)) / n_side**2,
        }

    @classmethod
    def from_scale(cls, a: int) -> "TorusSpec":
        """The one-parameter family d1=1, k1=a*2^(a^2), d=a^2, N=a^2*2^(a^2)."""
        if a < 2:
            raise SpecViolation("scale parameter must be >= 2")
        return cls(side=a**2 * 2 ** (a**2), d1=1, k1=a * 2 ** (a**2), d=a**2)


@dataclass(frozen=True)
class StarSpec:
    """A central hub with k paths of length k^2 hanging off it."""

    k: int

    def __post_init__(self):
        if self.k < 2:
            raise SpecViolation("star needs k >= 2 paths")

    @property
    def n(self) -> int:
        return self.k**3 + 1


def torus_chain(side: int, *, checks: str = "auto") -> ReversibleChain:
    """Lazy walk on the N x N torus: probability 0.2 to each of the four
    cyclic neighbours and 0.2 to stay put.

    Vertices are ordered lexicographically: (x1, x2) -> x1*N + x2.  For
    N = 2 the +1 and -1 neighbours coincide and their probabilities merge.
    The stationary distribution is uniform.
    """
    if side < 2:
        raise ValueError("torus side must be >= 2")
    n = side * side
    x1, x2 = np.divmod(np.arange(n, dtype=np.int64), side)
    targets = np.stack(
        [
            x1 * side + x2,
            ((x1 + 1) % side) * side + x2,
            ((x1 - 1) % side) * side + x2,
            x1 * side + (x2 + 1) % side,
            x1 * side + (x2 - 1) % side,
        ],
        axis=1,
    )
    if side == 2:
        rows = np.repeat(np.arange(n, dtype=np.int64), 5)
        csr = sp.csr_matrix(
            (np.full(5 * n, 0.2), (rows, targets.ravel())), shape=(n, n)
        )
        matrix = StochasticMatrix(csr)
    else:
        targets = np.sort(targets, axis=1)
        indptr = np.arange(0, 5 * n + 1, 5, dtype=np.int64)
        csr = sp.csr_matrix(
            (np.full(5 * n, 0.2), targets.ravel(), indptr), shape=(n, n)
        )
        matrix = StochasticMatrix(csr)
    pi = np.full(n, 1.0 / n)
    if checks == "auto" and n > FULL_CHECK_LIMIT:
        # lattice with self-loops: connected and aperiodic by construction
        checks = "structural"
    return build_reversible(matrix, pi, checks=checks)


def lemma2_marked_set(spec: TorusSpec, chain: ReversibleChain | None = None) -> MarkedSet:
    """Marked set M1 union M2 on the torus of ``spec``.

    M1 = {(j1*d1, j2*d1) : 0 <= j1, j2 <= k1-1} (dense corner subgrid),
    M2 = {(j1*d,  j2*d)  : 0 <= j1, j2 <  N/d}  (sparse global subgrid).
    The overlap is the k x k grid with spacing d, k = ceil(k1*d1/d), so
    |M| = k1^2 + (N/d)^2 - k^2.
    """
    side = spec.side
    coords1 = np.arange(spec.k1, dtype=np.int64) * spec.d1
    coords2 = np.arange(side // spec.d, dtype=np.int64) * spec.d
    m1 = (coords1[:, None] * side + coords1[None, :]).ravel()
    m2 = (coords2[:, None] * side + coords2[None, :]).ravel()
    members = np.union1d(m1, m2)
    if members.size != spec.marked_count:
        raise SpecViolation(
            f"marked-set cardinality {members.size} != closed form "
            f"{spec.marked_count}"
        )
    if chain is not None:
        return MarkedSet.from_indices(members, chain)
    p_m = members.size / (side * side)
    return MarkedSet(members=members, p_m=p_m)


def segmented_star_chain(spec: StarSpec) -> tuple[ReversibleChain, MarkedSet]:
    """Lazy walk on the star of k paths of length k^2 glued at a hub.

    At every vertex the walker stays with probability 0.5 and otherwise
    moves to a uniformly chosen neighbour.  Vertex ordering: hub at 0, then
    path p's vertex at distance j+1 from the hub sits at 1 + p*k^2 + j.
    The marked set is path 0 (its k^2 vertices, hub excluded).

    The stationary mass of a vertex is proportional to its degree
    (hub k, path interior 2, leaf 1), total degree 2*k^3.
    """
    k = spec.k
    plen = k * k
    n = spec.n
    rows: list[list[tuple[int, float]]] = [[] for _ in range(n)]

    def vid(path: int, j: int) -> int:
        return 1 + path * plen + j

    rows[0] = [(0, 0.5)] + [(vid(p, 0), 0.5 / k) for p in range(k)]
    for p in range(k):
        for j in range(plen):
            v = vid(p, j)
            prev = 0 if j == 0 else vid(p, j - 1)
            neighbours = [prev] if j == plen - 1 else [prev, vid(p, j + 1)]
            share = 0.5 / len(neighbours)
            rows[v] = sorted([(v, 0.5)] + [(u, share) for u in neighbours])
    matrix = StochasticMatrix.from_rows(n, rows)

    degree = np.full(n, 2.0)
    degree[0] = float(k)
    for p in range(k):
        degree[vid(p, plen - 1)] = 1.0
    pi = degree / (2.0 * k**3)

    chain = build_reversible(matrix, pi)
    marked = MarkedSet.from_indices(np.arange(1, 1 + plen), chain)
    return chain, marked


def bipartite_double_cover(chain: ReversibleChain,
                           marked: MarkedSet) -> tuple[ReversibleChain, MarkedSet]:
    """Two copies of the chain with every transition switching copies; only
    copy-0 vertices of the original marked set stay marked.

    Copy-0 vertex x sits at index x, its copy-1 twin at n + x.  The doubled
    chain has period 2 by construction (every closed walk alternates
    copies); that is inherent and documented, not repaired.  If the doubled
    transition graph additionally fails strong connectivity (the base chain
    was bipartite), ResultNotErgodic is raised.
    """
    n = chain.n
    coo = chain.matrix.csr.tocoo()
    rows = np.concatenate([coo.row, coo.row + n])
    cols = np.concatenate([coo.col + n, coo.col])
    data = np.concatenate([coo.data, coo.data])
    matrix = StochasticMatrix(
        sp.csr_matrix((data, (rows, cols)), shape=(2 * n, 2 * n))
    )
    if not is_strongly_connected(matrix):
        raise ResultNotErgodic(
            "doubled chain is disconnected (base chain is bipartite)"
        )
    pi = np.concatenate([chain.pi, chain.pi]) / 2.0
    doubled = build_reversible(matrix, pi, checks="full", require_aperiodic=False)
    return doubled, MarkedSet.from_indices(marked.members, doubled)


def lazy_cycle_chain(n: int, stay: float = 0.4) -> ReversibleChain:
    """Lazy walk on an n-cycle: stay with probability ``stay``, otherwise
    step to either neighbour with equal probability."""
    if n < 3:
        raise ValueError("cycle needs n >= 3")
    if not 0.0 < stay < 1.0:
        raise ValueError("stay probability must lie in (0, 1)")
    hop = (1.0 - stay) / 2.0
    rows = [
        sorted([((x - 1) % n, hop), (x, stay), ((x + 1) % n, hop)])
        for x in range(n)
    ]
    matrix = StochasticMatrix.from_rows(n, rows)
    return build_reversible(matrix, np.full(n, 1.0 / n))


def path_chain(n: int, stay: float = 0.5) -> ReversibleChain:
    """Lazy walk on a path: stay with probability ``stay``, otherwise move
    to a uniformly chosen neighbour.  Stationary mass is degree-weighted."""
    if n < 2:
        raise ValueError("path needs n >= 2")
    rows = []
    for x in range(n):
        neighbours = [y for y in (x - 1, x + 1) if 0 <= y < n]
        share = (1.0 - stay) / len(neighbours)
        rows.append(sorted([(x, stay)] + [(y, share) for y in neighbours]))
    matrix = StochasticMatrix.from_rows(n, rows)
    degree = np.full(n, 2.0)
    degree[0] = degree[-1] = 1.0
    return build_reversible(matrix, degree / degree.sum())


def complete_graph_chain(n: int, stay: float = 0.2) -> ReversibleChain:
    """Lazy walk on the complete graph K_n (uniform stationary mass)."""
    if n < 2:
        raise ValueError("complete graph needs n >= 2")
    hop = (1.0 - stay) / (n - 1)
    rows = [
        [(y, stay if y == x else hop) for y in range(n)] for x in range(n)
    ]
    matrix = StochasticMatrix.from_rows(n, rows)
    return build_reversible(matrix, np.full(n, 1.0 / n))
