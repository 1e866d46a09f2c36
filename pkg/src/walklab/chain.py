"""Finite Markov chains: sparse row-stochastic matrices, reversibility,
stationary distributions, and discriminant operators.

All values are immutable after construction.  Matrix-vector products use a
fixed summation order (CSR row order), so results do not depend on thread
count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import NonErgodic, NotReversible

ROW_SUM_TOL = 1e-12
STATIONARITY_TOL = 1e-10
BALANCE_TOL = 1e-10
DENSE_LIMIT = 5000      # largest n for dense eigen/solve work
FULL_CHECK_LIMIT = 10**6  # largest n for exhaustive graph checks


class StochasticMatrix:
    """Sparse row-stochastic transition matrix.

    Rows are stored CSR-style with strictly increasing column indices.
    Every row must sum to 1 within ``ROW_SUM_TOL`` and all entries must be
    nonnegative.
    """

    __slots__ = ("n", "csr")

    def __init__(self, csr: sp.csr_matrix, *, _validated: bool = False):
        if not sp.issparse(csr):
            raise TypeError("expected a scipy sparse matrix")
        csr = csr.tocsr()
        csr.sum_duplicates()
        csr.eliminate_zeros()  # stored zeros would corrupt the graph checks
        csr.sort_indices()
        if csr.shape[0] != csr.shape[1]:
            raise ValueError("transition matrix must be square")
        self.n = csr.shape[0]
        self.csr = csr
        if not _validated:
            self._validate()

    def _validate(self):
        data = self.csr.data
        if data.size and data.min() < 0.0:
            raise ValueError("negative transition probability")
        row_sums = np.asarray(self.csr.sum(axis=1)).ravel()
        bad = np.abs(row_sums - 1.0) > ROW_SUM_TOL
        if bad.any():
            x = int(np.argmax(bad))
            raise ValueError(
                f"row {x} sums to {row_sums[x]:.17g}, not 1 within {ROW_SUM_TOL}"
            )

    @classmethod
    def from_rows(cls, n: int, rows) -> "StochasticMatrix":
        """Build from an iterable of per-vertex lists of (target, probability)."""
        indptr = np.zeros(n + 1, dtype=np.int64)
        cols, probs = [], []
        for x, row in enumerate(rows):
            for y, p in row:
                cols.append(y)
                probs.append(p)
            indptr[x + 1] = len(cols)
        csr = sp.csr_matrix(
            (np.asarray(probs, dtype=np.float64),
             np.asarray(cols, dtype=np.int64), indptr),
            shape=(n, n),
        )
        return cls(csr)

    @classmethod
    def from_dense(cls, arr) -> "StochasticMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(sp.csr_matrix(arr))

    def row(self, x: int):
        """Return (targets, probabilities) of row ``x``."""
        lo, hi = self.csr.indptr[x], self.csr.indptr[x + 1]
        return self.csr.indices[lo:hi], self.csr.data[lo:hi]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """P @ v (column action)."""
        return self.csr @ v

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        """v @ P (distribution action)."""
        return self.csr.T @ v

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    def __eq__(self, other):
        if not isinstance(other, StochasticMatrix):
            return NotImplemented
        return self.n == other.n and (self.csr != other.csr).nnz == 0

    def __repr__(self):
        return f"StochasticMatrix(n={self.n}, nnz={self.nnz})"


def is_strongly_connected(matrix: StochasticMatrix) -> bool:
    ncomp, _ = connected_components(matrix.csr, directed=True, connection="strong")
    return ncomp == 1


def is_aperiodic(matrix: StochasticMatrix) -> bool:
    """gcd of directed cycle lengths == 1 (assumes strong connectivity).

    Uses BFS levels from vertex 0: the period divides d[u] + 1 - d[v] for
    every edge (u, v).
    """
    if matrix.csr.diagonal().max(initial=0.0) > 0.0:
        return True  # a self-loop forces gcd 1
    order, preds = breadth_first_order(
        matrix.csr, i_start=0, directed=True, return_predecessors=True
    )
    depth = np.full(matrix.n, -1, dtype=np.int64)
    depth[order[0]] = 0
    for v in order[1:]:
        depth[v] = depth[preds[v]] + 1
    coo = matrix.csr.tocoo()
    diffs = depth[coo.row] + 1 - depth[coo.col]
    g = int(np.gcd.reduce(diffs)) if diffs.size else 0
    return abs(g) == 1


def check_ergodic(matrix: StochasticMatrix, *, require_aperiodic: bool = True):
    """Raise NonErgodic unless the chain is strongly connected (and aperiodic)."""
    if not is_strongly_connected(matrix):
        raise NonErgodic("transition graph is not strongly connected")
    if require_aperiodic and not is_aperiodic(matrix):
        raise NonErgodic("chain is periodic")


def stationary_distribution(matrix: StochasticMatrix,
                            residual_target: float = 1e-12,
                            max_iterations: int | None = None) -> np.ndarray:
    """Stationary distribution pi with pi P = pi.

    Power iteration on the distribution action, run to a fixed point with
    max-norm residual below ``residual_target``; falls back to an Arnoldi
    eigensolve if the iteration stalls.  Raises NonErgodic when the chain
    fails strong connectivity or aperiodicity (checked up front for
    n <= FULL_CHECK_LIMIT).
    """
    n = matrix.n
    if n <= FULL_CHECK_LIMIT:
        check_ergodic(matrix)
    pi = np.full(n, 1.0 / n)
    if max_iterations is None:
        max_iterations = 20_000  # slow mixers fall through to the eigensolve
    for _ in range(max_iterations):
        nxt = matrix.rmatvec(pi)
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) < residual_target:
            pi = nxt
            break
        pi = nxt
    else:
        pi = _stationary_eigensolve(matrix)
    residual = np.max(np.abs(matrix.rmatvec(pi) - pi))
    if residual > STATIONARITY_TOL:
        pi = _stationary_eigensolve(matrix)
        residual = np.max(np.abs(matrix.rmatvec(pi) - pi))
        if residual > STATIONARITY_TOL:
            raise NonErgodic(
                f"stationary solve left residual {residual:.3e} > {STATIONARITY_TOL}"
            )
    return pi


def _stationary_eigensolve(matrix: StochasticMatrix) -> np.ndarray:
    """Direct solve of pi (P - I) = 0 with the normalization sum(pi) = 1."""
    n = matrix.n
    if n <= DENSE_LIMIT:
        a = matrix.csr.T.toarray() - np.eye(n)
        a[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = np.linalg.solve(a, b)
    else:
        vals, vecs = sp.linalg.eigs(matrix.csr.T.astype(np.float64), k=1, which="LM")
        pi = np.real(vecs[:, 0])
    pi = np.abs(pi)
    return pi / pi.sum()


@dataclass(frozen=True)
class ReversibleChain:
    """A stochastic matrix together with its verified stationary distribution.

    Construction (via :func:`build_reversible`) checks stationarity to
    STATIONARITY_TOL per coordinate, detailed balance edgewise to
    BALANCE_TOL, and ergodicity.  Construction fails loudly rather than
    renormalizing anything.
    """

    matrix: StochasticMatrix
    pi: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.n

    def __post_init__(self):
        self.pi.setflags(write=False)


def build_reversible(matrix: StochasticMatrix,
                     pi: np.ndarray | None = None,
                     *,
                     checks: str = "auto",
                     require_aperiodic: bool = True) -> ReversibleChain:
    """Validate and assemble a ReversibleChain.

    checks:
      "full"       -- strong connectivity + aperiodicity + edgewise balance
      "structural" -- only stationarity and a sampled balance check; the
                      caller asserts ergodicity structurally (used by large
                      lattice builders where the O(n+edges) gcd pass is
                      impractical)
      "auto"       -- "full" for n <= FULL_CHECK_LIMIT, else "structural"
    """
    n = matrix.n
    if checks == "auto":
        checks = "full" if n <= FULL_CHECK_LIMIT else "structural"
    if checks not in ("full", "structural"):
        raise ValueError(f"unknown checks mode {checks!r}")

    if checks == "full":
        check_ergodic(matrix, require_aperiodic=require_aperiodic)

    if pi is None:
        pi = stationary_distribution(matrix)
    else:
        pi = np.asarray(pi, dtype=np.float64).copy()
        if pi.shape != (n,):
            raise ValueError("pi has wrong length")
        if pi.min() <= 0.0:
            raise ValueError("pi must be entrywise positive")
        if abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("pi must sum to 1")
        residual = np.max(np.abs(matrix.rmatvec(pi) - pi))
        if residual > STATIONARITY_TOL:
            raise NonErgodic(
                f"pi P = pi fails: max residual {residual:.3e} > {STATIONARITY_TOL}"
            )

    _check_detailed_balance(matrix, pi, sample_only=(checks == "structural"))
    return ReversibleChain(matrix=matrix, pi=pi)


def _check_detailed_balance(matrix: StochasticMatrix, pi: np.ndarray,
                            *, sample_only: bool = False):
    """Edgewise pi_x P_xy == pi_y P_yx within BALANCE_TOL."""
    csr = matrix.csr
    if sample_only:
        rng = np.random.default_rng(0)
        rows = np.unique(rng.integers(0, matrix.n, size=min(matrix.n, 4096)))
        for x in rows:
            cols, probs = matrix.row(int(x))
            back = np.asarray(csr[cols, x].todense()).ravel()
            gap = np.max(np.abs(pi[x] * probs - pi[cols] * back), initial=0.0)
            if gap > BALANCE_TOL:
                raise NotReversible(
                    f"detailed balance fails at row {x}: gap {gap:.3e}"
                )
        return
    coo = csr.tocoo()
    flux = pi[coo.row] * coo.data
    reverse = sp.csr_matrix((flux, (coo.col, coo.row)), shape=csr.shape)
    forward = sp.csr_matrix((flux, (coo.row, coo.col)), shape=csr.shape)
    gap = abs(forward - reverse).max()
    if gap > BALANCE_TOL:
        raise NotReversible(f"detailed balance fails: max edge gap {gap:.3e}")


@dataclass(frozen=True)
class MarkedSet:
    """Sorted marked-vertex indices and their stationary mass."""

    members: np.ndarray
    p_m: float

    def __post_init__(self):
        self.members.setflags(write=False)

    @classmethod
    def from_indices(cls, indices, chain: ReversibleChain) -> "MarkedSet":
        members = np.unique(np.asarray(indices, dtype=np.int64))
        if members.size == 0:
            raise ValueError("marked set is empty")
        if members[0] < 0 or members[-1] >= chain.n:
            raise ValueError("marked index out of range")
        p_m = float(math.fsum(chain.pi[members]))
        return cls(members=members, p_m=p_m)

    @property
    def size(self) -> int:
        return int(self.members.size)

    def mask(self, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=bool)
        out[self.members] = True
        return out

    def unmarked(self, n: int) -> np.ndarray:
        return np.flatnonzero(~self.mask(n))


def time_reversal(chain_or_matrix, pi: np.ndarray | None = None) -> StochasticMatrix:
    """P* = diag(pi)^-1 P^T diag(pi).

    Accepts a ReversibleChain (where P* = P entrywise) or a raw
    StochasticMatrix with its stationary distribution, which covers
    non-reversible chains.
    """
    if isinstance(chain_or_matrix, ReversibleChain):
        matrix, pi = chain_or_matrix.matrix, chain_or_matrix.pi
    else:
        matrix = chain_or_matrix
        if pi is None:
            pi = stationary_distribution(matrix)
    pt = matrix.csr.T.tocsr()
    inv = sp.diags(1.0 / np.asarray(pi))
    scale = sp.diags(np.asarray(pi))
    return StochasticMatrix((inv @ pt @ scale).tocsr())


class SymmetricOperator:
    """Matrix-free symmetric linear operator (one matvec = one sparse pass)."""

    __slots__ = ("n", "_matvec")

    def __init__(self, n: int, matvec):
        self.n = n
        self._matvec = matvec

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self._matvec(np.asarray(v, dtype=np.float64))

    def __repr__(self):
        return f"SymmetricOperator(n={self.n})"


def as_matvec(op):
    """Uniform matvec access for ndarray / StochasticMatrix / SymmetricOperator."""
    if isinstance(op, np.ndarray):
        return lambda v: op @ v
    return op.matvec


def operator_dim(op) -> int:
    if isinstance(op, np.ndarray):
        return op.shape[0]
    return op.n


def discriminant(chain: ReversibleChain, *, dense: bool | None = None):
    """Symmetric discriminant D with D_xy = sqrt(pi_x) P_xy / sqrt(pi_y).

    Returns a dense ndarray when n <= DENSE_LIMIT (or dense=True), otherwise
    a matrix-free SymmetricOperator.  D has sqrt(pi) as a +1 eigenvector and
    spectral norm <= 1; its spectrum coincides with that of P.

    Raises NotReversible when the dense matrix fails symmetry beyond
    BALANCE_TOL (detailed balance in disguise).
    """
    if dense is None:
        dense = chain.n <= DENSE_LIMIT
    sqrt_pi = np.sqrt(chain.pi)
    if dense:
        d = (sqrt_pi[:, None] * chain.matrix.to_dense()) / sqrt_pi[None, :]
        gap = np.max(np.abs(d - d.T))
        if gap > BALANCE_TOL:
            raise NotReversible(f"discriminant asymmetric: max gap {gap:.3e}")
        return 0.5 * (d + d.T)
    csr = chain.matrix.csr

    def matvec(v):
        return sqrt_pi * (csr @ (v / sqrt_pi))

    return SymmetricOperator(chain.n, matvec)


def discriminant_sparse(chain: ReversibleChain) -> sp.csr_matrix:
    """Explicit sparse discriminant (same sparsity pattern as P)."""
    sqrt_pi = np.sqrt(chain.pi)
    return (sp.diags(sqrt_pi) @ chain.matrix.csr @ sp.diags(1.0 / sqrt_pi)).tocsr()


# ---------------------------------------------------------------------------
# serialization: line-oriented text format
#   n <count>
#   [s <value>]          (interpolated chains only)
#   <row> <col> <prob>   one line per stored entry, 17 significant digits
#   pi
#   <value>              n lines
# ---------------------------------------------------------------------------

def dump_chain(chain: ReversibleChain, fh, *, s: float | None = None):
    coo = chain.matrix.csr.tocoo()
    fh.write(f"n {chain.n}\n")
    if s is not None:
        fh.write(f"s {s:.17g}\n")
    order = np.lexsort((coo.col, coo.row))
    for i in order:
        fh.write(f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}\n")
    fh.write("pi\n")
    for value in chain.pi:
        fh.write(f"{value:.17g}\n")


def write_chain(chain: ReversibleChain, path, *, s: float | None = None):
    with open(path, "w") as fh:
        dump_chain(chain, fh, s=s)


def read_chain(path, *, checks: str = "auto"):
    """Parse a serialized chain.  Returns (ReversibleChain, s-or-None)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("n "):
        raise ValueError("missing 'n <count>' header")
    n = int(lines[0].split()[1])
    idx = 1
    s = None
    if idx < len(lines) and lines[idx].startswith("s "):
        s = float(lines[idx].split()[1])
        idx += 1
    rows, cols, probs = [], [], []
    while idx < len(lines) and lines[idx] != "pi":
        r, c, p = lines[idx].split()
        rows.append(int(r))
        cols.append(int(c))
        probs.append(float(p))
        idx += 1
    if idx >= len(lines) or lines[idx] != "pi":
        raise ValueError("missing 'pi' section")
    pi = np.array([float(v) for v in lines[idx + 1:]], dtype=np.float64)
    if pi.shape != (n,):
        raise ValueError(f"pi section has {pi.size} entries, expected {n}")
    matrix = StochasticMatrix(sp.csr_matrix(
        (np.array(probs), (np.array(rows), np.array(cols))), shape=(n, n)))
    chain = build_reversible(matrix, pi, checks=checks)
    return chain, s
