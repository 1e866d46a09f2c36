"""Interpolated walks: the family P(s) = (1-s) P + s P', where P' pins
marked rows to the identity, together with the closed-form stationary
distribution pi(s) and the discriminant D(s).

pi(s) is computed in closed form, never by re-solving stationarity:

    pi(s) = ((1-s) pi_U + pi_M) / (1 - s (1 - p_M)).
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .chain import (
    BALANCE_TOL,
    DENSE_LIMIT,
    STATIONARITY_TOL,
    MarkedSet,
    ReversibleChain,
    StochasticMatrix,
    SymmetricOperator,
)
from .errors import NotReversible, OutOfRange


def r_to_s(r: float) -> float:
    """Interpolation parameter from its stay-factor form r = 1/(1-s)."""
    if r < 1.0:
        raise OutOfRange(f"r must be >= 1, got {r}")
    return 1.0 - 1.0 / r


def s_to_r(s: float) -> float:
    if not 0.0 <= s < 1.0:
        raise OutOfRange(f"s must lie in [0, 1), got {s}")
    return 1.0 / (1.0 - s)


def stay_factors(T: int) -> list[int]:
    """The doubling ladder R = {2^0, 2^1, ..., 2^ceil(log2(12 T))}."""
    if T < 1:
        raise ValueError("T must be >= 1")
    top = math.ceil(math.log2(12 * T))
    return [2**k for k in range(top + 1)]


def stay_parameters(T: int) -> list[float]:
    """S = {1 - 1/r : r in R}."""
    return [r_to_s(float(r)) for r in stay_factors(T)]


@dataclass(frozen=True)
class InterpolatedChain:
    """(chain, marked set, s) bundle exposing P(s), pi(s), D(s).

    Unmarked rows of P(s) equal the base rows exactly; a marked row x keeps
    (1-s) times its base entries plus an extra s on the diagonal, so
    P(s)_xx = (1-s) P_xx + s for x marked.
    """

    base: ReversibleChain
    marked: MarkedSet
    s: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def normalization(self) -> float:
        """1 - s (1 - p_M), the total mass of (1-s) pi_U + pi_M."""
        return 1.0 - self.s * (1.0 - self.marked.p_m)

    def pi_s(self) -> np.ndarray:
        if "pi_s" not in self._cache:
            mask = self.marked.mask(self.n)
            pi = np.where(mask, self.base.pi, (1.0 - self.s) * self.base.pi)
            pi /= self.normalization
            pi.setflags(write=False)
            self._cache["pi_s"] = pi
        return self._cache["pi_s"]

    def matrix_s(self) -> StochasticMatrix:
        """Explicit P(s), materialized on first use."""
        if "matrix_s" not in self._cache:
            coo = self.base.matrix.csr.tocoo()
            mask = self.marked.mask(self.n)
            data = np.where(mask[coo.row], (1.0 - self.s) * coo.data, coo.data)
            rows = np.concatenate([coo.row, self.marked.members])
            cols = np.concatenate([coo.col, self.marked.members])
            vals = np.concatenate([data, np.full(self.marked.size, self.s)])
            csr = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
            self._cache["matrix_s"] = StochasticMatrix(csr)
        return self._cache["matrix_s"]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """P(s) @ v without materializing P(s)."""
        out = self.base.matrix.matvec(v)
        m = self.marked.members
        out[m] = (1.0 - self.s) * out[m] + self.s * v[m]
        return out

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        """v @ P(s) without materializing P(s)."""
        m = self.marked.members
        scaled = np.array(v, dtype=np.float64, copy=True)
        scaled[m] *= 1.0 - self.s
        out = self.base.matrix.rmatvec(scaled)
        out[m] += self.s * v[m]
        return out


def build_interpolated(base: ReversibleChain, marked: MarkedSet,
                       s: float) -> InterpolatedChain:
    """Assemble the interpolated chain and verify pi(s) P(s) = pi(s) at the
    standard stationarity tolerance.

    Raises OutOfRange unless 0 <= s < 1.
    """
    if not 0.0 <= s < 1.0:
        raise OutOfRange(f"s must lie in [0, 1), got {s}")
    if marked.size == 0:
        raise ValueError("marked set is empty")
    if marked.members[-1] >= base.n:
        raise ValueError("marked index out of range for this chain")
    ic = InterpolatedChain(base=base, marked=marked, s=s)
    pi_s = ic.pi_s()
    residual = np.max(np.abs(ic.rmatvec(pi_s) - pi_s))
    if residual > STATIONARITY_TOL:
        raise NotReversible(
            f"pi(s) P(s) = pi(s) fails: residual {residual:.3e}"
        )
    return ic


def interpolated_discriminant(ic: InterpolatedChain,
                              *, dense: bool | None = None):
    """Discriminant D(s) of the interpolated chain.

    D(s)_xy = sqrt(pi(s)_x) P(s)_xy / sqrt(pi(s)_y).  Returns a dense array
    for n <= DENSE_LIMIT (or dense=True), otherwise a matrix-free
    SymmetricOperator whose matvec costs one sparse pass.  D(s) is
    symmetric with sqrt(pi(s)) as a +1 eigenvector; marked diagonal entries
    equal (1-s) P_xx + s.
    """
    if dense is None:
        dense = ic.n <= DENSE_LIMIT
    sqrt_pi_s = np.sqrt(ic.pi_s())
    if dense:
        p_s = ic.matrix_s().to_dense()
        d = (sqrt_pi_s[:, None] * p_s) / sqrt_pi_s[None, :]
        gap = np.max(np.abs(d - d.T))
        if gap > BALANCE_TOL:
            raise NotReversible(f"D(s) asymmetric: max gap {gap:.3e}")
        return 0.5 * (d + d.T)

    def matvec(v):
        return sqrt_pi_s * ic.matvec(v / sqrt_pi_s)

    return SymmetricOperator(ic.n, matvec)


def interpolated_discriminant_sparse(ic: InterpolatedChain) -> sp.csr_matrix:
    """Explicit sparse D(s) (pattern of P plus marked diagonal entries)."""
    sqrt_pi_s = np.sqrt(ic.pi_s())
    csr = ic.matrix_s().csr
    return (sp.diags(sqrt_pi_s) @ csr @ sp.diags(1.0 / sqrt_pi_s)).tocsr()


def write_interpolated_chain(ic: InterpolatedChain, path):
    """Serialize P(s) with pi(s) in the standard chain format plus the
    ``s`` header field."""
    from .chain import ReversibleChain, write_chain

    snapshot = ReversibleChain(matrix=ic.matrix_s(), pi=ic.pi_s().copy())
    write_chain(snapshot, path, s=ic.s)
