"""Walk evolution: Chebyshev recursions for the interpolated-walk success
bound q_t(s), plain discriminant powers for the fast-forwarding success
probability, parameter sweeps over the stay factor r = 1/(1-s), and the
explicit small-scale walk unitary used to verify the Chebyshev block
identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import run_chunks
from .chain import MarkedSet, ReversibleChain, as_matvec
from .errors import CompletionFailure, OutOfRange
from .interpolate import (
    build_interpolated,
    interpolated_discriminant,
    r_to_s,
    stay_parameters,
)

MAX_UNITARY_N = 32


def chebyshev_apply(d_op, t: int, vector: np.ndarray) -> np.ndarray:
    """T_t(D) @ vector via the three-term recurrence.

    T_0 = I, T_1 = D, T_{t+1} = 2 D T_t - T_{t-1}.  Costs t matvecs and two
    extra vectors of storage; accepts a dense array or any object with a
    ``matvec`` method.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    matvec = as_matvec(d_op)
    prev = np.array(vector, dtype=np.float64, copy=True)
    if t == 0:
        return prev
    cur = matvec(prev)
    for _ in range(t - 1):
        prev, cur = cur, 2.0 * matvec(cur) - prev
    return cur


def _marked_mass(v: np.ndarray, members: np.ndarray) -> float:
    block = v[members]
    return float(block @ block)


def q_t(chain: ReversibleChain, marked: MarkedSet, s: float, t: int,
        *, dense: bool = False) -> float:
    """Success-probability lower bound || Pi_M T_t(D(s)) sqrt(pi) ||^2.

    At t = 0 this is p_M; it lower-bounds the exact probability that t
    interpolated walk steps followed by a marked-vertex measurement
    succeed.
    """
    ic = build_interpolated(chain, marked, s)
    d_op = interpolated_discriminant(ic, dense=dense)
    vec = chebyshev_apply(d_op, t, np.sqrt(chain.pi))
    return _marked_mass(vec, marked.members)


def q_profile(chain: ReversibleChain, marked: MarkedSet, s: float,
              t_max: int, *, dense: bool = False) -> np.ndarray:
    """q_t for every t in 0..t_max with a single Chebyshev recursion."""
    ic = build_interpolated(chain, marked, s)
    d_op = interpolated_discriminant(ic, dense=dense)
    matvec = as_matvec(d_op)
    members = marked.members
    out = np.empty(t_max + 1)
    prev = np.sqrt(chain.pi)
    out[0] = _marked_mass(prev, members)
    if t_max == 0:
        return out
    cur = matvec(prev)
    out[1] = _marked_mass(cur, members)
    for t in range(2, t_max + 1):
        prev, cur = cur, 2.0 * matvec(cur) - prev
        out[t] = _marked_mass(cur, members)
    return out


@dataclass(frozen=True)
class SweepResult:
    """Best bound q(r) and its minimizing step count tau(r) over an r grid.

    q(r) = max_{t <= t_max} q_t(1 - 1/r) and tau(r) is the smallest t
    attaining that maximum (ties broken within 1e-12 of the max).  Marker
    values: r1 = (1 - p_M)/p_M (the stay factor of the extended-hitting-time
    algorithm) and r2 = HT (a plausible upper bound on the optimal r).
    """

    r_grid: np.ndarray
    q: np.ndarray
    tau: np.ndarray
    t_max: int
    r1: float
    r2: float
    profiles: list = field(default_factory=list, repr=False)

    def best(self) -> tuple[float, float, int]:
        """(r, q, tau) at the grid point with the largest q."""
        i = int(np.argmax(self.q))
        return float(self.r_grid[i]), float(self.q[i]), int(self.tau[i])


def default_r_grid(ht: float, points_per_decade: int = 64) -> np.ndarray:
    """Logarithmic grid from r = 1 to r = 4*HT."""
    top = max(4.0 * ht, 2.0)
    count = max(2, int(math.ceil(points_per_decade * math.log10(top))) + 1)
    return np.logspace(0.0, math.log10(top), count)


def sweep_q(chain: ReversibleChain, marked: MarkedSet,
            r_grid: np.ndarray | None = None, t_max: int | None = None,
            *, ht: float | None = None, points_per_decade: int = 64,
            keep_profiles: bool = False,
            threads: int | None = None) -> SweepResult:
    """Evaluate q(r) and tau(r) over a grid of stay factors.

    Each grid point runs an independent Chebyshev recursion up to t_max,
    which defaults to ceil(3 sqrt(HT)); the grid defaults to 64 log-spaced
    points per decade on [1, 4 HT].  ``ht`` is solved exactly when not
    supplied.  Grid points are processed in deterministic order regardless
    of thread count.
    """
    if ht is None and (r_grid is None or t_max is None):
        from .spectra import hitting_time_exact

        ht = hitting_time_exact(chain, marked).value
    if t_max is None:
        t_max = math.ceil(3.0 * math.sqrt(ht))
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    if r_grid is None:
        r_grid = default_r_grid(ht, points_per_decade)
    r_grid = np.asarray(r_grid, dtype=np.float64)
    if np.any(r_grid < 1.0):
        raise OutOfRange("stay factors r must be >= 1")

    def one(i: int):
        profile = q_profile(chain, marked, r_to_s(float(r_grid[i])), t_max)
        top = float(profile.max())
        tau = int(np.flatnonzero(profile >= top - 1e-12)[0])
        return top, tau, profile

    rows = run_chunks(one, len(r_grid), threads)
    q = np.array([row[0] for row in rows])
    tau = np.array([row[1] for row in rows], dtype=np.int64)
    profiles = [row[2] for row in rows] if keep_profiles else []
    r1 = (1.0 - marked.p_m) / marked.p_m
    return SweepResult(r_grid=r_grid, q=q, tau=tau, t_max=t_max,
                       r1=r1, r2=(math.nan if ht is None else float(ht)),
                       profiles=profiles)


def fastforward_success(chain: ReversibleChain, marked: MarkedSet,
                        s: float, t: int, *, dense: bool = False) -> float:
    """|| Pi_M D(s)^t sqrt(pi_U) ||^2 via t plain matvecs (matrix power,
    not Chebyshev): the ideal success probability of measuring a marked
    vertex after fast-forwarding t interpolated steps from the unmarked
    stationary start."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    ic = build_interpolated(chain, marked, s)
    d_op = interpolated_discriminant(ic, dense=dense)
    matvec = as_matvec(d_op)
    vec = np.sqrt(chain.pi)
    vec[marked.members] = 0.0
    for _ in range(t):
        vec = matvec(vec)
    return _marked_mass(vec, marked.members)


def fastforward_profile(chain: ReversibleChain, marked: MarkedSet,
                        s: float, t_max: int,
                        *, dense: bool = False) -> np.ndarray:
    """fastforward_success for every t in 0..t_max (one pass)."""
    ic = build_interpolated(chain, marked, s)
    d_op = interpolated_discriminant(ic, dense=dense)
    matvec = as_matvec(d_op)
    members = marked.members
    vec = np.sqrt(chain.pi)
    vec[members] = 0.0
    out = np.empty(t_max + 1)
    out[0] = 0.0
    for t in range(1, t_max + 1):
        vec = matvec(vec)
        out[t] = _marked_mass(vec, members)
    return out


def trajectory_probability_exact(chain: ReversibleChain, marked: MarkedSet,
                                 s: float, t: int, t_hat: int) -> float:
    """Probability that the interpolated chain started from pi is unmarked
    at step 0, marked at step t, and unmarked at step t + t_hat:

        sum_{x,z in U} pi_x <x| P(s)^t Pi_M P(s)^t_hat |z>.

    Evaluated exactly by propagating the distribution, so it needs t + t_hat
    sparse passes and n <= 5000.
    """
    if chain.n > 5000:
        raise ValueError("exact trajectory probability capped at n = 5000")
    ic = build_interpolated(chain, marked, s)
    mask = marked.mask(chain.n)
    row = np.where(mask, 0.0, chain.pi)
    for _ in range(t):
        row = ic.rmatvec(row)
    row[~mask] = 0.0
    for _ in range(t_hat):
        row = ic.rmatvec(row)
    return float(math.fsum(row[~mask]))


# ---------------------------------------------------------------------------
# explicit walk unitary (small n)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WalkUnitary:
    """Dense interpolated walk unitary on C^2 (x) C^n (x) C^n.

    Basis index of |b, w, x> is b*n^2 + w*n + x; ``ref`` is the reference
    basis state of the first vertex register.  The reference block
    <0,ref,x| W |0,ref,y> realizes D(s)_xy.
    """

    matrix: np.ndarray
    s: float
    n: int
    ref: int

    @property
    def dim(self) -> int:
        return 2 * self.n * self.n

    def ref_index(self, x: int) -> int:
        return self.ref * self.n + x

    def reference_block(self) -> np.ndarray:
        idx = self.ref * self.n + np.arange(self.n)
        return self.matrix[np.ix_(idx, idx)]

    def reference_projector_indices(self) -> np.ndarray:
        """Indices spanning the |0>|ref> (x) C^n reference subspace."""
        return self.ref * self.n + np.arange(self.n)


def _specified_columns(chain: ReversibleChain, marked: MarkedSet,
                       s: float, ref: int) -> tuple[np.ndarray, np.ndarray]:
    """Images of |0, ref, x> under the interpolated step isometry.

    Unmarked x maps to sum_w sqrt(P_xw) |0, w, x>; marked x additionally
    branches to sqrt(s) |1, ref, x> with the walk part damped by
    sqrt(1-s)."""
    n = chain.n
    dim = 2 * n * n
    cols = np.zeros((dim, n))
    mask = marked.mask(n)
    for x in range(n):
        targets, probs = chain.matrix.row(x)
        amp = np.sqrt(probs)
        if mask[x]:
            cols[targets * n + x, x] = math.sqrt(1.0 - s) * amp
            cols[n * n + ref * n + x, x] = math.sqrt(s)
        else:
            cols[targets * n + x, x] = amp
    col_pos = ref * n + np.arange(n)
    return cols, col_pos


def _complete_columns(cols: np.ndarray) -> np.ndarray:
    """Extend orthonormal columns to a square orthonormal matrix
    (Householder QR completion; the input columns are reproduced exactly)."""
    dim, k = cols.shape
    q, r = np.linalg.qr(cols, mode="complete")
    diag = np.diag(r)[:k]
    if np.min(np.abs(diag)) < 0.5:
        raise CompletionFailure("specified columns are not orthonormal")
    q[:, :k] *= np.sign(diag)
    if np.max(np.abs(q[:, :k] - cols)) > 1e-12:
        raise CompletionFailure("completion failed to reproduce the columns")
    return q


def build_walk_unitary(chain: ReversibleChain, marked: MarkedSet, s: float,
                       *, ref: int = 0,
                       completion: str = "householder") -> WalkUnitary:
    """Explicit W(s) = V^T Shift' V Ref' on C^2 (x) C^n (x) C^n.

    Only the action of the step operator V on the span of |0, ref, x> is
    fixed; the remaining columns are an orthonormal completion.  The
    Chebyshev block identity is completion-invariant, which the
    ``completion`` switch ("householder" or "alternate") makes testable.
    Capped at n <= 32 (dense dimension 2 n^2 <= 2048).
    """
    n = chain.n
    if n > MAX_UNITARY_N:
        raise ValueError(f"explicit unitary capped at n = {MAX_UNITARY_N}")
    if not 0.0 <= s < 1.0:
        raise OutOfRange(f"s must lie in [0, 1), got {s}")
    if not 0 <= ref < n:
        raise ValueError("reference index out of range")
    dim = 2 * n * n

    cols, col_pos = _specified_columns(chain, marked, s, ref)
    q = _complete_columns(cols)

    v = np.zeros((dim, dim))
    v[:, col_pos] = q[:, :n]
    rest = np.setdiff1d(np.arange(dim), col_pos)
    extras = q[:, n:]
    if completion == "alternate":
        extras = extras[:, ::-1].copy()
        extras[:, 1::2] *= -1.0
    elif completion != "householder":
        raise ValueError(f"unknown completion {completion!r}")
    v[:, rest] = extras

    # Shift': swap the two vertex registers on the |0> branch, identity on |1>
    w_idx, x_idx = np.divmod(np.arange(n * n), n)
    swap = x_idx * n + w_idx
    shift = np.zeros((dim, dim))
    shift[np.arange(n * n), swap] = 1.0
    shift[n * n + np.arange(n * n), n * n + np.arange(n * n)] = 1.0

    # Ref': reflection about |0>|ref> on the first two registers
    refl = -np.eye(dim)
    block = ref * n + np.arange(n)
    refl[block, block] = 1.0

    w = v.T @ shift @ v @ refl
    defect = np.max(np.abs(w @ w.T - np.eye(dim)))
    if defect > 1e-10:
        raise CompletionFailure(f"unitarity defect {defect:.3e}")
    return WalkUnitary(matrix=w, s=s, n=n, ref=ref)


def algorithm1_success_exact(chain: ReversibleChain, marked: MarkedSet,
                             s: float, t: int, *, ref: int = 0,
                             walk: WalkUnitary | None = None) -> float:
    """Exact success probability of the plain interpolated-walk search:
    prepare |0, ref, sqrt(pi)>, apply W(s)^t, measure the walked register.

    Always at least q_t(s)."""
    if walk is None:
        walk = build_walk_unitary(chain, marked, s, ref=ref)
    n = walk.n
    state = np.zeros(walk.dim)
    state[walk.ref * n: walk.ref * n + n] = np.sqrt(chain.pi)
    for _ in range(t):
        state = walk.matrix @ state
    mask = np.zeros(n, dtype=bool)
    mask[marked.members] = True
    picked = state[np.tile(mask, 2 * n)]
    return float(picked @ picked)


def algorithm2_success(chain: ReversibleChain, marked: MarkedSet, T: int,
                       *, t_range: str = "algorithm") -> float:
    """Ideal success probability of the three preparation/measure steps of
    the fast-forwarding search:

        p_M + mean_{t, s in S} || Pi_M D(s)^t sqrt(pi_U) ||^2,

    where S = {1 - 1/r : r in R} and R runs over powers of two up to
    2^ceil(log2(12 T)).  The first term is the marked branch of the initial
    measurement; its (1 - p_M) branch weight cancels against the
    renormalization of the unmarked post-measurement state, leaving the
    plain mean.  t runs over 1..T (``t_range="algorithm"``) or 1..24T
    (``t_range="corollary"``).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if t_range == "algorithm":
        t_top = T
    elif t_range == "corollary":
        t_top = 24 * T
    else:
        raise ValueError(f"unknown t_range {t_range!r}")
    total = 0.0
    svals = stay_parameters(T)
    for s in svals:
        profile = fastforward_profile(chain, marked, s, t_top)
        total += float(np.mean(profile[1:]))
    return marked.p_m + total / len(svals)
