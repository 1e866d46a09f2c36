"""Hitting-time quantities: the classical hitting time (exact solve and
Monte Carlo), the interpolated spectral quantity HT(s), the extended
hitting time, and torus closed forms built from character sums over the
marked grid.

Conventions
-----------
The primary hitting time is conditional on an unmarked start,

    HT = sum_{x in U} (pi_x / p_U) h_x,    (I - P_UU) h = 1,

which matches the spectral form (1/(1-p_M)) sum_k overlap_k^2/(1-lambda_k).
The unconditional variant (marked starts contribute zero and carry weight
pi_x) differs by the factor p_U and is exposed separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ._parallel import chunk_sizes, run_chunks, spawn_rngs
from ._sampling import RowSampler, sample_distribution
from .chain import DENSE_LIMIT, MarkedSet, ReversibleChain
from .errors import (
    DegenerateTopEigenvalue,
    LimitDisagreement,
    SolverDivergence,
    SpecViolation,
)
from .graphs import TorusSpec
from .interpolate import build_interpolated, interpolated_discriminant

TOP_EIGENVALUE_GAP = 1e-12
LIMIT_AGREEMENT_RTOL = 1e-3


@dataclass(frozen=True)
class HittingTimeReport:
    """A hitting-time value with provenance.

    method is one of exact-solve, neumann, monte-carlo, spectral,
    torus-closed-form.  error_bound is absolute (solver-residual based) or
    a 95% confidence half-width for Monte Carlo; Monte Carlo reports carry
    the seed.
    """

    value: float
    method: str
    error_bound: float
    meta: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.error_bound < 0:
            raise ValueError("error_bound must be nonnegative")


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigensystem of a discriminant D(s) plus its unmarked-start overlaps.

    eigenvalues ascend; eigenvectors are the corresponding columns;
    overlaps[k] = |<v_k | sqrt(pi_U)>|^2 where pi is the base stationary
    distribution restricted to unmarked vertices.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    overlaps: np.ndarray

    def reconstruction_error(self, d_matrix: np.ndarray) -> float:
        approx = (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T
        return float(np.max(np.abs(approx - d_matrix)))


def spectral_decomposition(chain: ReversibleChain, marked: MarkedSet,
                           s: float) -> SpectralDecomposition:
    """Dense eigendecomposition of D(s); requires n <= DENSE_LIMIT."""
    if chain.n > DENSE_LIMIT:
        raise ValueError(f"dense eigendecomposition capped at n={DENSE_LIMIT}")
    ic = build_interpolated(chain, marked, s)
    d = interpolated_discriminant(ic, dense=True)
    vals, vecs = np.linalg.eigh(d)
    if np.max(np.abs(vals)) > 1.0 + 1e-10:
        raise ValueError("discriminant eigenvalue escapes [-1, 1]")
    sqrt_pi_u = np.sqrt(chain.pi)
    sqrt_pi_u[marked.members] = 0.0
    overlaps = (vecs.T @ sqrt_pi_u) ** 2
    return SpectralDecomposition(vals, vecs, overlaps)


def interpolated_hitting_time(chain: ReversibleChain, marked: MarkedSet,
                              s: float) -> float:
    """HT(s) = 1/(1-p_M) * sum_{k<n} overlap_k^2 / (1 - lambda_k(s)).

    The top eigenvalue lambda_n = 1 is excluded; a second eigenvalue above
    1 - 1e-12 raises DegenerateTopEigenvalue.
    """
    dec = spectral_decomposition(chain, marked, s)
    vals = dec.eigenvalues
    if vals[-2] > 1.0 - TOP_EIGENVALUE_GAP:
        raise DegenerateTopEigenvalue(
            f"second eigenvalue {vals[-2]:.17g} too close to 1"
        )
    terms = dec.overlaps[:-1] / (1.0 - vals[:-1])
    return math.fsum(terms) / (1.0 - marked.p_m)


def extended_hitting_time(chain: ReversibleChain, marked: MarkedSet,
                          *, validate_limit: bool | None = None,
                          limit_exponents: int = 20) -> HittingTimeReport:
    """Extended hitting time via p_M^{-2} HT(0).

    When validation is on (default for n <= 1200) the value is
    cross-checked against the numerical limit of HT(s) along
    s = 1 - 2^{-j}, j = 1..limit_exponents, Richardson-extrapolated to
    s = 1; disagreement beyond 0.1% raises LimitDisagreement rather than
    being averaged away.
    """
    if validate_limit is None:
        validate_limit = chain.n <= 1200
    ht0 = interpolated_hitting_time(chain, marked, 0.0)
    value = ht0 / marked.p_m**2
    meta = {"ht_at_0": ht0, "p_m": marked.p_m, "validated": bool(validate_limit)}
    error_bound = abs(value) * 1e-9  # eigh roundoff scale; replaced if validated
    if validate_limit:
        series = [
            interpolated_hitting_time(chain, marked, 1.0 - 0.5**j)
            for j in range(1, limit_exponents + 1)
        ]
        limit = _richardson_limit(series)
        diff = abs(limit - value)
        if diff > LIMIT_AGREEMENT_RTOL * abs(value):
            raise LimitDisagreement(
                f"spectral route {value:.17g} vs s->1 limit {limit:.17g}: "
                f"relative gap {diff / abs(value):.3e} > {LIMIT_AGREEMENT_RTOL}"
            )
        meta["limit_extrapolated"] = limit
        error_bound = diff
    return HittingTimeReport(value, "spectral", error_bound, meta)


def _richardson_limit(values: list[float], max_levels: int = 6) -> float:
    """Extrapolate f(h_j) with h_j = 2^{-j} to h -> 0 (ratio-2 Richardson)."""
    table = list(values)
    levels = min(max_levels, len(values) - 1)
    for m in range(1, levels + 1):
        f = 2.0**m
        table = [
            (f * table[i] - table[i - 1]) / (f - 1.0)
            for i in range(1, len(table))
        ]
    return table[-1]


# ---------------------------------------------------------------------------
# classical hitting time
# ---------------------------------------------------------------------------

def hitting_time_exact(chain: ReversibleChain, marked: MarkedSet,
                       *, conditional: bool = True,
                       residual_target: float = 1e-10,
                       max_iterations: int | None = None) -> HittingTimeReport:
    """Expected absorption time from the stationary start.

    Solves (I - P_UU) h = 1 on unmarked states -- dense LU for
    n_U <= DENSE_LIMIT, otherwise the stationary fixed-point iteration
    h <- 1 + P_UU h (convergent because P_UU is strictly substochastic on
    an ergodic chain) with residual target ``residual_target`` relative to
    ||h||_inf.  The report value is sum_{x in U} (pi_x / p_U) h_x; pass
    conditional=False for the unconditional variant sum_x pi_x h_x.
    """
    n = chain.n
    unmarked = marked.unmarked(n)
    n_u = unmarked.size
    if n_u == 0:
        raise ValueError("every state is marked; hitting time is trivial")
    if n_u > 10**6:
        raise ValueError("solver bound exceeded: n - |M| must be <= 1e6")
    p_uu = chain.matrix.csr[unmarked][:, unmarked]
    ones = np.ones(n_u)
    if n_u <= DENSE_LIMIT:
        a = np.eye(n_u) - p_uu.toarray()
        h = np.linalg.solve(a, ones)
        residual = float(np.max(np.abs(ones - a @ h)))
        method = "exact-solve"
        iterations = 0
    else:
        h = np.ones(n_u)
        if max_iterations is None:
            max_iterations = 10**6
        residual = math.inf
        for iterations in range(1, max_iterations + 1):
            nxt = ones + p_uu @ h
            residual = float(np.max(np.abs(nxt - h)))
            h = nxt
            if residual <= residual_target * max(1.0, np.max(h)):
                break
        else:
            raise SolverDivergence(
                f"fixed-point solve stalled after {max_iterations} sweeps",
                residual=residual,
            )
        method = "neumann"
    weights = chain.pi[unmarked]
    p_u = 1.0 - marked.p_m
    total = math.fsum(weights * h)
    value = total / p_u if conditional else total
    h_max = float(np.max(h))
    error_bound = h_max * residual * (1.0 if conditional else p_u)
    meta = {
        "iterations": iterations,
        "residual": residual,
        "n_unmarked": n_u,
        "conditional": conditional,
    }
    return HittingTimeReport(value, method, error_bound, meta)


def hitting_time_monte_carlo(chain: ReversibleChain, marked: MarkedSet,
                             samples: int, seed: int,
                             *, threads: int | None = None) -> HittingTimeReport:
    """Sample-mean hitting time with a 95% confidence half-width.

    Start vertices are drawn from pi conditioned on the unmarked set; each
    walker runs until absorption.  Work is split into fixed 2^16-sample
    chunks with independent counter-based RNG streams per chunk, so the
    result depends only on the seed, not the thread count.  A step cap of
    1e6 times the running mean aborts pathological configurations.

    meta carries the empirical tail frequencies Pr(Z > c * mean) for
    c in {2, 3} (each must stay below 1/c up to noise).
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    sampler = RowSampler(chain.matrix)
    marked_mask = marked.mask(chain.n)
    start_weights = np.where(marked_mask, 0.0, chain.pi)
    sizes = chunk_sizes(samples)
    rngs = spawn_rngs(seed, len(sizes))

    def run_chunk(i: int) -> np.ndarray:
        rng = rngs[i]
        states = sample_distribution(start_weights, sizes[i], rng)
        times = np.zeros(sizes[i], dtype=np.int64)
        active = np.arange(sizes[i])
        step = 0
        absorbed_sum = 0.0
        absorbed_cnt = 0
        while active.size:
            step += 1
            states[active] = sampler.step(states[active], rng)
            hit = marked_mask[states[active]]
            if hit.any():
                done = active[hit]
                times[done] = step
                absorbed_sum += float(hit.sum()) * step
                absorbed_cnt += int(hit.sum())
                active = active[~hit]
            if step > 10**6 * max(1.0, absorbed_sum / max(absorbed_cnt, 1)):
                raise RuntimeError(
                    f"step cap reached at {step} steps with "
                    f"{active.size} walkers unabsorbed"
                )
        return times

    all_times = np.concatenate(run_chunks(run_chunk, len(sizes), threads))
    mean = float(np.mean(all_times))
    if samples > 1:
        half_width = 1.96 * float(np.std(all_times, ddof=1)) / math.sqrt(samples)
    else:
        half_width = 0.0
    markov_check = {
        c: float(np.mean(all_times > c * mean)) for c in (2, 3)
    }
    meta = {"samples": samples, "markov_check": markov_check,
            "max_steps_seen": int(all_times.max())}
    return HittingTimeReport(mean, "monte-carlo", half_width, meta, seed=seed)


# ---------------------------------------------------------------------------
# torus closed forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TorusMode:
    """One Fourier eigenpair of the lazy torus walk."""

    side: int
    j: int
    k: int
    eigenvalue: float

    def row_factor(self) -> np.ndarray:
        idx = np.arange(self.side)
        return np.exp(2j * np.pi * self.j * idx / self.side) / math.sqrt(self.side)

    def col_factor(self) -> np.ndarray:
        idx = np.arange(self.side)
        return np.exp(2j * np.pi * self.k * idx / self.side) / math.sqrt(self.side)

    def vector(self) -> np.ndarray:
        return np.kron(self.row_factor(), self.col_factor())


def torus_spectrum(side: int) -> Iterator[TorusMode]:
    """Lazily yield all N^2 eigenpairs of the lazy torus walk.

    lambda_{j,k} = (1 + 2 cos(2 pi j / N) + 2 cos(2 pi k / N)) / 5, with
    eigenvector w^(j) (x) w^(k) in the lexicographic vertex ordering.
    """
    if side < 2:
        raise ValueError("torus side must be >= 2")
    for j in range(side):
        cj = math.cos(2.0 * math.pi * j / side)
        for k in range(side):
            ck = math.cos(2.0 * math.pi * k / side)
            yield TorusMode(side, j, k, (1.0 + 2.0 * cj + 2.0 * ck) / 5.0)


def torus_eigenvalue_gaps(side: int) -> np.ndarray:
    """1 - lambda_{j,k} = (4/5)(sin^2(pi j/N) + sin^2(pi k/N)) as an N x N grid."""
    sin2 = np.sin(np.pi * np.arange(side) / side) ** 2
    return 0.8 * (sin2[:, None] + sin2[None, :])


def _grid_character_sums(side: int, step: int, count: int) -> np.ndarray:
    """g[j] = sum_{l=0}^{count-1} omega^(j*l*step) for j = 0..N-1 as the
    closed-form geometric sum (omega = exp(2*pi*i/N))."""
    j = np.arange(side, dtype=np.int64)
    base = (j * step) % side
    top = (j * step * count) % side
    z_base = np.exp(2j * np.pi * base / side)
    z_top = np.exp(2j * np.pi * top / side)
    out = np.full(side, complex(count), dtype=np.complex128)
    nz = base != 0
    out[nz] = (z_top[nz] - 1.0) / (z_base[nz] - 1.0)
    return out


def _marked_character_row(spec: TorusSpec, j: int, g1, g2, g3) -> np.ndarray:
    """sum_{(x1,x2) in M} omega^(j*x1 + k*x2) for all k at fixed j.

    The sum splits as dense-grid + sparse-grid - overlap-grid, each of
    which factorizes into two 1D geometric sums.
    """
    return g1[j] * g1 + g2[j] * g2 - g3[j] * g3


def _character_tables(spec: TorusSpec):
    side = spec.side
    g1 = _grid_character_sums(side, spec.d1, spec.k1)
    g2 = _grid_character_sums(side, spec.d, side // spec.d)
    g3 = _grid_character_sums(side, spec.d, spec.overlap_side)
    return g1, g2, g3


def torus_ht_plus_closed_form(spec: TorusSpec,
                              *, threads: int | None = None) -> float:
    """Extended hitting time of the structured torus marked set, evaluated
    as the full Fourier-mode sum

        (5/4) N^2 / (m^2 u) * sum_{(j,k) != (0,0)} |S_M(j,k)|^2
                                  / (sin^2(pi j/N) + sin^2(pi k/N)),

    with the marked character sums S_M in closed form (O(N^2) total work,
    matrix-free).  Rows are accumulated with pairwise summation and
    combined with exact fsum, partitioned deterministically over j.
    """
    side = spec.side
    m = spec.marked_count
    u = side * side - m
    if u == 0:
        raise SpecViolation("marked set covers the whole torus (u = 0)")
    g1, g2, g3 = _character_tables(spec)
    sin2 = np.sin(np.pi * np.arange(side) / side) ** 2

    block = 64

    def row_block(b: int) -> float:
        j_lo = b * block
        j_hi = min(side, j_lo + block)
        parts = []
        for j in range(j_lo, j_hi):
            s_row = _marked_character_row(spec, j, g1, g2, g3)
            weight = np.abs(s_row) ** 2
            denom = sin2[j] + sin2
            if j == 0:
                weight = weight[1:]
                denom = denom[1:]
            parts.append(float(np.sum(weight / denom)))
        return math.fsum(parts)

    n_blocks = -(-side // block)
    totals = run_chunks(row_block, n_blocks, threads)
    total = math.fsum(totals)
    return 1.25 * side * side / (m * m * u) * total


def torus_ht_plus_lower_bound(spec: TorusSpec) -> float:
    """The single Fourier term (j, k) = (1, 0) of the full mode sum:

        (5/4) N^2/(m^2 u) * |sum_{(x1,x2) in M} omega^{x1}|^2 / sin^2(pi/N).

    Always a lower bound because the dropped terms are nonnegative.
    """
    side = spec.side
    m = spec.marked_count
    u = side * side - m
    if u == 0:
        raise SpecViolation("marked set covers the whole torus (u = 0)")
    g1, g2, g3 = _character_tables(spec)
    s10 = g1[1] * g1[0] + g2[1] * g2[0] - g3[1] * g3[0]
    return (1.25 * side * side / (m * m * u)
            * abs(s10) ** 2 / math.sin(math.pi / side) ** 2)
