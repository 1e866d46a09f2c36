"""Monte Carlo trajectory engine: the marked-stay coupling between a base
chain and its interpolated version, box-sequence rescalings, the
combinatorial rescaling-window statement, geometric-sum concentration, and
the unmarked/marked/unmarked event estimates.

All stochastic outputs record their seed; streams are counter-based and
split per chunk, so results are reproducible across thread counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import nbinom

from . import _lemma4
from ._parallel import run_chunks, spawn_rngs, master_rng
from ._sampling import RowSampler, sample_distribution
from .chain import MarkedSet, ReversibleChain, StochasticMatrix
from .errors import (
    EventNeverObserved,
    HypothesisViolated,
    NonIntegralScale,
    PreconditionUnmet,
    WindowOutOfRange,
)
from .interpolate import stay_factors, stay_parameters


@dataclass(frozen=True)
class TrajectoryRecord:
    """A realized walk: visited vertices plus the seed that produced it."""

    vertices: np.ndarray
    seed: int | None
    chain_id: str = ""

    def __post_init__(self):
        self.vertices.setflags(write=False)

    def __len__(self) -> int:
        return int(self.vertices.size)

    def validate(self, matrix: StochasticMatrix):
        """Every consecutive transition must have nonzero probability."""
        verts = self.vertices
        for i in range(verts.size - 1):
            cols, probs = matrix.row(int(verts[i]))
            j = np.searchsorted(cols, verts[i + 1])
            if j >= cols.size or cols[j] != verts[i + 1] or probs[j] <= 0.0:
                raise ValueError(
                    f"impossible transition {verts[i]} -> {verts[i + 1]} "
                    f"at step {i}"
                )


@dataclass(frozen=True)
class BoxSequence:
    """Marked/unmarked abstraction of a trajectory (True = marked)."""

    boxes: np.ndarray

    def __post_init__(self):
        if self.boxes.size < 1:
            raise ValueError("box sequence must have length >= 1")
        if self.boxes.dtype != np.bool_:
            raise TypeError("boxes must be a boolean array")
        self.boxes.setflags(write=False)

    def __len__(self) -> int:
        return int(self.boxes.size)

    @classmethod
    def from_bits(cls, bits) -> "BoxSequence":
        return cls(np.asarray(bits, dtype=bool))

    def marked_count(self) -> int:
        return int(self.boxes.sum())


def _as_marked_mask(marked, n: int) -> np.ndarray:
    members = (marked.members if isinstance(marked, MarkedSet)
               else np.asarray(marked, dtype=np.int64))
    size = max(n, int(members.max()) + 1 if members.size else 0)
    mask = np.zeros(size, dtype=bool)
    mask[members] = True
    return mask


def simulate(matrix: StochasticMatrix, start: np.ndarray, steps: int,
             seed: int, *, chain_id: str = "") -> TrajectoryRecord:
    """One trajectory of ``steps`` transitions from a start distribution.

    Deterministic given the seed; vertex marginals converge to the pushed
    distribution (validated statistically in the test suite).
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    rng = master_rng(seed)
    sampler = RowSampler(matrix)
    verts = np.empty(steps + 1, dtype=np.int64)
    verts[0] = sample_distribution(np.asarray(start, dtype=np.float64), 1, rng)[0]
    state = verts[:1].copy()
    for i in range(1, steps + 1):
        state = sampler.step(state, rng)
        verts[i] = state[0]
    return TrajectoryRecord(vertices=verts, seed=seed, chain_id=chain_id)


def simulate_box_batch(matrix: StochasticMatrix, marked_mask: np.ndarray,
                       start: np.ndarray, steps: int, count: int,
                       rng: np.random.Generator) -> np.ndarray:
    """(count, steps+1) boolean marked-status matrix of a trajectory batch."""
    sampler = RowSampler(matrix)
    states = sample_distribution(np.asarray(start, dtype=np.float64), count, rng)
    boxes = np.empty((count, steps + 1), dtype=bool)
    boxes[:, 0] = marked_mask[states]
    for i in range(1, steps + 1):
        states = sampler.step(states, rng)
        boxes[:, i] = marked_mask[states]
    return boxes


def simulate_paths_batch(matrix: StochasticMatrix, start: np.ndarray,
                         steps: int, count: int,
                         rng: np.random.Generator) -> np.ndarray:
    """(count, steps+1) vertex matrix of a trajectory batch."""
    sampler = RowSampler(matrix)
    paths = np.empty((count, steps + 1), dtype=np.int64)
    paths[:, 0] = sample_distribution(
        np.asarray(start, dtype=np.float64), count, rng)
    for i in range(1, steps + 1):
        paths[:, i] = sampler.step(paths[:, i - 1], rng)
    return paths


def couple_interpolated(base_path: TrajectoryRecord, marked, s: float,
                        seed: int | None = None, *,
                        stay_lengths=None) -> TrajectoryRecord:
    """Stretch a base trajectory into an interpolated one.

    Every visit to a marked vertex is extended into a stay whose length is
    geometrically distributed with parameter 1-s (support 1, 2, ...; mean
    1/(1-s)); unmarked steps are copied through.  The marginal law of the
    output is the interpolated chain started identically.  ``stay_lengths``
    overrides the geometric draws (visit order) for deterministic replays.
    """
    if not 0.0 <= s < 1.0:
        raise ValueError(f"s must lie in [0, 1), got {s}")
    verts = base_path.vertices
    n_guess = int(verts.max()) + 1 if verts.size else 0
    mask = _as_marked_mask(marked, n_guess)
    visit = mask[verts]
    lengths = np.ones(verts.size, dtype=np.int64)
    visits = int(visit.sum())
    if visits:
        if stay_lengths is not None:
            draws = np.asarray(stay_lengths, dtype=np.int64)
            if draws.size != visits or draws.min() < 1:
                raise ValueError("need one stay length >= 1 per marked visit")
        elif s == 0.0:
            draws = np.ones(visits, dtype=np.int64)
        else:
            if seed is None:
                raise ValueError("seed required for random stay lengths")
            draws = master_rng(seed).geometric(1.0 - s, size=visits)
        lengths[visit] = draws
    out = np.repeat(verts, lengths)
    return TrajectoryRecord(vertices=out, seed=seed,
                            chain_id=base_path.chain_id)


def to_boxes(path: TrajectoryRecord, marked) -> BoxSequence:
    """Pointwise marked-membership map of a trajectory."""
    n_guess = int(path.vertices.max()) + 1 if len(path) else 0
    mask = _as_marked_mask(marked, n_guess)
    return BoxSequence(mask[path.vertices])


def _check_scale(r) -> int:
    if isinstance(r, (bool, np.bool_)):
        raise NonIntegralScale("rescaling factor must be a positive integer")
    if isinstance(r, float) and not r.is_integer():
        raise NonIntegralScale(f"rescaling factor must be integral, got {r}")
    r = int(r)
    if r < 1:
        raise NonIntegralScale(f"rescaling factor must be >= 1, got {r}")
    return r


def rescale(seq: BoxSequence, r) -> BoxSequence:
    """Replace each marked box by r consecutive marked boxes.

    Unmarked boxes keep their count and relative order; the i-th unmarked
    box moves to position i + m(i) r, where m(i) counts marked boxes before
    it.
    """
    r = _check_scale(r)
    if r == 1:
        return seq
    lengths = np.where(seq.boxes, r, 1)
    return BoxSequence(np.repeat(seq.boxes, lengths))


def rescaled_length(seq: BoxSequence, r) -> int:
    r = _check_scale(r)
    marked = seq.marked_count()
    return (len(seq) - marked) + r * marked


def _marked_prefix(m_cum: np.ndarray, boxes: np.ndarray, r: int, x: int) -> int:
    """Marked count among the first x boxes of the r-rescaled sequence,
    computed from run boundaries without materializing the rescaling."""
    # rescaled prefix length after j original boxes: p_j = j + (r-1) m_j
    p = np.arange(m_cum.size, dtype=np.int64) + (r - 1) * m_cum
    j = int(np.searchsorted(p, x, side="right")) - 1
    count = r * int(m_cum[j])
    if j < boxes.size and boxes[j]:
        count += x - int(p[j])
    return count


def window_counts(seq: BoxSequence, r, a: int, b: int) -> tuple[int, int]:
    """(marked, unmarked) counts over positions a+1..b of the r-rescaling.

    Windows are half-open exactly as the rescaling arithmetic requires; no
    inclusive variants are offered.
    """
    r = _check_scale(r)
    total = rescaled_length(seq, r)
    if not 0 <= a <= b <= total:
        raise WindowOutOfRange(
            f"window [{a}, {b}] outside rescaled length {total}"
        )
    m_cum = np.concatenate(([0], np.cumsum(seq.boxes, dtype=np.int64)))
    marked = _marked_prefix(m_cum, seq.boxes, r, b) - _marked_prefix(
        m_cum, seq.boxes, r, a
    )
    return marked, (b - a) - marked


@dataclass(frozen=True)
class RescalingWindowReport:
    """Outcome of the two rescaling-window conclusions for one sequence."""

    T: int
    r0: int
    scales: list
    marked_ok: bool
    marked_counts: dict
    unmarked_ok: bool
    unmarked_total: int
    unmarked_counts: dict

    @property
    def holds(self) -> bool:
        return self.marked_ok and self.unmarked_ok


def lemma4_check(seq: BoxSequence, T: int) -> RescalingWindowReport:
    """Verify the rescaling-window statement on one sequence.

    Hypotheses (PreconditionUnmet when violated): at least one marked box
    among the first T, and at most T marked boxes in positions T+1..3T.
    With r0 the largest integer below 3T keeping the marked count of
    window [T, 3T] at or below (3/2) T, the statement asserts that every
    doubling scale r >= 2 r0 keeps at least (3/2) T marked boxes in
    [0, 3T], and that the unmarked counts of window [6T, 12T] summed over
    those scales reach T/2.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if len(seq) < 12 * T:
        raise ValueError(f"sequence length {len(seq)} < 12T = {12 * T}")
    m1, _ = window_counts(seq, 1, 0, T)
    if m1 < 1:
        raise PreconditionUnmet("no marked box among the first T")
    m2, _ = window_counts(seq, 1, T, 3 * T)
    if m2 > T:
        raise PreconditionUnmet(
            f"{m2} > T marked boxes in the window [T, 3T]"
        )
    r0 = 0
    for r in range(3 * T - 1, 0, -1):
        marked, _ = window_counts(seq, r, T, 3 * T)
        if 2 * marked <= 3 * T:
            r0 = r
            break
    assert r0 >= 1  # r = 1 always qualifies given the second hypothesis

    scales = [r for r in stay_factors(T) if r >= 2 * r0]
    marked_counts, unmarked_counts = {}, {}
    marked_ok = True
    unmarked_total = 0
    for r in scales:
        marked, _ = window_counts(seq, r, 0, 3 * T)
        marked_counts[r] = marked
        if 2 * marked < 3 * T:
            marked_ok = False
        _, unmarked = window_counts(seq, r, 6 * T, 12 * T)
        unmarked_counts[r] = unmarked
        unmarked_total += unmarked
    unmarked_ok = 2 * unmarked_total >= T
    return RescalingWindowReport(
        T=T, r0=r0, scales=scales, marked_ok=marked_ok,
        marked_counts=marked_counts, unmarked_ok=unmarked_ok,
        unmarked_total=unmarked_total, unmarked_counts=unmarked_counts,
    )


@dataclass(frozen=True)
class ScanReport:
    """Aggregate of a batch scan: how many sequences were checked, skipped
    (hypotheses unmet), and found violating (must stay zero)."""

    T: int
    total: int
    checked: int
    skipped: int
    violations: int
    first_violation: int | None
    seed: int | None = None


def lemma4_scan_exhaustive(T: int, *, threads: int | None = None) -> ScanReport:
    """Scan every bit pattern of length 12 T (feasible for T = 2)."""
    if 12 * T > 30:
        raise ValueError("exhaustive scan capped at 12T <= 30 bits")
    rs = np.array(stay_factors(T), dtype=np.int64)
    total = 1 << (12 * T)
    block = 1 << 20
    bounds = list(range(0, total, block)) + [total]

    def scan(i: int):
        return _lemma4.scan_codes(T, rs, bounds[i], bounds[i + 1])

    results = run_chunks(scan, len(bounds) - 1, threads)
    counts = np.sum([r[0] for r in results], axis=0)
    first = next((int(r[1]) for r in results if r[1] >= 0), None)
    violations = int(counts[_lemma4.VERDICT_FAIL_MARKED]
                     + counts[_lemma4.VERDICT_FAIL_UNMARKED])
    return ScanReport(T=T, total=total,
                      checked=int(counts[_lemma4.VERDICT_PASS]) + violations,
                      skipped=int(counts[_lemma4.VERDICT_SKIP]),
                      violations=violations, first_violation=first)


def lemma4_scan_random(T: int, samples: int, seed: int,
                       *, threads: int | None = None) -> ScanReport:
    """Randomized counterexample search over hypothesis-satisfying
    sequences of length 12 T.

    Each sequence draws its own marked density uniformly from (0, 1); the
    scan counts only sequences whose hypotheses hold (the generator does
    not reject, it relies on the verdict's skip code), continuing until
    ``samples`` sequences were checked.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rs = np.array(stay_factors(T), dtype=np.int64)
    length = 12 * T
    block = max(1, min(65536, (1 << 26) // length))
    checked = skipped = violations = 0
    first = None
    seq = np.random.SeedSequence(seed)
    while checked < samples:
        rng = np.random.Generator(np.random.Philox(seq.spawn(1)[0]))
        density = rng.random(block)
        rows = rng.random((block, length)) < density[:, None]
        counts, bad = _lemma4.scan_rows(rows, T, rs)
        crossed = int(counts[_lemma4.VERDICT_PASS]
                      + counts[_lemma4.VERDICT_FAIL_MARKED]
                      + counts[_lemma4.VERDICT_FAIL_UNMARKED])
        checked += crossed
        skipped += int(counts[_lemma4.VERDICT_SKIP])
        violations += int(counts[_lemma4.VERDICT_FAIL_MARKED]
                          + counts[_lemma4.VERDICT_FAIL_UNMARKED])
        if bad >= 0 and first is None:
            first = int(bad)
    return ScanReport(T=T, total=checked + skipped, checked=checked,
                      skipped=skipped, violations=violations,
                      first_violation=first, seed=seed)


# ---------------------------------------------------------------------------
# geometric-sum concentration
# ---------------------------------------------------------------------------

def geometric_sum_window(p: float, t: int) -> float:
    """Exact probability that a sum of t geometric(p) variables lands in
    the window [floor(t/(2p)) + 1, floor(2t/p)].

    Z - t follows the negative binomial law counting failures, so the
    probability is its CDF difference at the shifted window edges.  The
    window is the integral form of the two-sided factor-2 concentration
    claim (it stays at or above 7/16 for t <= 7; Chebyshev covers t >= 8).
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if t < 1:
        raise ValueError("t must be >= 1")
    lo = math.floor(t / (2.0 * p))
    hi = math.floor(2.0 * t / p)
    dist = nbinom(t, p)
    return float(dist.cdf(hi - t) - dist.cdf(lo - t))


def geometric_sum_window_empirical(p: float, t: int, samples: int,
                                   seed: int) -> tuple[float, float]:
    """Seeded sampling companion of :func:`geometric_sum_window`.

    Returns (estimate, standard error)."""
    rng = master_rng(seed)
    z = rng.geometric(p, size=(samples, t)).sum(axis=1)
    lo = math.floor(t / (2.0 * p))
    hi = math.floor(2.0 * t / p)
    inside = (z > lo) & (z <= hi)
    est = float(inside.mean())
    return est, math.sqrt(max(est * (1.0 - est), 1e-12) / samples)


# ---------------------------------------------------------------------------
# unmarked/marked/unmarked event estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Corollary2Estimate:
    """Monte Carlo estimate of the conditional stretched-walk event."""

    estimate: float
    half_width: float
    prob_event: float
    n_event: int
    samples: int
    T: int
    seed: int


def corollary2_estimate(matrix: StochasticMatrix, marked, start: np.ndarray,
                        T: int, samples: int, seed: int,
                        *, threads: int | None = None) -> Corollary2Estimate:
    """Estimate E_{t,t',s}[Pr(Y_0(s) in U, Y_t(s) in M, Y_{t'}(s) in U | E)].

    E is the event that the start vertex is unmarked, some marked vertex
    appears within the first T base steps, and at most T of base steps
    T+1..3T are marked.  The chain need not be reversible and the start
    distribution need not be stationary.  Per conditioned trajectory one
    (t, t', s) triple is drawn with t uniform on 1..3T, t' uniform on
    3T+1..24T, and s = 1 - 1/r for r uniform on the doubling ladder; the
    stretched mark status comes from the marked-stay coupling.

    Raises EventNeverObserved when E never occurs.
    """
    if samples < 1 or T < 1:
        raise ValueError("need samples >= 1 and T >= 1")
    mask = _as_marked_mask(marked, matrix.n)
    horizon = 24 * T
    rs = np.array(stay_factors(T), dtype=np.int64)
    block = max(256, min(8192, (1 << 27) // (horizon + 1)))
    sizes = [block] * (samples // block) + (
        [samples % block] if samples % block else []
    )
    rngs = spawn_rngs(seed, len(sizes))

    def run_chunk(i: int):
        rng = rngs[i]
        boxes = simulate_box_batch(matrix, mask, start, horizon, sizes[i], rng)
        hits = 0
        successes = 0
        for row in boxes:
            if row[0]:
                continue
            if not row[1: T + 1].any():
                continue
            if int(row[T + 1: 3 * T + 1].sum()) > T:
                continue
            hits += 1
            r = int(rs[rng.integers(0, rs.size)])
            t = int(rng.integers(1, 3 * T + 1))
            t_prime = int(rng.integers(3 * T + 1, horizon + 1))
            stretched = _stretch_boxes(row, r, rng, horizon)
            if stretched[t] and not stretched[t_prime]:
                successes += 1
        return hits, successes

    results = run_chunks(run_chunk, len(sizes), threads)
    n_event = sum(r[0] for r in results)
    wins = sum(r[1] for r in results)
    if n_event == 0:
        raise EventNeverObserved(
            "conditioning event never occurred; no marked vertex reachable?"
        )
    est = wins / n_event
    half = 1.96 * math.sqrt(max(est * (1.0 - est), 1e-12) / n_event)
    return Corollary2Estimate(estimate=est, half_width=half,
                              prob_event=n_event / samples, n_event=n_event,
                              samples=samples, T=T, seed=seed)


def _stretch_boxes(row: np.ndarray, r: int, rng: np.random.Generator,
                   horizon: int) -> np.ndarray:
    """Marked-stay coupling at the box level, truncated to ``horizon``."""
    if r == 1:
        return row
    visits = int(row.sum())
    lengths = np.ones(row.size, dtype=np.int64)
    if visits:
        lengths[row] = rng.geometric(1.0 / r, size=visits)
    out = np.repeat(row, lengths)
    return out[: horizon + 1]


@dataclass(frozen=True)
class Corollary3Report:
    """Exact mean fast-forwarding success over the (s, t) product grid."""

    mean: float
    floor: float
    best_term: float
    prob_event_bound: float
    T: int
    ht: float

    @property
    def holds(self) -> bool:
        return self.mean >= self.floor


def corollary3_check(chain: ReversibleChain, marked: MarkedSet, T: int,
                     *, floor_constant: float = 0.01) -> Corollary3Report:
    """Exactly evaluate mean_{s in S, t in 1..24T} ||Pi_M D(s)^t sqrt(pi_U)||^2
    by repeated matvecs and compare it against the floor c / log2(T).

    Hypotheses p_M <= 1/9 and T >= 3 HT are enforced (HypothesisViolated);
    the floor constant is a conservative small-instance calibration, since
    the asymptotic statement fixes no constant.
    """
    from .evolve import fastforward_profile
    from .spectra import hitting_time_exact

    if chain.n > 5000:
        raise ValueError("exact route capped at n = 5000")
    if marked.p_m > 1.0 / 9.0:
        raise HypothesisViolated(f"p_M = {marked.p_m:.6g} exceeds 1/9")
    ht = hitting_time_exact(chain, marked).value
    if T < 3.0 * ht:
        raise HypothesisViolated(f"T = {T} below 3 HT = {3.0 * ht:.6g}")
    horizon = 24 * T
    svals = stay_parameters(T)
    means = []
    best = 0.0
    for s in svals:
        profile = fastforward_profile(chain, marked, s, horizon)
        means.append(float(np.mean(profile[1:])))
        best = max(best, float(profile[1:].max()))
    mean = float(np.mean(means))
    floor = floor_constant / math.log2(max(T, 2))
    return Corollary3Report(mean=mean, floor=floor, best_term=best,
                            prob_event_bound=2.0 / 9.0, T=T, ht=ht)
