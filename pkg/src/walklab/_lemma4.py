"""Compiled batch kernels for scanning box sequences against the
rescaling-window statement.

The reference implementation lives in :mod:`walklab.trajectories`
(``lemma4_check``); these kernels reproduce its integer arithmetic for
millions of sequences (exhaustive and randomized searches) and are
cross-checked against the reference in the test suite.

Verdict codes: 0 = hypotheses unmet, 1 = statement holds,
2 = first conclusion fails, 3 = second conclusion fails.
"""

from __future__ import annotations

import numba
import numpy as np

VERDICT_SKIP = 0
VERDICT_PASS = 1
VERDICT_FAIL_MARKED = 2
VERDICT_FAIL_UNMARKED = 3


@numba.njit(cache=True, inline="always")
def _marked_upto(m_cum, boxes, r, x):
    """Marked count among the first x boxes of the r-rescaled sequence.

    Binary search over implicit rescaled prefix lengths
    p_j = j + (r - 1) * m_cum[j] (strictly increasing in j).
    """
    lo, hi = 0, m_cum.size - 1  # largest j with p_j <= x
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if mid + (r - 1) * m_cum[mid] <= x:
            lo = mid
        else:
            hi = mid - 1
    j = lo
    count = r * m_cum[j]
    if j < boxes.size and boxes[j]:
        count += x - (j + (r - 1) * m_cum[j])
    return count


@numba.njit(cache=True)
def _verdict(boxes, T, rs):
    """Apply the statement to one sequence (length >= 12 T)."""
    length = boxes.size
    m_cum = np.empty(length + 1, dtype=np.int64)
    m_cum[0] = 0
    for i in range(length):
        m_cum[i + 1] = m_cum[i] + (1 if boxes[i] else 0)
    if m_cum[T] < 1:
        return VERDICT_SKIP
    if m_cum[3 * T] - m_cum[T] > T:
        return VERDICT_SKIP
    r0 = 0
    for r in range(3 * T - 1, 0, -1):
        cnt = _marked_upto(m_cum, boxes, r, 3 * T) - _marked_upto(
            m_cum, boxes, r, T
        )
        if 2 * cnt <= 3 * T:
            r0 = r
            break
    unmarked_total = 0
    for r in rs:
        if r < 2 * r0:
            continue
        if 2 * _marked_upto(m_cum, boxes, r, 3 * T) < 3 * T:
            return VERDICT_FAIL_MARKED
        marked_win = _marked_upto(m_cum, boxes, r, 12 * T) - _marked_upto(
            m_cum, boxes, r, 6 * T
        )
        unmarked_total += 6 * T - marked_win
    if 2 * unmarked_total < T:
        return VERDICT_FAIL_UNMARKED
    return VERDICT_PASS


@numba.njit(cache=True, nogil=True)
def scan_codes(T, rs, lo, hi):
    """Exhaustively scan bit-coded sequences of length 12 T in [lo, hi).

    Bit i of the code is box i+1.  Returns (verdict histogram, code of the
    first violation or -1).
    """
    length = 12 * T
    counts = np.zeros(4, dtype=np.int64)
    boxes = np.empty(length, dtype=np.bool_)
    first_bad = np.int64(-1)
    for code in range(lo, hi):
        for i in range(length):
            boxes[i] = (code >> i) & 1 == 1
        v = _verdict(boxes, T, rs)
        counts[v] += 1
        if v >= VERDICT_FAIL_MARKED and first_bad < 0:
            first_bad = code
    return counts, first_bad


@numba.njit(cache=True, nogil=True)
def scan_rows(rows, T, rs):
    """Scan a (batch, length) boolean array; same outputs as scan_codes."""
    counts = np.zeros(4, dtype=np.int64)
    first_bad = np.int64(-1)
    for i in range(rows.shape[0]):
        v = _verdict(rows[i], T, rs)
        counts[v] += 1
        if v >= VERDICT_FAIL_MARKED and first_bad < 0:
            first_bad = i
    return counts, first_bad
