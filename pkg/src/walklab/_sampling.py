"""Vectorized one-step transition sampling for sparse chains.

Chains whose rows all carry the same number of equal probabilities (the
lazy torus walk) get a uniform fast path that reads the CSR index array in
place; everything else uses rectangular padded inverse-CDF tables.
"""

from __future__ import annotations

import numpy as np

from .chain import StochasticMatrix


class RowSampler:
    """Samples next states for whole batches of walkers at once."""

    def __init__(self, matrix: StochasticMatrix):
        csr = matrix.csr
        counts = np.diff(csr.indptr)
        self.n = matrix.n
        data = csr.data
        if counts.min() == counts.max() and data.size and np.all(data == data[0]):
            self.width = int(counts[0])
            self.targets = csr.indices  # flat, row-major, width entries per row
            self.cum = None
        else:
            width = int(counts.max())
            self.width = width
            cum = np.ones((self.n, width), dtype=np.float64)
            tgt = np.zeros((self.n, width), dtype=np.int64)
            for x in range(self.n):
                lo, hi = csr.indptr[x], csr.indptr[x + 1]
                k = hi - lo
                cum[x, :k] = np.cumsum(data[lo:hi])
                cum[x, k - 1] = 1.0  # guard against rounding past the last slot
                tgt[x, :k] = csr.indices[lo:hi]
                tgt[x, k:] = csr.indices[hi - 1] if k else x
            self.cum = cum
            self.targets = tgt

    def step(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        m = states.shape[0]
        if self.cum is None:
            choice = rng.integers(0, self.width, size=m)
            return self.targets[states * self.width + choice]
        u = rng.random(m)
        rows_cum = self.cum[states]
        idx = (u[:, None] >= rows_cum).sum(axis=1)
        return self.targets[states, idx]


def sample_distribution(weights: np.ndarray, size: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` indices from an (unnormalized) weight vector."""
    cum = np.cumsum(weights, dtype=np.float64)
    u = rng.random(size) * cum[-1]
    return np.searchsorted(cum, u, side="right").astype(np.int64)
