"""walklab: a numerical laboratory for quantum-walk search on reversible
Markov chains -- hitting times (classical, interpolated, extended),
Chebyshev-evolved success bounds, torus closed forms, and Monte Carlo
verification of the combinatorial machinery behind fast-forwarded search.
"""

from .chain import (
    MarkedSet,
    ReversibleChain,
    StochasticMatrix,
    SymmetricOperator,
    build_reversible,
    discriminant,
    read_chain,
    stationary_distribution,
    time_reversal,
    write_chain,
)
from .errors import WalklabError
from .evolve import (
    SweepResult,
    WalkUnitary,
    algorithm1_success_exact,
    algorithm2_success,
    build_walk_unitary,
    chebyshev_apply,
    fastforward_success,
    q_t,
    sweep_q,
    trajectory_probability_exact,
)
from .graphs import (
    StarSpec,
    TorusSpec,
    bipartite_double_cover,
    lemma2_marked_set,
    segmented_star_chain,
    torus_chain,
)
from .interpolate import (
    InterpolatedChain,
    build_interpolated,
    interpolated_discriminant,
    r_to_s,
    s_to_r,
    stay_factors,
    stay_parameters,
)
from .spectra import (
    HittingTimeReport,
    SpectralDecomposition,
    extended_hitting_time,
    hitting_time_exact,
    hitting_time_monte_carlo,
    interpolated_hitting_time,
    spectral_decomposition,
    torus_ht_plus_closed_form,
    torus_ht_plus_lower_bound,
    torus_spectrum,
)
from .trajectories import (
    BoxSequence,
    TrajectoryRecord,
    corollary2_estimate,
    corollary3_check,
    couple_interpolated,
    geometric_sum_window,
    geometric_sum_window_empirical,
    lemma4_check,
    lemma4_scan_exhaustive,
    lemma4_scan_random,
    rescale,
    simulate,
    to_boxes,
    window_counts,
)

__version__ = "0.1.0"
