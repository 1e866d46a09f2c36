import numpy as np
import pytest

from conftest import random_reversible_chain
from walklab.chain import MarkedSet
from walklab.errors import OutOfRange
from walklab.interpolate import (
    build_interpolated,
    interpolated_discriminant,
    interpolated_discriminant_sparse,
    r_to_s,
    s_to_r,
    stay_factors,
)


def test_s_zero_is_identity(torus4):
    marked = MarkedSet.from_indices([0, 3], torus4)
    ic = build_interpolated(torus4, marked, 0.0)
    assert ic.matrix_s() == torus4.matrix
    np.testing.assert_allclose(ic.pi_s(), torus4.pi, atol=1e-15)


def test_torus4_half_by_hand(torus4):
    # one marked vertex, s = 1/2: marked row halves and gains 1/2 on the
    # diagonal, and p_M = 1/16 gives pi(s) = (2/17 marked, 1/17 unmarked)
    marked = MarkedSet.from_indices([0], torus4)
    ic = build_interpolated(torus4, marked, 0.5)
    dense = ic.matrix_s().to_dense()
    base = torus4.matrix.to_dense()
    np.testing.assert_allclose(dense[0], 0.5 * base[0] + 0.5 * np.eye(16)[0])
    np.testing.assert_allclose(dense[1:], base[1:])
    pi_s = ic.pi_s()
    np.testing.assert_allclose(pi_s[0], 2.0 / 17.0)
    np.testing.assert_allclose(pi_s[1:], 1.0 / 17.0)


def test_unmarked_rows_exact(two_state_chain):
    marked = MarkedSet.from_indices([1], two_state_chain)
    for s in (0.1, 0.5, 0.99):
        ic = build_interpolated(two_state_chain, marked, s)
        dense = ic.matrix_s().to_dense()
        assert dense[0, 0] == 0.7 and dense[0, 1] == 0.3


def test_marked_mass_tends_to_one(torus4):
    marked = MarkedSet.from_indices([5], torus4)
    masses = []
    for r in (1, 10, 1000, 10**6):
        ic = build_interpolated(torus4, marked, r_to_s(r))
        masses.append(float(ic.pi_s()[5]))
    assert masses == sorted(masses)
    assert masses[-1] > 0.9999


def test_two_state_discriminant_closed_form(two_state_chain):
    # marked = {1}, s = 1/2; pi = (1/4, 3/4) so pi(s) = (1/7, 6/7) and the
    # symmetric off-diagonal entry is 0.3 / sqrt(6)
    marked = MarkedSet.from_indices([1], two_state_chain)
    ic = build_interpolated(two_state_chain, marked, 0.5)
    np.testing.assert_allclose(ic.pi_s(), [1.0 / 7.0, 6.0 / 7.0])
    d = interpolated_discriminant(ic, dense=True)
    expected = np.array([[0.7, 0.3 / np.sqrt(6.0)],
                         [0.3 / np.sqrt(6.0), 0.95]])
    np.testing.assert_allclose(d, expected, atol=1e-15)


def test_marked_diagonal_rule():
    chain = random_reversible_chain(20, seed=7)
    marked = MarkedSet.from_indices([2, 11, 19], chain)
    base = chain.matrix.to_dense()
    for s in (0.25, 0.8):
        d = interpolated_discriminant(build_interpolated(chain, marked, s),
                                      dense=True)
        for x in marked.members:
            np.testing.assert_allclose(d[x, x], (1 - s) * base[x, x] + s,
                                       atol=1e-12)


def test_interpolated_detailed_balance():
    for seed, s in [(0, 0.0), (1, 0.3), (2, 0.9), (3, 0.999)]:
        chain = random_reversible_chain(25, seed=40 + seed)
        marked = MarkedSet.from_indices([0, 7], chain)
        ic = build_interpolated(chain, marked, s)
        p_s = ic.matrix_s().to_dense()
        flux = ic.pi_s()[:, None] * p_s
        np.testing.assert_allclose(flux, flux.T, atol=1e-10)
        np.testing.assert_allclose(ic.rmatvec(ic.pi_s()), ic.pi_s(),
                                   atol=1e-10)


def test_matrix_free_discriminant_agreement():
    rng = np.random.default_rng(9)
    for n, seed in [(150, 50), (150, 51), (150, 52), (2000, 53)]:
        chain = random_reversible_chain(n, seed=seed, density=0.02)
        marked = MarkedSet.from_indices(rng.choice(n, 12, replace=False),
                                        chain)
        for s in (0.0, 0.6, 0.99):
            ic = build_interpolated(chain, marked, s)
            dense = interpolated_discriminant(ic, dense=True)
            op = interpolated_discriminant(ic, dense=False)
            sparse = interpolated_discriminant_sparse(ic)
            for _ in range(4):
                v = rng.standard_normal(n)
                np.testing.assert_allclose(op.matvec(v), dense @ v, atol=1e-12)
                np.testing.assert_allclose(sparse @ v, dense @ v, atol=1e-12)


def test_sqrt_pi_s_is_fixed_vector(torus8):
    marked = MarkedSet.from_indices([0, 9, 27], torus8)
    for s in (0.3, 0.95):
        ic = build_interpolated(torus8, marked, s)
        d = interpolated_discriminant(ic, dense=True)
        root = np.sqrt(ic.pi_s())
        np.testing.assert_allclose(d @ root, root, atol=1e-10)


def test_monotone_limit_to_absorbing(two_state_chain):
    marked = MarkedSet.from_indices([1], two_state_chain)
    absorbing = np.array([[0.7, 0.3], [0.0, 1.0]])
    gaps = []
    for s in (0.9, 0.99, 0.999999):
        dense = build_interpolated(two_state_chain, marked, s).matrix_s().to_dense()
        gaps.append(np.max(np.abs(dense - absorbing)))
    assert gaps == sorted(gaps, reverse=True)
    assert gaps[-1] < 1e-6


def test_s_range_validation(torus4):
    marked = MarkedSet.from_indices([0], torus4)
    for bad in (-0.1, 1.0, 1.5):
        with pytest.raises(OutOfRange):
            build_interpolated(torus4, marked, bad)
    with pytest.raises(OutOfRange):
        r_to_s(0.5)
    with pytest.raises(OutOfRange):
        s_to_r(1.0)


def test_stay_factor_round_trip():
    for r in (1.0, 2.0, 96.61, 1e6):
        assert abs(s_to_r(r_to_s(r)) - r) / r < 1e-9


def test_stay_factor_ladder():
    assert stay_factors(1) == [1, 2, 4, 8, 16]          # 2^ceil(log2(12))
    assert stay_factors(2) == [1, 2, 4, 8, 16, 32]      # 2^ceil(log2(24))
    ladder = stay_factors(128)
    assert ladder[-1] == 2048 and ladder[0] == 1        # 2^ceil(log2(1536))


def test_interpolated_serialization_round_trip(tmp_path, torus4):
    from walklab.chain import read_chain
    from walklab.interpolate import write_interpolated_chain

    marked = MarkedSet.from_indices([0, 7], torus4)
    ic = build_interpolated(torus4, marked, 0.375)
    path = tmp_path / "interp.chain"
    write_interpolated_chain(ic, path)
    loaded, s = read_chain(path)
    assert s == 0.375
    assert loaded.matrix == ic.matrix_s()
    np.testing.assert_allclose(loaded.pi, ic.pi_s(), atol=1e-15)
