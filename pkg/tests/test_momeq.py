from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momentbound.momeq import (MomentKey, TruncationOrder, assemble_moment_equations,
                               enumerate_zeta, known_xi, substitute_known)
from momentbound.netspec import network_from_dict

from conftest import network_doc


def test_enumerate_zeta_examples():
    assert enumerate_zeta(TruncationOrder(1, 1), 1, 2) == [(1, 0, 0), (1, 1, 0), (1, 0, 1)]
    assert enumerate_zeta(TruncationOrder(3, 0), 1, 2) == [(1, 0, 0), (2, 0, 0), (3, 0, 0)]
    assert sorted(enumerate_zeta(TruncationOrder(1, 1), 2, 1)) == sorted(
        [(1, 0, 0), (0, 1, 0), (1, 0, 1), (0, 1, 1)])


def test_truncation_order_validation():
    with pytest.raises(ValueError):
        TruncationOrder(0, 1)
    with pytest.raises(ValueError):
        TruncationOrder(1, -1)


def test_birth_death_single_row(birth_death):
    s = assemble_moment_equations(birth_death, TruncationOrder(1, 0))
    assert s.rows == [(1,)]
    assert s.mu_keys == [MomentKey((1,), ())]
    # 0 = D k1 - k2 E[X], with D k1 = 10 folded into the xi (E[1]) column
    assert s.A[0, 0] == Fraction(-1, 5)
    assert s.xi_keys == [MomentKey((0,), ())]
    assert s.C[0, 0] == 10


def test_zero_reactions():
    net = network_from_dict({"species": ["X"], "parameters": [], "reactions": []})
    s = assemble_moment_equations(net, TruncationOrder(2, 0))
    assert len(s.rows) == 2
    assert s.A.size == 0 or not s.A.any()


def test_substitute_examples(dimer):
    s = assemble_moment_equations(dimer, TruncationOrder(1, 1))
    k1 = MomentKey((0,), (1, 0))
    k1sq = MomentKey((0,), (2, 0))
    red = substitute_known(s, {k1: Fraction(4, 5), k1sq: Fraction(24, 25)})
    assert red.xi_keys == [MomentKey((0,), (1, 1))]
    assert list(red.const) == [4, Fraction(24, 5), 0]
    assert substitute_known(s, {}).C.shape == s.C.shape
    with pytest.raises(KeyError):
        substitute_known(s, {MomentKey((0,), (5, 5)): 1})


def test_all_known_for_fixed_parameters(dimer):
    fixed = dimer.with_fixed({"K1": 0.8, "K2": 0.4})
    s = assemble_moment_equations(fixed, TruncationOrder(2, 0))
    red = substitute_known(s, known_xi(s, fixed))
    assert red.C.shape[1] == 0
    assert red.nu_keys == []


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3), st.integers(1, 3))
def test_degree_bounds_and_nesting(rho, sigma, extra):
    net = network_from_dict(network_doc("dimerization"))
    s = assemble_moment_equations(net, TruncationOrder(rho, sigma))
    for k in s.keys:
        assert k.species_degree <= rho + 1
        assert k.param_degree <= sigma + 1
    assert len(set(s.mu_keys) | set(s.nu_keys) | set(s.xi_keys)) == len(s.keys)
    big = assemble_moment_equations(net, TruncationOrder(rho, sigma + extra))
    assert set(s.rows) <= set(big.rows)
    for i, z in enumerate(s.rows):
        assert s.row_poly_terms(i) == big.row_poly_terms(big.rows.index(z))


def test_poisson_moments_solve_birth_death(birth_death):
    lam = 50.0
    s = assemble_moment_equations(birth_death, TruncationOrder(4, 0))
    values = {MomentKey((0,), ()): 1.0}
    for k in range(1, 6):
        values[MomentKey((k,), ())] = poisson_moment(lam, k)
    assert np.max(np.abs(s.residual(values))) < 1e-9 * poisson_moment(lam, 5)


def poisson_moment(lam, k):
    # Touchard polynomial: sum_j S(k, j) lam^j
    S = [[0] * (k + 1) for _ in range(k + 1)]
    S[0][0] = 1
    for a in range(1, k + 1):
        for b in range(1, a + 1):
            S[a][b] = b * S[a - 1][b] + S[a - 1][b - 1]
    return float(sum(S[k][j] * lam ** j for j in range(k + 1)))
