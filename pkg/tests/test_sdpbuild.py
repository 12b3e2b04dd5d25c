from fractions import Fraction

import numpy as np
import pytest

from momentbound.momeq import MomentKey, TruncationOrder, assemble_moment_equations
from momentbound.netspec import network_from_dict
from momentbound.polyalg import ExpPoly
from momentbound.sdpbuild import (BuildError, ScaleRecord, assemble_conic, build_problem,
                                  default_caps, export_sdpa, flip_direction, localizing_matrix,
                                  monomial_basis, prune_free_diagonals, scale_problem)

from conftest import network_doc

EX = MomentKey((1,), (0, 0))


def dimer_problem(r=0.2, rho=1, sigma=1):
    doc = network_doc("dimerization")
    doc["constraints"][0]["r"] = r
    net = network_from_dict(doc)
    return net, assemble_conic(assemble_moment_equations(net, TruncationOrder(rho, sigma)), net, EX)


def test_monomial_basis_examples():
    assert monomial_basis(1, 2, 1, 1).monomials == [
        (0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1)]
    assert monomial_basis(1, 0, 2, 0).monomials == [(0,), (1,), (2,)]
    assert monomial_basis(1, 2, 1, 0).monomials == [(0, 0, 0), (1, 0, 0)]


def test_localizing_examples():
    b = monomial_basis(1, 0, 1, 0)
    blk = localizing_matrix(b, ExpPoly.variable(1, 0))
    assert blk.entries == [[{MomentKey((1,), ()): 1}, {MomentKey((2,), ()): 1}],
                           [{MomentKey((2,), ()): 1}, {MomentKey((3,), ()): 1}]]
    one = localizing_matrix(monomial_basis(1, 0, 0, 0), ExpPoly.constant(1))
    assert one.entries == [[{MomentKey((0,), ()): 1}]]
    k1 = localizing_matrix(monomial_basis(1, 2, 1, 0), ExpPoly.variable(3, 1))
    assert k1.entries[1][1] == {MomentKey((2,), (1, 0)): 1}


def test_lmap_grows_on_demand():
    Lmap = {}
    localizing_matrix(monomial_basis(1, 0, 1, 0), ExpPoly.variable(1, 0), Lmap)
    assert sorted(Lmap.values()) == [0, 1, 2]


def test_dimer_rho1_sigma1_structure():
    _, p = dimer_problem()
    assert p.block_sizes == [6, 2, 2, 3]
    assert [k for k, _ in p.eq_labels].count("zeta") == 3
    assert p.eq_labels[0][0] == "norm"
    assert p.G.shape[0] == 2
    for blk, F in zip(p.blocks, p.block_F):
        M = F.toarray().reshape(blk.size, blk.size, -1)
        assert np.array_equal(M, M.transpose(1, 0, 2))
    covered = set().union(*(b.keys() for b in p.blocks))
    assert set(p.keys) <= covered


def test_default_caps():
    assert default_caps(TruncationOrder(1, 1)) == (1, 1)
    assert default_caps(TruncationOrder(5, 9)) == (3, 5)


def test_max_is_negated_min():
    net, p = dimer_problem()
    q = assemble_conic(assemble_moment_equations(net, TruncationOrder(1, 1)), net, EX, "max")
    assert np.array_equal(q.c, -p.c)
    assert np.array_equal(flip_direction(p).c, q.c)
    assert q.sign == -1


def test_objective_must_be_copy_number_moment():
    net, _ = dimer_problem()
    sys = assemble_moment_equations(net, TruncationOrder(1, 1))
    with pytest.raises(BuildError, match="copy-number"):
        assemble_conic(sys, net, MomentKey((0,), (1, 0)))


def test_scale_divisor():
    s = ScaleRecord((5.0,), (3.0, 0.7))
    assert s.divisor(MomentKey((2,), (1, 0))) == pytest.approx(75)
    assert s.divisor(MomentKey((0,), (0, 0))) == 1
    with pytest.raises(ValueError):
        ScaleRecord((0.0,), (1.0, 1.0))


def test_identity_scaling_is_identity():
    _, p = dimer_problem()
    q = scale_problem(p, ScaleRecord.ones(1, 2))
    assert np.array_equal(q.A, p.A)
    assert all((a != b).nnz == 0 for a, b in zip(p.block_F, q.block_F))


def test_scaling_maps_feasible_points():
    net, p = dimer_problem()
    q = scale_problem(p, ScaleRecord((5.0,), (3.0, 0.7)))
    rng = np.random.default_rng(0)
    y = rng.normal(size=p.nvars)
    z = y / q.col_scale
    # equalities and objective agree up to the row scaling; block matrices up to congruence
    assert np.allclose(q.A @ z, (p.A @ y) * q.row_scale)
    assert q.sign * q.c @ z == pytest.approx(p.sign * p.c @ y)
    for i in range(len(p.blocks)):
        ev_p = np.linalg.eigvalsh(p.block_matrix(i, y))
        ev_q = np.linalg.eigvalsh(q.block_matrix(i, z))
        assert np.sum(ev_p > 1e-9) == np.sum(ev_q > 1e-9)


def test_pruning_keeps_linear_moments():
    net, p = dimer_problem(rho=5, sigma=3)
    q = prune_free_diagonals(p)
    assert q.nvars < p.nvars
    assert all(not p.A[:, p.index[k]].any() for k in q.pruned)
    assert EX in q.keys
    assert q.keys[0] == MomentKey((0,), (0, 0))


def test_build_problem_pipeline():
    net, _ = dimer_problem()
    p = build_problem(net, TruncationOrder(2, 1), EX, scale=ScaleRecord((5.0,), (3.0, 0.7)))
    assert p.scale is not None
    assert not np.all(p.col_scale == 1)


def test_sdpa_export():
    _, p = dimer_problem(r=0.0)
    text = export_sdpa(p)
    lines = [ln for ln in text.splitlines() if not ln.startswith('"')]
    m, nblk, sizes = int(lines[0]), int(lines[1]), lines[2].split()
    assert m == p.nvars - 1
    assert nblk == 5
    assert [int(s) for s in sizes[:4]] == [6, 2, 2, 3]
    assert int(sizes[4]) < 0
    assert text == export_sdpa(p)
    assert text.endswith("\n") and text.isascii()


def test_sdpa_single_variable():
    net = network_from_dict({"species": ["X"], "parameters": [], "reactions": []})
    p = assemble_conic(assemble_moment_equations(net, TruncationOrder(1, 0)), net,
                       MomentKey((1,), ()), caps=(0, 0))
    text = export_sdpa(p)
    assert "momentbound" in text
