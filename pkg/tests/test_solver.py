import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from momentbound import solver
from momentbound.momeq import MomentKey, TruncationOrder, assemble_moment_equations
from momentbound.netspec import network_from_dict
from momentbound.polyalg import ExpPoly
from momentbound.sdpbuild import (ConicProblem, MonomialBasis, PsdBlock, assemble_conic,
                                  export_sdpa, flip_direction)

from conftest import network_doc
from test_momeq import poisson_moment

TIGHT = solver.SolverSettings(tol_gap=1e-9, tol_feas=1e-9)


def small_problem(c, G=None, blocks=(), direction="min"):
    """Problem over y = (1, y_1, ...) with y_0 pinned; blocks are lists of s x s matrices."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A = np.eye(1, n)
    G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float)
    psd, F = [], []
    for mats in blocks:
        s = mats[0].shape[0]
        psd.append(PsdBlock("B", ExpPoly.constant(1), MonomialBasis([(0,)] * s, (0, 0), 1), []))
        F.append(sp.csr_matrix(np.column_stack([np.asarray(M, float).ravel() for M in mats])))
    keys = [MomentKey((i,), ()) for i in range(n)]
    sign = 1
    if direction == "max":
        c, sign = -c, -1
    return ConicProblem(keys, c, direction, sign, A, np.ones(1), [("norm", None)], G,
                        [f"g{i}" for i in range(G.shape[0])], psd, F, {})


def test_two_by_two_block():
    # min t s.t. [[1, t], [t, 1]] PSD
    p = small_problem([0, 1], blocks=[[np.eye(2), np.array([[0, 1], [1, 0]])]])
    sol = solver.solve(p, TIGHT)
    assert sol.status == solver.OPTIMAL
    assert sol.value == pytest.approx(-1, abs=1e-8)
    hi = solver.solve(flip_direction(p), TIGHT)
    assert hi.value == pytest.approx(1, abs=1e-8)


def test_nonnegativity_block():
    p = small_problem([0, 1], blocks=[[np.zeros((1, 1)), np.ones((1, 1))]])
    sol = solver.solve(p, TIGHT)
    assert sol.status == solver.OPTIMAL
    assert sol.value == pytest.approx(0, abs=1e-8)


def test_infeasible_pair():
    # x - 1 >= 0 and -x >= 0
    p = small_problem([0, 1], G=[[-1, 1], [0, -1]])
    sol = solver.solve(p, TIGHT)
    assert sol.status == solver.PRIMAL_INFEASIBLE
    assert math.isnan(sol.value)


def test_unbounded():
    p = small_problem([0, 1], G=[[0, -1]])
    sol = solver.solve(p, TIGHT)
    assert sol.status == solver.DUAL_INFEASIBLE
    assert math.isnan(sol.value)


def test_weak_duality_on_optimal():
    p = small_problem([0, 1, 1], G=[[-1, 1, 1], [0, 1, 0], [0, 0, 1]],
                      blocks=[[np.eye(2), np.array([[0, 1], [1, 0]]), np.zeros((2, 2))]])
    sol = solver.solve(p, TIGHT)
    assert sol.status == solver.OPTIMAL
    assert sol.value == pytest.approx(1, abs=1e-8)
    assert abs(sol.value - sol.dual_value) <= 1e-9 * (1 + abs(sol.value))
    assert solver.residual_report(p, sol.primal).feasible(1e-8)


def test_stall_is_retried_with_shorter_steps(monkeypatch):
    p = small_problem([0, 1], blocks=[[np.eye(2), np.array([[0, 1], [1, 0]])]])
    real, fracs = solver.conelp, []

    def flaky(*args):
        fracs.append(args[-1].step_fraction)
        r = real(*args)
        if len(fracs) == 1:
            r = dict(r, status=solver.NUMERICAL_FAILURE, message="stall")
        return r

    monkeypatch.setattr(solver, "conelp", flaky)
    sol = solver.solve(p, TIGHT)
    assert fracs == [0.98, 0.9]
    assert sol.optimal


def test_settings_validation():
    with pytest.raises(ValueError):
        solver.SolverSettings(tol_gap=0)
    with pytest.raises(ValueError):
        solver.SolverSettings(max_iters=0)
    with pytest.raises(ValueError):
        solver.SolverSettings(step_fraction=1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_random_lps_against_linprog(seed):
    rng = np.random.default_rng(seed)
    n, m = 3, 6
    # feasible and bounded: constraints around a known point, box bounds
    x0 = rng.normal(size=n)
    Gx = rng.normal(size=(m, n))
    slack = rng.uniform(0.1, 1.0, m)
    h = Gx @ x0 + slack
    G = np.vstack([np.column_stack([h, -Gx]),
                   np.column_stack([np.full(n, 5.0), -np.eye(n)]),
                   np.column_stack([np.full(n, 5.0), np.eye(n)])])
    c = rng.normal(size=n)
    ref = linprog(c, A_ub=-G[:, 1:], b_ub=G[:, 0], bounds=[(None, None)] * n, method="highs")
    sol = solver.solve(small_problem(np.r_[0.0, c], G=G), TIGHT)
    assert ref.status == 0
    assert sol.status == solver.OPTIMAL
    assert sol.value == pytest.approx(ref.fun, abs=1e-7 * (1 + abs(ref.fun)))


# -- residual_report -----------------------------------------------------------

def birth_death_problem(rho=3):
    net = network_from_dict(network_doc("birth_death"))
    sys = assemble_moment_equations(net, TruncationOrder(rho, 0))
    return assemble_conic(sys, net, MomentKey((1,), ()))


def test_poisson_point_is_feasible():
    p = birth_death_problem()
    moments = {k: poisson_moment(50.0, k.alpha[0]) for k in p.keys}
    rep = solver.residual_report(p, p.to_solver_vector(moments))
    assert rep.max_eq_violation <= 1e-9 * poisson_moment(50.0, 4)
    assert rep.min_eig >= -1e-9


def test_zero_vector_violates_normalization():
    p = birth_death_problem()
    rep = solver.residual_report(p, np.zeros(p.nvars))
    assert rep.max_eq_violation == pytest.approx(np.max(np.abs(p.b / p.row_scale)))


def test_report_flags_the_violated_block():
    p = small_problem([0, 1], blocks=[[np.eye(2), np.array([[0, 1], [1, 0]])],
                                      [np.zeros((1, 1)), np.ones((1, 1))]])
    rep = solver.residual_report(p, np.array([1.0, 2.0]))
    assert rep.block_min_eigs[0] == pytest.approx(-1)
    assert rep.block_min_eigs[1] == pytest.approx(2)


def test_report_dimension_mismatch():
    with pytest.raises(ValueError):
        solver.residual_report(birth_death_problem(), np.zeros(2))


def test_birth_death_bounds_bracket_mean():
    p = birth_death_problem(2)
    lo = solver.solve(p)
    hi = solver.solve(flip_direction(p))
    assert lo.optimal and hi.optimal
    assert lo.value <= 50 + 1e-6 and hi.value >= 50 - 1e-6
    assert hi.value - lo.value < 1e-6


# -- cross-check against an external solver through the SDPA export ----------

def parse_sdpa(text):
    """Objective, block sizes, F_0..F_m and the equality count from the header."""
    neq = 0
    for ln in text.splitlines():
        if ln.startswith('"equalities:'):
            neq = int(ln.split()[1])
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith('"')]
    m = int(lines[0])
    sizes = [int(s) for s in lines[2].split()]
    c = np.array([float(v) for v in lines[3].split()])
    F = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
    for ln in lines[4:]:
        k, blk, i, j, v = ln.split()
        M = F[int(k)][int(blk) - 1]
        M[int(i) - 1, int(j) - 1] = M[int(j) - 1, int(i) - 1] = float(v)
    return c, sizes, F, neq


def cvxopt_value(p):
    """Solve the SDPA text of ``p`` with cvxopt, equality pairs folded back."""
    cvxopt = pytest.importorskip("cvxopt")
    from cvxopt import solvers
    c, sizes, F, neq = parse_sdpa(export_sdpa(p))
    m = len(F) - 1
    lp = sizes.index(min(sizes))
    # LP rows read sum_k x_k L[r, k] - L[r, 0] >= 0; the first 2*neq come in +/- pairs
    L = np.array([[F[k][lp][r, r] for k in range(m + 1)] for r in range(-sizes[lp])])
    A, b = L[0:2 * neq:2, 1:], L[0:2 * neq:2, 0]
    Gl, hl = -L[2 * neq:, 1:], -L[2 * neq:, 0]
    psd = [i for i, s in enumerate(sizes) if s > 0]
    Gs = [np.column_stack([-F[k][i].ravel(order="F") for k in range(1, m + 1)]) for i in psd]
    hs = [-F[0][i].ravel(order="F") for i in psd]
    solvers.options.update(show_progress=False, abstol=1e-9, reltol=1e-9, feastol=1e-9)
    ref = solvers.conelp(cvxopt.matrix(c), cvxopt.matrix(np.vstack([Gl] + Gs)),
                         cvxopt.matrix(np.concatenate([hl] + hs)),
                         {"l": Gl.shape[0], "q": [], "s": [sizes[i] for i in psd]},
                         cvxopt.matrix(A), cvxopt.matrix(b))
    return ref["status"], p.sign * (ref["primal objective"] + p.c[0])


@pytest.mark.parametrize("direction", ["min", "max"])
def test_matches_cvxopt_through_sdpa(direction):
    net = network_from_dict(network_doc("dimerization")).with_fixed({"K1": 0.8, "K2": 0.4})
    p = assemble_conic(assemble_moment_equations(net, TruncationOrder(3, 0)), net,
                       MomentKey((1,), ()), direction)
    status, ref = cvxopt_value(p)
    assert status == "optimal"
    ours = solver.solve(p, solver.SolverSettings(tol_gap=1e-9, tol_feas=1e-9))
    assert ours.optimal
    assert ours.value == pytest.approx(ref, rel=1e-7)
