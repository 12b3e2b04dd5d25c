"""Semidefinite relaxation of the stationary moment problem.

The relaxation keeps the truncated moment equations as linear equalities
and adds a moment matrix E[g g^T] plus localizing matrices E[z g g^T] for
every support polynomial z (c_i(K) >= 0, d_j(X) >= 0). Moments become free
variables; known parameter moments are folded in as multiples of E[1].

The resulting :class:`ConicProblem` is in "dual" SDP form::

    minimize    c^T y
    subject to  A y = b,  G y >= 0,  sum_k y_k F_k  PSD  (one per block)
"""

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import product

import numpy as np
import scipy.sparse as sp

from .polyalg import ExpPoly, grlex_key
from .momeq import (MomentKey, assemble_moment_equations, known_xi, sort_keys,
                    substitute_known)


class BuildError(ValueError):
    """Raised when a relaxation cannot be assembled as requested."""


@dataclass
class MonomialBasis:
    monomials: list
    caps: tuple
    n: int

    def __len__(self):
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)


def monomial_basis(n, r, cap_species, cap_params):
    """All monomials with species degree <= cap_species and parameter degree <= cap_params."""
    if cap_species < 0 or cap_params < 0:
        return MonomialBasis([], (cap_species, cap_params), n)
    mons = []
    for a in product(range(cap_species + 1), repeat=n):
        if sum(a) > cap_species:
            continue
        for b in product(range(cap_params + 1), repeat=r):
            if sum(b) <= cap_params:
                mons.append(a + b)
    mons.sort(key=grlex_key)
    return MonomialBasis(mons, (cap_species, cap_params), n)


@dataclass
class PsdBlock:
    """PSD constraint L(E[multiplier * g g^T]).

    ``entries[a][b]`` is an affine map ``{MomentKey: Fraction}``.
    """

    name: str
    multiplier: ExpPoly
    basis: MonomialBasis
    entries: list

    @property
    def size(self):
        return len(self.basis)

    def keys(self):
        out = set()
        for row in self.entries:
            for e in row:
                out.update(e)
        return out


def localizing_matrix(basis, multiplier, Lmap=None, name=""):
    """Localizing matrix of ``multiplier`` on ``basis``.

    Entry (a, b) is the moment expression of multiplier * g_a * g_b. Keys not yet
    in ``Lmap`` are appended to it.
    """
    n = basis.n
    s = len(basis)
    entries = [[None] * s for _ in range(s)]
    for a in range(s):
        for b in range(a, s):
            ga, gb = basis.monomials[a], basis.monomials[b]
            expr = {}
            for e, c in multiplier.terms.items():
                key = MomentKey.from_expvec(tuple(x + y + z for x, y, z in zip(e, ga, gb)), n)
                expr[key] = expr.get(key, Fraction(0)) + c
            expr = {k: v for k, v in expr.items() if v}
            entries[a][b] = expr
            entries[b][a] = expr
            if Lmap is not None:
                for k in expr:
                    if k not in Lmap:
                        Lmap[k] = len(Lmap)
    return PsdBlock(name, multiplier, basis, entries)


@dataclass
class ScaleRecord:
    """Per-variable scale constants; E[X^a K^b] is divided by prod C_X^a prod C_K^b."""

    C_X: tuple
    C_K: tuple

    def __post_init__(self):
        if any(c <= 0 for c in tuple(self.C_X) + tuple(self.C_K)):
            raise ValueError("scale constants must be positive")

    def divisor(self, key):
        d = 1.0
        for c, k in zip(self.C_X, key.alpha):
            d *= float(c) ** k
        for c, k in zip(self.C_K, key.beta):
            d *= float(c) ** k
        return d

    @classmethod
    def ones(cls, n, r):
        return cls((1.0,) * n, (1.0,) * r)

    def is_identity(self):
        return all(c == 1 for c in tuple(self.C_X) + tuple(self.C_K))


@dataclass
class ConicProblem:
    """Numeric SDP over moment variables ``keys`` (``keys[0]`` is E[1]).

    ``col_scale[k]`` converts the solver variable back to the moment:
    E[keys[k]] = col_scale[k] * y[k]. ``sign`` is +1 for a minimization and
    -1 for a maximization encoded as min of the negated objective; the bound
    in original units is ``sign * c @ y``.
    """

    keys: list
    c: np.ndarray
    direction: str
    sign: int
    A: np.ndarray
    b: np.ndarray
    eq_labels: list
    G: np.ndarray
    ineq_labels: list
    blocks: list
    block_F: list
    objective: dict
    col_scale: np.ndarray = None
    scale: ScaleRecord = None
    known: dict = field(default_factory=dict)
    species: list = field(default_factory=list)
    params: list = field(default_factory=list)
    row_scale: np.ndarray = None
    pruned: list = field(default_factory=list)

    def __post_init__(self):
        if self.col_scale is None:
            self.col_scale = np.ones(len(self.keys))
        if self.row_scale is None:
            self.row_scale = np.ones(len(self.b))

    @property
    def nvars(self):
        return len(self.keys)

    @property
    def block_sizes(self):
        return [b.size for b in self.blocks]

    @property
    def index(self):
        return {k: i for i, k in enumerate(self.keys)}

    def block_matrix(self, i, y):
        s = self.blocks[i].size
        return (self.block_F[i] @ y).reshape(s, s)

    def moments(self, y):
        """Map a solver vector to ``{MomentKey: value}`` in original units."""
        vals = np.asarray(y) * self.col_scale
        return dict(zip(self.keys, vals))

    def to_solver_vector(self, moments):
        """Inverse of :meth:`moments`; missing keys raise KeyError."""
        return np.array([moments[k] for k in self.keys], dtype=float) / self.col_scale

    def label(self, key):
        return key.label(self.species, self.params)


def _expr_to_row(expr, index, known, nvar, out=None):
    row = np.zeros(nvar) if out is None else out
    for k, c in expr.items():
        if k in index:
            row[index[k]] += float(c)
        elif k.kind == "xi" and k.beta in known:
            row[0] += float(c) * float(known[k.beta])
        else:
            raise BuildError(f"moment {k} is not a problem variable")
    return row


def _block_operator(block, index, known, nvar):
    s = block.size
    rows, cols, vals = [], [], []
    for a in range(s):
        for b in range(s):
            for k, c in block.entries[a][b].items():
                if k in index:
                    j, v = index[k], float(c)
                elif k.kind == "xi" and k.beta in known:
                    j, v = 0, float(c) * float(known[k.beta])
                else:
                    raise BuildError(f"moment {k} is not a problem variable")
                rows.append(a * s + b)
                cols.append(j)
                vals.append(v)
    F = sp.csr_matrix((vals, (rows, cols)), shape=(s * s, nvar))
    F.sum_duplicates()
    return F


def default_caps(t):
    """Smallest grouped caps whose moment matrix holds every equation moment."""
    return (math.ceil((t.rho + 1) / 2), math.ceil((t.sigma + 1) / 2))


def _localizing_caps(caps, mult, n):
    ds = mult.degree(range(n))
    dp = mult.degree(range(n, mult.nvars))
    return (caps[0] - math.ceil(max(ds, 0) / 2), caps[1] - math.ceil(max(dp, 0) / 2))


def build_blocks(net, caps):
    """Moment matrix plus one localizing matrix per support polynomial."""
    n, ru = net.n, len(net.uncertain)
    nv = n + ru
    cs, ds = net.support_polys()
    blocks = [localizing_matrix(monomial_basis(n, ru, *caps), ExpPoly.constant(nv), name="H0")]
    for i, c in enumerate(cs):
        lc = _localizing_caps(caps, c, n)
        if min(lc) >= 0:
            blocks.append(localizing_matrix(monomial_basis(n, ru, *lc), c, name=f"c{i + 1}"))
    for j, d in enumerate(ds):
        lc = _localizing_caps(caps, d, n)
        if min(lc) >= 0:
            blocks.append(localizing_matrix(monomial_basis(n, ru, *lc), d, name=f"d{j + 1}"))
    return blocks


def _covered(sys, blocks, known):
    inblocks = set()
    for b in blocks:
        inblocks |= b.keys()
    for k in sys.keys:
        if k not in inblocks and not (k.kind == "xi" and k.beta in known):
            return k
    return None


def _as_objective(objective, n, ru):
    if isinstance(objective, MomentKey):
        objective = {objective: 1}
    out = {}
    for k, v in objective.items():
        if not isinstance(k, MomentKey):
            k = MomentKey(tuple(k[:n]), tuple(k[n:]) or (0,) * ru)
        if k.kind != "mu":
            raise BuildError("objective must be a copy-number moment")
        out[k] = Fraction(v)
    return out


def assemble_conic(sys, net, objective, direction="min", caps=None, auto_caps=True,
                   max_cap_increase=4):
    """Assemble the relaxation for bounding ``objective`` (a mu key or {key: coeff}).

    ``caps`` = (species cap, parameter cap) of the moment matrix basis; if
    omitted, :func:`default_caps` is used. With ``auto_caps`` the caps grow
    until every moment of the equations sits in some PSD block.
    """
    if direction not in ("min", "max"):
        raise BuildError(f"direction must be 'min' or 'max', got {direction!r}")
    n, ru = net.n, len(net.uncertain)
    objective = _as_objective(objective, n, ru)
    known = net.known_moment_map()
    sys = substitute_known(sys, known_xi(sys, net))

    caps = tuple(caps) if caps is not None else default_caps(sys.order)
    for _ in range(max_cap_increase + 1):
        blocks = build_blocks(net, caps)
        missing = _covered(sys, blocks, known)
        if missing is None:
            break
        if not auto_caps:
            raise BuildError(f"basis caps {caps} do not cover moment "
                             f"{missing.label(net.species_names, net.uncertain_names)}")
        caps = (caps[0] + (missing.species_degree > 2 * caps[0]),
                caps[1] + (missing.param_degree > 2 * caps[1]))
    else:
        raise BuildError(f"could not cover moment {missing} by raising basis caps")

    one = MomentKey((0,) * n, (0,) * ru)
    keyset = set(sys.mu_keys) | set(sys.nu_keys) | set(sys.xi_keys) | set(objective)
    for b in blocks:
        keyset |= b.keys()
    keyset = {k for k in keyset if not (k.kind == "xi" and k.beta in known)}
    keyset.discard(one)
    keys = [one] + sort_keys(keyset)
    index = {k: i for i, k in enumerate(keys)}
    nvar = len(keys)

    # equalities: normalization, then one row per zeta
    A = np.zeros((1 + len(sys.rows), nvar))
    b = np.zeros(1 + len(sys.rows))
    A[0, 0] = 1.0
    b[0] = 1.0
    labels = [("norm", None)]
    for i, z in enumerate(sys.rows):
        _expr_to_row(sys.row_poly_terms(i), index, known, nvar, out=A[1 + i])
        A[1 + i, 0] += float(sys.const[i])
        labels.append(("zeta", MomentKey.from_expvec(z, n)))

    G = np.zeros((len(net.constraints), nvar))
    unames = net.uncertain_names
    for i, con in enumerate(net.constraints):
        expr = {}
        for coef, beta in con.terms:
            k = MomentKey((0,) * n, tuple(beta.get(nm, 0) for nm in unames))
            expr[k] = expr.get(k, Fraction(0)) + coef
        expr[one] = expr.get(one, Fraction(0)) + con.constant
        for k, v in expr.items():
            if k in index:
                G[i, index[k]] += float(v)
            elif k.beta in known:
                G[i, 0] += float(v) * float(known[k.beta])
            else:
                raise BuildError(f"constraint moment {k} is not a problem variable")
    ineq_labels = [f"h{i + 1}" for i in range(len(net.constraints))]
    G, ineq_labels, extra = _tidy_inequalities(G, ineq_labels)
    if extra:
        A = np.vstack([A] + [row for row, _ in extra])
        b = np.concatenate([b, np.zeros(len(extra))])
        labels += [("pair", lab) for _, lab in extra]

    F = [_block_operator(blk, index, known, nvar) for blk in blocks]

    f = np.zeros(nvar)
    for k, v in objective.items():
        f[index[k]] += float(v)
    sign = 1 if direction == "min" else -1
    return ConicProblem(keys, sign * f, direction, sign, A, b, labels, G, ineq_labels,
                        blocks, F, objective, known=known,
                        species=net.species_names, params=unames)


def _tidy_inequalities(G, labels, tol=1e-12):
    """Drop constant rows that hold and merge opposite pairs into equalities.

    Both situations leave the inequality cone without interior, which interior
    point methods cannot handle. Violated constant rows are kept so that
    infeasibility is still reported.
    """
    keep, extra, used = [], [], set()
    for i in range(G.shape[0]):
        if i in used:
            continue
        row = G[i]
        scale = max(1.0, float(np.abs(row).max()))
        if not np.any(np.abs(row[1:]) > tol * scale):
            if row[0] >= -tol * scale:
                continue
            keep.append(i)
            continue
        for j in range(i + 1, G.shape[0]):
            if j not in used and np.all(np.abs(G[j] + row) <= tol * scale):
                extra.append((row[None, :].copy(), f"{labels[i]}={labels[j]}"))
                used.add(j)
                break
        else:
            keep.append(i)
    return G[keep], [labels[i] for i in keep], extra


def flip_direction(p):
    """Same feasible set, opposite optimization direction."""
    d = "max" if p.direction == "min" else "min"
    return replace(p, c=-p.c, direction=d, sign=-p.sign)


def scale_problem(p, s):
    """Rewrite ``p`` in scaled moments E[.]/divisor.

    Columns are multiplied by the variable divisors, each moment-equation row is
    divided by the divisor of its generating zeta, and every PSD block is
    congruence-scaled by the basis divisors so its entries are scaled moments.
    Inequality rows are normalized to unit max-norm. The objective is carried
    along so that ``sign * c @ y`` stays in original units.
    """
    if p.col_scale is not None and not np.all(p.col_scale == 1):
        raise BuildError("problem is already scaled")
    div = np.array([s.divisor(k) for k in p.keys])
    A = p.A * div[None, :]
    row_scale = np.ones(len(p.b))
    for i, (kind, z) in enumerate(p.eq_labels):
        if kind == "zeta":
            row_scale[i] = 1.0 / s.divisor(z)
    A = A * row_scale[:, None]
    b = p.b * row_scale
    G = p.G * div[None, :]
    if G.size:
        nrm = np.abs(G).max(axis=1)
        nrm[nrm == 0] = 1.0
        G = G / nrm[:, None]
    F = []
    for blk, Fi in zip(p.blocks, p.block_F):
        lead = max(blk.multiplier.terms, key=grlex_key)
        md = s.divisor(MomentKey.from_expvec(lead, blk.basis.n))
        gd = np.array([s.divisor(MomentKey.from_expvec(g, blk.basis.n)) for g in blk.basis])
        w = 1.0 / (np.sqrt(md) * np.outer(gd, gd)).ravel()
        F.append(sp.csr_matrix(sp.diags(w) @ Fi @ sp.diags(div)))
    return replace(p, c=p.c * div, A=A, b=b, G=G, block_F=F, col_scale=div, scale=s,
                   row_scale=row_scale * p.row_scale)


def prune_free_diagonals(p):
    """Remove block rows whose diagonal is a moment used nowhere else.

    A moment that enters the problem only through diagonal entries (with
    positive coefficients) can be sent to infinity, so the optimum is not
    attained and interior point methods slow to a crawl. Dropping those rows
    and columns is a relaxation (a principal submatrix of a PSD matrix is
    PSD), so bounds stay valid. The value is unchanged whenever the kept
    principal block is positive definite, since the removed diagonal can then
    be chosen large enough. The procedure repeats until nothing
    changes; removed moments are listed in ``pruned``.
    """
    blocks, F = list(p.blocks), list(p.block_F)
    keep_cols = np.ones(p.nvars, dtype=bool)
    while True:
        linear = np.zeros(p.nvars, dtype=bool)
        linear[0] = True
        linear |= np.abs(p.A).sum(axis=0) > 0
        if p.G.size:
            linear |= np.abs(p.G).sum(axis=0) > 0
        linear |= p.c != 0
        # per variable: positions (block, row) of diagonal uses; False if used off-diagonal
        diag_only = np.ones(p.nvars, dtype=bool)
        seen = np.zeros(p.nvars, dtype=bool)
        drops = {}
        for i, (blk, Fi) in enumerate(zip(blocks, F)):
            sz = blk.size
            C = sp.coo_matrix(Fi)
            for pos, j, v in zip(C.row, C.col, C.data):
                if v == 0:
                    continue
                seen[j] = True
                a, b = divmod(int(pos), sz)
                if a != b or v < 0:
                    diag_only[j] = False
        free = diag_only & seen & ~linear & keep_cols
        for i, (blk, Fi) in enumerate(zip(blocks, F)):
            sz = blk.size
            C = sp.coo_matrix(Fi)
            for pos, j, v in zip(C.row, C.col, C.data):
                if v and free[j]:
                    drops.setdefault(i, set()).add(int(pos) // sz)
        unused = keep_cols & ~seen & ~linear
        if not drops and not unused.any():
            break
        for i, rows in drops.items():
            blk, sz = blocks[i], blocks[i].size
            keep = [a for a in range(sz) if a not in rows]
            sel = np.array([a * sz + b for a in keep for b in keep], dtype=int)
            F[i] = sp.csr_matrix(F[i][sel]) if sel.size else sp.csr_matrix((0, p.nvars))
            basis = MonomialBasis([blk.basis.monomials[a] for a in keep], blk.basis.caps,
                                  blk.basis.n)
            entries = [[blk.entries[a][b] for b in keep] for a in keep]
            blocks[i] = replace(blk, basis=basis, entries=entries)
        for j in np.flatnonzero(unused | free):
            keep_cols[j] = False
    idx = np.flatnonzero(keep_cols)
    pruned = [p.keys[j] for j in np.flatnonzero(~keep_cols)]
    nonempty = [i for i, b in enumerate(blocks) if b.size]
    return replace(p, keys=[p.keys[j] for j in idx], c=p.c[idx], A=p.A[:, idx],
                   G=p.G[:, idx], blocks=[blocks[i] for i in nonempty],
                   block_F=[sp.csr_matrix(F[i][:, idx]) for i in nonempty],
                   col_scale=p.col_scale[idx], pruned=p.pruned + pruned)


def default_scale(net, pilot_mean=None):
    """Scale constants: C_X = max(1, pilot mean), C_K = known first moment or 1."""
    cx = tuple(max(1.0, float(m)) for m in pilot_mean) if pilot_mean is not None \
        else (1.0,) * net.n
    ck = tuple(float(p.known_moments[1]) if 1 in p.known_moments else 1.0
               for p in net.uncertain)
    return ScaleRecord(cx, ck)


def build_problem(net, t, objective, direction="min", caps=None, scale=None, prune=True):
    """Equations, relaxation, optional scaling and pruning in one call."""
    sys = assemble_moment_equations(net, t)
    p = assemble_conic(sys, net, objective, direction, caps=caps)
    if scale is not None and not scale.is_identity():
        p = scale_problem(p, scale)
    if prune:
        p = prune_free_diagonals(p)
    return p


def _fmt(v):
    return repr(float(v))


def export_sdpa(p):
    """SDPA sparse text (``.dat-s``) for ``p``.

    E[1] is substituted by its pinned value 1, so the SDPA variables are
    ``keys[1:]``. Equalities a y = b are written as the inequality pair
    a y >= b, -a y >= -b in a trailing diagonal (LP) block, together with the
    rows of G y >= 0. The objective is minimized; header comments record the
    constant offset, the direction and the variable labels.
    """
    m = p.nvars - 1
    rows = []  # (coefficients over keys, constant) meaning coeffs @ y >= 0
    eq = [i for i, (kind, _) in enumerate(p.eq_labels) if kind != "norm"]
    for i in eq:
        rows.append(p.A[i] - np.eye(1, p.nvars, 0)[0] * p.b[i])
        rows.append(-rows[-1])
    for i in range(p.G.shape[0]):
        rows.append(p.G[i])
    sizes = [b.size for b in p.blocks]
    nlp = len(rows)
    out = []
    out.append('"moment relaxation exported by momentbound')
    out.append(f'"direction {p.direction}; reported bound = {p.sign} * (objective + offset)')
    out.append(f'"offset {_fmt(p.c[0])} (E[1] = 1 substituted)')
    out.append(f'"equalities: {len(eq)} rows written as inequality pairs in the last block')
    for j in range(1, p.nvars):
        out.append(f'"x{j} = {p.label(p.keys[j])} / {_fmt(p.col_scale[j])}')
    out.append(str(m))
    out.append(str(len(sizes) + (1 if nlp else 0)))
    out.append(" ".join([str(s) for s in sizes] + ([str(-nlp)] if nlp else [])))
    out.append(" ".join(_fmt(v) for v in p.c[1:]) if m else "")
    entries = []
    for bi, (s, F) in enumerate(zip(sizes, p.block_F), start=1):
        C = sp.coo_matrix(F)
        acc = {}
        for pos, j, v in zip(C.row, C.col, C.data):
            a, b = divmod(int(pos), s)
            if a > b or v == 0:
                continue
            # SDPA: sum_j x_j F_j - F_0 PSD, so the E[1] column enters F_0 negated
            key = (0 if j == 0 else int(j), bi, a + 1, b + 1)
            acc[key] = acc.get(key, 0.0) + (-v if j == 0 else v)
        entries.extend(acc.items())
    lb = len(sizes) + 1
    for r, row in enumerate(rows, start=1):
        for j in np.flatnonzero(row):
            v = row[j]
            entries.append(((0, lb, r, r), -v) if j == 0 else ((int(j), lb, r, r), v))
    for (mat, blk, a, b), v in sorted(entries):
        if v != 0:
            out.append(f"{mat} {blk} {a} {b} {_fmt(v)}")
    return "\n".join(out) + "\n"
