"""Truncated stationary moment equations 0 = A mu + B nu + C xi.

Moments are keyed by :class:`MomentKey` = (species exponents, exponents of
the uncertain parameters). Fixed parameters are substituted while the
equations are assembled, so they never appear in a key.
"""

from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import product
from typing import NamedTuple

import numpy as np

from .polyalg import generator_poly, grlex_key
from .netspec import gamma_moment  # noqa: F401  (re-exported)


class MomentKey(NamedTuple):
    alpha: tuple
    beta: tuple

    @classmethod
    def from_expvec(cls, e, n):
        e = tuple(e)
        return cls(e[:n], e[n:])

    @property
    def expvec(self):
        return self.alpha + self.beta

    @property
    def kind(self):
        """'mu' (copy numbers only), 'nu' (mixed) or 'xi' (parameters only)."""
        if not any(self.alpha):
            return "xi"
        return "nu" if any(self.beta) else "mu"

    @property
    def species_degree(self):
        return sum(self.alpha)

    @property
    def param_degree(self):
        return sum(self.beta)

    def label(self, species, params):
        parts = []
        for names, exps in ((species, self.alpha), (params, self.beta)):
            for nm, k in zip(names, exps):
                if k == 1:
                    parts.append(nm)
                elif k:
                    parts.append(f"{nm}^{k}")
        return "E[" + ("*".join(parts) or "1") + "]"


def sort_keys(keys):
    return sorted(keys, key=lambda k: grlex_key(k.expvec))


@dataclass(frozen=True)
class TruncationOrder:
    rho: int
    sigma: int = 0

    def __post_init__(self):
        if self.rho < 1:
            raise ValueError("rho must be at least 1")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def _exponents(nvars, max_degree, min_degree=0):
    out = []
    for e in product(range(max_degree + 1), repeat=nvars):
        if min_degree <= sum(e) <= max_degree:
            out.append(e)
    return out


def enumerate_zeta(t, n, r):
    """Multi-indices generating the truncated equations.

    All zeta = (alpha | beta) with 1 <= |alpha| <= rho and |beta| <= sigma,
    graded lex ordered. zeta with alpha = 0 give identically zero rows and are
    left out.
    """
    zetas = [a + b for a in _exponents(n, t.rho, 1) for b in _exponents(r, t.sigma)]
    return sorted(zetas, key=grlex_key)


@dataclass
class MomentSystem:
    """Rows 0 = A mu + B nu + C xi + const * E[1].

    ``const`` starts at zero and collects the contribution of substituted
    parameter moments.
    """

    rows: list
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    mu_keys: list
    nu_keys: list
    xi_keys: list
    const: np.ndarray
    n: int
    order: TruncationOrder = None
    Lmap: dict = field(default=None)

    def __post_init__(self):
        if self.Lmap is None:
            self.Lmap = {k: i for i, k in enumerate(self.mu_keys + self.nu_keys + self.xi_keys)}

    @property
    def keys(self):
        return self.mu_keys + self.nu_keys + self.xi_keys

    def row_poly_terms(self, i):
        """Nonzero ``{MomentKey: coeff}`` of row i (without ``const``)."""
        out = {}
        for mat, keys in ((self.A, self.mu_keys), (self.B, self.nu_keys), (self.C, self.xi_keys)):
            for j, k in enumerate(keys):
                if mat[i, j]:
                    out[k] = mat[i, j]
        return out

    def residual(self, values):
        """Row residuals for a moment assignment ``{MomentKey: value}`` (E[1] = 1)."""
        res = np.array([float(c) for c in self.const], dtype=float)
        for mat, keys in ((self.A, self.mu_keys), (self.B, self.nu_keys), (self.C, self.xi_keys)):
            if not keys:
                continue
            vec = np.array([float(values[k]) for k in keys])
            res += mat.astype(float) @ vec
        return res


def _fixed_factor(e, net, fixed_cache):
    c = Fraction(1)
    for p_idx, p in enumerate(net.params):
        k = e[net.n + p_idx]
        if k and p.fixed:
            c *= fixed_cache[p_idx] ** k
    return c


def row_polynomial(zeta, net):
    """Generator row for a reduced ``zeta`` with fixed parameters substituted.

    Returns ``{MomentKey: Fraction}``.
    """
    n = net.n
    ext = [0] * net.n_extended
    ext[:n] = zeta[:n]
    unc_pos = [n + i for i, p in enumerate(net.params) if not p.fixed]
    for slot, k in zip(unc_pos, zeta[n:]):
        ext[slot] = k
    fixed_vals = {i: p.value for i, p in enumerate(net.params) if p.fixed}
    out = {}
    for rxn in net.reactions:
        poly = generator_poly(tuple(ext), rxn, net)
        for e, c in poly.terms.items():
            c = c * _fixed_factor(e, net, fixed_vals)
            key = MomentKey(tuple(e[:n]), tuple(e[s] for s in unc_pos))
            v = out.get(key, Fraction(0)) + c
            if v:
                out[key] = v
            else:
                out.pop(key, None)
    return out


def _object_zeros(m, k):
    a = np.empty((m, k), dtype=object)
    a.fill(Fraction(0))
    return a


def assemble_moment_equations(net, t):
    """Collect the stationary moment equations for every zeta up to (rho, sigma)."""
    ru = len(net.uncertain)
    rows = enumerate_zeta(t, net.n, ru)
    polys = [row_polynomial(z, net) for z in rows]
    allkeys = set()
    for p in polys:
        allkeys.update(p)
    mu = sort_keys(k for k in allkeys if k.kind == "mu")
    nu = sort_keys(k for k in allkeys if k.kind == "nu")
    xi = sort_keys(k for k in allkeys if k.kind == "xi")
    mats = {name: _object_zeros(len(rows), len(keys))
            for name, keys in (("A", mu), ("B", nu), ("C", xi))}
    where = {}
    for name, keys in (("A", mu), ("B", nu), ("C", xi)):
        for j, k in enumerate(keys):
            where[k] = (name, j)
    for i, p in enumerate(polys):
        for k, c in p.items():
            name, j = where[k]
            mats[name][i, j] = c
    const = np.array([Fraction(0)] * len(rows), dtype=object)
    return MomentSystem([tuple(z) for z in rows], mats["A"], mats["B"], mats["C"],
                        mu, nu, xi, const, net.n, t)


def substitute_known(sys, known):
    """Fold known xi moments into the constant column.

    ``known`` maps MomentKey -> value; every key must be a column of C.
    """
    if not known:
        return replace(sys, Lmap=None)
    idx = {k: j for j, k in enumerate(sys.xi_keys)}
    for k in known:
        if k not in idx:
            raise KeyError(f"{k} is not a parameter moment of this system")
    const = sys.const.copy()
    for k, v in known.items():
        const = const + sys.C[:, idx[k]] * Fraction(v)
    keep = [j for j, k in enumerate(sys.xi_keys) if k not in known]
    C = sys.C[:, keep] if keep else _object_zeros(len(sys.rows), 0)
    return replace(sys, C=C, xi_keys=[sys.xi_keys[j] for j in keep], const=const, Lmap=None)


def known_xi(sys, net):
    """Known parameter moments of ``net`` that appear as columns of ``sys.C``."""
    known = net.known_moment_map()
    out = {}
    for k in sys.xi_keys:
        if k.beta in known:
            out[k] = known[k.beta]
    return out
