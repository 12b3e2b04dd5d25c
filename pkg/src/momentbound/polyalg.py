"""Exact polynomial algebra over the extended state (X, K).

Polynomials are stored as ``{exponent tuple: Fraction}`` maps. The first
``n`` exponent slots belong to species copy numbers, the rest to rate
parameters. Everything here is exact; floats only appear once a problem is
handed to the conic stage.
"""

from fractions import Fraction
from math import comb
from itertools import product


def grlex_key(expvec):
    """Sort key for graded lexicographic order (total degree first)."""
    return (sum(expvec), tuple(-e for e in expvec))


class ExpPoly:
    """Sparse multivariate polynomial with rational coefficients.

    Parameters
    ----------
    nvars : int
        Arity of every exponent vector.
    terms : dict, optional
        Mapping exponent tuple -> coefficient. Zero coefficients are dropped.
    """

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars, terms=None):
        self.nvars = int(nvars)
        self.terms = {}
        for e, c in (terms or {}).items():
            e = tuple(int(v) for v in e)
            if len(e) != self.nvars:
                raise ValueError(f"exponent {e} does not have arity {self.nvars}")
            if any(v < 0 for v in e):
                raise ValueError(f"negative exponent in {e}")
            c = Fraction(c)
            if c:
                self.terms[e] = self.terms.get(e, Fraction(0)) + c
                if not self.terms[e]:
                    del self.terms[e]

    @classmethod
    def constant(cls, nvars, c=1):
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def monomial(cls, expvec, c=1):
        return cls(len(expvec), {tuple(expvec): c})

    @classmethod
    def variable(cls, nvars, index):
        e = [0] * nvars
        e[index] = 1
        return cls(nvars, {tuple(e): 1})

    def _check(self, other):
        if self.nvars != other.nvars:
            raise ValueError(f"arity mismatch: {self.nvars} vs {other.nvars}")

    def __add__(self, other):
        if not isinstance(other, ExpPoly):
            other = ExpPoly.constant(self.nvars, other)
        self._check(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            v = out.get(e, Fraction(0)) + c
            if v:
                out[e] = v
            else:
                out.pop(e, None)
        return ExpPoly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return ExpPoly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, ExpPoly):
            return self.scale(other)
        self._check(other)
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, Fraction(0)) + c1 * c2
        return ExpPoly(self.nvars, out)

    def __rmul__(self, other):
        return self.scale(other)

    def scale(self, c):
        c = Fraction(c)
        return ExpPoly(self.nvars, {e: c * v for e, v in self.terms.items()})

    def __eq__(self, other):
        if isinstance(other, ExpPoly):
            return self.nvars == other.nvars and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self == ExpPoly.constant(self.nvars, other)
        return NotImplemented

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        """Iterate ``(expvec, coeff)`` in graded lex order."""
        for e in sorted(self.terms, key=grlex_key):
            yield e, self.terms[e]

    def coeff(self, expvec):
        return self.terms.get(tuple(expvec), Fraction(0))

    def degree(self, indices=None):
        """Maximum total degree, optionally restricted to a subset of slots."""
        if not self.terms:
            return -1
        if indices is None:
            indices = range(self.nvars)
        return max(sum(e[i] for i in indices) for e in self.terms)

    def evaluate(self, point):
        total = 0
        for e, c in self.terms.items():
            m = float(c)
            for x, k in zip(point, e):
                if k:
                    m *= x ** k
            total += m
        return total

    def __repr__(self):
        if not self.terms:
            return "ExpPoly(0)"
        parts = []
        for e, c in self:
            mono = "*".join(f"x{i}^{k}" if k > 1 else f"x{i}"
                            for i, k in enumerate(e) if k)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return "ExpPoly(" + " + ".join(parts) + ")"


def poly_combine(p, q, op):
    """Combine two polynomials.

    ``op`` is ``"add"``, ``"mul"`` or ``("scale", c)``; for scaling ``q`` is
    ignored and may be None.
    """
    if isinstance(op, tuple) and op[0] == "scale":
        return p.scale(op[1])
    if q is not None and p.nvars != q.nvars:
        raise ValueError(f"arity mismatch: {p.nvars} vs {q.nvars}")
    if op == "add":
        return p + q
    if op == "mul":
        return p * q
    raise ValueError(f"unknown operation {op!r}")


def expand_falling_factorial(orders, nvars):
    """Expand prod_j X_j (X_j - 1) ... (X_j - m_j + 1) into monomials.

    Parameters
    ----------
    orders : dict
        Slot index -> falling factorial order m_j.
    nvars : int
        Arity of the resulting polynomial.
    """
    if sum(orders.values()) > 2:
        raise ValueError(f"total propensity order {sum(orders.values())} > 2; "
                         "only elementary reactions are supported")
    out = ExpPoly.constant(nvars)
    for j, m in orders.items():
        if m < 0:
            raise ValueError("negative falling factorial order")
        x = ExpPoly.variable(nvars, j)
        for k in range(m):
            out = out * (x - k)
    return out


def shift_diff(zeta, shat):
    """Expand (x + s)^zeta - x^zeta exactly.

    Each factor is expanded binomially: (x_j + s_j)^z = sum_k C(z,k) s_j^(z-k) x_j^k.
    """
    zeta = tuple(zeta)
    if len(zeta) != len(shat):
        raise ValueError("zeta and shift have different arity")
    n = len(zeta)
    per_slot = []
    for z, s in zip(zeta, shat):
        per_slot.append([(k, comb(z, k) * s ** (z - k)) for k in range(z + 1)
                         if comb(z, k) * s ** (z - k)])
    out = {}
    for combo in product(*per_slot):
        c = 1
        for _, v in combo:
            c *= v
        e = tuple(k for k, _ in combo)
        out[e] = out.get(e, 0) + c
    out[zeta] = out.get(zeta, 0) - 1
    return ExpPoly(n, out)


def generator_poly(zeta, rxn, net):
    """Polynomial whose coefficient of x^gamma is a^zeta_gamma for one reaction.

    The exponent ``zeta`` runs over the full extended state of ``net``
    (species, then every declared parameter, fixed ones included).
    """
    d = shift_diff(zeta, net.extended_shift(rxn))
    if not d:
        return ExpPoly(len(zeta))
    return d * net.propensity_poly(rxn)
