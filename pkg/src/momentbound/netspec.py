"""Reaction networks with uncertain rate parameters.

A :class:`Network` holds species, elementary reactions, parameter
specifications (fixed value, or uncertain with optional known moments) and
affine constraints on parameter moments. Networks are read from and written
to a small JSON document format, see :func:`parse_network`.
"""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

from .polyalg import ExpPoly, expand_falling_factorial


class NetworkError(ValueError):
    """Raised for malformed or inconsistent network documents."""


def to_fraction(x):
    """Exact rational for a JSON scalar; floats go through their repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise NetworkError(f"expected a number, got {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise NetworkError(f"non-finite number {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        try:
            return Fraction(x)
        except (ValueError, ZeroDivisionError):
            raise NetworkError(f"cannot read {x!r} as a number") from None
    raise NetworkError(f"expected a number, got {x!r}")


def _dump_number(c):
    c = Fraction(c)
    if c.denominator == 1:
        return c.numerator
    f = float(c)
    if Fraction(repr(f)) == c:
        return f
    return f"{c.numerator}/{c.denominator}"


def gamma_moment(eta, theta, beta):
    """Raw moment E[K^beta] of a gamma(shape=eta, scale=theta) variable.

    E[K^beta] = theta^beta * eta (eta + 1) ... (eta + beta - 1). Exact when the
    inputs are rationals; returns a Fraction in that case.
    """
    if eta <= 0 or theta <= 0:
        raise ValueError("gamma shape and scale must be positive")
    if beta < 0:
        raise ValueError("moment order must be non-negative")
    out = 1
    for j in range(1, beta + 1):
        out = out * theta * (eta + j - 1)
    return out


@dataclass
class Species:
    name: str
    index: int


@dataclass
class Propensity:
    """const_factor * K_rate * prod_j X_j (X_j - 1) ... (falling factorials)."""

    rate_param: str
    const_factor: Fraction = Fraction(1)
    falling_factorial_orders: dict = field(default_factory=dict)

    @property
    def order(self):
        return sum(self.falling_factorial_orders.values())


@dataclass
class Reaction:
    stoich: dict
    propensity: Propensity


@dataclass
class GammaSpec:
    shape: Fraction
    scale: Fraction
    max_order: int


@dataclass
class ParamSpec:
    name: str
    kind: str = "uncertain"
    value: Fraction = None
    known_moments: dict = field(default_factory=dict)
    gamma: GammaSpec = None
    support_lower: Fraction = Fraction(0)

    @property
    def fixed(self):
        return self.kind == "fixed"

    def mean(self):
        return self.known_moments.get(1)

    def std(self):
        m1, m2 = self.known_moments.get(1), self.known_moments.get(2)
        if m1 is None or m2 is None:
            return None
        var = m2 - m1 * m1
        return math.sqrt(var) if var > 0 else None


@dataclass
class AffineMomentConstraint:
    """sum_k coeff_k * E[K^beta_k] + constant >= 0.

    ``beta_k`` maps parameter names to exponents.
    """

    terms: list
    constant: Fraction = Fraction(0)
    sense: str = ">="

    def evaluate(self, moment_of):
        """Left-hand side given a callable returning E[K^beta] for a beta dict."""
        return float(self.constant) + sum(float(c) * moment_of(b) for c, b in self.terms)


@dataclass
class Diagnostic:
    severity: str
    message: str

    def __str__(self):
        return f"{self.severity}: {self.message}"


@dataclass
class Network:
    """Species, reactions, parameter specs and moment constraints.

    ``param_support`` and ``species_support`` hold the polynomials c_i(K) >= 0
    and d_j(X) >= 0 over the reduced variable vector (species followed by the
    uncertain parameters). When left as None the defaults K_i - lower_i >= 0
    and X_j >= 0 are used.
    """

    species: list
    reactions: list
    params: list
    constraints: list = field(default_factory=list)
    param_support: list = None
    species_support: list = None
    independent: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.species)

    @property
    def species_names(self):
        return [s.name for s in self.species]

    def param(self, name):
        for p in self.params:
            if p.name == name:
                return p
        raise NetworkError(f"unknown parameter {name}")

    def param_index(self, name):
        for i, p in enumerate(self.params):
            if p.name == name:
                return i
        raise NetworkError(f"unknown parameter {name}")

    def species_index(self, name):
        for s in self.species:
            if s.name == name:
                return s.index
        raise NetworkError(f"unknown species {name}")

    @property
    def uncertain(self):
        """Uncertain parameters, in declaration order."""
        return [p for p in self.params if not p.fixed]

    @property
    def uncertain_names(self):
        return [p.name for p in self.uncertain]

    # extended state: species, then all declared parameters (fixed included)
    @property
    def n_extended(self):
        return self.n + len(self.params)

    def extended_shift(self, rxn):
        shift = [0] * self.n_extended
        for name, d in rxn.stoich.items():
            shift[self.species_index(name)] = int(d)
        return tuple(shift)

    def propensity_poly(self, rxn):
        prop = rxn.propensity
        orders = {self.species_index(s): m
                  for s, m in prop.falling_factorial_orders.items() if m}
        poly = expand_falling_factorial(orders, self.n_extended)
        k = ExpPoly.variable(self.n_extended, self.n + self.param_index(prop.rate_param))
        return (poly * k).scale(prop.const_factor)

    def support_polys(self):
        """Return ``(param_polys, species_polys)`` over (X, K_uncertain)."""
        nv = self.n + len(self.uncertain)
        if self.param_support is not None:
            cs = list(self.param_support)
        else:
            cs = []
            for i, p in enumerate(self.uncertain):
                c = ExpPoly.variable(nv, self.n + i)
                if p.support_lower:
                    c = c - p.support_lower
                cs.append(c)
        if self.species_support is not None:
            ds = list(self.species_support)
        else:
            ds = [ExpPoly.variable(nv, j) for j in range(self.n)]
        return cs, ds

    def known_moment_map(self):
        """Known pure-parameter moments as {beta tuple over uncertain params: value}.

        Besides the marginal moments, every mixed moment of a mutually
        independent group whose marginal factors are all known is included
        as the product of those factors.
        """
        unc = self.uncertain
        ru = len(unc)
        out = {(0,) * ru: Fraction(1)}
        for i, p in enumerate(unc):
            for order, v in p.known_moments.items():
                beta = [0] * ru
                beta[i] = order
                out[tuple(beta)] = Fraction(v)
        names = [p.name for p in unc]
        for group in self.independent:
            idx = [names.index(nm) for nm in group]
            choices = [[(0, Fraction(1))] + sorted(unc[i].known_moments.items()) for i in idx]
            for combo in product(*choices):
                beta = [0] * ru
                v = Fraction(1)
                for i, (order, m) in zip(idx, combo):
                    beta[i] = order
                    v *= m
                out[tuple(beta)] = v
        return out

    def rates_vector(self, values=None):
        """Parameter values in declaration order, filling fixed ones.

        ``values`` maps uncertain parameter names to numbers.
        """
        values = values or {}
        out = []
        for p in self.params:
            if p.fixed:
                out.append(float(p.value))
            else:
                if p.name not in values:
                    raise NetworkError(f"no value given for uncertain parameter {p.name}")
                out.append(float(values[p.name]))
        return out

    def with_fixed(self, values):
        """Copy of this network where the named parameters become fixed."""
        params = []
        for p in self.params:
            if p.name in values:
                params.append(ParamSpec(p.name, "fixed", to_fraction(values[p.name])))
            else:
                params.append(p)
        fixed = set(values)
        constraints = [c for c in self.constraints
                       if not any(set(b) & fixed for _, b in c.terms)]
        independent = [g for g in self.independent if not set(g) & fixed]
        return Network(list(self.species), list(self.reactions), params, constraints,
                       independent=independent)


def correlation_constraints(pa, pb, r):
    """Pair of affine constraints encoding |corr(K_a, K_b)| <= r.

    Returns ``(h1, h2)`` with
    h1 = -E[K_a K_b] + m_a m_b + r s_a s_b >= 0 and
    h2 = E[K_a K_b] - m_a m_b + r s_a s_b >= 0.
    """
    if not 0 <= r <= 1:
        raise NetworkError(f"correlation bound r={r} outside [0, 1]")
    for p in (pa, pb):
        if 1 not in p.known_moments or 2 not in p.known_moments:
            raise NetworkError(f"parameter {p.name} needs known first and second moments")
        m1, m2 = p.known_moments[1], p.known_moments[2]
        if m2 - m1 * m1 <= 0:
            raise NetworkError(f"parameter {p.name} has non-positive variance")
    mm = pa.known_moments[1] * pb.known_moments[1]
    ss = Fraction(pa.std() * pb.std())
    r = to_fraction(r)
    beta = {pa.name: 1, pb.name: 1} if pa.name != pb.name else {pa.name: 2}
    h1 = AffineMomentConstraint([(Fraction(-1), beta)], mm + r * ss)
    h2 = AffineMomentConstraint([(Fraction(1), beta)], -mm + r * ss)
    return h1, h2


def validate_network(net):
    """Check the structural invariants of ``net``.

    Returns a list of :class:`Diagnostic`; nothing is raised.
    """
    diags = []
    err = lambda m: diags.append(Diagnostic("error", m))
    warn = lambda m: diags.append(Diagnostic("warning", m))

    if not net.species:
        err("empty species list")
    names = [s.name for s in net.species]
    if len(set(names)) != len(names):
        err("duplicate species names")
    if [s.index for s in net.species] != list(range(len(net.species))):
        err("species indices are not contiguous from 0")
    pnames = [p.name for p in net.params]
    if len(set(pnames)) != len(pnames):
        err("duplicate parameter names")
    if set(pnames) & set(names):
        err("a name is used both for a species and a parameter")

    for p in net.params:
        if p.kind not in ("fixed", "uncertain"):
            err(f"parameter {p.name}: unknown kind {p.kind!r}")
        if p.fixed:
            if p.value is None or p.value <= 0:
                err(f"parameter {p.name}: fixed value must be positive")
            if p.known_moments or p.gamma is not None:
                err(f"parameter {p.name}: fixed parameters carry no moment data")
        else:
            if 0 in p.known_moments and p.known_moments[0] != 1:
                err(f"parameter {p.name}: zeroth moment must be 1")
            if p.gamma is not None:
                for b in range(1, p.gamma.max_order + 1):
                    v = gamma_moment(p.gamma.shape, p.gamma.scale, b)
                    if p.known_moments.get(b) != v:
                        err(f"parameter {p.name}: moment {b} disagrees with gamma spec")
                        break
            m1, m2 = p.known_moments.get(1), p.known_moments.get(2)
            if m1 is not None and m2 is not None and m2 < m1 * m1:
                err(f"parameter {p.name}: second moment below squared mean")

    for k, rxn in enumerate(net.reactions):
        label = f"reaction {k + 1}"
        if not any(rxn.stoich.values()):
            err(f"{label}: all-zero stoichiometry")
        for s in list(rxn.stoich) + list(rxn.propensity.falling_factorial_orders):
            if s not in names:
                err(f"{label}: unknown species {s}")
        if rxn.propensity.rate_param not in pnames:
            err(f"{label}: unknown parameter {rxn.propensity.rate_param}")
        if rxn.propensity.order > 2:
            err(f"{label}: propensity order {rxn.propensity.order} > 2")
        if any(m < 0 for m in rxn.propensity.falling_factorial_orders.values()):
            err(f"{label}: negative propensity order")
        if rxn.propensity.const_factor <= 0:
            err(f"{label}: constant factor must be positive")
        for s, d in rxn.stoich.items():
            # propensity must vanish wherever the jump would leave N0
            if d < 0 and rxn.propensity.falling_factorial_orders.get(s, 0) < -d:
                err(f"{label}: copy number of {s} can become negative")

    uncertain = set(p.name for p in net.params if not p.fixed)
    constrained = set()
    for c in net.constraints:
        if not c.terms:
            err("constraint without terms")
        if c.sense != ">=":
            err(f"constraint sense {c.sense!r} not supported")
        for _, beta in c.terms:
            for name in beta:
                if name not in uncertain:
                    err(f"constraint references {name}, which is not an uncertain parameter")
                constrained.add(name)
    for group in net.independent:
        if len(set(group)) != len(group) or len(group) < 2:
            err(f"independence group {group} needs at least two distinct parameters")
        for name in group:
            if name not in uncertain:
                err(f"independence group references {name}, which is not an uncertain parameter")
    for p in net.params:
        if not p.fixed and not p.known_moments and p.name not in constrained:
            warn(f"unconstrained parameter {p.name}")
    return diags


# -- JSON document -----------------------------------------------------------

def _require(obj, key, where):
    if key not in obj:
        raise NetworkError(f"{where}: missing key {key!r}")
    return obj[key]


def _parse_poly(desc, varnames):
    nv = len(varnames)
    terms = {}
    for t in desc.get("terms", []):
        e = [0] * nv
        for name, k in t.get("exps", {}).items():
            if name not in varnames:
                raise NetworkError(f"unknown identifier {name} in support polynomial")
            e[varnames.index(name)] = int(k)
        terms[tuple(e)] = terms.get(tuple(e), 0) + to_fraction(t["coeff"])
    return ExpPoly(nv, terms)


def _dump_poly(p, varnames):
    return {"terms": [{"coeff": _dump_number(c),
                       "exps": {varnames[i]: k for i, k in enumerate(e) if k}}
                      for e, c in p]}


def network_from_dict(doc):
    """Build and validate a :class:`Network` from a decoded JSON document."""
    if not isinstance(doc, dict):
        raise NetworkError("top-level document must be an object")
    snames = _require(doc, "species", "document")
    if not snames:
        raise NetworkError("empty species list")
    species = [Species(str(s), i) for i, s in enumerate(snames)]

    params = []
    for i, pd in enumerate(_require(doc, "parameters", "document")):
        where = f"parameter {i + 1}"
        name = str(_require(pd, "name", where))
        kind = pd.get("kind", "uncertain")
        if kind not in ("fixed", "uncertain"):
            raise NetworkError(f"{name}: kind must be 'fixed' or 'uncertain'")
        if kind == "fixed":
            value = to_fraction(_require(pd, "value", name))
            if value <= 0:
                raise NetworkError(f"non-positive fixed value for parameter {name}")
            params.append(ParamSpec(name, "fixed", value))
            continue
        moments = {int(k): to_fraction(v) for k, v in pd.get("moments", {}).items()}
        gamma = None
        if "gamma" in pd:
            g = pd["gamma"]
            gamma = GammaSpec(to_fraction(_require(g, "shape", name)),
                              to_fraction(_require(g, "scale", name)),
                              int(g.get("max_order", 2)))
            if gamma.shape <= 0 or gamma.scale <= 0:
                raise NetworkError(f"{name}: gamma shape and scale must be positive")
            for b in range(1, gamma.max_order + 1):
                v = gamma_moment(gamma.shape, gamma.scale, b)
                if b in moments and moments[b] != v:
                    raise NetworkError(f"{name}: moment {b} disagrees with gamma spec")
                moments[b] = v
        moments.pop(0, None)
        params.append(ParamSpec(name, "uncertain", None, dict(sorted(moments.items())),
                                gamma, to_fraction(pd.get("support_lower", 0))))
    pnames = [p.name for p in params]

    reactions = []
    for i, rd in enumerate(doc.get("reactions", [])):
        where = f"reaction {i + 1}"
        rate = str(_require(rd, "rate", where))
        if rate not in pnames:
            raise NetworkError(f"unknown parameter {rate}")
        orders = {}
        for s, m in rd.get("orders", {}).items():
            if s not in snames:
                raise NetworkError(f"unknown species {s}")
            if int(m):
                orders[s] = int(m)
        if sum(orders.values()) > 2:
            raise NetworkError(f"{where}: propensity order {sum(orders.values())} > 2")
        stoich = {}
        for s, d in _require(rd, "stoich", where).items():
            if s not in snames:
                raise NetworkError(f"unknown species {s}")
            if int(d):
                stoich[s] = int(d)
        const = to_fraction(rd.get("const", 1))
        reactions.append(Reaction(stoich, Propensity(rate, const, orders)))

    constraints = []
    independent = []
    for i, cd in enumerate(doc.get("constraints", [])):
        kind = cd.get("type")
        if kind == "correlation_bound":
            a, b = _require(cd, "params", "correlation_bound")
            for nm in (a, b):
                if nm not in pnames:
                    raise NetworkError(f"unknown parameter {nm}")
            pa, pb = params[pnames.index(a)], params[pnames.index(b)]
            constraints.extend(correlation_constraints(pa, pb, float(_require(cd, "r", kind))))
        elif kind == "independent":
            group = [str(nm) for nm in _require(cd, "params", kind)]
            for nm in group:
                if nm not in pnames:
                    raise NetworkError(f"unknown parameter {nm}")
            independent.append(group)
        elif kind == "affine":
            terms = []
            for t in _require(cd, "terms", kind):
                beta = {str(k): int(v) for k, v in t.get("beta", {}).items() if int(v)}
                for nm in beta:
                    if nm not in pnames:
                        raise NetworkError(f"unknown parameter {nm}")
                terms.append((to_fraction(t["coeff"]), beta))
            if not terms:
                raise NetworkError("affine constraint without terms")
            sense = cd.get("sense", ">=")
            if sense != ">=":
                raise NetworkError(f"constraint sense {sense!r} not supported")
            constraints.append(AffineMomentConstraint(terms, to_fraction(cd.get("constant", 0))))
        else:
            raise NetworkError(f"constraint {i + 1}: unknown type {kind!r}")

    net = Network(species, reactions, params, constraints, independent=independent)
    if "support" in doc:
        varnames = list(snames) + net.uncertain_names
        sup = doc["support"]
        if "params" in sup:
            net.param_support = [_parse_poly(d, varnames) for d in sup["params"]]
        if "species" in sup:
            net.species_support = [_parse_poly(d, varnames) for d in sup["species"]]

    errors = [d for d in validate_network(net) if d.severity == "error"]
    if errors:
        raise NetworkError("; ".join(d.message for d in errors))
    return net


def parse_network(text):
    """Parse a network JSON document.

    Gamma specifications are expanded into known moments up to their
    ``max_order``; ``correlation_bound`` constraints become two affine
    constraints.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"syntax error at line {exc.lineno}, column {exc.colno}: "
                           f"{exc.msg}") from None
    return network_from_dict(doc)


def load_network(path):
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def network_to_dict(net):
    params = []
    for p in net.params:
        if p.fixed:
            params.append({"name": p.name, "kind": "fixed", "value": _dump_number(p.value)})
            continue
        d = {"name": p.name, "kind": "uncertain"}
        if p.gamma is not None:
            d["gamma"] = {"shape": _dump_number(p.gamma.shape),
                          "scale": _dump_number(p.gamma.scale),
                          "max_order": p.gamma.max_order}
        if p.known_moments:
            d["moments"] = {str(k): _dump_number(v) for k, v in sorted(p.known_moments.items())}
        if p.support_lower:
            d["support_lower"] = _dump_number(p.support_lower)
        params.append(d)
    reactions = []
    for rxn in net.reactions:
        rd = {"rate": rxn.propensity.rate_param}
        if rxn.propensity.const_factor != 1:
            rd["const"] = _dump_number(rxn.propensity.const_factor)
        rd["orders"] = dict(rxn.propensity.falling_factorial_orders)
        rd["stoich"] = dict(rxn.stoich)
        reactions.append(rd)
    constraints = [{"type": "affine",
                    "terms": [{"coeff": _dump_number(c), "beta": dict(b)} for c, b in con.terms],
                    "constant": _dump_number(con.constant),
                    "sense": con.sense}
                   for con in net.constraints]
    constraints += [{"type": "independent", "params": list(g)} for g in net.independent]
    doc = {"species": net.species_names, "parameters": params,
           "reactions": reactions, "constraints": constraints}
    if net.param_support is not None or net.species_support is not None:
        varnames = net.species_names + net.uncertain_names
        doc["support"] = {}
        if net.param_support is not None:
            doc["support"]["params"] = [_dump_poly(p, varnames) for p in net.param_support]
        if net.species_support is not None:
            doc["support"]["species"] = [_dump_poly(p, varnames) for p in net.species_support]
    return doc


def serialize_network(net):
    return json.dumps(network_to_dict(net), indent=2) + "\n"
