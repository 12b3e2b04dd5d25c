"""Stochastic simulation and a truncated-chain oracle at fixed parameters.

The simulator is the Gillespie direct method, compiled with numba. Every
cell draws from its own Philox substream (spawned from the seed by cell
index), so the trajectory of a cell does not depend on how many other cells
are simulated alongside it.
"""

import logging
import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    pass


class SamplingError(RuntimeError):
    pass


@dataclass
class ParamSample:
    """Parameter values in declaration order (fixed parameters included)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(self.values > 0):
            raise ValueError("parameter values must be positive")


@dataclass
class SimConfig:
    t_end: float = 1440.0
    n_cells: int = 100000
    seed: int = 0
    x0: tuple = None
    max_steps: int = 10_000_000
    batch: int = 256

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.n_cells < 1:
            raise ValueError("n_cells must be at least 1")
        if self.batch < 1:
            raise ValueError("batch must be at least 1")


# -- correlated parameter sampling -------------------------------------------

def _corr(a, b):
    return float(np.corrcoef(a, b)[0, 1])


def sample_correlated_params(spec_a, spec_b, r, sign="positive", n=100000, seed=0,
                             max_swaps=None):
    """Gamma pairs whose correlation is pushed below ``r`` by random pair swaps.

    Both marginals are sampled, sorted and paired (ascending/ascending for
    ``sign='positive'``, ascending/descending for ``'negative'``), which gives
    the extreme correlation. Random pairs then exchange their second
    component; a swap is kept only if it moves the correlation towards the
    target, and sampling stops once corr <= r (positive) or corr >= -r
    (negative). Swaps permute values, so both marginal samples are preserved.

    Parameters
    ----------
    spec_a, spec_b : tuple
        ``(shape, scale)`` of the two gamma marginals.
    r : float
        Correlation bound in [0, 1].

    Returns
    -------
    numpy.ndarray
        ``(n, 2)`` array of pairs.
    """
    if n < 2:
        raise ValueError("need at least two samples")
    if not 0 <= r <= 1:
        raise ValueError(f"correlation bound r={r} outside [0, 1]")
    if sign not in ("positive", "negative"):
        raise ValueError(f"sign must be 'positive' or 'negative', got {sign!r}")
    rng = np.random.Generator(np.random.Philox(seed))
    a = np.sort(rng.gamma(float(spec_a[0]), float(spec_a[1]), n))
    b = np.sort(rng.gamma(float(spec_b[0]), float(spec_b[1]), n))
    if sign == "negative":
        b = b[::-1].copy()
    return _swap_to_target(a, b, r, sign, rng, max_swaps or 200 * n)


def _swap_to_target(a, b, r, sign, rng, budget):
    n = len(a)
    sa, sb = a.std(), b.std()
    denom = n * sa * sb
    mean_term = n * a.mean() * b.mean()
    sab = float(a @ b)

    def corr():
        return (sab - mean_term) / denom

    def done():
        c = corr()
        return c <= r if sign == "positive" else c >= -r

    direction = -1.0 if sign == "positive" else 1.0
    tried = 0
    while not done():
        if tried >= budget:
            raise SamplingError(f"correlation target not reached after {tried} swap proposals "
                                f"(corr = {corr():.4f}, target r = {r})")
        chunk = min(4096, budget - tried)
        ii = rng.integers(0, n, chunk)
        jj = rng.integers(0, n, chunk)
        for i, j in zip(ii, jj):
            tried += 1
            delta = (a[i] - a[j]) * (b[j] - b[i])
            if delta * direction > 0:
                b[i], b[j] = b[j], b[i]
                sab += delta
                if done():
                    break
    pairs = np.column_stack([a, b])
    log.debug("swap protocol: %d proposals, corr %.4f", tried, _corr(a, b))
    return pairs


def paired_samples(net, names, pairs):
    """Full parameter vectors for ``net`` from columns ``pairs`` of ``names``."""
    pairs = np.atleast_2d(np.asarray(pairs, dtype=float))
    base = np.array([float(p.value) if p.fixed else np.nan for p in net.params])
    out = np.tile(base, (pairs.shape[0], 1))
    for col, name in enumerate(names):
        out[:, net.param_index(name)] = pairs[:, col]
    if np.isnan(out).any():
        missing = [p.name for p in net.params if not p.fixed and p.name not in names]
        raise ValueError(f"no values for parameters {missing}")
    return out


# -- Gillespie direct method -------------------------------------------------

class _Compiled:
    """Flat arrays describing propensities and jumps of a network."""

    def __init__(self, net):
        self.n = net.n
        m = len(net.reactions)
        self.m = m
        self.stoich = np.zeros((m, net.n), dtype=np.int64)
        self.rate_idx = np.zeros(m, dtype=np.int64)
        self.const = np.zeros(m)
        # at most two falling-factorial factors per reaction: (species, order), -1 if unused
        self.ord_s = np.full((m, 2), -1, dtype=np.int64)
        self.ord_o = np.zeros((m, 2), dtype=np.int64)
        for k, rxn in enumerate(net.reactions):
            for s, d in rxn.stoich.items():
                self.stoich[k, net.species_index(s)] = d
            self.rate_idx[k] = net.param_index(rxn.propensity.rate_param)
            self.const[k] = float(rxn.propensity.const_factor)
            for q, (s, o) in enumerate(rxn.propensity.falling_factorial_orders.items()):
                self.ord_s[k, q] = net.species_index(s)
                self.ord_o[k, q] = o

    def propensities(self, x, k):
        """x: (cells, n) states, k: (cells, nparams) values -> (cells, m)."""
        a = np.empty((x.shape[0], self.m))
        for j in range(self.m):
            v = self.const[j] * k[:, self.rate_idx[j]]
            for s, o in zip(self.ord_s[j], self.ord_o[j]):
                if s < 0:
                    continue
                xs = x[:, s].astype(float)
                for q in range(o):
                    v = v * np.maximum(xs - q, 0.0)
            a[:, j] = v
        return a


@numba.njit(cache=True)
def _advance(cells, x, t, mid, mid_done, k, stoich, rate_idx, const, ord_s, ord_o,
             u, t_end, t_mid, steps, max_steps):
    """Run each listed cell through its block of uniforms; return a done flag per cell."""
    m = stoich.shape[0]
    a = np.empty(m)
    done = np.zeros(cells.size, dtype=np.bool_)
    for q in range(cells.size):
        c = cells[q]
        for p in range(u.shape[1]):
            a0 = 0.0
            for j in range(m):
                v = const[j] * k[c, rate_idx[j]]
                for f in range(2):
                    s = ord_s[j, f]
                    if s >= 0:
                        xs = x[c, s]
                        for r in range(ord_o[j, f]):
                            v *= max(xs - r, 0)
                a[j] = v
                a0 += v
            if a0 <= 0.0:
                tn = np.inf
            else:
                tn = t[c] - np.log1p(-u[q, p, 0]) / a0
            if not mid_done[c] and tn > t_mid:
                for s in range(x.shape[1]):
                    mid[c, s] = x[c, s]
                mid_done[c] = True
            if tn > t_end:
                t[c] = t_end
                done[q] = True
                break
            target = u[q, p, 1] * a0
            acc = 0.0
            jsel = m - 1
            for j in range(m):
                acc += a[j]
                if target < acc:
                    jsel = j
                    break
            for s in range(x.shape[1]):
                x[c, s] += stoich[jsel, s]
            t[c] = tn
            steps[c] += 1
            if steps[c] > max_steps:
                return done
    return done


def _spawn(seed, cells):
    # substream i depends only on (seed, i)
    return [np.random.SeedSequence(seed, spawn_key=(int(i),)) for i in cells]


def simulate_cells(net, params, cfg, record_mid=False):
    """Final states at ``cfg.t_end`` for one cell per row of ``params``.

    Cell ``i`` uses the random substream ``(cfg.seed, i)``; uniforms are
    drawn from it in blocks of ``cfg.batch`` steps, so the result does not
    depend on the batch size or on the other cells.

    Returns
    -------
    numpy.ndarray or tuple
        ``(cells, n)`` final states; with ``record_mid`` also the states at
        ``t_end / 2``.
    """
    comp = _Compiled(net)
    params = np.ascontiguousarray(np.atleast_2d(np.asarray(params, dtype=float)))
    cells = params.shape[0]
    x0 = np.zeros(net.n, dtype=np.int64) if cfg.x0 is None else np.asarray(cfg.x0, dtype=np.int64)
    if x0.shape != (net.n,) or np.any(x0 < 0):
        raise ValueError("x0 must hold one non-negative copy number per species")
    x = np.tile(x0, (cells, 1))
    mid = x.copy()
    if comp.m == 0:
        return (x, mid) if record_mid else x
    t = np.zeros(cells)
    mid_done = np.zeros(cells, dtype=np.bool_)
    steps = np.zeros(cells, dtype=np.int64)
    gens = [np.random.Generator(np.random.Philox(s)) for s in _spawn(cfg.seed, range(cells))]
    active = np.arange(cells, dtype=np.int64)
    # keep the uniform buffer around 32 MB
    B = max(1, min(cfg.batch, 2_000_000 // max(1, cells)))
    while active.size:
        u = np.stack([gens[i].random((B, 2)) for i in active])
        done = _advance(active, x, t, mid, mid_done, params, comp.stoich, comp.rate_idx,
                        comp.const, comp.ord_s, comp.ord_o, u, float(cfg.t_end),
                        float(cfg.t_end) / 2, steps, cfg.max_steps)
        if np.any(steps[active] > cfg.max_steps):
            raise SimulationError(f"more than {cfg.max_steps} steps before t_end; the chain may "
                                  "be explosive (non-explosiveness is assumed)")
        active = active[~done]
    return (x, mid) if record_mid else x


def ssa_path(net, k, cfg):
    """Final state of one Gillespie path at ``cfg.t_end`` (substream 0 of ``cfg.seed``)."""
    values = k.values if isinstance(k, ParamSample) else np.asarray(k, dtype=float)
    return simulate_cells(net, values[None, :], cfg)[0]


@dataclass
class ConditionMean:
    mean: float
    stderr: float
    mid_mean: float
    n_cells: int


def condition_means(net, conditions, cfg, species=0):
    """Mean copy number of ``species`` at ``t_end`` for each sample set.

    ``conditions`` is a list of ``(cells, nparams)`` arrays (or lists of
    :class:`ParamSample`). Cells of condition ``c`` use substreams offset by
    ``c * len(cells)`` so conditions are independent.
    """
    out = []
    offset = 0
    for cond in conditions:
        if len(cond) and isinstance(cond[0], ParamSample):
            cond = np.stack([s.values for s in cond])
        cond = np.atleast_2d(np.asarray(cond, dtype=float))
        sub = SimConfig(cfg.t_end, cond.shape[0], cfg.seed + offset, cfg.x0, cfg.max_steps,
                        cfg.batch)
        final, mid = simulate_cells(net, cond, sub, record_mid=True)
        v = final[:, species].astype(float)
        se = v.std(ddof=1) / math.sqrt(len(v)) if len(v) > 1 else 0.0
        cm = ConditionMean(float(v.mean()), float(se), float(mid[:, species].mean()), len(v))
        if len(v) > 1 and abs(cm.mid_mean - cm.mean) > 2 * math.sqrt(2) * se:
            log.warning("mean at t_end/2 (%.4f) and t_end (%.4f) differ by more than two "
                        "standard errors; t_end may be too short for stationarity",
                        cm.mid_mean, cm.mean)
        out.append(cm)
        offset += 1
    return out


def empirical_mean_interval(net, samples, cfg, species=0):
    """Range ``(lo, hi)`` of the per-condition mean copy numbers."""
    if not samples:
        raise ValueError("no samples")
    means = [c.mean for c in condition_means(net, samples, cfg, species)]
    return min(means), max(means)


# -- truncated chain ---------------------------------------------------------

def truncated_chain_stationary(net, k, n_max):
    """Stationary distribution of the chain restricted to the box {0..n_max}^n.

    Transitions leaving the box are dropped. Returns the mean copy number
    (a float for one species, an array otherwise) and the tail mass, i.e. the
    probability of states on the upper boundary of the box.
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    values = k.values if isinstance(k, ParamSample) else np.asarray(k, dtype=float)
    comp = _Compiled(net)
    n = net.n
    shape = (n_max + 1,) * n
    N = int(np.prod(shape))
    states = np.stack(np.unravel_index(np.arange(N), shape), axis=1).astype(np.int64)
    a = comp.propensities(states, np.tile(values, (N, 1)))
    rows, cols, vals = [], [], []
    for j in range(a.shape[1]):
        dest = states + comp.stoich[j]
        ok = np.all((dest >= 0) & (dest <= n_max), axis=1) & (a[:, j] > 0)
        src = np.flatnonzero(ok)
        rows.append(src)
        cols.append(np.ravel_multi_index(dest[ok].T, shape))
        vals.append(a[ok, j])
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    if N == 1:
        pi = np.ones(1)
    else:
        # pi Q = 0 with one balance equation replaced by normalization
        M = sp.lil_matrix(Q.T)
        M[0, :] = 1.0
        rhs = np.zeros(N)
        rhs[0] = 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", spla.MatrixRankWarning)
            pi = spla.spsolve(sp.csc_matrix(M), rhs)
        if not np.all(np.isfinite(pi)):
            raise SimulationError("stationary system is singular (disconnected chain?)")
        pi = np.maximum(pi, 0.0)
        pi = pi / pi.sum()
    mean = states.T.astype(float) @ pi
    tail = float(pi[np.any(states == n_max, axis=1)].sum())
    return (float(mean[0]) if n == 1 else mean), tail


def rate_equation_mean(net, values=None, t_end=1e5):
    """Steady state of the deterministic rate equations, started from zero.

    Uncertain parameters take their mean unless ``values`` (one per declared
    parameter) is given. Used as a cheap pilot estimate of copy-number scale.
    """
    if values is None:
        values = [float(p.value) if p.fixed else float(p.mean() or 1) for p in net.params]
    values = np.asarray(values, dtype=float)
    comp = _Compiled(net)

    def rhs(_, x):
        a = comp.propensities(np.maximum(x, 0.0)[None, :], values[None, :])[0]
        return a @ comp.stoich

    sol = solve_ivp(rhs, (0.0, t_end), np.zeros(net.n), method="LSODA", rtol=1e-8, atol=1e-10)
    return np.maximum(sol.y[:, -1], 0.0)
