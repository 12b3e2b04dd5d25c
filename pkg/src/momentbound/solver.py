"""Dense primal-dual interior-point solver for small SDPs.

The core routine :func:`conelp` handles problems in the form::

    minimize    c^T x
    subject to  G x + s = h,  A x = b,  s in K

where K is a product of a nonnegative orthant and PSD cones (PSD blocks are
stored as full column-major vectorized matrices). It runs a Mehrotra
predictor-corrector method on the homogeneous self-dual embedding with
Nesterov-Todd scaling, so infeasible and unbounded problems end with a
certificate instead of a diverging iterate. Linear systems are solved in
the null space of A.

:func:`solve` maps a :class:`~momentbound.sdpbuild.ConicProblem` onto this
form and returns a :class:`Solution` in original units.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible_or_unbounded"
MAX_ITERS = "max_iters"
NUMERICAL_FAILURE = "numerical_failure"

# once within STALL_MERIT times the tolerances, give up after STALL_ITERS
# iterations without improvement (late iterations only lose accuracy)
STALL_ITERS = 10
STALL_MERIT = 1e3
RETRY_STEP_FRACTIONS = (0.9, 0.8)


@dataclass
class SolverSettings:
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    max_iters: int = 200
    step_fraction: float = 0.98

    def __post_init__(self):
        if self.tol_gap <= 0 or self.tol_feas <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")


@dataclass
class Residuals:
    primal_eq: float
    dual: float
    gap: float


@dataclass
class Solution:
    status: str
    value: float
    primal: np.ndarray
    residuals: Residuals
    dual_value: float = math.nan
    iterations: int = 0
    message: str = ""
    history: list = field(default_factory=list)

    @property
    def optimal(self):
        return self.status == OPTIMAL


class ConeError(ArithmeticError):
    pass


# -- cone bookkeeping --------------------------------------------------------

class _Cone:
    """Product of R^l_+ and PSD blocks; vectors are [lp, vec(S1), vec(S2), ...]."""

    def __init__(self, nl, sizes):
        self.nl = int(nl)
        self.sizes = [int(s) for s in sizes]
        self.offsets = []
        off = self.nl
        for s in self.sizes:
            self.offsets.append(off)
            off += s * s
        self.dim = off
        self.degree = self.nl + sum(self.sizes)

    def blocks(self, v):
        return [v[o:o + s * s].reshape(s, s) for o, s in zip(self.offsets, self.sizes)]

    def join(self, lp, mats):
        return np.concatenate([lp] + [m.ravel() for m in mats])

    def identity(self):
        return self.join(np.ones(self.nl), [np.eye(s) for s in self.sizes])

    def max_step_to_boundary(self, v):
        """Largest t >= 0 with e + t v in K, capped for numerical sanity."""
        worst = 0.0
        if self.nl:
            worst = max(worst, float(np.max(-v[:self.nl])))
        for m in self.blocks(v):
            m = (m + m.T) / 2
            worst = max(worst, float(-la.eigvalsh(m)[0]))
        return math.inf if worst <= 0 else 1.0 / worst

    def min_eig(self, v):
        """Smallest 'eigenvalue' of v over all cone components."""
        out = math.inf
        if self.nl:
            out = min(out, float(np.min(v[:self.nl])))
        for m in self.blocks(v):
            out = min(out, float(la.eigvalsh((m + m.T) / 2)[0]))
        return out


class _Scaling:
    """Nesterov-Todd scaling W with W z = W^{-T} s = lambda.

    LP part: W = diag(d), d = sqrt(s / z). PSD part: W(Z) = R^T Z R,
    W^{-T}(S) = R^{-1} S R^{-T}, and lambda is diagonal.
    """

    def __init__(self, cone, s, z):
        self.cone = cone
        nl = cone.nl
        sl, zl = s[:nl], z[:nl]
        self.d = np.sqrt(sl / zl)
        self.lam_l = np.sqrt(sl * zl)
        self.R, self.Rinv, self.lam = [], [], []
        for S, Z in zip(cone.blocks(s), cone.blocks(z)):
            R, lam = _nt_factor((S + S.T) / 2, (Z + Z.T) / 2)
            self.R.append(R)
            self.Rinv.append(la.inv(R))
            self.lam.append(lam)

    def update(self, ds_t, dz_t, alpha):
        """Re-center after a step given in scaled coordinates."""
        nl = self.cone.nl
        sl = self.lam_l + alpha * ds_t[:nl]
        zl = self.lam_l + alpha * dz_t[:nl]
        self.d = self.d * np.sqrt(sl / zl)
        self.lam_l = np.sqrt(sl * zl)
        for k, (DS, DZ) in enumerate(zip(self.cone.blocks(ds_t), self.cone.blocks(dz_t))):
            lam = self.lam[k]
            St = np.diag(lam) + alpha * (DS + DS.T) / 2
            Zt = np.diag(lam) + alpha * (DZ + DZ.T) / 2
            L1, V, lam_new = _nt_core(St, Zt)
            R = self.R[k] @ (L1 @ V) / np.sqrt(lam_new)[None, :]
            self.R[k] = R
            self.Rinv[k] = la.inv(R)
            self.lam[k] = lam_new

    def lam_vec(self):
        return self.cone.join(self.lam_l, [np.diag(l) for l in self.lam])

    def s(self):
        """Current primal slack reconstructed from the scaling."""
        return self.cone.join(self.d * self.lam_l,
                              [R @ np.diag(l) @ R.T for R, l in zip(self.R, self.lam)])

    def z(self):
        return self.cone.join(self.lam_l / self.d,
                              [Ri.T @ np.diag(l) @ Ri for Ri, l in zip(self.Rinv, self.lam)])

    def apply_W(self, v):
        """W v (used on z-type vectors)."""
        nl = self.cone.nl
        mats = [R.T @ M @ R for R, M in zip(self.R, self.cone.blocks(v))]
        return self.cone.join(self.d * v[:nl], mats)

    def apply_W_inv_T(self, v):
        """W^{-T} v (used on s-type vectors)."""
        nl = self.cone.nl
        mats = [Ri @ M @ Ri.T for Ri, M in zip(self.Rinv, self.cone.blocks(v))]
        return self.cone.join(v[:nl] / self.d, mats)

    def apply_W_inv(self, v):
        """W^{-1} v."""
        nl = self.cone.nl
        mats = [Ri.T @ M @ Ri for Ri, M in zip(self.Rinv, self.cone.blocks(v))]
        return self.cone.join(v[:nl] / self.d, mats)

    def apply_W_T(self, v):
        nl = self.cone.nl
        mats = [R @ M @ R.T for R, M in zip(self.R, self.cone.blocks(v))]
        return self.cone.join(self.d * v[:nl], mats)

    def apply_WtW_inv(self, v):
        """(W^T W)^{-1} v."""
        nl = self.cone.nl
        mats = []
        for Ri, M in zip(self.Rinv, self.cone.blocks(v)):
            Ni = Ri.T @ Ri
            mats.append(Ni @ M @ Ni)
        return self.cone.join(v[:nl] / self.d ** 2, mats)

    def apply_WtW(self, v):
        nl = self.cone.nl
        mats = [R @ (R.T @ M @ R) @ R.T for R, M in zip(self.R, self.cone.blocks(v))]
        return self.cone.join(v[:nl] * self.d ** 2, mats)

    def Ninv(self):
        return [Ri.T @ Ri for Ri in self.Rinv]


def _nt_core(S, Z):
    L1 = la.cholesky(S, lower=True)
    L2 = la.cholesky(Z, lower=True)
    U, lam, Vt = la.svd(L2.T @ L1)
    return L1, Vt.T, lam


def _nt_factor(S, Z):
    L1, V, lam = _nt_core(S, Z)
    return (L1 @ V) / np.sqrt(lam)[None, :], lam


def _circ(cone, lam_l, lam_blocks, u, v):
    """Jordan product of u and v (both full vectors)."""
    nl = cone.nl
    lp = u[:nl] * v[:nl]
    mats = [(U @ V + V @ U) / 2 for U, V in zip(cone.blocks(u), cone.blocks(v))]
    return cone.join(lp, mats)


def _lam_solve(cone, lam_l, lam_blocks, v):
    """Solve lambda o u = v for u with lambda diagonal."""
    nl = cone.nl
    lp = v[:nl] / lam_l
    mats = [2 * V / (l[:, None] + l[None, :]) for V, l in zip(cone.blocks(v), lam_blocks)]
    return cone.join(lp, mats)


def _lam_sq(cone, lam_l, lam_blocks):
    return cone.join(lam_l ** 2, [np.diag(l ** 2) for l in lam_blocks])


def _scaled_max_step(cone, lam_l, lam_blocks, v):
    """Largest t with lambda + t v in K, for diagonal lambda."""
    nl = cone.nl
    worst = 0.0
    if nl:
        worst = max(worst, float(np.max(-v[:nl] / lam_l)))
    for V, l in zip(cone.blocks(v), lam_blocks):
        isq = 1 / np.sqrt(l)
        M = isq[:, None] * ((V + V.T) / 2) * isq[None, :]
        worst = max(worst, float(-la.eigvalsh(M)[0]))
    return math.inf if worst <= 0 else 1.0 / worst


# -- KKT system --------------------------------------------------------------

class _KKT:
    """Solve [[0, A^T, G^T], [A, 0, 0], [G, 0, -W^T W]] u = r in the null space of A."""

    def __init__(self, G, A, cone):
        self.G = sp.csr_matrix(G)
        self.GT = sp.csr_matrix(G.T)
        self.cone = cone
        self.n = G.shape[1]
        self.Gl = self.G[:cone.nl] if cone.nl else None
        self.Gs = []
        for o, s in zip(cone.offsets, cone.sizes):
            Fk = sp.csc_matrix(self.G[o:o + s * s])
            cols = []
            for j in range(self.n):
                lo, hi = Fk.indptr[j], Fk.indptr[j + 1]
                if hi > lo:
                    idx = Fk.indices[lo:hi]
                    cols.append((j, idx // s, idx % s, Fk.data[lo:hi]))
            self.Gs.append((Fk, cols, s))
        p = A.shape[0]
        self.p = p
        self.A = A
        if p:
            Q, R = la.qr(A.T.toarray() if sp.issparse(A) else A.T)
            diag = np.abs(np.diag(R[:p, :p]))
            if diag.size and diag.min() <= 1e-12 * max(1.0, diag.max()):
                raise ConeError("equality constraints are linearly dependent")
            self.Q1, self.Q2, self.R = Q[:, :p], Q[:, p:], R[:p, :p]
        else:
            self.Q1 = np.zeros((self.n, 0))
            self.Q2 = np.eye(self.n)
            self.R = np.zeros((0, 0))

    def factor(self, W):
        """Factor the scaled constraint matrix W^{-T} G restricted to null(A).

        Working with a QR factorization of the scaled matrix rather than the
        normal equations keeps the conditioning from being squared, which
        matters once the PSD blocks approach the boundary.
        """
        n = self.n
        Gt = np.zeros((self.cone.dim, n))
        nl = self.cone.nl
        if nl:
            Gt[:nl] = self.Gl.toarray() / W.d[:, None]
        for (Fk, cols, s), o, Ri in zip(self.Gs, self.cone.offsets, W.Rinv):
            for j, rows, cc, vals in cols:
                Gt[o:o + s * s, j] = ((Ri[:, rows] * vals) @ Ri[:, cc].T).ravel()
        self.Gt = Gt
        M = Gt @ self.Q2
        if M.shape[1]:
            Qg, Rg = la.qr(M, mode="economic")
            d = np.abs(np.diag(Rg))
            if not np.all(np.isfinite(d)) or d.min() <= 1e-15 * max(1.0, d.max()):
                raise ConeError("scaled constraint matrix is rank deficient on null(A)")
            self.Qg, self.Rg = Qg, Rg
        self.W = W

    def solve(self, bx, by, bz, refine=1):
        x, y, z = self._solve(bx, by, bz)
        for _ in range(refine):
            rx = bx - (self.A.T @ y + self.GT @ z)
            ry = by - self.A @ x
            rz = bz - (self.G @ x - self.W.apply_WtW(z))
            dx, dy, dz = self._solve(rx, ry, rz)
            x, y, z = x + dx, y + dy, z + dz
        return x, y, z

    def fix_dual(self, e):
        """Smallest (scaled) change (dz, dy) with A^T dy + G^T dz = e."""
        dz = np.zeros(self.G.shape[0])
        if self.Q2.shape[1]:
            u = la.solve_triangular(self.Rg, self.Q2.T @ e, trans="T")
            dz = self.W.apply_W_inv(self.Qg @ u)
        dy = np.zeros(self.p)
        if self.p:
            dy = la.solve_triangular(self.R, self.Q1.T @ (e - self.GT @ dz))
        return dz, dy

    def _solve(self, bx, by, bz):
        W = self.W
        bzt = W.apply_W_inv_T(bz)
        xp = self.Q1 @ la.solve_triangular(self.R, by, trans="T") if self.p else np.zeros(self.n)
        if self.Q2.shape[1]:
            u = la.solve_triangular(self.Rg, self.Q2.T @ bx, trans="T")
            w = la.solve_triangular(self.Rg, u + self.Qg.T @ (bzt - self.Gt @ xp))
            x = xp + self.Q2 @ w
        else:
            x = xp
        zt = self.Gt @ x - bzt
        y = la.solve_triangular(self.R, self.Q1.T @ (bx - self.Gt.T @ zt)) if self.p else np.zeros(0)
        z = W.apply_W_inv(zt)
        return x, y, z


# -- main loop ---------------------------------------------------------------

def conelp(c, G, h, nl, sizes, A=None, b=None, settings=None):
    """Solve min c^T x s.t. G x + s = h, A x = b, s in R^nl_+ x PSD(sizes).

    Returns a dict with keys status, x, y, z, s, pcost, dcost, residuals,
    iterations, history.
    """
    settings = settings or SolverSettings()
    c = np.asarray(c, dtype=float)
    n = c.size
    G = sp.csr_matrix(G)
    h = np.asarray(h, dtype=float)
    if A is None:
        A = np.zeros((0, n))
        b = np.zeros(0)
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    b = np.asarray(b, dtype=float)
    cone = _Cone(nl, sizes)
    if G.shape != (cone.dim, n) or h.size != cone.dim or A.shape[1] != n or A.shape[0] != b.size:
        raise ValueError("inconsistent problem dimensions")
    e = cone.identity()
    m = cone.degree

    resx0 = max(1.0, la.norm(c))
    resy0 = max(1.0, la.norm(b))
    resz0 = max(1.0, la.norm(h))

    try:
        kkt = _KKT(G, A, cone)
        Wid = _Scaling(cone, e, e)
        kkt.factor(Wid)
    except (ConeError, la.LinAlgError) as exc:
        return _fail(NUMERICAL_FAILURE, n, A, cone, str(exc))

    # initial point: least-squares primal and least-norm dual, shifted into K
    x, y, zz = kkt.solve(np.zeros(n), b, h)
    s = -zz
    _, y0, z = kkt.solve(-c, np.zeros(A.shape[0]), np.zeros(cone.dim))
    y = y0
    for v in (s, z):
        t = cone.min_eig(v)
        if t <= 0:
            v += (1 - t) * e
    tau, kappa = 1.0, 1.0

    try:
        W = _Scaling(cone, s, z)
    except la.LinAlgError as exc:
        return _fail(NUMERICAL_FAILURE, n, A, cone, f"initial scaling failed: {exc}")

    history = []
    status = MAX_ITERS
    msg = ""
    it = 0
    pcost = dcost = math.nan
    pres = dres = gap = math.inf
    best = (math.inf, 0, None)
    for it in range(settings.max_iters + 1):
        lam_l, lam_b = W.lam_l, W.lam
        # residuals
        hrx = -(A.T @ y) - G.T @ z
        rx = -hrx + c * tau
        hry = A @ x
        ry = hry - b * tau
        hrz = G @ x + s
        rz = hrz - h * tau
        cx, by_, hz = c @ x, b @ y, h @ z
        rt = kappa + cx + by_ + hz
        sz = float(s @ z)
        mu = (sz + tau * kappa) / (m + 1)

        pcost = cx / tau
        dcost = -(by_ + hz) / tau
        # objective gap; the complementarity s'z/tau^2 stalls when the optimum
        # is only approached as some moments grow without bound
        gap = abs(pcost - dcost)
        relgap = gap / (1 + abs(pcost))
        # residuals relative to the data and to the size of the iterate; the
        # moment problems here have entries of very different magnitude
        pres = max(la.norm(ry) / resy0, la.norm(rz) / resz0) / tau
        dres = la.norm(rx) / resx0 / tau
        pinfres = la.norm(hrx) / resx0 / -(hz + by_) if hz + by_ < 0 else math.inf
        dinfres = (max(la.norm(hry) / resy0, la.norm(hrz) / resz0) / -cx
                   if cx < 0 else math.inf)
        history.append((it, pcost, dcost, gap, pres, dres, tau, kappa))
        log.debug("it %3d pcost %.9e dcost %.9e gap %.2e pres %.2e dres %.2e k/t %.2e",
                  it, pcost, dcost, gap, pres, dres, kappa / tau)

        merit = max(pres / settings.tol_feas, dres / settings.tol_feas, relgap / settings.tol_gap)
        if merit < best[0]:
            best = (merit, it, Residuals(pres, dres, gap))
        if merit <= 1:
            status = OPTIMAL
            break
        if best[0] <= STALL_MERIT and it - best[1] >= STALL_ITERS:
            status = NUMERICAL_FAILURE
            msg = (f"iteration {it}: no progress since iteration {best[1]} "
                   f"(best residuals {best[2]})")
            break
        if pinfres <= settings.tol_feas:
            status = PRIMAL_INFEASIBLE
            break
        if dinfres <= settings.tol_feas:
            status = DUAL_INFEASIBLE
            break
        if it == settings.max_iters:
            break

        try:
            kkt.factor(W)
            x1, y1, z1 = kkt.solve(-c, b, h)
            denom_base = c @ x1 + b @ y1 + h @ z1
            lam = W.lam_vec()
            lamsq = _lam_sq(cone, lam_l, lam_b)

            def direction(gamma, corr_s, corr_tk):
                ds_rhs = -lamsq + gamma * mu * e - corr_s
                dk_rhs = -tau * kappa + gamma * mu - corr_tk
                d_s = _lam_solve(cone, lam_l, lam_b, ds_rhs)
                f = 1 - gamma
                x2, y2, z2 = kkt.solve(-f * rx, -f * ry, -f * rz - W.apply_W_T(d_s))
                rhs4 = -f * rt - dk_rhs / tau
                dtau = (rhs4 - (c @ x2 + b @ y2 + h @ z2)) / (denom_base - kappa / tau)
                dx = x2 + dtau * x1
                dy = y2 + dtau * y1
                dz = z2 + dtau * z1
                dkappa = (dk_rhs - kappa * dtau) / tau
                ez, ey = kkt.fix_dual(-f * rx - A.T @ dy - G.T @ dz - c * dtau)
                dz, dy = dz + ez, dy + ey
                dkappa = -f * rt - c @ dx - b @ dy - h @ dz
                if kkt.p:
                    dx = dx + kkt.Q1 @ la.solve_triangular(kkt.R, -f * ry - A @ dx + b * dtau, trans="T")
                dz_t = W.apply_W(dz)
                # the slack step is taken from the linear equation rather than
                # the scaled complementarity one, so rz shrinks exactly with
                # the step even when W is badly conditioned
                ds = -f * rz - G @ dx + h * dtau
                ds_t = W.apply_W_inv_T(ds)
                return dx, dy, dz_t, ds_t, dtau, dkappa, dz, ds

            def max_step(ds_t, dz_t, dtau, dkappa):
                t = min(_scaled_max_step(cone, lam_l, lam_b, ds_t),
                        _scaled_max_step(cone, lam_l, lam_b, dz_t))
                if dtau < 0:
                    t = min(t, -tau / dtau)
                if dkappa < 0:
                    t = min(t, -kappa / dkappa)
                return t

            aff = direction(0.0, 0.0 * e, 0.0)
            a_aff = min(1.0, max_step(*aff[2:6]))
            sigma = (1 - a_aff) ** 3
            corr = _circ(cone, lam_l, lam_b, aff[3], aff[2])
            dx, dy, dz_t, ds_t, dtau, dkappa, dz, ds = direction(sigma, corr, aff[4] * aff[5])
            alpha = min(1.0, settings.step_fraction * max_step(ds_t, dz_t, dtau, dkappa))
            log.debug("   a_aff %.3e sigma %.3e alpha %.3e", a_aff, sigma, alpha)
        except (ConeError, la.LinAlgError, FloatingPointError, ValueError) as exc:
            status = NUMERICAL_FAILURE
            msg = f"iteration {it}: {exc}"
            break

        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        z = z + alpha * dz
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        # the slacks are carried explicitly so the residuals shrink exactly
        # with the step; the scaling is then rebuilt from them
        try:
            W = _Scaling(cone, s, z)
        except la.LinAlgError as exc:
            status = NUMERICAL_FAILURE
            msg = f"iteration {it}: scaling update failed ({exc})"
            break
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            status = NUMERICAL_FAILURE
            msg = f"iteration {it}: non-finite iterate"
            break

    out = dict(status=status, iterations=it, history=history, message=msg,
               residuals=Residuals(pres, dres, gap))
    if status == OPTIMAL:
        out.update(x=x / tau, y=y / tau, z=z / tau, s=s / tau, pcost=pcost, dcost=dcost)
    elif status == PRIMAL_INFEASIBLE:
        scale = -(h @ z + b @ y)
        out.update(x=None, y=y / scale, z=z / scale, s=None, pcost=math.inf, dcost=math.inf)
    elif status == DUAL_INFEASIBLE:
        scale = -(c @ x)
        out.update(x=x / scale, y=None, z=None, s=s / scale, pcost=-math.inf, dcost=-math.inf)
    else:
        out.update(x=x / tau, y=y / tau, z=z / tau, s=s / tau, pcost=pcost, dcost=dcost)
    return out


def _fail(status, n, A, cone, msg):
    return dict(status=status, iterations=0, history=[], message=msg,
                residuals=Residuals(math.inf, math.inf, math.inf),
                x=None, y=None, z=None, s=None, pcost=math.nan, dcost=math.nan)


# -- ConicProblem interface --------------------------------------------------

def _standard_form(p):
    blocks = [sp.csr_matrix(-p.G)] + [sp.csr_matrix(-F) for F in p.block_F]
    G = sp.vstack(blocks, format="csr") if blocks else sp.csr_matrix((0, p.nvars))
    return G, np.zeros(G.shape[0]), p.G.shape[0], p.block_sizes


def solve(p, settings=None):
    """Solve a moment relaxation; the returned value is in original units."""
    settings = settings or SolverSettings()
    G, h, nl, sizes = _standard_form(p)
    r = conelp(p.c, G, h, nl, sizes, p.A, p.b, settings)
    # a stalled run is retried with shorter steps, which keeps the iterates
    # further from the cone boundary when the optimum is not attained
    for frac in [f for f in RETRY_STEP_FRACTIONS if f < settings.step_fraction]:
        if r["status"] != NUMERICAL_FAILURE:
            break
        log.info("numerical failure (%s); retrying with step fraction %g", r["message"], frac)
        r = conelp(p.c, G, h, nl, sizes, p.A, p.b, replace(settings, step_fraction=frac))
    status = r["status"]
    x = r["x"]
    if status == OPTIMAL:
        value = p.sign * float(p.c @ x)
        dual_value = p.sign * float(r["dcost"])
    else:
        value = math.nan
        dual_value = math.nan
    primal = x if x is not None else np.full(p.nvars, math.nan)
    return Solution(status, value, primal, r["residuals"], dual_value, r["iterations"],
                    r["message"], r["history"])


@dataclass
class ResidualReport:
    """Feasibility of a point in original units, independent of any solver."""

    max_eq_violation: float
    block_min_eigs: list
    min_ineq_slack: float

    @property
    def min_eig(self):
        return min(self.block_min_eigs) if self.block_min_eigs else math.inf

    def feasible(self, tol):
        return (self.max_eq_violation <= tol and self.min_eig >= -tol
                and self.min_ineq_slack >= -tol)


def residual_report(p, x):
    """Equality violation, per-block minimum eigenvalue and minimum inequality slack.

    ``x`` is a solver vector of ``p`` (use ``p.to_solver_vector`` for moments).
    Equalities are measured with the row scaling undone.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (p.nvars,):
        raise ValueError(f"expected a vector of length {p.nvars}, got shape {x.shape}")
    eq = (p.A @ x - p.b) / p.row_scale
    eqv = float(np.max(np.abs(eq))) if eq.size else 0.0
    eigs = []
    for i in range(len(p.blocks)):
        M = p.block_matrix(i, x)
        eigs.append(float(la.eigvalsh((M + M.T) / 2)[0]))
    slack = float(np.min(p.G @ x)) if p.G.shape[0] else math.inf
    return ResidualReport(eqv, eigs, slack)
