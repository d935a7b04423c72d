"""Variational construction of orbits that drift along a transition chain.

The building block is the two-point reduced action A_a between a point on
the section q = -1/2 and a later point on q = 1/2 (one lift apart), computed
as the minimum over broken extremals: short true orbit pieces between nodes
spaced at most 1/20 apart, with the interior nodes chosen so velocities are
continuous.  Chaining these through junctions on the section, with the
unstable whisker of the first torus and the stable whisker of the last as
boundary terms, gives a function of the junction phases whose critical
points are genuine orbits.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import eigvals_banded, solve_banded

from . import _kernels as K
from .errors import (
    DomainError,
    EscapedBox,
    JunctionDefect,
    MinimizationFailure,
    ShootingFailure,
)
from .integrate import DEFAULT_STEP, OrbitSegment, write_orbit_csv
from .manifolds import MINUS, PLUS, SECTION_RESOLUTION, ChainSchedule, section
from .model import ModelParams, potential
from .pendulum import s0_q

log = logging.getLogger(__name__)

NODE_SPACING = 1.0 / 20.0
CURVE_STEP = 1e-2
INNER_TOL = 1e-11
OUTER_TOL = 1e-9
DEFECT_TOL = 1e-6
FD_STEP = 1e-6
TAU_MIN = 4


def dwell_heuristic(epsilon: float, mu: float, tau_min: int = TAU_MIN) -> int:
    """Baseline dwell: tau_min plus two e-foldings' worth of ln(1/mu) at the hyperbolic rate."""
    if mu <= 0:
        return int(tau_min)
    return int(math.ceil(tau_min + 4.0 / (2.0 * math.pi * math.sqrt(epsilon)) * math.log(1.0 / mu)))


# ---------------------------------------------------------------------------
# Broken extremals


def _block_tridiag_solve(diag, upper, rhs):
    """Solve a symmetric block-tridiagonal system with 2x2 blocks.

    ``upper[i]`` is the block coupling unknown i to i + 1.
    """
    m = diag.shape[0]
    n = 2 * m
    ab = np.zeros((7, n))
    idx = np.arange(m)
    for r in range(2):
        for c in range(2):
            ab[3 + r - c, 2 * idx + c] = diag[:, r, c]
            if m > 1:
                ab[3 + r - (2 + c), 2 * idx[:-1] + 2 + c] = upper[:, r, c]
                ab[3 + (2 + r) - c, 2 * idx[:-1] + c] = upper[:, c, r]
    return solve_banded((3, 3), ab, rhs.reshape(-1)).reshape(m, 2)


def _lowest_eigenvalue(diag, upper) -> float:
    m = diag.shape[0]
    n = 2 * m
    ab = np.zeros((4, n))
    idx = np.arange(m)
    for r in range(2):
        for c in range(2):
            if r <= c:
                ab[3 + r - c, 2 * idx + c] = diag[:, r, c]
            if m > 1:
                ab[3 + r - (2 + c), 2 * idx[:-1] + 2 + c] = upper[:, r, c]
    return float(eigvals_banded(ab, lower=False, select="i", select_range=(0, 0))[0])


def _seed_q(epsilon, t_s, q_s, t_e, q_e, s):
    """Sum of the unperturbed whisker leaving q_s at t_s and the one arriving at q_e at t_e."""
    lam = 2.0 * math.pi * math.sqrt(epsilon)
    out = 2.0 / np.pi * np.arctan(np.tan(np.pi * q_s / 2.0) * np.exp(-lam * (s - t_s)))
    out += 2.0 / np.pi * np.arctan(np.tan(np.pi * q_e / 2.0) * np.exp(-lam * (t_e - s)))
    return out


class CurveBatch:
    """Independent broken-extremal problems solved together.

    Curve ``c`` has ``n[c]`` pieces at uniform node times between its end
    times; interior node positions are the unknowns.
    """

    def __init__(self, params: ModelParams, a, n_pieces, step: float = CURVE_STEP):
        self.params = params
        self.a = np.asarray(a, dtype=float)
        self.n = np.asarray(n_pieces, dtype=int)
        if np.any(self.n < 1):
            raise DomainError("every curve needs at least one piece")
        self.step = float(step)
        C = len(self.n)
        self.node_start = np.concatenate([[0], np.cumsum(self.n + 1)[:-1]])
        self.piece_start = np.concatenate([[0], np.cumsum(self.n)[:-1]])
        N = int(np.sum(self.n + 1))
        P = int(np.sum(self.n))
        self.node_curve = np.repeat(np.arange(C), self.n + 1)
        self.node_frac = np.concatenate([np.arange(k + 1) / k for k in self.n])
        self.piece_curve = np.repeat(np.arange(C), self.n)
        self.piece_node = np.concatenate([s + np.arange(k) for s, k in zip(self.node_start, self.n)])
        self.first = self.node_start
        self.last = self.node_start + self.n
        interior = np.ones(N, dtype=bool)
        interior[self.first] = False
        interior[self.last] = False
        self.interior = np.flatnonzero(interior)
        self.int_index = -np.ones(N, dtype=int)
        self.int_index[self.interior] = np.arange(self.interior.size)
        self.S = np.zeros(N)
        self.X = np.zeros((N, 2))
        self.node_vel = np.zeros((N, 2))
        self.V = np.zeros((P, 2))
        self.V1 = np.zeros((P, 2))
        self.act = np.zeros(P)
        self.seeded = False

    # --- geometry -----------------------------------------------------------
    def _node_times(self, Ts, Te):
        c = self.node_curve
        return Ts[c] + self.node_frac * (Te[c] - Ts[c])

    def set_endpoints(self, Ts, Te, Xs, Xe):
        Ts, Te = np.asarray(Ts, float), np.asarray(Te, float)
        if np.any(Te <= Ts):
            raise DomainError("curve end time must exceed its start time")
        S_new = self._node_times(Ts, Te)
        if not self.seeded:
            c = self.node_curve
            eps = self.params.epsilon
            qs, qe = np.asarray(Xs)[c, 1], np.asarray(Xe)[c, 1]
            th = np.asarray(Xs)[c, 0] + self.node_frac * (np.asarray(Xe)[c, 0] - np.asarray(Xs)[c, 0])
            q = _seed_q(eps, Ts[c], qs, Te[c], qe, S_new)
            lin = qs + self.node_frac * (qe - qs)
            use_sep = (np.abs(qs) < 1.0) & (np.abs(qe) < 1.0)
            self.X = np.column_stack([th, np.where(use_sep, q, lin)])
            dS = np.diff(S_new)
            self.V = (self.X[self.piece_node + 1] - self.X[self.piece_node]) / dS[self.piece_node][:, None]
            self.seeded = True
        else:
            self.X = self.X + self.node_vel * (S_new - self.S)[:, None]
        self.S = S_new
        self.X[self.first] = Xs
        self.X[self.last] = Xe

    # --- solving ------------------------------------------------------------
    def _propagate(self, X, V):
        pn = self.piece_node
        s0 = self.S[pn]
        x1, v1, act, phi = K.propagate_pieces(
            s0, self.S[pn + 1] - s0, np.ascontiguousarray(X[pn]), np.ascontiguousarray(V),
            self.a[self.piece_curve], self.step, *self.params.kernel_args()
        )
        return x1 - X[pn + 1], v1, act, phi

    def _jumps(self, v, v1):
        """Velocity jump (end of previous piece minus start of next) at each interior node."""
        node = self.interior
        before = node - 1 - self.node_curve[node]  # piece ending at node
        after = before + 1
        return v1[before] - v[after], before, after

    def _hessian(self, phi, before, after, Binv):
        A = phi[:, :2, :2]
        D = phi[:, 2:, 2:]
        diag = (D @ Binv)[before] + (Binv @ A)[after]
        m = self.interior.size
        upper = np.zeros((max(m - 1, 0), 2, 2))
        if m > 1:
            linked = self.node_curve[self.interior[1:]] == self.node_curve[self.interior[:-1]]
            upper[linked] = -Binv[after[:-1][linked]]
        return diag, upper

    def _newton_direction(self, r, v, v1, phi):
        """Joint correction of interior nodes and piece start velocities (multiple shooting).

        Linearising every piece about its current start state eliminates the
        velocity corrections, leaving the block-tridiagonal node system of
        the exact broken-extremal Hessian.
        """
        Binv = np.linalg.inv(phi[:, :2, 2:])
        Br = np.einsum("pij,pj->pi", Binv, r)
        dX = np.zeros_like(self.X)
        if self.interior.size:
            g, before, after = self._jumps(v, v1)
            D = phi[:, 2:, 2:]
            rhs = -g + np.einsum("pij,pj->pi", D[before], Br[before]) - Br[after]
            diag, upper = self._hessian(phi, before, after, Binv)
            dX[self.interior] = _block_tridiag_solve(diag, upper, rhs)
        pn = self.piece_node
        A = phi[:, :2, :2]
        dv = np.einsum("pij,pj->pi", Binv, dX[pn + 1] - np.einsum("pij,pj->pi", A, dX[pn])) - Br
        return dX, dv

    def _defect(self, r, v, v1):
        gap = np.abs(r).max() if r.size else 0.0
        jump = np.abs(self._jumps(v, v1)[0]).max() if self.interior.size else 0.0
        return max(gap, jump), jump

    def solve(self, tol: float = INNER_TOL, max_iter: int = 40):
        """Multiple-shooting Newton on interior nodes and piece velocities; returns the largest jump."""
        X, v = self.X, self.V
        r, v1, act, phi = self._propagate(X, v)
        err, jump = self._defect(r, v, v1)
        if not np.isfinite(err):
            raise ShootingFailure("piece propagation diverged", stage="action_A")
        it = 0
        while err > tol:
            if it == max_iter:
                raise MinimizationFailure(f"broken extremal stalled at defect {err:.2e}", stage="action_A", best=err)
            it += 1
            dX, dv = self._newton_direction(r, v, v1, phi)
            big = np.abs(dX).max()
            alpha = min(1.0, 0.2 / big) if big > 0 else 1.0
            while True:
                Xt = X + alpha * dX
                vt = v + alpha * dv
                rt, v1t, actt, phit = self._propagate(Xt, vt)
                errt, jumpt = self._defect(rt, vt, v1t)
                if errt < err:
                    break
                alpha *= 0.5
                if alpha < 1e-4:
                    raise MinimizationFailure(f"line search failed at defect {err:.2e}", stage="action_A", best=err)
            X, v, r, v1, act, phi, err, jump = Xt, vt, rt, v1t, actt, phit, errt, jumpt
        self._store(X, v, v1, act)
        return float(jump)

    def _store(self, X, v, v1, act):
        self.X, self.V, self.V1, self.act = X, v, v1, act
        vel = np.empty_like(X)
        vel[self.piece_node] = v
        vel[self.last] = v1[self.piece_start + self.n - 1]
        self.node_vel = vel

    # --- results ------------------------------------------------------------
    def values(self):
        return np.bincount(self.piece_curve, weights=self.act, minlength=len(self.n))

    def start_velocity(self):
        return self.V[self.piece_start]

    def end_velocity(self):
        return self.V1[self.piece_start + self.n - 1]

    def max_jump(self) -> float:
        if self.interior.size == 0:
            return 0.0
        return float(np.abs(self._jumps(self.V, self.V1)[0]).max())

    def curve(self, c: int) -> "DiscreteCurve":
        sl = slice(self.node_start[c], self.node_start[c] + self.n[c] + 1)
        ps = slice(self.piece_start[c], self.piece_start[c] + self.n[c])
        return DiscreteCurve(
            float(self.a[c]), self.S[sl].copy(), self.X[sl].copy(), self.node_vel[sl].copy(),
            float(self.act[ps].sum()), self._curve_jump(c),
        )

    def _curve_jump(self, c):
        if self.n[c] < 2:
            return 0.0
        ps = self.piece_start[c]
        return float(np.abs(self.V1[ps:ps + self.n[c] - 1] - self.V[ps + 1:ps + self.n[c]]).max())

    def snapshot(self):
        return (self.S.copy(), self.X.copy(), self.V.copy(), self.V1.copy(), self.act.copy(), self.node_vel.copy())

    def restore(self, snap):
        self.S, self.X, self.V, self.V1, self.act, self.node_vel = (x.copy() for x in snap)


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    """Minimizing broken extremal; ``velocities`` are node velocities (continuous up to ``max_jump``)."""

    a: float
    times: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    velocities: np.ndarray = field(repr=False)
    value: float
    max_jump: float

    @property
    def h_c(self) -> float:
        return float(np.max(np.diff(self.times)))

    @property
    def samples(self) -> np.ndarray:
        return np.column_stack([self.times, self.nodes, self.velocities])


def action_A(params: ModelParams, a: float, start, end, *, step: float = CURVE_STEP,
             spacing: float = NODE_SPACING, tol: float = INNER_TOL):
    """Minimal reduced action from (t1, theta1, q1 - 1) to (t2, theta2, q2).

    Returns ``(value, DiscreteCurve)``; node velocities are continuous to ``tol``.
    """
    t1, th1, q1 = map(float, start)
    t2, th2, q2 = map(float, end)
    if not t2 > t1:
        raise DomainError(f"end time must exceed start time, got {t1} -> {t2}")
    if spacing > NODE_SPACING:
        raise DomainError(f"node spacing must not exceed {NODE_SPACING}")
    n = int(math.ceil((t2 - t1) / spacing - 1e-9))
    batch = CurveBatch(params, [a], [n], step)
    batch.set_endpoints([t1], [t2], [[th1, q1 - 1.0]], [[th2, q2]])
    batch.solve(tol)
    curve = batch.curve(0)
    return curve.value, curve


# ---------------------------------------------------------------------------
# Junction variables and the composite functional


@dataclass(frozen=True, eq=False)
class JunctionVariables:
    """Junction phases (t_i, theta_i) in (-1, 1)^2 and dwell integers.

    ``tau[i]`` is the integer time shift of junction i relative to junction
    i - 1 (``tau[0]`` is unused and 0).  ``winding[i]`` is the integer added
    to theta_{i+1} at the end of the extremal from junction i.
    """

    t: np.ndarray
    theta: np.ndarray
    tau: np.ndarray
    winding: np.ndarray

    def __post_init__(self):
        for name in ("t", "theta"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=int))
        object.__setattr__(self, "winding", np.asarray(self.winding, dtype=int))
        k = self.t.size
        if self.theta.size != k or self.tau.size != k or self.winding.size != max(k - 1, 0):
            raise DomainError("junction arrays have inconsistent lengths")

    @property
    def k(self) -> int:
        return self.t.size

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.t, self.theta])

    def with_vector(self, z) -> "JunctionVariables":
        return replace(self, t=z[: self.k].copy(), theta=z[self.k:].copy())

    def absolute_times(self, t=None) -> np.ndarray:
        t = self.t if t is None else t
        return t + np.cumsum(self.tau)

    def inside_box(self) -> bool:
        z = self.vector
        return bool(np.all(np.abs(z) < 1.0))

    def to_dict(self) -> dict:
        return {"t": self.t.tolist(), "theta": self.theta.tolist(), "tau": self.tau.tolist(),
                "winding": self.winding.tolist()}


def _levels_of(schedule) -> np.ndarray:
    levels = schedule.levels if isinstance(schedule, ChainSchedule) else schedule
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    return np.array([levels[0], levels[0]]) if levels.size == 1 else levels


class CompositeProblem:
    """Evaluates the composite functional and its gradient with warm-started extremals."""

    def __init__(self, params: ModelParams, schedule, junctions: JunctionVariables, *,
                 resolution=SECTION_RESOLUTION, step: float = DEFAULT_STEP, curve_step: float = CURVE_STEP,
                 spacing: float = NODE_SPACING):
        self.params = params
        self.L = _levels_of(schedule)
        self.k = self.L.size - 1
        if junctions.k != self.k:
            raise DomainError(f"schedule needs {self.k} junctions, got {junctions.k}")
        if spacing > NODE_SPACING:
            raise DomainError(f"node spacing must not exceed {NODE_SPACING}")
        self.junctions = junctions
        self.resolution = tuple(resolution)
        self.step = float(step)
        res = (int(resolution[0]), int(resolution[1]))
        self.first = section(params, float(self.L[0]), PLUS, res, self.step)
        self.last = section(params, float(self.L[-1]), MINUS, res, self.step)
        self.S_plus = self.first.interpolant(0.5)
        self.S_minus = self.last.interpolant(-0.5)
        self.batch = None
        if self.k > 1:
            T = junctions.absolute_times()
            n = np.ceil(np.diff(T) / spacing * 1.02 + 1.0).astype(int)
            self.batch = CurveBatch(params, self.L[1:-1], n, curve_step)
        self.evaluations = 0

    def _endpoints(self, z):
        k = self.k
        t, th = z[:k], z[k:]
        T = t + np.cumsum(self.junctions.tau)
        Xs = np.column_stack([th[:-1], np.full(k - 1, -0.5)])
        Xe = np.column_stack([th[1:] + self.junctions.winding, np.full(k - 1, 0.5)])
        return T, Xs, Xe

    def evaluate(self, z, tol: float = INNER_TOL):
        """Composite value and gradient at junction vector ``z = (t_1..t_k, theta_1..theta_k)``."""
        self.evaluations += 1
        k, L = self.k, self.L
        z = np.asarray(z, dtype=float)
        t, th = z[:k], z[k:]
        T = t + np.cumsum(self.junctions.tau)
        value = float(self.S_plus(t[0], th[0]) - self.S_minus(T[-1], th[-1]))
        dL = L[:-1] - L[1:]
        dE = 0.5 * (L[:-1] ** 2 - L[1:] ** 2)
        value += float(np.sum(dL * th) - np.sum(dE * T))
        g_t = -dE.copy()
        g_th = dL.copy()
        gp = self.S_plus.gradient(t[0], th[0])[0]
        gm = self.S_minus.gradient(T[-1], th[-1])[0]
        g_t[0] += gp[0]
        g_th[0] += gp[1]
        g_t[-1] -= gm[0]
        g_th[-1] -= gm[1]
        if self.batch is not None:
            Tj, Xs, Xe = self._endpoints(z)
            self.batch.set_endpoints(Tj[:-1], Tj[1:], Xs, Xe)
            self.batch.solve(tol)
            value += float(self.batch.values().sum())
            a = self.batch.a
            vs, ve = self.batch.start_velocity(), self.batch.end_velocity()
            Es = self._energy(Tj[:-1], Xs, vs) - 0.5 * a * a
            Ee = self._energy(Tj[1:], Xe, ve) - 0.5 * a * a
            g_th[:-1] += -(vs[:, 0] - a)
            g_th[1:] += ve[:, 0] - a
            g_t[:-1] += Es
            g_t[1:] -= Ee
        return value, np.concatenate([g_t, g_th])

    def _energy(self, t, X, v):
        V = potential(self.params, t, X[:, 0], X[:, 1])[0]
        return 0.5 * (v[:, 0] ** 2 + v[:, 1] ** 2) + V

    def hessian(self, z, g0):
        """Block-tridiagonal finite-difference Hessian (distance-2 colouring, 6 gradient calls)."""
        k = self.k
        snap = self.batch.snapshot() if self.batch is not None else None
        H = np.zeros((k, 2, 3, 2))  # row junction, row comp, neighbour offset (-1,0,1), col comp
        for comp in range(2):
            for r in range(min(3, k)):
                cols = np.arange(r, k, 3)
                dz = np.zeros(2 * k)
                dz[comp * k + cols] = FD_STEP
                _, g1 = self.evaluate(z + dz)
                if snap is not None:
                    self.batch.restore(snap)
                diff = (g1 - g0) / FD_STEP
                for j in range(k):
                    for off in (-1, 0, 1):
                        i = j + off
                        if 0 <= i < k and i % 3 == r:
                            H[j, 0, off + 1, comp] = diff[j]
                            H[j, 1, off + 1, comp] = diff[k + j]
        diag = H[:, :, 1, :]
        diag = 0.5 * (diag + np.transpose(diag, (0, 2, 1)))
        upper = 0.5 * (H[:-1, :, 2, :] + np.transpose(H[1:, :, 0, :], (0, 2, 1)))
        return diag, upper


def _to_blocks(vec, k):
    return np.column_stack([vec[:k], vec[k:]])


def _from_blocks(blocks):
    return np.concatenate([blocks[:, 0], blocks[:, 1]])


def composite_action(params: ModelParams, schedule, junctions: JunctionVariables, **kw) -> float:
    """Value of the composite functional at the given junction variables."""
    return CompositeProblem(params, schedule, junctions, **kw).evaluate(junctions.vector)[0]


@dataclass(eq=False)
class MinimizationResult:
    junctions: JunctionVariables
    value: float
    grad_norm: float
    min_eigenvalue: float
    iterations: int
    problem: CompositeProblem = field(repr=False)

    def __iter__(self):
        return iter((self.junctions, self.value))


def minimize_composite(params: ModelParams, schedule, seed: JunctionVariables, *, tol: float = OUTER_TOL,
                       max_iter: int = 40, problem: CompositeProblem | None = None, **kw) -> MinimizationResult:
    """Local minimum of the composite functional near ``seed``.

    Newton steps with a finite-difference block-tridiagonal Hessian and a
    backtracking search that keeps the iterate inside the open box
    (-1, 1)^(2k).  The Hessian is kept between steps while full steps cut
    the gradient at least tenfold, and rebuilt otherwise; the convexity
    check uses the last one built.
    """
    if not seed.inside_box():
        raise EscapedBox("seed lies outside (-1, 1)^2", stage="minimize_composite")
    prob = CompositeProblem(params, schedule, seed, **kw) if problem is None else problem
    k = prob.k
    z = seed.vector.copy()
    value, g = prob.evaluate(z)
    gmax = np.abs(g).max()
    it = 0
    diag = upper = None
    rebuild, stale = True, True
    while True:
        if diag is None or (rebuild and gmax > tol):
            diag, upper = prob.hessian(z, g)
            rebuild = stale = False
        if gmax <= tol:
            break
        if it == max_iter:
            raise MinimizationFailure(f"composite gradient stalled at {gmax:.2e}", stage="minimize_composite",
                                      best=seed.with_vector(z))
        it += 1
        dz = _from_blocks(_block_tridiag_solve(diag, upper, -_to_blocks(g, k)))
        alpha = 1.0
        snap = prob.batch.snapshot() if prob.batch is not None else None
        while True:
            zt = z + alpha * dz
            if np.all(np.abs(zt) < 1.0):
                try:
                    vt, gt = prob.evaluate(zt)
                    gtmax = np.abs(gt).max()
                    if gtmax < gmax or vt < value - 1e-14 * (1.0 + abs(value)):
                        break
                except (ShootingFailure, MinimizationFailure):
                    pass
                if snap is not None:
                    prob.batch.restore(snap)
            alpha *= 0.5
            if alpha < 1e-6:
                break
        if alpha < 1e-6:
            if stale:
                rebuild = True
                continue
            if not np.all(np.abs(z + dz) < 1.0):
                raise EscapedBox("Newton step leaves (-1, 1)^2", stage="minimize_composite",
                                 best=seed.with_vector(z))
            raise MinimizationFailure(f"line search failed at gradient {gmax:.2e}",
                                      stage="minimize_composite", best=seed.with_vector(z))
        rebuild = alpha < 1.0 or gtmax > 0.1 * gmax
        stale = True
        z, value, g, gmax = zt, vt, gt, gtmax
        log.info("newton %d: value %.12g, gradient %.2e, step %.3g", it, value, gmax, alpha)
    lam = _lowest_eigenvalue(diag, upper)
    if lam < -1e-6:
        raise MinimizationFailure(f"critical point is not a local minimum (eigenvalue {lam:.2e})",
                                  stage="minimize_composite", best=seed.with_vector(z))
    return MinimizationResult(seed.with_vector(z), float(value), float(gmax), lam, it, prob)


def separated_defect(problem: CompositeProblem, junctions: JunctionVariables) -> float:
    """Composite value minus the sum of per-junction splitting functions at the same phases."""
    value = problem.evaluate(junctions.vector)[0]
    k, L = problem.k, problem.L
    t, th = junctions.t, junctions.theta
    T = junctions.absolute_times()
    res = (int(problem.resolution[0]), int(problem.resolution[1]))
    sep = 0.0
    for i in range(k):
        plus = section(problem.params, float(L[i]), PLUS, res, problem.step).interpolant(0.5)
        minus = section(problem.params, float(L[i + 1]), MINUS, res, problem.step).interpolant(-0.5)
        sep += plus(T[i], th[i]) - minus(T[i], th[i])
        sep += (L[i] - L[i + 1]) * th[i] - 0.5 * (L[i] ** 2 - L[i + 1] ** 2) * T[i]
    return float(value - sep)


# ---------------------------------------------------------------------------
# Dwell selection


def asymptotic_phase(params: ModelParams, a: float, sign: str, t, theta, resolution=SECTION_RESOLUTION,
                     step: float = DEFAULT_STEP):
    """theta0 - a*t0 of the whisker orbit through the section point, evaluated at the torus."""
    res = (int(resolution[0]), int(resolution[1]))
    grid = section(params, float(a), sign, res, float(step))
    t0, th0 = grid.launches[0].launch(t, theta)
    return th0 - a * t0


def choose_dwell(params: ModelParams, a: float, start, end, tau_min: int, tolerance: float,
                 tau_max: int = 20000, resolution=SECTION_RESOLUTION, step: float = DEFAULT_STEP):
    """Smallest dwell whose torus-phase mismatch per unit time is within ``tolerance``.

    ``start``/``end`` are (t, theta) of consecutive junctions.  An orbit that
    shadows T(a) between them must leave the stable whisker and enter the
    unstable one at the same torus phase; the residual mismatch r forces a
    shift of the shadowed torus by about r/T.  Returns (tau, winding, r).
    """
    phi_out = asymptotic_phase(params, a, MINUS, start[0], start[1], resolution, step)[0]
    phi_in = asymptotic_phase(params, a, PLUS, end[0], end[1], resolution, step)[0]
    taus = np.arange(int(tau_min), int(tau_max) + 1)
    D = phi_out - phi_in + a * taus
    m = np.round(D)
    r = D - m
    T = taus + end[0] - start[0]
    ok = np.abs(r) <= tolerance * T
    i = int(np.argmax(ok)) if ok.any() else int(np.argmin(np.abs(r) / T))
    return int(taus[i]), int(m[i]), float(r[i])


def seed_junctions(params: ModelParams, schedule: ChainSchedule, tau_min: int | None = None,
                   phase_tolerance: float | None = None) -> JunctionVariables:
    """Junction seeds at the chain's link points with phase-matched dwells."""
    if not schedule.links:
        raise DomainError("schedule has no links to seed from")
    k = len(schedule.links)
    tau_min = dwell_heuristic(params.epsilon, params.mu) if tau_min is None else int(tau_min)
    if phase_tolerance is None:
        phase_tolerance = 0.25 * schedule.spacing
    t = np.array([l.t for l in schedule.links])
    th = np.array([l.theta for l in schedule.links])
    tau = np.zeros(k, dtype=int)
    wind = np.zeros(max(k - 1, 0), dtype=int)
    for i in range(k - 1):
        tau[i + 1], wind[i], _ = choose_dwell(
            params, schedule.levels[i + 1], (t[i], th[i]), (t[i + 1], th[i + 1]), tau_min, phase_tolerance,
            resolution=schedule.resolution, step=schedule.step,
        )
    return JunctionVariables(t, th, tau, wind)


# ---------------------------------------------------------------------------
# Orbit extraction


@dataclass(frozen=True, eq=False)
class DiffusionOrbit:
    segments: list
    junction_defects: np.ndarray
    position_defects: np.ndarray
    node_defect: float
    levels: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def samples(self) -> np.ndarray:
        """All segments joined, each shared junction point listed once."""
        return np.vstack([self.segments[0].samples] + [s.samples[1:] for s in self.segments[1:]])

    @property
    def I_min(self) -> float:
        return float(min(s.I.min() for s in self.segments))

    @property
    def I_max(self) -> float:
        return float(max(s.I.max() for s in self.segments))

    @property
    def duration(self) -> float:
        return float(self.segments[-1].t[-1] - self.segments[0].t[0])

    @property
    def max_junction_defect(self) -> float:
        return float(self.junction_defects.max()) if self.junction_defects.size else 0.0

    def drift_time(self, a_minus: float, a_plus: float, margin: float) -> float:
        """Time from the first I <= a_minus + margin to the first later I >= a_plus - margin."""
        s = self.samples
        low = np.flatnonzero(s[:, 3] <= a_minus + margin)
        if low.size == 0:
            return float("nan")
        high = np.flatnonzero((s[:, 3] >= a_plus - margin) & (np.arange(len(s)) >= low[0]))
        if high.size == 0:
            return float("nan")
        return float(s[high[0], 0] - s[low[0], 0])

    def reintegration_defect(self, window: float = 1.0, step: float = DEFAULT_STEP) -> float:
        """Largest gap between stored states and the flow restarted every ``window`` time units.

        ``window <= 0`` restarts only once, at the first sample.
        """
        params = self.segments[0].params
        return float(K.window_deviation(np.ascontiguousarray(self.samples), float(window), float(step),
                                        *params.kernel_args()))

    def summary(self) -> dict:
        return {
            "I_min": self.I_min,
            "I_max": self.I_max,
            "T": self.duration,
            "max_junction_defect": self.max_junction_defect,
        }

    def to_csv(self, path) -> None:
        write_orbit_csv(path, self.samples)

    def to_json(self, path=None, extra: dict | None = None) -> str:
        doc = self.summary()
        if extra:
            doc.update(extra)
        text = json.dumps(doc, indent=2)
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text)
        return text


def _whisker_segment(params, a, sign, t, theta, resolution, step):
    """True orbit on the whisker of T(a) between the torus and the section point (t, theta)."""
    grid = section(params, float(a), sign, resolution, step)
    t0, th0 = (x[0] for x in grid.launches[0].launch(t, theta))
    d = grid.delta
    if sign == PLUS:
        y0 = np.array([th0, d, a, s0_q(params.epsilon, d), 0.0])
        n = int(math.floor((t - t0) / step + 1e-9))
        out, _ = K.flow_samples(t0, y0, step, n, (t - t0) - n * step, a, *params.kernel_args())
        return out[:, :5]
    y0 = np.array([th0, -d, a, s0_q(params.epsilon, d), 0.0])
    n = int(math.floor((t0 - t) / step + 1e-9))
    out, _ = K.flow_samples(t0, y0, -step, n, -((t0 - t) - n * step), a, *params.kernel_args())
    return out[::-1, :5].copy()


def extract_orbit(params: ModelParams, schedule, minimizer, *, defect_tol: float = DEFECT_TOL,
                  check_span: bool = True) -> DiffusionOrbit:
    """Concatenate whisker ends and the minimizing extremals into one orbit with lifted angles."""
    if isinstance(minimizer, MinimizationResult):
        prob, jv = minimizer.problem, minimizer.junctions
        prob.evaluate(jv.vector)
    else:
        jv = minimizer
        prob = CompositeProblem(params, schedule, jv)
        prob.evaluate(jv.vector)
    res = (int(prob.resolution[0]), int(prob.resolution[1]))
    L, k = prob.L, prob.k
    T = jv.absolute_times()
    theta_lift = np.concatenate([[0], np.cumsum(jv.winding)])
    segments, defects, pos_defects = [], [], []

    head = _whisker_segment(params, L[0], PLUS, jv.t[0], jv.theta[0], res, prob.step)
    segments.append(OrbitSegment(params, head, prob.step))
    prev_end = head[-1]
    for c in range(k - 1):
        cur = prob.batch.curve(c)
        s = cur.samples.copy()
        s[:, 1] += theta_lift[c]
        s[:, 2] += c + 1
        pos_defects.append(np.abs(s[0, 1:3] - prev_end[1:3]).max())
        defects.append(np.abs(s[0, 3:5] - prev_end[3:5]).max())
        segments.append(OrbitSegment(params, s, cur.h_c))
        prev_end = s[-1]
    tail = _whisker_segment(params, L[-1], MINUS, T[-1], jv.theta[-1], res, prob.step)
    tail[:, 1] += theta_lift[-1]
    tail[:, 2] += k
    pos_defects.append(np.abs(tail[0, 1:3] - prev_end[1:3]).max())
    defects.append(np.abs(tail[0, 3:5] - prev_end[3:5]).max())
    segments.append(OrbitSegment(params, tail, prob.step))

    node_defect = prob.batch.max_jump() if prob.batch is not None else 0.0
    orbit = DiffusionOrbit(segments, np.array(defects), np.array(pos_defects), node_defect, L)
    if orbit.max_junction_defect > defect_tol:
        raise JunctionDefect(f"velocity jump {orbit.max_junction_defect:.2e} at a junction", stage="extract_orbit",
                             best=orbit)
    if check_span and k >= 1:
        margin = 2.0 * float(np.max(np.abs(np.diff(L)))) if L.size > 1 else 0.0
        if orbit.I_min > L[0] + margin or orbit.I_max < L[-1] - margin:
            raise MinimizationFailure(
                f"orbit spans I in [{orbit.I_min:.4g}, {orbit.I_max:.4g}], short of the chain", stage="extract_orbit",
                best=orbit,
            )
    return orbit
