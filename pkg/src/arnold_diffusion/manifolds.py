"""Generating functions of the whiskers of T(a), splitting functions and chains.

The unstable (``plus``) and stable (``minus``) manifolds of the invariant
torus T(a) = {q = 0, p = 0, I = a} are graphs of dS/d(theta, q) over
(t, theta, q).  We sample S on a lattice by launching one orbit per lattice
point of launch phases (t0, theta0) a distance ``delta`` from the torus
along the unperturbed whisker, integrating the reduced action along it, and
recording every crossing of the requested q levels.  For each level the
crossing phases form a smooth near-identity deformation of the launch
lattice; trigonometric interpolation plus Newton inversion moves the
recorded values back onto the uniform (t, theta) lattice.

Normalisation: the action inside distance ``delta`` of the torus is the
unperturbed value +-S0(delta), so S(., ., 0) = 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import ChainBroken, DomainError, NewtonDivergence, NoCriticalPoint, ShootingFailure
from .integrate import DEFAULT_STEP
from .model import ModelParams, hamiltonian, potential
from .pendulum import s0, s0_q, separatrix_transit_time
from .torus import CriticalPoint, TrigInterpolant, find_critical_points, grid_nodes

PLUS, MINUS = "plus", "minus"
SHOOT_TOL = 1e-9
LOCALITY = 0.1
DEFAULT_RESOLUTION = (32, 32, 48)
SECTION_RESOLUTION = (16, 16)


def default_delta(epsilon: float) -> float:
    return 1e-4 * 2.0 * math.sqrt(epsilon)


def q_levels(n_q: int) -> np.ndarray:
    """Uniform q nodes on [-3/4, 3/4]; ``n_q`` intervals, a multiple of 6 so 0 and +-1/2 are nodes."""
    if n_q < 6 or n_q % 6:
        raise DomainError(f"n_q must be a positive multiple of 6, got {n_q}")
    return np.linspace(-0.75, 0.75, n_q + 1)


def _check_sign(sign):
    if sign not in (PLUS, MINUS):
        raise DomainError(f"sign must be 'plus' or 'minus', got {sign!r}")


@dataclass(frozen=True, eq=False)
class LevelLaunch:
    """Crossing-phase displacement maps for one q level.

    ``shift_t(t0, theta0)`` and ``shift_theta`` give arrival minus launch
    phase for the orbit launched at (t0, theta0).
    """

    q: float
    shift_t: TrigInterpolant
    shift_theta: TrigInterpolant

    def launch(self, t, theta, tol: float = 1e-13, max_iter: int = 30):
        """Launch phases whose orbit crosses this level exactly at the lifted (t, theta)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        x = t - self.shift_t.values.mean()
        y = theta - self.shift_theta.values.mean()
        for _ in range(max_iter):
            rt = x + self.shift_t(x, y) - t
            ry = y + self.shift_theta(x, y) - theta
            err = max(np.abs(rt).max(), np.abs(ry).max())
            if err <= tol:
                break
            gt = self.shift_t.gradient(x, y)
            gy = self.shift_theta.gradient(x, y)
            j00, j01 = 1.0 + gt[:, 0], gt[:, 1]
            j10, j11 = gy[:, 0], 1.0 + gy[:, 1]
            det = j00 * j11 - j01 * j10
            x = x - (j11 * rt - j01 * ry) / det
            y = y - (-j10 * rt + j00 * ry) / det
        if err > SHOOT_TOL:
            raise ShootingFailure(f"launch inversion at q={self.q} stalled at {err:.2e}", stage="manifold")
        return x, y


def _sweep(params: ModelParams, a: float, sign: str, levels, n_t: int, n_th: int, step: float, delta: float):
    """Launch the lattice of whisker orbits for levels on one side of q = 0.

    Returns per level: (values, I, p) on the uniform (t, theta) lattice and
    the :class:`LevelLaunch` inversion data.
    """
    levels = np.asarray(levels, dtype=float)
    side = 1.0 if levels[0] > 0 else -1.0
    order = np.argsort(side * levels)
    levels = levels[order]
    eps = params.epsilon
    if sign == PLUS:
        h, p0, A0 = step, side * s0_q(eps, delta), float(s0(eps, delta))
    else:
        h, p0, A0 = -step, -side * s0_q(eps, delta), -float(s0(eps, delta))
    transit = separatrix_transit_time(eps, delta, min(abs(levels[-1]), 0.999))
    max_steps = int((1.5 * transit + 5.0) / step)
    nodes_t, nodes_th = grid_nodes(n_t), grid_nodes(n_th)
    T0, TH0 = np.meshgrid(nodes_t, nodes_th, indexing="ij")
    rec, ok = K.manifold_sweep(
        T0.ravel(), TH0.ravel(), side * delta, p0, A0, a, h, levels, side, max_steps, a, *params.kernel_args()
    )
    if not ok.all():
        raise ShootingFailure(
            f"{(~ok).sum()} whisker orbits never reached q={levels[-1]:+.3f} (mu too large?)", stage="manifold"
        )
    rec = rec.reshape(n_t, n_th, len(levels), 5)
    out = {}
    for k, q in enumerate(levels):
        launch = LevelLaunch(
            float(q),
            TrigInterpolant(rec[:, :, k, 0] - T0),
            TrigInterpolant(rec[:, :, k, 1] - TH0),
        )
        x, y = launch.launch(*(arr.ravel() for arr in np.meshgrid(nodes_t, nodes_th, indexing="ij")))
        fields = [TrigInterpolant(rec[:, :, k, j])(x, y).reshape(n_t, n_th) for j in (4, 2, 3)]
        out[float(q)] = (*fields, launch)
    return out


def _fd_weights(offsets, h):
    """First-derivative finite-difference weights on integer ``offsets``."""
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    V = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[1] = 1.0
    return np.linalg.solve(V, rhs) / h


def q_derivative(values, h, order: int = 6):
    """d/dq along the last axis by order-``order`` finite differences."""
    n = values.shape[-1]
    width = order + 1
    out = np.empty_like(values)
    for k in range(n):
        lo = min(max(k - order // 2, 0), n - width)
        offs = np.arange(lo, lo + width) - k
        w = _fd_weights(offs, h)
        out[..., k] = values[..., lo:lo + width] @ w
    return out


@dataclass(frozen=True, eq=False)
class GeneratingFunctionGrid:
    params: ModelParams
    a: float
    sign: str
    q: np.ndarray
    values: np.ndarray = field(repr=False)
    I: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    hj_residual: float
    step: float
    delta: float
    launches: dict = field(repr=False, default_factory=dict)

    @property
    def shape(self):
        return self.values.shape

    def level_index(self, q: float) -> int:
        idx = int(np.argmin(np.abs(self.q - q)))
        if abs(self.q[idx] - q) > 1e-12:
            raise DomainError(f"q={q} is not a grid level")
        return idx

    def interpolant(self, q: float, what: str = "values") -> TrigInterpolant:
        return TrigInterpolant(getattr(self, what)[:, :, self.level_index(q)])

    def __call__(self, t, theta, q):
        return self.interpolant(q)(t, theta)

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        n_t, n_th, n_q = self.values.shape
        T, TH, Q = np.meshgrid(grid_nodes(n_t), grid_nodes(n_th), self.q, indexing="ij")
        data = np.column_stack([a.ravel() for a in (T, TH, Q, self.values, self.I, self.p)])
        np.savetxt(path, data, delimiter=",", header="t,theta,q,S,I,p", comments="", fmt="%.17g")


def hamilton_jacobi_residual(params: ModelParams, a: float, sign: str, q, values) -> np.ndarray:
    """dS/dt + H(t, theta, q, a + dS/dtheta, dS/dq) - a^2/2 at every node.

    Periodic directions use spectral differentiation; the q direction uses
    order-6 finite differences of S -+ S0 with the exact S0' added back.
    """
    n_t, n_th, n_q = values.shape
    sgn = 1.0 if sign == PLUS else -1.0
    St = np.empty_like(values)
    Sth = np.empty_like(values)
    for k in range(n_q):
        g = TrigInterpolant(values[:, :, k]).grid_gradient()
        St[:, :, k], Sth[:, :, k] = g
    rem = values - sgn * s0(params.epsilon, q)[None, None, :]
    Sq = q_derivative(rem, q[1] - q[0]) + sgn * s0_q(params.epsilon, q)[None, None, :]
    T, TH, Q = np.meshgrid(grid_nodes(n_t), grid_nodes(n_th), q, indexing="ij")
    H = hamiltonian(params, T, TH, Q, a + Sth, Sq)
    return St + H - 0.5 * a * a


def compute_generating_function(params: ModelParams, a: float, sign: str, resolution=DEFAULT_RESOLUTION,
                                step: float = DEFAULT_STEP, *, delta: float | None = None,
                                levels=None) -> GeneratingFunctionGrid:
    """Sample S^plus or S^minus of the torus T(a) on a (t, theta, q) grid.

    ``resolution = (N_t, N_theta, n_q)``; ``n_q`` counts q intervals on
    [-3/4, 3/4].  Passing explicit ``levels`` samples only those q values
    (no Hamilton-Jacobi residual is computed then).
    """
    _check_sign(sign)
    n_t, n_th = int(resolution[0]), int(resolution[1])
    if n_t < 16 or n_th < 16:
        raise DomainError(f"angular resolution must be at least 16, got {resolution}")
    delta = default_delta(params.epsilon) if delta is None else float(delta)
    if levels is None:
        q = q_levels(int(resolution[2]))
        if resolution[2] < 32:
            raise DomainError(f"q resolution must be at least 32, got {resolution[2]}")
    else:
        q = np.unique(np.asarray(levels, dtype=float))
        if np.any(np.abs(q) > 0.75):
            raise DomainError("levels must lie in [-3/4, 3/4]")
    values = np.zeros((n_t, n_th, len(q)))
    I = np.full_like(values, float(a))
    p = np.zeros_like(values)
    launches = {}
    for side in (1.0, -1.0):
        lv = q[side * q > 0]
        if lv.size == 0:
            continue
        for qk, (S, Ik, pk, launch) in _sweep(params, a, sign, lv, n_t, n_th, step, delta).items():
            k = int(np.argmin(np.abs(q - qk)))
            values[:, :, k], I[:, :, k], p[:, :, k] = S, Ik, pk
            launches[k] = launch
    hj = float("nan")
    if levels is None:
        hj = float(np.abs(hamilton_jacobi_residual(params, a, sign, q, values)).max())
    return GeneratingFunctionGrid(params, float(a), sign, q, values, I, p, hj, float(step), delta, launches)


@lru_cache(maxsize=8192)
def section(params: ModelParams, a: float, sign: str, resolution=SECTION_RESOLUTION,
            step: float = DEFAULT_STEP) -> GeneratingFunctionGrid:
    """S^plus on q = 1/2 or S^minus on q = -1/2 (cached; grids are immutable)."""
    level = 0.5 if sign == PLUS else -0.5
    grid = compute_generating_function(params, a, sign, (resolution[0], resolution[1], 0), step, levels=[level])
    grid.values.setflags(write=False)
    return grid


@dataclass(frozen=True, eq=False)
class SplittingField:
    """Sigma_{a,a'}(t, theta) = S+_a(t, theta, 1/2) - S-_{a'}(t, theta, -1/2) + (a - a') theta.

    With ``heteroclinic`` set, the term -(a^2 - a'^2) t / 2 is added.  Since
    dS/dt = a^2/2 - H on either manifold, only then do critical points mark
    points where the two manifolds actually meet (equal I, p and H).
    """

    a: float
    a_prime: float
    values: np.ndarray = field(repr=False)  # periodic part on the lattice
    p_plus: np.ndarray = field(repr=False)
    p_minus: np.ndarray = field(repr=False)
    I_plus: np.ndarray = field(repr=False)
    I_minus: np.ndarray = field(repr=False)
    window: tuple = (-1.0, 1.0)
    heteroclinic: bool = False

    @property
    def slope(self) -> float:
        return self.a - self.a_prime

    @property
    def slope_t(self) -> float:
        return -0.5 * (self.a ** 2 - self.a_prime ** 2) if self.heteroclinic else 0.0

    @property
    def interpolant(self) -> TrigInterpolant:
        return TrigInterpolant(self.values, slope=self.slope, slope_t=self.slope_t)

    def __call__(self, t, theta):
        return self.interpolant(t, theta)

    def momentum_mismatch(self, t, theta):
        """|dS+/dq(., ., 1/2) - dS-/dq(., ., -1/2)| at (t, theta)."""
        return abs(TrigInterpolant(self.p_plus)(t, theta) - TrigInterpolant(self.p_minus)(t, theta))

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        n_t, n_th = self.values.shape
        T, TH = np.meshgrid(grid_nodes(n_t), grid_nodes(n_th), indexing="ij")
        data = np.column_stack([T.ravel(), TH.ravel(), (self.values + self.slope * TH + self.slope_t * T).ravel()])
        np.savetxt(path, data, delimiter=",", header="t,theta,Sigma", comments="", fmt="%.17g")


def sigma(params: ModelParams, a: float, a_prime: float, resolution=SECTION_RESOLUTION,
          step: float = DEFAULT_STEP, heteroclinic: bool = False) -> SplittingField:
    if abs(a - a_prime) > LOCALITY:
        raise DomainError(f"|a - a'| must not exceed {LOCALITY}, got {abs(a - a_prime)}")
    res = (int(resolution[0]), int(resolution[1]))
    plus = section(params, float(a), PLUS, res, float(step))
    minus = section(params, float(a_prime), MINUS, res, float(step))
    return SplittingField(
        float(a), float(a_prime),
        plus.values[:, :, 0] - minus.values[:, :, 0],
        plus.p[:, :, 0], minus.p[:, :, 0], plus.I[:, :, 0], minus.I[:, :, 0],
        heteroclinic=heteroclinic,
    )


def splitting_delta(params: ModelParams, a: float, resolution=(32, 32), step: float = DEFAULT_STEP) -> SplittingField:
    """Restriction of S+_a(t, theta, q) - S-_a(t, theta, q - 1) to q = 1/2."""
    return sigma(params, a, a, resolution, step)


@dataclass(frozen=True)
class Link:
    a: float
    a_prime: float
    t: float
    theta: float
    value: float
    hessian: np.ndarray
    kind: str
    isolated: bool

    def to_dict(self, i=None) -> dict:
        doc = {"t": self.t, "theta": self.theta, "isolated": self.isolated, "kind": self.kind}
        if i is not None:
            doc = {"i": i, **doc}
        return doc


def _isolated(point: CriticalPoint, others) -> bool:
    for o in others:
        if o is point:
            continue
        d = np.hypot((o.t - point.t + 0.5) % 1.0 - 0.5, o.theta - point.theta)
        if d <= 1e-3 and abs(o.value - point.value) <= 1e-6:
            return False
    return True


def find_link(params: ModelParams, a: float, a_prime: float, resolution=SECTION_RESOLUTION,
              step: float = DEFAULT_STEP, field: SplittingField | None = None) -> Link:
    """Refined critical point of the heteroclinic Sigma_{a,a'}: an isolated minimum if one exists, else a saddle."""
    field = sigma(params, a, a_prime, resolution, step, heteroclinic=True) if field is None else field
    fun = field.interpolant
    window = None if field.slope == 0.0 else field.window
    try:
        points, flat = find_critical_points(fun, theta_window=window)
    except NewtonDivergence as exc:
        raise NoCriticalPoint(f"Newton failed for link ({a}, {a_prime})", stage="find_link") from exc
    if flat or not points:
        raise NoCriticalPoint(f"Sigma_{{{a},{a_prime}}} has no critical point", stage="find_link")
    principal = [p for p in points if 0.0 <= p.theta < 1.0] or points
    minima = [p for p in principal if p.kind == "minimum"]
    saddles = [p for p in principal if p.kind == "saddle"]
    pool = minima or saddles
    if not pool:
        raise NoCriticalPoint(f"Sigma_{{{a},{a_prime}}} has only degenerate critical points", stage="find_link")
    best = min(pool, key=lambda p: p.value)
    return Link(float(a), float(a_prime), best.t, best.theta, best.value, best.hessian, best.kind,
                _isolated(best, points))


@dataclass(frozen=True, eq=False)
class ChainSchedule:
    levels: np.ndarray
    links: list
    c_used: float
    resolution: tuple = SECTION_RESOLUTION
    step: float = DEFAULT_STEP

    @property
    def k(self) -> int:
        return len(self.levels) - 1

    @property
    def spacing(self) -> float:
        return float(np.max(np.diff(self.levels))) if self.k else 0.0

    def is_valid(self, mu: float) -> bool:
        if self.k == 0:
            return True
        return bool(
            np.all(np.diff(self.levels) > 0)
            and np.all(np.diff(self.levels) <= self.c_used * mu * (1 + 1e-9))
            and all(l.kind == "minimum" and l.isolated for l in self.links)
        )

    def sub(self, i: int, j: int) -> "ChainSchedule":
        """Levels a_i..a_j with their links."""
        return ChainSchedule(self.levels[i:j + 1], self.links[i:j], self.c_used, self.resolution, self.step)

    def to_dict(self) -> dict:
        return {
            "levels": [float(x) for x in self.levels],
            "links": [l.to_dict(i + 1) for i, l in enumerate(self.links)],
            "c_used": self.c_used,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text)
        return text


def build_chain(params: ModelParams, a_minus: float, a_plus: float, c: float,
                resolution=SECTION_RESOLUTION, step: float = DEFAULT_STEP, progress=None) -> ChainSchedule:
    """Uniform transition chain a_minus = a_0 < ... < a_k = a_plus with verified minima links.

    On a failing link the spacing constant is halved, down to c/8.
    """
    if a_plus < a_minus:
        raise DomainError("a_minus must not exceed a_plus")
    if c <= 0:
        raise DomainError(f"c must be positive, got {c}")
    span = a_plus - a_minus
    if span == 0.0:
        return ChainSchedule(np.array([float(a_minus)]), [], float(c), tuple(resolution), step)
    if params.mu == 0.0:
        try:
            find_link(params, a_minus, a_minus + min(span, LOCALITY), resolution, step)
        except NoCriticalPoint as exc:
            raise ChainBroken(1, "no heteroclinic link without perturbation", stage="build_chain") from exc
    failed = 1
    for factor in (1.0, 0.5, 0.25, 0.125):
        cc = c * factor
        k = max(1, math.ceil(span / (cc * params.mu) - 1e-9))
        levels = np.linspace(a_minus, a_plus, k + 1)
        links = []
        try:
            for i in range(1, k + 1):
                link = find_link(params, levels[i - 1], levels[i], resolution, step)
                if link.kind != "minimum" or not link.isolated:
                    raise NoCriticalPoint(f"link {i} has no isolated minimum")
                links.append(link)
                if progress is not None:
                    progress(i, k)
        except NoCriticalPoint:
            failed = len(links) + 1
            continue
        return ChainSchedule(levels, links, cc, tuple(resolution), step)
    raise ChainBroken(failed, f"link {failed} failed down to spacing c*mu/8", stage="build_chain")
