"""Trigonometric interpolation and critical points of functions on T^2.

Grids are sampled at ``(i/N_t, j/N_theta)``.  Linear terms ``slope*theta``
and ``slope_t*t`` may be attached; gradients and Hessians stay periodic, so
critical points are still searched over one period.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NewtonDivergence

TWO_PI = 2.0 * np.pi


def grid_nodes(n: int) -> np.ndarray:
    return np.arange(n) / n


class TrigInterpolant:
    """Band-limited interpolant of samples ``values[i, j]`` on T^2."""

    def __init__(self, values, slope: float = 0.0, slope_t: float = 0.0):
        values = np.asarray(values, dtype=float)
        self.values = values
        self.shape = values.shape
        self.coef = np.fft.fft2(values) / values.size
        self.kt = np.fft.fftfreq(self.shape[0], 1.0 / self.shape[0])
        self.kth = np.fft.fftfreq(self.shape[1], 1.0 / self.shape[1])
        self.slope = float(slope)
        self.slope_t = float(slope_t)

    def _basis(self, t, theta):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        Et = np.exp(1j * TWO_PI * np.outer(t, self.kt))
        Eth = np.exp(1j * TWO_PI * np.outer(theta, self.kth))
        return Et, Eth

    def _contract(self, Et, Eth, wt, wth):
        return np.einsum("mk,kl,ml->m", Et * wt, self.coef, Eth * wth).real

    def __call__(self, t, theta):
        scalar = np.ndim(t) == 0 and np.ndim(theta) == 0
        Et, Eth = self._basis(t, theta)
        val = self._contract(Et, Eth, 1.0, 1.0) + self.slope * np.atleast_1d(theta) + self.slope_t * np.atleast_1d(t)
        return float(val[0]) if scalar else val

    def gradient(self, t, theta):
        Et, Eth = self._basis(t, theta)
        it, ith = 1j * TWO_PI * self.kt, 1j * TWO_PI * self.kth
        gt = self._contract(Et, Eth, it, 1.0) + self.slope_t
        gth = self._contract(Et, Eth, 1.0, ith) + self.slope
        return np.stack([gt, gth], axis=-1)

    def hessian(self, t, theta):
        Et, Eth = self._basis(t, theta)
        it, ith = 1j * TWO_PI * self.kt, 1j * TWO_PI * self.kth
        htt = self._contract(Et, Eth, it * it, 1.0)
        htth = self._contract(Et, Eth, it, ith)
        hthth = self._contract(Et, Eth, 1.0, ith * ith)
        return np.stack([np.stack([htt, htth], -1), np.stack([htth, hthth], -1)], -2)

    def grid_gradient(self):
        """Spectral gradient at the grid nodes, shape (2, N_t, N_theta)."""
        it = 1j * TWO_PI * self.kt[:, None]
        ith = 1j * TWO_PI * self.kth[None, :]
        n = self.values.size
        gt = np.fft.ifft2(self.coef * it * n).real + self.slope_t
        gth = np.fft.ifft2(self.coef * ith * n).real + self.slope
        return np.stack([gt, gth])


@dataclass(frozen=True)
class CriticalPoint:
    t: float
    theta: float
    value: float
    hessian: np.ndarray
    kind: str  # minimum | maximum | saddle | degenerate

    @property
    def nondegenerate(self) -> bool:
        return self.kind != "degenerate"

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "theta": self.theta,
            "value": self.value,
            "hessian": self.hessian.tolist(),
            "kind": self.kind,
        }


def classify(hess, det_tol: float = 1e-8) -> str:
    det = float(np.linalg.det(hess))
    if abs(det) <= det_tol:
        return "degenerate"
    if det < 0:
        return "saddle"
    return "minimum" if hess[0, 0] > 0 else "maximum"


def _wrap(x: float) -> float:
    x %= 1.0
    return x - 1.0 if x > 1.0 - 1e-9 else x


def _torus_distance(x, y, periodic_theta=True):
    d = np.asarray(x) - np.asarray(y)
    d[0] -= np.round(d[0])
    if periodic_theta:
        d[1] -= np.round(d[1])
    return float(np.hypot(*d))


def newton_refine(fun: TrigInterpolant, x0, tol: float = 1e-10, max_iter: int = 60):
    """Damped Newton on the gradient; returns the refined point or None."""
    x = np.array(x0, dtype=float)
    g = fun.gradient(*x)[0]
    for _ in range(max_iter):
        gn = np.linalg.norm(g)
        if gn <= tol:
            return x
        H = fun.hessian(*x)[0]
        try:
            dx = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return None
        step = np.linalg.norm(dx)
        if step > 0.1:
            dx *= 0.1 / step
        lam = 1.0
        while lam > 1e-4:
            xn = x + lam * dx
            gnew = fun.gradient(*xn)[0]
            if np.linalg.norm(gnew) < gn or lam < 2e-4:
                break
            lam *= 0.5
        x, g = xn, gnew
    return x if np.linalg.norm(g) <= tol else None


def sign_change_seeds(fun: TrigInterpolant, theta_window=None, upsample: int = 1):
    """Cell centres where both gradient components change sign (closed test).

    ``theta_window=(lo, hi)`` evaluates over a lifted theta range instead of
    one period; used when the function carries a linear term.
    """
    nt, nth = fun.shape
    nt, nth = nt * upsample, nth * upsample
    ts = np.arange(nt) / nt
    if theta_window is None:
        ths = np.arange(nth) / nth
        periodic = True
    else:
        lo, hi = theta_window
        ths = np.linspace(lo, hi, int(round((hi - lo) * nth)) + 1)
        periodic = False
    T, TH = np.meshgrid(ts, ths, indexing="ij")
    G = fun.gradient(T.ravel(), TH.ravel()).reshape(T.shape + (2,))
    seeds = []
    dt = 1.0 / nt
    ni = len(ts)
    nj = len(ths) if periodic else len(ths) - 1
    for i in range(ni):
        i1 = (i + 1) % ni
        for j in range(nj):
            j1 = (j + 1) % len(ths)
            cell = G[[i, i1, i, i1], [j, j, j1, j1]]
            if np.all(cell.min(axis=0) <= 0.0) and np.all(cell.max(axis=0) >= 0.0):
                dth = (ths[1] - ths[0]) if len(ths) > 1 else 1.0
                seeds.append((ts[i] + 0.5 * dt, ths[j] + 0.5 * dth))
    return seeds


def find_critical_points(fun: TrigInterpolant, tol: float = 1e-10, dedupe: float = 1e-6,
                         theta_window=None, upsample: int = 2):
    """All Newton-refined critical points reachable from sign-change cells.

    Returns ``(points, degenerate_field)``; ``degenerate_field`` is True when
    the sampled function is numerically constant.
    """
    scale = np.ptp(fun.values) + abs(fun.slope) + abs(fun.slope_t)
    if scale <= 1e-14:
        return [], True
    seeds = sign_change_seeds(fun, theta_window, upsample)
    periodic = theta_window is None
    points = []
    failures = 0
    for seed in seeds:
        x = newton_refine(fun, seed, tol=tol)
        if x is None:
            failures += 1
            continue
        x[0] = _wrap(x[0])
        if periodic:
            x[1] = _wrap(x[1])
        else:
            lo, hi = theta_window
            if not (lo <= x[1] <= hi):
                continue
        if any(_torus_distance(x, (p.t, p.theta), periodic) <= dedupe for p in points):
            continue
        H = fun.hessian(*x)[0]
        points.append(CriticalPoint(float(x[0]), float(x[1]), float(fun(*x)), H, classify(H)))
    if seeds and not points and failures:
        raise NewtonDivergence(f"Newton failed from all {failures} seeds", stage="critical_points")
    points.sort(key=lambda p: (p.t, p.theta))
    return points, False
