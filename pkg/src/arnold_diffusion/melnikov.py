"""Poincare-Melnikov integrals along the unperturbed separatrix.

The half-line integrals are truncated at a window ``L`` beyond which the
integrand decays like exp(-2 lambda |s - t|), lambda = 2 pi sqrt(eps), and
evaluated with composite Gauss-Legendre panels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, NonConvergence, UnsupportedPerturbation
from .model import ModelParams, Perturbation
from .torus import CriticalPoint, TrigInterpolant, find_critical_points, grid_nodes

GL_NODES = 16
TAIL_TOL = 1e-12
MAX_WINDOW = 512.0

_gl_x, _gl_w = np.polynomial.legendre.leggauss(GL_NODES)


def default_window(epsilon: float) -> float:
    return max(8.0, 12.0 / (2.0 * np.pi * np.sqrt(epsilon)))


def panel_width(epsilon: float) -> float:
    return 1.0 / (4.0 * np.sqrt(epsilon))


def _panel_rule(lo: float, hi: float, width: float):
    """Composite Gauss-Legendre nodes/weights on [lo, hi]."""
    n = max(1, int(np.ceil((hi - lo) / width - 1e-12)))
    edges = np.linspace(lo, hi, n + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _gl_x[None, :]).ravel()
    w = (half[:, None] * _gl_w[None, :]).ravel()
    return x, w


def splitting_density(perturbation: Perturbation, t, theta, q):
    """F = (1 - cos 2 pi q) f, the factor the Melnikov integrals accumulate."""
    return (1.0 - np.cos(2.0 * np.pi * q)) * perturbation(t, theta, q)


def _tail_bound(params: ModelParams, q: float, window: float) -> float:
    lam = params.hyperbolic_rate
    x = abs(np.tan(np.pi * q / 2.0))
    amp = sum(abs(term[3]) for term in params.perturbation.terms)
    return params.epsilon * amp * 4.0 * x * x * np.exp(-2.0 * lam * window) / lam


def _check_q(q):
    if not (-1.0 < q < 1.0) or q == 0.0:
        raise DomainError(f"q must lie in (-1, 0) or (0, 1), got {q}")


def _resolve_window(params, q, window):
    L = default_window(params.epsilon) if window is None else float(window)
    while _tail_bound(params, q, L) > TAIL_TOL:
        L *= 2.0
        if L > MAX_WINDOW:
            raise NonConvergence(f"Melnikov tail above {TAIL_TOL} at window {MAX_WINDOW}", stage="melnikov")
    return L


def _half_line(params, a, t, theta, q, sign, window):
    _check_q(q)
    L = _resolve_window(params, q, window)
    lam = params.hyperbolic_rate
    x = np.tan(np.pi * q / 2.0)
    if sign > 0:
        u, w = _panel_rule(-L, 0.0, panel_width(params.epsilon))
        qs = 2.0 / np.pi * np.arctan(np.exp(lam * u) * x)
    else:
        u, w = _panel_rule(0.0, L, panel_width(params.epsilon))
        qs = 2.0 / np.pi * np.arctan(np.exp(-lam * u) * x)
    F = splitting_density(params.perturbation, t + u, theta + a * u, qs)
    return params.epsilon * float(w @ F)


def melnikov_plus(params: ModelParams, a: float, t: float, theta: float, q: float, window=None) -> float:
    """eps * integral over (-inf, t] along the unstable branch through q at time t."""
    return _half_line(params, a, t, theta, q, +1, window)


def melnikov_minus(params: ModelParams, a: float, t: float, theta: float, q: float, window=None) -> float:
    """eps * integral over [t, +inf) along the stable branch through q at time t."""
    return _half_line(params, a, t, theta, q, -1, window)


def melnikov_total(params: ModelParams, a, t, theta, window=None):
    """Full-line Melnikov integral on the section q = 1/2; vectorized over (t, theta)."""
    L = _resolve_window(params, 0.5, window)
    lam = params.hyperbolic_rate
    u, w = _panel_rule(-L, L, panel_width(params.epsilon))
    qs = 2.0 / np.pi * np.arctan(np.exp(lam * u))
    scalar = np.ndim(t) == 0 and np.ndim(theta) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
    theta = np.atleast_1d(np.asarray(theta, dtype=float))[:, None]
    F = splitting_density(params.perturbation, t + u[None, :], theta + a * u[None, :], qs[None, :])
    out = params.epsilon * (F @ w)
    return float(out[0]) if scalar else out


def closed_form_coefficients(epsilon: float, a: float):
    """Amplitudes of cos(2 pi theta) and cos(2 pi t) in the Arnold Melnikov function."""
    root = np.sqrt(epsilon)
    x = np.pi * a / (2.0 * root)
    ratio = 1.0 if abs(x) < 1e-8 else x / np.sinh(x)
    return 2.0 * root / np.pi * ratio, 1.0 / np.sinh(np.pi / (2.0 * root))


def melnikov_closed_form(epsilon: float, a: float, t, theta, perturbation: Perturbation | None = None):
    """Residue formula for f = cos(2 pi theta) + cos(2 pi t)."""
    if perturbation is not None and not perturbation.is_arnold:
        raise UnsupportedPerturbation("closed form exists only for f = cos(2 pi theta) + cos(2 pi t)")
    c_theta, c_t = closed_form_coefficients(epsilon, a)
    return c_theta * np.cos(2.0 * np.pi * np.asarray(theta)) + c_t * np.cos(2.0 * np.pi * np.asarray(t))


@dataclass(frozen=True, eq=False)
class MelnikovField:
    params: ModelParams
    a: float
    N: int
    grid: np.ndarray = field(repr=False)

    @property
    def interpolant(self) -> TrigInterpolant:
        return TrigInterpolant(self.grid)

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        nodes = grid_nodes(self.N)
        T, TH = np.meshgrid(nodes, nodes, indexing="ij")
        data = np.column_stack([T.ravel(), TH.ravel(), self.grid.ravel()])
        np.savetxt(path, data, delimiter=",", header="t,theta,M", comments="", fmt="%.17g")


def melnikov_field(params: ModelParams, a: float, N: int = 32, window=None) -> MelnikovField:
    nodes = grid_nodes(N)
    T, TH = np.meshgrid(nodes, nodes, indexing="ij")
    vals = melnikov_total(params, a, T.ravel(), TH.ravel(), window=window).reshape(N, N)
    return MelnikovField(params, float(a), int(N), vals)


@dataclass
class CriticalSet:
    """Critical points of a field on T^2, with a flag for numerically flat fields."""

    points: list[CriticalPoint]
    degenerate_field: bool = False

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def to_json(self, path=None) -> str:
        doc = {"degenerate_field": self.degenerate_field, "points": [p.to_dict() for p in self.points]}
        text = json.dumps(doc, indent=2)
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text)
        return text


def critical_points(field: MelnikovField, tol: float = 1e-10) -> CriticalSet:
    points, flat = find_critical_points(field.interpolant, tol=tol)
    return CriticalSet(points, flat)
