"""Arnold's a priori unstable Hamiltonian family.

    H(t, theta, q, I, p) = p^2/2 + I^2/2 + eps (cos 2 pi q - 1)(1 + mu f(t, theta, q))

with ``f`` a finite trigonometric sum.  Angles are carried as real lifts;
:meth:`PhasePoint.wrap` reduces them modulo one when a reporting boundary
needs it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Perturbation:
    """f(t, theta, q) = sum amp * cos(2 pi (k_t t + k_theta theta + k_q q) + phase)."""

    terms: tuple[tuple[int, int, int, float, float], ...] = ()

    def __post_init__(self):
        clean = []
        for term in self.terms:
            if len(term) != 5:
                raise DomainError(f"perturbation term needs 5 entries, got {term!r}")
            kt, kth, kq, amp, phase = term
            if not all(float(k).is_integer() for k in (kt, kth, kq)):
                raise DomainError(f"wave numbers must be integers, got {term!r}")
            if not (np.isfinite(amp) and np.isfinite(phase)):
                raise DomainError(f"non-finite amplitude or phase in {term!r}")
            clean.append((int(kt), int(kth), int(kq), float(amp), float(phase)))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def arnold(cls) -> "Perturbation":
        """f = cos(2 pi theta) + cos(2 pi t)."""
        return cls(((1, 0, 0, 1.0, 0.0), (0, 1, 0, 1.0, 0.0)))

    @property
    def is_arnold(self) -> bool:
        return sorted(self.terms) == sorted(Perturbation.arnold().terms)

    @property
    def is_zero(self) -> bool:
        return all(amp == 0.0 for *_, amp, _ in self.terms)

    def arrays(self):
        """Columns ``(kt, kth, kq, amp, phase)`` as float arrays (kernel input)."""
        if not self.terms:
            z = np.zeros(0)
            return z, z, z, z, z
        arr = np.array(self.terms, dtype=float)
        return tuple(np.ascontiguousarray(arr[:, i]) for i in range(5))

    def derivatives(self, t, theta, q):
        """Return f and its first and second partials in (theta, q).

        Output order: ``f, f_t, f_th, f_q, f_thth, f_thq, f_qq``.
        """
        t, theta, q = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, theta, q)))
        out = [np.zeros_like(t) for _ in range(7)]
        for kt, kth, kq, amp, phase in self.terms:
            arg = TWO_PI * (kt * t + kth * theta + kq * q) + phase
            c, s = amp * np.cos(arg), amp * np.sin(arg)
            wt, wth, wq = TWO_PI * kt, TWO_PI * kth, TWO_PI * kq
            out[0] += c
            out[1] -= wt * s
            out[2] -= wth * s
            out[3] -= wq * s
            out[4] -= wth * wth * c
            out[5] -= wth * wq * c
            out[6] -= wq * wq * c
        return out

    def __call__(self, t, theta, q):
        return self.derivatives(t, theta, q)[0]

    def to_list(self):
        return [list(term) for term in self.terms]


@dataclass(frozen=True)
class ModelParams:
    epsilon: float
    mu: float
    perturbation: Perturbation = field(default_factory=Perturbation.arnold)

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if not (np.isfinite(self.mu) and self.mu >= 0):
            raise DomainError(f"mu must be non-negative, got {self.mu}")
        if not isinstance(self.perturbation, Perturbation):
            object.__setattr__(self, "perturbation", Perturbation(tuple(map(tuple, self.perturbation))))

    @property
    def hyperbolic_rate(self) -> float:
        """Eigenvalue 2 pi sqrt(eps) of the pendulum's saddle."""
        return TWO_PI * np.sqrt(self.epsilon)

    def with_mu(self, mu: float) -> "ModelParams":
        return replace(self, mu=float(mu))

    def kernel_args(self):
        return (float(self.epsilon), float(self.mu)) + self.perturbation.arrays()

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "mu": self.mu, "perturbation": self.perturbation.to_list()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelParams":
        pert = doc.get("perturbation")
        pert = Perturbation.arnold() if pert is None else Perturbation(tuple(tuple(t) for t in pert))
        return cls(epsilon=float(doc["epsilon"]), mu=float(doc["mu"]), perturbation=pert)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.from_json(Path(path).read_text())


def _unit(x: float) -> float:
    """x mod 1 in [0, 1); a tiny negative x would otherwise round up to 1.0."""
    r = x % 1.0
    return 0.0 if r == 1.0 else r


@dataclass(frozen=True)
class PhasePoint:
    t: float
    theta: float
    q: float
    I: float
    p: float

    def wrap(self) -> "PhasePoint":
        return PhasePoint(_unit(self.t), _unit(self.theta), _unit(self.q), self.I, self.p)

    def as_array(self) -> np.ndarray:
        return np.array([self.t, self.theta, self.q, self.I, self.p])

    @classmethod
    def from_array(cls, arr) -> "PhasePoint":
        return cls(*(float(v) for v in arr))


def potential(params: ModelParams, t, theta, q):
    """V = eps (cos 2 pi q - 1)(1 + mu f) with partials.

    Returns ``V, V_t, V_th, V_q, V_thth, V_thq, V_qq``.
    """
    eps, mu = params.epsilon, params.mu
    f, f_t, f_th, f_q, f_thth, f_thq, f_qq = params.perturbation.derivatives(t, theta, q)
    c, s = np.cos(TWO_PI * q), np.sin(TWO_PI * q)
    g = eps * (c - 1.0)
    g_q = -TWO_PI * eps * s
    g_qq = -TWO_PI * TWO_PI * eps * c
    F = 1.0 + mu * f
    return (
        g * F,
        g * mu * f_t,
        g * mu * f_th,
        g_q * F + g * mu * f_q,
        g * mu * f_thth,
        g_q * mu * f_th + g * mu * f_thq,
        g_qq * F + 2.0 * g_q * mu * f_q + g * mu * f_qq,
    )


def eval_H(params: ModelParams, x: PhasePoint) -> float:
    V = potential(params, x.t, x.theta, x.q)[0]
    return float(0.5 * x.p**2 + 0.5 * x.I**2 + V)


def hamiltonian(params: ModelParams, t, theta, q, I, p):
    """Array version of :func:`eval_H`."""
    return 0.5 * np.square(p) + 0.5 * np.square(I) + potential(params, t, theta, q)[0]


def eval_L(params: ModelParams, t, theta, q, theta_dot, q_dot):
    V = potential(params, t, theta, q)[0]
    return 0.5 * np.square(q_dot) + 0.5 * np.square(theta_dot) - V


def reduced_lagrangian(params: ModelParams, a, t, theta, q, theta_dot, q_dot):
    """L - a theta_dot + a^2/2; zero on the torus T(a) and >= 0 along q = 0."""
    return eval_L(params, t, theta, q, theta_dot, q_dot) - a * theta_dot + 0.5 * a * a


def vector_field(params: ModelParams, x: PhasePoint) -> np.ndarray:
    """(t', theta', q', I', p') from Hamilton's equations."""
    _, _, V_th, V_q, *_ = potential(params, x.t, x.theta, x.q)
    return np.array([1.0, x.I, x.p, -float(V_th), -float(V_q)])
