"""Closed-form separatrix of the unperturbed pendulum p^2/2 + eps (cos 2 pi q - 1)."""

from __future__ import annotations

import numpy as np

from .errors import DomainError


def s0(epsilon, q):
    """Generating function (2 sqrt(eps)/pi)(1 - cos(pi q)) of the unperturbed whiskers."""
    return 2.0 * np.sqrt(epsilon) / np.pi * (1.0 - np.cos(np.pi * np.asarray(q, dtype=float)))


def s0_q(epsilon, q):
    """dS0/dq = 2 sqrt(eps) sin(pi q): the momentum on the unstable branch."""
    return 2.0 * np.sqrt(epsilon) * np.sin(np.pi * np.asarray(q, dtype=float))


def s0_qq(epsilon, q):
    return 2.0 * np.pi * np.sqrt(epsilon) * np.cos(np.pi * np.asarray(q, dtype=float))


def _check_anchor(q_anchor):
    if not (0.0 < q_anchor < 1.0):
        raise DomainError(f"q_anchor must lie in (0, 1), got {q_anchor}")


def separatrix_q(epsilon, t_anchor, q_anchor, s):
    """Position at time ``s`` on the homoclinic orbit through ``q_anchor`` at ``t_anchor``."""
    _check_anchor(q_anchor)
    rate = 2.0 * np.pi * np.sqrt(epsilon)
    x = np.exp(rate * (np.asarray(s, dtype=float) - t_anchor)) * np.tan(np.pi * q_anchor / 2.0)
    return 2.0 / np.pi * np.arctan(x)


def separatrix_p(epsilon, t_anchor, q_anchor, s):
    """Momentum dS0/dq along :func:`separatrix_q` (also its time derivative)."""
    return s0_q(epsilon, separatrix_q(epsilon, t_anchor, q_anchor, s))


def separatrix_transit_time(epsilon, q_from, q_to):
    """Time the unstable branch needs to move from ``q_from`` to ``q_to`` (both in (0, 1))."""
    rate = 2.0 * np.pi * np.sqrt(epsilon)
    return np.log(np.tan(np.pi * q_to / 2.0) / np.tan(np.pi * q_from / 2.0)) / rate
