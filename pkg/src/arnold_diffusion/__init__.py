"""Numerical study of Arnold diffusion in a priori unstable Hamiltonian systems.

The model is H = p^2/2 + I^2/2 + eps (cos 2 pi q - 1)(1 + mu f(t, theta, q)).
Modules follow the pipeline: ``integrate`` (flow), ``pendulum`` and
``melnikov`` (unperturbed separatrix, first-order splitting), ``manifolds``
(generating functions of the whiskers, splitting fields, transition chains),
``bessi`` (broken-extremal actions and the composite functional) and
``experiments`` (drift runs and scaling studies).
"""

from .errors import (
    ArnoldError,
    ChainBroken,
    DomainError,
    EscapedBox,
    JunctionDefect,
    MinimizationFailure,
    NoCriticalPoint,
    NumericalFailure,
    ShootingFailure,
)
from .model import ModelParams, Perturbation, PhasePoint

__all__ = [
    "ArnoldError",
    "ChainBroken",
    "DomainError",
    "EscapedBox",
    "JunctionDefect",
    "MinimizationFailure",
    "ModelParams",
    "NoCriticalPoint",
    "NumericalFailure",
    "Perturbation",
    "PhasePoint",
    "ShootingFailure",
]
