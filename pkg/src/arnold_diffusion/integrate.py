"""Fixed-step order-6 propagation of the extended flow."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import DomainError, NonFinite
from .model import ModelParams, PhasePoint, reduced_lagrangian

DEFAULT_STEP = 1e-3

# End corrections turning the trapezoidal rule into an order-6 rule.
_GREGORY = np.array([95 / 288, 317 / 240, 23 / 30, 793 / 720, 157 / 160])


@dataclass(frozen=True, eq=False)
class OrbitSegment:
    """Uniformly sampled orbit; ``samples`` columns are t, theta, q, I, p."""

    params: ModelParams
    samples: np.ndarray
    step: float

    def __post_init__(self):
        self.samples.setflags(write=False)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def t(self):
        return self.samples[:, 0]

    @property
    def theta(self):
        return self.samples[:, 1]

    @property
    def q(self):
        return self.samples[:, 2]

    @property
    def I(self):
        return self.samples[:, 3]

    @property
    def p(self):
        return self.samples[:, 4]

    def point(self, i: int) -> PhasePoint:
        return PhasePoint.from_array(self.samples[i])

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def to_csv(self, path) -> None:
        write_orbit_csv(path, self.samples)


def write_orbit_csv(path, samples) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, samples[:, :5], delimiter=",", header="t,theta,q,I,p", comments="", fmt="%.17g")


def _split_duration(duration: float, step: float):
    if step <= 0:
        raise DomainError(f"step must be positive, got {step}")
    if duration < 0:
        raise DomainError(f"duration must be non-negative, got {duration}")
    ratio = duration / step
    n = int(np.floor(ratio + 1e-9))
    rem = duration - n * step
    if abs(rem) <= 1e-9 * max(step, duration):
        rem = 0.0
    return n, rem


def flow(params: ModelParams, x0: PhasePoint, duration: float, step: float = DEFAULT_STEP,
         *, backward: bool = False) -> OrbitSegment:
    """Integrate from ``x0`` over ``duration`` (backward in time if requested).

    Samples sit on the uniform lattice ``t0 + i*h``; when ``step`` does not
    divide ``duration`` a final partial step is appended.
    """
    n, rem = _split_duration(float(duration), float(step))
    sign = -1.0 if backward else 1.0
    y0 = np.array([x0.theta, x0.q, x0.I, x0.p, 0.0])
    out, ok = K.flow_samples(float(x0.t), y0, sign * step, n, sign * rem, 0.0, *params.kernel_args())
    if not ok:
        raise NonFinite(f"state left the representable range near t={out[-1, 0]:.6g}", stage="flow")
    return OrbitSegment(params, np.ascontiguousarray(out[:, :5]), float(step))


def propagate(params: ModelParams, state, t0: float, duration: float, step: float = DEFAULT_STEP):
    """Final state [theta, q, I, p] after ``duration`` (signed) without storing samples."""
    n, rem = _split_duration(abs(float(duration)), float(step))
    sign = -1.0 if duration < 0 else 1.0
    y0 = np.zeros(5)
    y0[:4] = state
    y = K.flow_final(float(t0), y0, sign * step, n, sign * rem, 0.0, *params.kernel_args())
    if not np.all(np.isfinite(y)):
        raise NonFinite("state left the representable range", stage="propagate")
    return y[:4]


def quadrature_weights(n: int, h: float) -> np.ndarray:
    """Weights of the order-6 end-corrected trapezoidal rule on ``n`` points."""
    if n < 2:
        return np.zeros(n)
    if n < 10:
        w = np.ones(n)
        w[0] = w[-1] = 0.5
        return h * w
    w = np.ones(n)
    w[:5] = _GREGORY
    w[-5:] = _GREGORY[::-1]
    return h * w


def action_integral(segment: OrbitSegment, a: float) -> float:
    """Integral of the reduced Lagrangian along ``segment`` (velocities = momenta).

    A trailing partial step, if present, is integrated from a quadratic
    through the last three samples.
    """
    s = segment.samples
    if s.shape[0] == 0:
        raise DomainError("empty segment")
    integrand = reduced_lagrangian(segment.params, a, s[:, 0], s[:, 1], s[:, 2], s[:, 3], s[:, 4])
    dt = np.diff(s[:, 0])
    h = segment.step * np.sign(dt[0]) if dt.size else 0.0
    uniform = dt.size == 0 or np.allclose(dt, h, rtol=0, atol=1e-12 * max(1.0, abs(s[-1, 0])))
    if uniform:
        return float(quadrature_weights(s.shape[0], h) @ integrand)
    # Partial last step: uniform part plus a quadratic fit over the last three points.
    main = float(quadrature_weights(s.shape[0] - 1, h) @ integrand[:-1])
    t3, y3 = s[-3:, 0], integrand[-3:]
    coef = np.polyfit(t3 - t3[1], y3, 2)
    anti = np.polyint(coef)
    tail = np.polyval(anti, t3[2] - t3[1]) - np.polyval(anti, t3[1] - t3[1])
    return main + float(tail)
