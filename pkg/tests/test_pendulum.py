import math

import numpy as np
import pytest

from arnold_diffusion.errors import DomainError
from arnold_diffusion.model import ModelParams, PhasePoint, vector_field
from arnold_diffusion.pendulum import s0, s0_q, s0_qq, separatrix_p, separatrix_q, separatrix_transit_time

EPS = 0.25
QS = np.linspace(0.005, 0.995, 200)


def test_s0_values():
    assert s0(EPS, 0.0) == 0.0
    assert s0(EPS, 0.5) == pytest.approx(1 / math.pi, abs=1e-15)
    assert s0(EPS, 1.0) == pytest.approx(2 / math.pi, abs=1e-15)


def test_anchor_is_reproduced():
    assert separatrix_q(EPS, 1.3, 0.37, 1.3) == pytest.approx(0.37, abs=1e-15)


def test_separatrix_limits_and_symmetry():
    assert 1 - separatrix_q(EPS, 0, 0.5, 5.0) <= 2e-6
    s = np.linspace(-4, 4, 81)
    np.testing.assert_allclose(separatrix_q(EPS, 0, 0.5, s) + separatrix_q(EPS, 0, 0.5, -s), 1.0, atol=1e-12)
    assert np.all(np.diff(separatrix_q(EPS, 0, 0.5, s)) > 0)


def test_momentum_values():
    assert separatrix_p(EPS, 0, 0.5, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert abs(separatrix_p(EPS, 0, 0.5, 12.0)) < 1e-12
    assert abs(separatrix_p(EPS, 0, 0.5, -12.0)) < 1e-12


def test_momentum_is_velocity():
    s = np.linspace(-2, 2, 41)
    h = 1e-5
    fd = (separatrix_q(EPS, 0, 0.5, s + h) - separatrix_q(EPS, 0, 0.5, s - h)) / (2 * h)
    np.testing.assert_allclose(fd, separatrix_p(EPS, 0, 0.5, s), atol=1e-8)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.5])
def test_anchor_domain(bad):
    with pytest.raises(DomainError):
        separatrix_q(EPS, 0, bad, 0.0)


def test_graph_is_invariant():
    p = ModelParams(EPS, 0.0)
    for q in QS:
        v = vector_field(p, PhasePoint(0, 0, q, 0, float(s0_q(EPS, q))))
        assert v[4] - s0_qq(EPS, q) * v[2] == pytest.approx(0.0, abs=1e-10)


def test_zero_energy_on_separatrix():
    np.testing.assert_allclose(0.5 * s0_q(EPS, QS) ** 2 + EPS * (np.cos(2 * np.pi * QS) - 1), 0.0, atol=1e-12)


def test_hamilton_jacobi_at_zero_mu():
    a = 0.4
    H = 0.5 * s0_q(EPS, QS) ** 2 + 0.5 * a * a + EPS * (np.cos(2 * np.pi * QS) - 1)
    np.testing.assert_allclose(H, a * a / 2, atol=1e-12)


def test_transit_time_inverts_flow():
    T = separatrix_transit_time(EPS, 0.1, 0.5)
    assert separatrix_q(EPS, 0.0, 0.1, T) == pytest.approx(0.5, abs=1e-13)
