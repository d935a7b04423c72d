import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arnold_diffusion.errors import DomainError
from arnold_diffusion.model import (
    ModelParams,
    Perturbation,
    PhasePoint,
    eval_H,
    eval_L,
    reduced_lagrangian,
    vector_field,
)

reals = st.floats(-3.0, 3.0, allow_nan=False)


def test_energy_on_torus_is_kinetic():
    p = ModelParams(0.25, 0.0)
    assert eval_H(p, PhasePoint(0, 0, 0, 0.7, 0)) == pytest.approx(0.7**2 / 2, abs=1e-15)


def test_energy_at_pendulum_bottom():
    assert eval_H(ModelParams(0.25, 0.0), PhasePoint(0, 0, 0.5, 0, 0)) == pytest.approx(-0.5, abs=1e-15)


def test_energy_with_arnold_term():
    x = PhasePoint(0, 0, 0.5, 1, 0)
    assert eval_H(ModelParams(0.25, 0.001), x) == pytest.approx(-0.001, abs=1e-14)


def test_lagrangian_examples():
    p = ModelParams(0.25, 0.0)
    assert eval_L(ModelParams(0.25, 0.3), 0.1, 0.2, 0.0, 0.8, 0.0) == pytest.approx(0.32, abs=1e-15)
    assert eval_L(p, 0, 0, 0.5, 0, 0) == pytest.approx(0.5, abs=1e-15)
    assert eval_L(p, 0, 0, 0.25, 1, 1) == pytest.approx(1.25, abs=1e-15)


def test_reduced_lagrangian_examples():
    p = ModelParams(0.25, 0.4)
    assert reduced_lagrangian(p, 0.6, 0.3, 0.1, 0.0, 0.6, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert reduced_lagrangian(ModelParams(0.25, 0.0), 1.0, 0, 0, 0, 0, 0) == pytest.approx(0.5)
    args = (0.2, 0.3, 0.4, 0.5, 0.6)
    assert reduced_lagrangian(p, 0.0, *args) == eval_L(p, *args)


def test_vector_field_examples():
    x = PhasePoint(0.3, 0.7, 0.0, 0.4, 0.0)
    np.testing.assert_allclose(vector_field(ModelParams(0.25, 0.5), x), [1, 0.4, 0, 0, 0], atol=1e-15)
    v = vector_field(ModelParams(0.25, 0.0), PhasePoint(0, 0, 0.25, 0, 0))
    assert v[4] == pytest.approx(math.pi / 2, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(reals, reals, reals, reals, reals, st.floats(0, 0.1))
def test_vector_field_matches_energy_gradient(t, th, q, I, pm, mu):
    p = ModelParams(0.25, mu)
    x = PhasePoint(t, th, q, I, pm)
    v = vector_field(p, x)
    h = 1e-6

    def dH(i):
        up, dn = x.as_array(), x.as_array()
        up[i] += h
        dn[i] -= h
        return (eval_H(p, PhasePoint(*up)) - eval_H(p, PhasePoint(*dn))) / (2 * h)

    expected = [1.0, dH(3), dH(4), -dH(1), -dH(2)]
    np.testing.assert_allclose(v, expected, rtol=1e-6, atol=1e-7)


@settings(max_examples=50, deadline=None)
@given(reals, reals, reals, reals, reals)
def test_unperturbed_action_is_conserved(t, th, q, I, pm):
    assert vector_field(ModelParams(0.25, 0.0), PhasePoint(t, th, q, I, pm))[3] == 0.0


@settings(max_examples=50, deadline=None)
@given(reals, reals, st.integers(-3, 3), reals, st.floats(0, 1))
def test_tori_are_invariant(t, th, k, I, mu):
    v = vector_field(ModelParams(0.25, mu), PhasePoint(t, th, float(k), I, 0.0))
    assert abs(v[3]) < 1e-12 and abs(v[4]) < 1e-12


@settings(max_examples=50, deadline=None)
@given(reals, reals, reals, reals, reals)
def test_wrap_is_idempotent_and_preserves_energy(t, th, q, I, pm):
    p = ModelParams(0.25, 0.01)
    x = PhasePoint(t, th, q, I, pm)
    w = x.wrap()
    assert w.wrap() == w
    assert eval_H(p, w) == pytest.approx(eval_H(p, x), abs=1e-12)


def test_params_json_roundtrip():
    p = ModelParams(0.25, 1e-3)
    doc = json.loads(p.to_json())
    assert doc == {"epsilon": 0.25, "mu": 1e-3, "perturbation": [[1, 0, 0, 1.0, 0.0], [0, 1, 0, 1.0, 0.0]]}
    assert ModelParams.from_json(p.to_json()) == p


@pytest.mark.parametrize("eps,mu", [(0.0, 0.1), (-1.0, 0.1), (0.25, -1e-3), (float("nan"), 0.0)])
def test_params_reject_bad_values(eps, mu):
    with pytest.raises(DomainError):
        ModelParams(eps, mu)


def test_perturbation_rejects_fractional_wave_numbers():
    with pytest.raises(DomainError):
        Perturbation(((0.5, 0, 0, 1.0, 0.0),))
    assert Perturbation.arnold().is_arnold
    assert Perturbation().is_zero
