import itertools
import math

import numpy as np
import pytest

from arnold_diffusion.errors import DomainError, UnsupportedPerturbation
from arnold_diffusion.melnikov import (
    critical_points,
    melnikov_closed_form,
    melnikov_field,
    melnikov_minus,
    melnikov_plus,
    melnikov_total,
)
from arnold_diffusion.model import ModelParams, Perturbation

ARNOLD = ModelParams(0.25, 0.0)
FLAT = ModelParams(0.25, 0.0, Perturbation())


def test_zero_perturbation_gives_zero():
    assert melnikov_plus(FLAT, 1.0, 0.2, 0.3, 0.5) == 0.0
    assert melnikov_minus(FLAT, 1.0, 0.2, 0.3, -0.5) == 0.0


def test_symmetric_point_values():
    total = 2 / math.sinh(math.pi)
    assert melnikov_total(ARNOLD, 1.0, 0.0, 0.0) == pytest.approx(total, abs=1e-8)
    plus = melnikov_plus(ARNOLD, 1.0, 0.0, 0.0, 0.5)
    minus = melnikov_minus(ARNOLD, 1.0, 0.0, 0.0, -0.5)
    assert plus == pytest.approx(0.0865896, abs=1e-7)
    assert minus == pytest.approx(plus, abs=1e-8)
    assert plus + minus == pytest.approx(total, abs=1e-8)


@pytest.mark.parametrize("t,th", [(0.13, 0.71), (0.4, 0.05), (0.9, 0.33)])
def test_half_lines_add_up(t, th):
    p = ModelParams(0.0625, 0.0)
    total = melnikov_total(p, 0.5, t, th)
    assert melnikov_plus(p, 0.5, t, th, 0.5) + melnikov_minus(p, 0.5, t, th, -0.5) == pytest.approx(total, abs=1e-9)


def test_integer_time_shift():
    a = melnikov_minus(ARNOLD, 0.7, 0.3, 0.2, -0.4)
    assert melnikov_minus(ARNOLD, 0.7, 1.3, 0.2, -0.4) == pytest.approx(a, abs=1e-13)


def test_half_shift_flips_sign():
    for t, th in [(0.1, 0.2), (0.35, 0.8)]:
        v = melnikov_total(ARNOLD, 0.3, t, th)
        assert melnikov_total(ARNOLD, 0.3, t + 0.5, th + 0.5) == pytest.approx(-v, abs=1e-12)


def test_zero_level_limit():
    assert melnikov_total(ARNOLD, 0.0, 0.0, 0.0) == pytest.approx(1 / math.pi + 0.0865896 * 2 / 2, abs=1e-7)
    assert melnikov_closed_form(0.25, 0.0, 0.0, 0.0) == pytest.approx(0.4048995, abs=1e-7)


def test_closed_form_values():
    assert melnikov_closed_form(0.25, 1.0, 0.25, 0.25) == pytest.approx(0.0, abs=1e-15)
    assert melnikov_closed_form(0.25, 1.0, 0.0, 0.0) == pytest.approx(2 / math.sinh(math.pi), abs=1e-15)
    assert melnikov_closed_form(0.25, 1.0, 0.0, 0.0) == pytest.approx(0.1731792, abs=2e-7)
    assert melnikov_closed_form(0.0625, 0.5, 0.0, 0.0) == pytest.approx(0.0470297, abs=1e-7)
    assert melnikov_total(ModelParams(0.0625, 0.0), 0.5, 0.0, 0.0) == pytest.approx(0.0470297, abs=1e-7)


def test_closed_form_needs_arnold_term():
    with pytest.raises(UnsupportedPerturbation):
        melnikov_closed_form(0.25, 1.0, 0, 0, Perturbation(((1, 1, 0, 1.0, 0.0),)))


@pytest.mark.parametrize("q", [0.0, 1.0, -1.2])
def test_section_domain(q):
    with pytest.raises(DomainError):
        melnikov_plus(ARNOLD, 1.0, 0, 0, q)


@pytest.mark.parametrize("eps,a", list(itertools.product([0.0625, 0.25], [0.0, 0.5, 1.0])))
def test_quadrature_matches_residues(eps, a):
    g = np.arange(5) / 5
    T, TH = (x.ravel() for x in np.meshgrid(g + 0.03, g + 0.07, indexing="ij"))
    quad = melnikov_total(ModelParams(eps, 0.0), a, T, TH)
    np.testing.assert_allclose(quad, melnikov_closed_form(eps, a, T, TH), atol=1e-7)


def test_truncation_is_converged():
    v = melnikov_total(ARNOLD, 0.5, 0.2, 0.3)
    from arnold_diffusion.melnikov import default_window

    assert abs(melnikov_total(ARNOLD, 0.5, 0.2, 0.3, window=2 * default_window(0.25)) - v) <= 1e-10


def test_arnold_critical_set():
    crit = critical_points(melnikov_field(ARNOLD, 1.0, 32))
    assert len(crit) == 4
    found = sorted((round(p.t, 8) % 1.0, round(p.theta, 8) % 1.0) for p in crit)
    assert found == [(0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5)]
    assert all(p.nondegenerate for p in crit)
    origin = next(p for p in crit if abs(p.t) < 1e-6 and abs(p.theta) < 1e-6)
    np.testing.assert_allclose(origin.hessian, np.diag([-4 * math.pi**2 / math.sinh(math.pi)] * 2), atol=1e-6)


def test_flat_field_is_flagged():
    crit = critical_points(melnikov_field(FLAT, 1.0, 16))
    assert len(crit) == 0 and crit.degenerate_field


def test_field_exports(tmp_path):
    fld = melnikov_field(ARNOLD, 1.0, 8)
    fld.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "t,theta,M"
    critical_points(fld).to_json(tmp_path / "c.json")
    assert (tmp_path / "c.json").exists()
