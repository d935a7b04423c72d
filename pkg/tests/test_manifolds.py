import json

import numpy as np
import pytest

from arnold_diffusion.errors import ChainBroken, DomainError, NoCriticalPoint
from arnold_diffusion.integrate import flow
from arnold_diffusion.manifolds import (
    MINUS,
    PLUS,
    ChainSchedule,
    build_chain,
    compute_generating_function,
    find_link,
    q_levels,
    section,
    sigma,
    splitting_delta,
)
from arnold_diffusion.melnikov import melnikov_total
from arnold_diffusion.model import ModelParams, PhasePoint, eval_H
from arnold_diffusion.pendulum import s0
from arnold_diffusion.torus import find_critical_points

FAST = 1e-2  # integration step for tests that do not probe integrator error
MU = 1e-3


@pytest.fixture(scope="module")
def params():
    return ModelParams(0.25, MU)


def test_q_levels_cover_the_strip():
    q = q_levels(12)
    assert q[0] == -0.75 and q[-1] == 0.75
    assert {0.0, -0.5, 0.5} <= set(q.tolist())
    with pytest.raises(DomainError):
        q_levels(10)


@pytest.mark.parametrize("sign,factor", [(PLUS, 1.0), (MINUS, -1.0)])
def test_unperturbed_grid_is_s0(unperturbed, sign, factor):
    g = compute_generating_function(unperturbed, 0.5, sign, (16, 16, 36), FAST)
    assert np.abs(g.values - factor * s0(0.25, g.q)[None, None, :]).max() <= 1e-8
    assert g(0.3, 0.7, 0.0) == 0.0


def test_first_order_convergence():
    def defect(mu):
        g = compute_generating_function(ModelParams(0.25, mu), 0.5, PLUS, (16, 16, 36), FAST)
        return np.abs(g.values - s0(0.25, g.q)[None, None, :]).max()

    ratio = defect(1e-3) / defect(5e-4)
    assert 1.6 <= ratio <= 2.5


def test_hamilton_jacobi_residual(params):
    g = compute_generating_function(params, 0.5, PLUS, (16, 16, 36), 1e-3)
    assert g.hj_residual <= 5e-6


def test_grid_csv(tmp_path, unperturbed):
    g = compute_generating_function(unperturbed, 0.0, MINUS, (16, 16, 36), FAST)
    g.to_csv(tmp_path / "g.csv")
    rows = (tmp_path / "g.csv").read_text().splitlines()
    assert rows[0] == "t,theta,q,S,I,p" and len(rows) == 1 + 16 * 16 * 37


def test_resolution_floor(unperturbed):
    with pytest.raises(DomainError):
        compute_generating_function(unperturbed, 0.0, PLUS, (8, 16, 36))
    with pytest.raises(DomainError):
        compute_generating_function(unperturbed, 0.0, PLUS, (16, 16, 30))


def test_unperturbed_splitting_is_flat(unperturbed):
    fld = splitting_delta(unperturbed, 1.0, (16, 16), FAST)
    np.testing.assert_allclose(fld.values, 2 * s0(0.25, 0.5), atol=1e-10)
    assert np.abs(fld.interpolant.gradient(0.3, 0.6)).max() <= 1e-9


def test_splitting_follows_melnikov(params):
    fld = splitting_delta(params, 1.0, (16, 16), FAST)
    t, th = np.meshgrid(np.arange(16) / 16, np.arange(16) / 16, indexing="ij")
    first = MU * melnikov_total(ModelParams(0.25, 0.0), 1.0, t.ravel(), th.ravel()).reshape(16, 16)
    assert np.abs(fld.values - 2 * s0(0.25, 0.5) - first).max() <= 5 * MU**2


def test_sigma_on_diagonal_is_delta(params):
    a = sigma(params, 0.5, 0.5, (16, 16), FAST)
    b = splitting_delta(params, 0.5, (16, 16), FAST)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.slope == 0.0


def test_unperturbed_sigma_is_affine(unperturbed):
    fld = sigma(unperturbed, 0.5, 0.51, (16, 16), FAST)
    th = np.linspace(-1, 1, 9)
    np.testing.assert_allclose(fld(0.2, th), 2 * s0(0.25, 0.5) - 0.01 * th, atol=1e-10)
    with pytest.raises(NoCriticalPoint):
        find_link(unperturbed, 0.5, 0.51, (16, 16), FAST)


def test_sigma_locality(params):
    with pytest.raises(DomainError):
        sigma(params, 0.5, 0.7)


def test_homoclinic_link_near_delta_critical_point(params):
    link = find_link(params, 1.0, 1.0, step=FAST)
    fld = splitting_delta(params, 1.0, (16, 16), FAST)
    pts, _ = find_critical_points(fld.interpolant)
    d = min(np.hypot((p.t - link.t + 0.5) % 1 - 0.5, (p.theta - link.theta + 0.5) % 1 - 0.5) for p in pts)
    assert d <= 1e-3
    for p in pts:
        assert fld.momentum_mismatch(p.t, p.theta) <= 1e-6


def test_close_heteroclinic_link_is_a_minimum(params):
    link = find_link(params, 1.0, 1.0 + 5e-4, step=FAST)
    assert link.kind == "minimum" and link.isolated
    assert np.all(np.linalg.eigvalsh(link.hessian) > 0)


def test_wide_gap_breaks_the_link(params):
    with pytest.raises(NoCriticalPoint):
        find_link(params, 0.5, 0.5 + 10 * MU, step=FAST)


def test_link_point_lies_on_a_heteroclinic_orbit(params):
    a, a2 = 0.5, 0.5005
    link = find_link(params, a, a2, step=FAST)
    stable = section(params, a2, MINUS, (16, 16), FAST)
    unstable = section(params, a, PLUS, (16, 16), FAST)
    I, p = (stable.interpolant(-0.5, w)(link.t, link.theta) for w in ("I", "p"))
    assert unstable.interpolant(0.5, "I")(link.t, link.theta) == pytest.approx(I, abs=1e-9)
    assert unstable.interpolant(0.5, "p")(link.t, link.theta) == pytest.approx(p, abs=1e-9)
    # roundoff grows like exp(2 pi sqrt(eps) s), so the approach is checked four time units out
    seg = flow(params, PhasePoint(link.t, link.theta, -0.5, I, p), 4.0, 1e-3)
    end = seg.point(-1)
    assert abs(end.q) <= 1e-5 and abs(end.p) <= 1e-5
    assert eval_H(params, end) == pytest.approx(a2**2 / 2, abs=1e-6)


def test_degenerate_chain(params):
    ch = build_chain(params, 0.3, 0.3, 1.0)
    assert ch.k == 0 and ch.is_valid(MU)


def test_chain_without_perturbation_breaks(unperturbed):
    with pytest.raises(ChainBroken) as info:
        build_chain(unperturbed, 0.0, 0.5, 1.0, step=FAST)
    assert info.value.index == 1


def test_chain_length_doubles_with_half_mu(params):
    a = build_chain(params, 0.2, 0.202, 0.5, step=FAST)
    b = build_chain(params.with_mu(MU / 2), 0.2, 0.202, 0.5, step=FAST)
    assert a.k == 4 and abs(b.k - 2 * a.k) <= 1
    assert a.is_valid(MU) and b.is_valid(MU / 2)
    assert a.sub(1, 3).is_valid(MU)
    doc = json.loads(a.to_json())
    assert set(doc) == {"levels", "links", "c_used"}
    assert [l["i"] for l in doc["links"]] == [1, 2, 3, 4]
    assert all(l["isolated"] for l in doc["links"])


def test_chain_rejects_reversed_interval(params):
    with pytest.raises(DomainError):
        build_chain(params, 0.5, 0.4, 1.0)
    assert not ChainSchedule(np.array([0.0, 0.1]), [], 1.0).is_valid(MU)
