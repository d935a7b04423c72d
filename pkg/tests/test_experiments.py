import json
import math
from datetime import datetime, timezone

import numpy as np
import pytest

from arnold_diffusion.errors import ChainBroken, DomainError
from arnold_diffusion.experiments import (
    RunDirectory,
    ScalingFit,
    config_hash,
    drift_run,
    gap_report,
    link_threshold,
    time_scaling,
)

MUS = [4e-4, 8e-4, 1.6e-3, 3.2e-3]


def test_fit_recovers_log_law():
    fit = ScalingFit.fit(MUS, [5 * abs(math.log(m)) / m for m in MUS])
    assert fit.C1 == pytest.approx(5.0, rel=1e-2)
    assert fit.preferred_law == 1
    assert fit.residual1 <= 1e-12
    assert fit.decreasing


def test_fit_recovers_square_law():
    fit = ScalingFit.fit(MUS, [3 / m**2 for m in MUS])
    assert fit.C2 == pytest.approx(3.0, rel=1e-2)
    assert fit.preferred_law == 2


def test_fit_sorts_and_needs_three_points():
    fit = ScalingFit.fit([1e-3, 1e-4], [10.0, 100.0])
    assert fit.preferred_law is None and math.isnan(fit.C1)
    fit = ScalingFit.fit(MUS[::-1], [1.0, 2.0, 3.0, 4.0])
    assert [m for m, _ in fit.samples] == MUS
    assert fit.decreasing
    assert json.loads(json.dumps(fit.to_dict()))["preferred_law"] in (1, 2)


def test_gap_arithmetic():
    rows = gap_report([1e-2, 1e-4], 1.0)
    assert rows[0] == pytest.approx({"mu": 1e-2, "gap": 0.1, "step": 0.01, "ratio": 10.0})
    assert rows[1]["ratio"] == pytest.approx(100.0)


def test_gap_ratios_grow_as_mu_shrinks():
    rows = gap_report([1e-4, 1e-2, 1e-3, 1e-5], 0.54)
    ratios = [r["ratio"] for r in rows]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    with pytest.raises(DomainError):
        gap_report([1e-3], 0.0)


def test_run_directory(tmp_path):
    cfg = {"epsilon": 0.25, "mu": 1e-3}
    when = datetime(2030, 1, 2, 3, 4, 5, tzinfo=timezone.utc)
    run = RunDirectory(tmp_path, "gaps", cfg, now=when)
    assert run.path.name == f"gaps-20300102T030405-{config_hash(cfg)[:10]}"
    assert json.loads((run.path / "config.json").read_text()) == cfg
    doc = json.loads(run.write_manifest({"ok": True}).read_text())
    assert doc["config_hash"] == config_hash(cfg) and doc["parameters"] == cfg and doc["outcome"] == {"ok": True}


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_link_threshold_brackets_a_working_spacing(arnold_small_mu):
    c = link_threshold(arnold_small_mu, 0.5, tol=0.05)
    assert 0.3 < c < 4.0


def test_single_level_drift_is_a_homoclinic(arnold_small_mu):
    orbit = drift_run(arnold_small_mu, 0.4, 0.4)
    assert len(orbit.segments) == 2 and orbit.max_junction_defect <= 1e-6


def test_no_drift_without_perturbation(unperturbed):
    with pytest.raises(ChainBroken) as info:
        drift_run(unperturbed, 0.0, 0.5)
    assert info.value.index == 1


def test_short_drift(arnold_small_mu):
    orbit = drift_run(arnold_small_mu, 0.3, 0.302, c=0.5)
    assert orbit.I_min <= 0.3 + 1e-9 and orbit.I_max >= 0.302 - 1e-9
    assert orbit.max_junction_defect <= 1e-6
    assert orbit.meta["reintegration_defect"] <= 1e-5
    assert orbit.meta["drift_time"] > 0
    assert np.all(np.diff(orbit.samples[:, 0]) > 0)


def test_scaling_rejects_narrow_grid(arnold_small_mu):
    with pytest.raises(DomainError):
        time_scaling(arnold_small_mu, [1e-3, 2e-3, 3e-3, 4e-3], 0.3, 0.31)
