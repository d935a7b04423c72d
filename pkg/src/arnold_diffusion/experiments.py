"""Reproducible studies built on the full pipeline: drift runs, time-scaling fits, gap tables."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .bessi import (
    CURVE_STEP,
    DiffusionOrbit,
    JunctionVariables,
    extract_orbit,
    minimize_composite,
    seed_junctions,
)
from .errors import ArnoldError, DomainError, NoCriticalPoint, NumericalFailure
from .manifolds import SECTION_RESOLUTION, build_chain, find_link
from .model import ModelParams

log = logging.getLogger(__name__)

DRIFT_STEP = 1e-2
REINTEGRATION_TOL = 1e-5
REINTEGRATION_WINDOW = 1.0
OUTPUT_ROOT_ENV = "ARNOLD_OUTPUT_ROOT"


# ---------------------------------------------------------------------------
# Link threshold


def _link_ok(params, a_lo, a_hi, resolution, step) -> bool:
    try:
        link = find_link(params, a_lo, a_hi, resolution, step)
    except NoCriticalPoint:
        return False
    return link.kind == "minimum" and link.isolated


def link_threshold(params: ModelParams, a: float, *, lo: float = 0.0, hi: float = 4.0, tol: float = 0.02,
                   resolution=SECTION_RESOLUTION, step: float = DRIFT_STEP) -> float:
    """Largest c (to ``tol``) for which the link from a - c*mu to a has an isolated minimum."""
    if params.mu <= 0:
        raise DomainError("the link threshold is only defined for mu > 0")
    if _link_ok(params, a - hi * params.mu, a, resolution, step):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _link_ok(params, a - mid * params.mu, a, resolution, step):
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# Drift


def drift_run(params: ModelParams, a_minus: float, a_plus: float, *, c: float | None = None,
              c_safety: float = 0.5, resolution=SECTION_RESOLUTION, step: float = DRIFT_STEP,
              curve_step: float = CURVE_STEP, tau_min: int | None = None,
              check_step: float = 1e-3, progress=None) -> DiffusionOrbit:
    """Orbit whose action climbs from ``a_minus`` to ``a_plus``: chain, seeds, minimum, extraction.

    When ``c`` is not given it is ``c_safety`` times the link threshold at
    ``a_plus``.  The extracted orbit is re-integrated window by window and
    rejected if it strays more than 1e-5 from its samples.  Failures carry
    the pipeline stage in ``exc.stage``.
    """
    if a_plus < a_minus:
        raise DomainError("a_minus must not exceed a_plus")
    resolution = (int(resolution[0]), int(resolution[1]))
    if a_plus == a_minus:
        link = find_link(params, a_minus, a_minus, resolution, step)
        jv = JunctionVariables([link.t], [link.theta], [0], [])
        result = minimize_composite(params, [a_minus], jv, resolution=resolution, step=step,
                                    curve_step=curve_step)
        orbit = extract_orbit(params, [a_minus], result, check_span=False)
        orbit.meta.update(levels=[a_minus], junctions=result.junctions.to_dict(), c_used=None)
        return orbit
    if c is None:
        if params.mu == 0.0:
            c = 1.0  # build_chain reports the broken first link
        else:
            c = c_safety * link_threshold(params, a_plus, resolution=resolution, step=step)
            log.info("link threshold gives c = %.4g", c)
    schedule = build_chain(params, a_minus, a_plus, c, resolution, step, progress=progress)
    log.info("chain of %d links, spacing %.3g", schedule.k, schedule.spacing)
    seed = seed_junctions(params, schedule, tau_min)
    log.info("total dwell %d", int(seed.tau.sum()))
    result = minimize_composite(params, schedule, seed, resolution=resolution, step=step, curve_step=curve_step)
    log.info("composite minimum %.10g, gradient %.2e", result.value, result.grad_norm)
    orbit = extract_orbit(params, schedule, result)
    defect = orbit.reintegration_defect(REINTEGRATION_WINDOW, check_step)
    if not defect <= REINTEGRATION_TOL:
        raise NumericalFailure(f"re-integration deviates by {defect:.2e}", stage="reintegration", best=orbit)
    margin = 2.0 * schedule.spacing
    orbit.meta.update(
        levels=schedule.levels.tolist(),
        c_used=schedule.c_used,
        junctions=result.junctions.to_dict(),
        composite_value=result.value,
        gradient=result.grad_norm,
        min_eigenvalue=result.min_eigenvalue,
        reintegration_defect=defect,
        drift_time=orbit.drift_time(a_minus, a_plus, margin),
    )
    return orbit


# ---------------------------------------------------------------------------
# Time scaling


def _law_log_shape(law: int, mu):
    mu = np.asarray(mu, dtype=float)
    return np.log(np.abs(np.log(mu)) / mu) if law == 1 else np.log(1.0 / mu**2)


@dataclass
class ScalingFit:
    """Least-squares fits of T = C1 |ln mu| / mu and T = C2 / mu^2 in log space."""

    samples: list
    C1: float = math.nan
    C2: float = math.nan
    residual1: float = math.nan
    residual2: float = math.nan
    failures: dict = field(default_factory=dict)

    @classmethod
    def fit(cls, mus, times, failures=None) -> "ScalingFit":
        pairs = sorted((float(m), float(t)) for m, t in zip(mus, times))
        out = cls(pairs, failures=dict(failures or {}))
        if len(pairs) < 3:
            return out
        mu = np.array([m for m, _ in pairs])
        logT = np.log([t for _, t in pairs])
        for law in (1, 2):
            r = logT - _law_log_shape(law, mu)
            logC = r.mean()
            res = float(np.sqrt(np.mean((r - logC) ** 2)))
            if law == 1:
                out.C1, out.residual1 = float(np.exp(logC)), res
            else:
                out.C2, out.residual2 = float(np.exp(logC)), res
        return out

    @property
    def preferred_law(self) -> int | None:
        if math.isnan(self.residual1):
            return None
        return 1 if self.residual1 <= self.residual2 else 2

    @property
    def decreasing(self) -> bool:
        t = [t for _, t in self.samples]
        return len(t) >= 2 and all(b < a for a, b in zip(t, t[1:]))

    def to_dict(self) -> dict:
        return {
            "samples": [{"mu": m, "T": t} for m, t in self.samples],
            "C1": self.C1,
            "C2": self.C2,
            "residual1": self.residual1,
            "residual2": self.residual2,
            "preferred_law": self.preferred_law,
            "decreasing": self.decreasing,
            "failures": {str(k): v for k, v in self.failures.items()},
        }

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mu", "T"])
            w.writerows(self.samples)


def _drift_time_for(args):
    params, mu, a_minus, a_plus, kw = args
    orbit = drift_run(params.with_mu(mu), a_minus, a_plus, **kw)
    return orbit.meta["drift_time"]


def time_scaling(params: ModelParams, mus, a_minus: float, a_plus: float, *, threads: int = 1,
                 **drift_kw) -> ScalingFit:
    """Drift time per mu and the two candidate fits; failing mu values are listed, not fatal."""
    mus = sorted(float(m) for m in mus)
    if len(mus) < 4 or mus[-1] < 8 * mus[0]:
        raise DomainError("need at least 4 mu values spanning a factor of 8")
    jobs = [(params, m, a_minus, a_plus, drift_kw) for m in mus]
    ok_mu, times, failures = [], [], {}

    def collect(m, fn):
        try:
            t = fn()
        except ArnoldError as exc:
            failures[m] = f"{type(exc).__name__} ({getattr(exc, 'stage', None)}): {exc}"
            log.warning("mu=%g failed: %s", m, failures[m])
            return
        ok_mu.append(m)
        times.append(t)

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [(m, pool.submit(_drift_time_for, j)) for m, j in zip(mus, jobs)]
            for m, fut in futures:
                collect(m, fut.result)
    else:
        for m, j in zip(mus, jobs):
            collect(m, lambda j=j: _drift_time_for(j))
    return ScalingFit.fit(ok_mu, times, failures)


# ---------------------------------------------------------------------------
# Large gap arithmetic


def gap_report(mus, c: float) -> list[dict]:
    """Rows of (mu, gap width sqrt(mu), chain step c*mu, their ratio), sorted by decreasing mu."""
    if c <= 0:
        raise DomainError(f"c must be positive, got {c}")
    rows = []
    for mu in sorted((float(m) for m in mus), reverse=True):
        if mu <= 0:
            raise DomainError(f"mu must be positive, got {mu}")
        gap, step = math.sqrt(mu), c * mu
        rows.append({"mu": mu, "gap": gap, "step": step, "ratio": gap / step})
    return rows


def write_rows_csv(path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


# ---------------------------------------------------------------------------
# Run directories


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


class RunDirectory:
    """``<root>/<kind>-<UTC timestamp>-<hash>`` holding the resolved config and a manifest."""

    def __init__(self, root, kind: str, config: dict, *, now: datetime | None = None):
        root = Path(root if root is not None else os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        now = now or datetime.now(timezone.utc)
        self.config = config
        self.hash = config_hash(config)
        self.path = root / f"{kind}-{now.strftime('%Y%m%dT%H%M%S')}-{self.hash[:10]}"
        self.path.mkdir(parents=True, exist_ok=True)
        (self.path / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True, default=str))
        self.kind = kind

    def file(self, name: str) -> Path:
        return self.path / name

    def write_manifest(self, outcome: dict) -> Path:
        doc = {"kind": self.kind, "config_hash": self.hash, "parameters": self.config, "outcome": outcome}
        p = self.path / "manifest.json"
        p.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str))
        return p
