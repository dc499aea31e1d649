"""Operating-point analysis and parameter sweeps.

Angle convention: in the plane of (seed amplitude, signed pump amplitude) the
polar angle ``phi`` gives ``seed = P cos(phi)**2`` and ``pump = P sin(phi)**2``.
``phi = 0`` is pure second-harmonic generation (seed only), ``phi = +/-pi/2``
is a pure OPO (pump only). Negative ``phi`` drives the pump at the
de-amplification phase, positive ``phi`` at the amplification phase.
Sweep angles are given in units of pi.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from . import reference
from .errors import DomainError
from .gaussian import (
    CorrelationMatrix,
    InseparabilityResult,
    RawInseparability,
    align_quadratures,
    apply_detection_efficiency,
    correlation_from_transfer,
    inseparability_raw,
    standard_form,
)
from .opa import (
    DriveConfig,
    SteadyState,
    classical_gains,
    opo_threshold,
    reflected_transfer,
    solve_steady_state,
)

__all__ = [
    "SweepSpec",
    "PointReport",
    "angle_parameterization",
    "drive_from_amplitudes",
    "run_point",
    "run_angle_sweep",
    "run_map",
    "write_table",
    "entangled_bands",
    "band_edges",
    "fit_gawbs",
    "ANGLE_COLUMNS",
    "MAP_COLUMNS",
]

MODES = ("point", "map", "angle", "synth", "estimate")


@dataclass(frozen=True)
class SweepSpec:
    mode: str = "angle"
    total_power: float = 65.0
    angle_range: tuple[float, float] = (-0.5, 0.5)
    grid: int = 101
    gawbs_enabled: bool = True
    output_path: str | None = None
    compare_gawbs: bool = False
    map_extent: tuple[float, float] = (1.2, 1.2)
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.total_power > 0:
            raise DomainError("total_power must be positive")
        lo, hi = self.angle_range
        if lo > hi:
            raise DomainError("angle_range must be increasing")
        # a single angle is allowed only for a degenerate range
        min_grid = 1 if lo == hi else 2
        if self.grid < min_grid:
            raise DomainError(f"grid must be at least {min_grid}")
        if self.workers < 1:
            raise DomainError("workers must be at least 1")

    def angles(self) -> np.ndarray:
        lo, hi = self.angle_range
        return np.linspace(lo, hi, self.grid) if self.grid > 1 else np.array([lo])


def angle_parameterization(phi: float, total_power: float, p_threshold: float = 85.0) -> DriveConfig:
    """Drive on the circle of constant total power; ``phi`` in radians."""
    if not total_power > 0:
        raise DomainError("total_power must be positive")
    c, s = math.cos(phi), math.sin(phi)
    phase = math.pi if s > 0 else 0.0
    return DriveConfig(total_power * c * c, total_power * s * s, phase, p_threshold)


def drive_from_amplitudes(seed_amp: float, pump_amp: float, p_threshold: float = 85.0) -> DriveConfig:
    """Drive from amplitudes in units of sqrt(p_threshold); the pump sign picks the phase."""
    if seed_amp < 0:
        raise DomainError("seed amplitude must be non-negative")
    phase = math.pi if pump_amp > 0 else 0.0
    return DriveConfig(seed_amp * seed_amp * p_threshold, pump_amp * pump_amp * p_threshold,
                       phase, p_threshold)


@dataclass(frozen=True, eq=False)
class PointReport:
    drive: DriveConfig
    steady_state: SteadyState
    correlation: CorrelationMatrix
    raw: RawInseparability
    result: InseparabilityResult
    gains: dict
    gawbs: bool

    @property
    def inseparability(self) -> float:
        return self.result.value

    def as_dict(self) -> dict:
        ss = self.steady_state
        return {
            "drive": dataclasses.asdict(self.drive),
            "gawbs": self.gawbs,
            "stable": ss.stable,
            "alpha": [ss.alpha.real, ss.alpha.imag],
            "beta": [ss.beta.real, ss.beta.imag],
            "steady_state_residual": ss.residual,
            "correlation_matrix": self.correlation.m.tolist(),
            "inseparability": self.result.value,
            "evaluable": self.result.evaluable,
            "k": self.result.k,
            "r_a": self.result.r_a,
            "r_b": self.result.r_b,
            "raw_inseparability": self.raw.value,
            "raw_k_plus": self.raw.k_plus,
            "raw_k_minus": self.raw.k_minus,
            "standard_form": self.result.standard_form.m.tolist(),
            **self.gains,
        }


def _params(config, gawbs: bool):
    return config.cavity if gawbs else config.cavity.without_gawbs()


def detected_correlation(params, ss: SteadyState) -> CorrelationMatrix:
    """Quadrature-aligned correlation matrix of the detected reflected light."""
    t = reflected_transfer(params, ss, params.omega)
    m = apply_detection_efficiency(correlation_from_transfer(t), params.eta_a, params.eta_b)
    return align_quadratures(m)


def run_point(config, drive: DriveConfig, gawbs: bool = True, steady_state: SteadyState | None = None) -> PointReport:
    """Full pipeline at one drive: steady state, noise transfer, detection, standard form."""
    params = _params(config, gawbs)
    ss = solve_steady_state(params, drive) if steady_state is None else steady_state
    m = detected_correlation(params, ss)
    return PointReport(
        drive=drive,
        steady_state=ss,
        correlation=m,
        raw=inseparability_raw(m),
        result=standard_form(m),
        gains=classical_gains(params, ss, drive),
        gawbs=gawbs,
    )


# -- sweeps -------------------------------------------------------------------

ANGLE_COLUMNS = (
    "gawbs", "phi_over_pi", "seed_mw", "pump_mw", "relative_phase",
    "stable", "evaluable", "I", "k", "r_a", "r_b",
    "C_aa_pp", "C_aa_mm", "C_bb_pp", "C_bb_mm", "C_ab_pp", "C_ab_mm", "status",
)
MAP_COLUMNS = (
    "seed_amp", "pump_amp", "seed_mw", "pump_mw", "relative_phase",
    "stable", "evaluable", "I", "I_model", "flag", "regime", "status",
)


def _point_row(config, drive, gawbs):
    try:
        rep = run_point(config, drive, gawbs)
    except Exception as exc:  # a failing point becomes a gap row
        return None, f"failed: {type(exc).__name__}: {exc}"
    return rep, "ok"


def _angle_row(config, phi, gawbs, total_power):
    drive = angle_parameterization(phi * math.pi, total_power, config.drive.p_threshold)
    rep, status = _point_row(config, drive, gawbs)
    row = {
        "gawbs": int(gawbs), "phi_over_pi": float(phi),
        "seed_mw": drive.seed_power, "pump_mw": drive.pump_power,
        "relative_phase": drive.relative_phase, "status": status,
    }
    if rep is None:
        row.update({c: math.nan for c in ANGLE_COLUMNS if c not in row})
        row["stable"] = row["evaluable"] = ""
        return row
    m, res = rep.correlation.m, rep.result
    row.update({
        "stable": int(rep.steady_state.stable), "evaluable": int(res.evaluable),
        "I": res.value, "k": res.k, "r_a": res.r_a, "r_b": res.r_b,
        "C_aa_pp": m[0, 0], "C_aa_mm": m[1, 1], "C_bb_pp": m[2, 2], "C_bb_mm": m[3, 3],
        "C_ab_pp": m[0, 2], "C_ab_mm": m[1, 3],
    })
    return row


def _map_row(config, seed_amp, pump_amp, p_osc):
    drive = drive_from_amplitudes(seed_amp, pump_amp, config.drive.p_threshold)
    rep, status = _point_row(config, drive, config.sweep.gawbs_enabled)
    row = {
        "seed_amp": float(seed_amp), "pump_amp": float(pump_amp),
        "seed_mw": drive.seed_power, "pump_mw": drive.pump_power,
        "relative_phase": drive.relative_phase, "status": status,
        "regime": "above_threshold" if drive.pump_power > p_osc else "below_threshold",
    }
    if rep is None:
        row.update({"stable": "", "evaluable": "", "I": 1.0, "I_model": math.nan, "flag": "failed"})
        return row
    stable, evaluable = rep.steady_state.stable, rep.result.evaluable
    flag = "ok" if stable and evaluable else ("unstable" if not stable else "not_evaluable")
    row.update({
        "stable": int(stable), "evaluable": int(evaluable),
        "I": rep.result.value if flag == "ok" else 1.0,
        "I_model": rep.result.value, "flag": flag,
    })
    return row


def _call(job):
    fn, args = job
    return fn(*args)


def _run_jobs(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def run_angle_sweep(config, spec: SweepSpec | None = None) -> list[dict]:
    """Inseparability along the constant-power circle.

    With ``spec.compare_gawbs`` both the GAWBS and the GAWBS-free curves are
    returned (GAWBS rows first); otherwise only the variant selected by
    ``spec.gawbs_enabled``.
    """
    spec = config.sweep if spec is None else spec
    variants = (True, False) if spec.compare_gawbs else (spec.gawbs_enabled,)
    jobs = [(_angle_row, (config, float(phi), g, spec.total_power))
            for g in variants for phi in spec.angles()]
    return _run_jobs(jobs, spec.workers)


def run_map(config, spec: SweepSpec | None = None, seed_axis=None, pump_axis=None) -> list[dict]:
    """Inseparability on a rectangular grid of drive amplitudes.

    Axes are in units of the threshold pump amplitude; the pump axis is
    signed (negative = de-amplification phase). Unstable, non-evaluable or
    failed points carry ``I = 1`` and a non-"ok" flag. The ``regime`` column
    marks pump powers above the OPO threshold found by stability bisection.
    """
    spec = config.sweep if spec is None else spec
    cfg = config if config.sweep.gawbs_enabled == spec.gawbs_enabled else \
        dataclasses.replace(config, sweep=dataclasses.replace(config.sweep, gawbs_enabled=spec.gawbs_enabled))
    if seed_axis is None:
        seed_axis = np.linspace(0.0, spec.map_extent[0], spec.grid)
    if pump_axis is None:
        pump_axis = np.linspace(-spec.map_extent[1], spec.map_extent[1], spec.grid)
    p_osc = opo_threshold(cfg.cavity)
    jobs = [(_map_row, (cfg, float(s), float(p), p_osc)) for s in seed_axis for p in pump_axis]
    return _run_jobs(jobs, spec.workers)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_table(path, rows: Sequence[dict], columns: Sequence[str], metadata: dict) -> str:
    """Write rows as CSV with '#' metadata header and failure-count footer.

    Returns the text written so callers can also print it. Output depends only
    on the inputs, so identical sweeps give byte-identical files.
    """
    buf = io.StringIO()
    for key, value in metadata.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    failed = sum(1 for r in rows if str(r.get("status", "ok")).startswith("failed"))
    buf.write(f"# failures: {failed}/{len(rows)}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def sweep_metadata(config, kind: str, **extra) -> dict:
    meta = {
        "sweep": kind,
        "config_sha256": config.digest(),
        "xi_a": repr(config.cavity.xi_a),
        "xi_b": repr(config.cavity.xi_b),
        "omega_rad_s": repr(config.cavity.omega),
        "epsilon": repr(config.cavity.epsilon),
        "eta": f"{config.cavity.eta_a!r} {config.cavity.eta_b!r}",
        "angle_convention": "seed=P*cos(phi)^2, pump=P*sin(phi)^2, phi>0 amplification",
    }
    meta.update({k: repr(v) if isinstance(v, float) else v for k, v in extra.items()})
    return meta


# -- band analysis and GAWBS fit -------------------------------------------


def entangled_bands(phis, values) -> list[tuple[float, float]]:
    """Contiguous runs of grid angles with I < 1, as (first, last) pairs."""
    bands = []
    start = None
    for phi, v in zip(phis, values):
        if np.isfinite(v) and v < 1:
            if start is None:
                start = phi
            last = phi
        elif start is not None:
            bands.append((start, last))
            start = None
    if start is not None:
        bands.append((start, last))
    return bands


class _AngleModel:
    """Inseparability along the constant-power circle with cached steady states.

    The steady state does not depend on the GAWBS couplings, so fits over
    (xi_a, xi_b) reuse it.
    """

    def __init__(self, config, total_power):
        self.config = config
        self.total_power = total_power
        self._cache = {}

    def __call__(self, phi, xi=None):
        cfg = self.config if xi is None else self.config.with_gawbs(*xi)
        drive = angle_parameterization(phi * math.pi, self.total_power, cfg.drive.p_threshold)
        key = float(phi)
        if key not in self._cache:
            self._cache[key] = solve_steady_state(cfg.cavity, drive)
        return run_point(cfg, drive, True, self._cache[key]).result.value


def band_edges(config, total_power=65.0, n_grid: int = 81, xi=None, model=None, xtol=1e-5) -> list[float]:
    """Angles (units of pi) where I crosses 1 along the sweep, located by Brent's method."""
    model = _AngleModel(config, total_power) if model is None else model
    phis = np.linspace(-0.5, 0.5, n_grid)
    vals = np.array([model(p, xi) for p in phis]) - 1
    edges = []
    for i in range(n_grid - 1):
        if np.sign(vals[i]) != np.sign(vals[i + 1]):
            edges.append(brentq(lambda p: model(p, xi) - 1, phis[i], phis[i + 1], xtol=xtol))
    return edges


def star_angle() -> float:
    """Polar angle (units of pi) of the best published operating point."""
    return -math.atan(math.sqrt(reference.STAR_PUMP_MW / reference.STAR_SEED_MW)) / math.pi


def fit_gawbs(config, x0=(5e-17, 5e-17), total_power=reference.SWEEP_TOTAL_MW,
              target_edges=None, target_star=reference.OBSERVED_BAND_MINIMA[0],
              edge_sigma=0.02, star_sigma=0.02):
    """Fit (xi_a, xi_b) to the published entangled angle ranges.

    The objective is the weighted sum of squares of (a) the four model band
    edges minus the observed ones, in units of pi, and (b) the model
    inseparability at the best operating point's angle minus ``target_star``.
    Couplings are optimized with Nelder-Mead in units of 1e-17.

    Returns
    -------
    xi : tuple of float
    info : dict
        Final edges, inseparability at the star angle and objective value.
    """
    if target_edges is None:
        target_edges = [e for band in reference.OBSERVED_BANDS for e in band]
    target_edges = np.asarray(target_edges)
    model = _AngleModel(config, total_power)
    phi_star = star_angle()
    unit = 1e-17

    def objective(u):
        xi = (u[0] * unit, u[1] * unit)
        edges = band_edges(config, total_power, xi=xi, model=model, xtol=1e-4)
        if len(edges) != len(target_edges):
            return 1e3 + abs(len(edges) - len(target_edges))
        r_edges = (np.asarray(edges) - target_edges) / edge_sigma
        r_star = (model(phi_star, xi) - target_star) / star_sigma
        return float(np.sum(r_edges ** 2) + r_star ** 2)

    res = minimize(objective, np.asarray(x0) / unit, method="Nelder-Mead",
                   options={"xatol": 1e-3, "fatol": 1e-4})
    xi = (float(res.x[0] * unit), float(res.x[1] * unit))
    info = {
        "edges": band_edges(config, total_power, xi=xi, model=model),
        "I_star_angle": model(phi_star, xi),
        "objective": float(res.fun),
    }
    return xi, info


def band_minimum(config, lo, hi, total_power=65.0, gawbs=True) -> float:
    """Smallest I on the sweep between angles ``lo`` and ``hi`` (units of pi)."""
    cfg = config if gawbs else config.with_gawbs(0.0, 0.0)
    model = _AngleModel(cfg, total_power)
    res = minimize_scalar(model, bounds=(lo, hi), method="bounded", options={"xatol": 1e-5})
    return float(res.fun)
