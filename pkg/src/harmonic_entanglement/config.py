"""Loading of the structured parameter file (INI sections cavity, drive,
detection, gawbs, sweep)."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import DomainError
from .opa import CavityParams, DriveConfig, calibrate_epsilon
from .sweep import SweepSpec

__all__ = ["SamplingConfig", "Config", "load_config", "default_config_text"]


@dataclass(frozen=True)
class SamplingConfig:
    dark_clearance_db: float = 15.0
    excess_a: float = 0.0
    excess_b: float = 0.0
    n_samples: int = 260_000

    @property
    def dark_variance(self) -> float:
        return 10 ** (-self.dark_clearance_db / 10)


@dataclass(frozen=True)
class Config:
    cavity: CavityParams
    drive: DriveConfig
    sampling: SamplingConfig
    sweep: SweepSpec

    def digest(self) -> str:
        """Short hash of the fully resolved parameter set.

        Output path and worker count do not affect results and are excluded.
        """
        d = dataclasses.asdict(self)
        d["sweep"].pop("output_path")
        d["sweep"].pop("workers")
        blob = json.dumps(d, sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_gawbs(self, xi_a: float, xi_b: float) -> "Config":
        return dataclasses.replace(self, cavity=dataclasses.replace(self.cavity, xi_a=xi_a, xi_b=xi_b))


def default_config_text() -> str:
    return resources.files(__package__).joinpath("default.ini").read_text()


def _get(cp, section, key, conv=float):
    try:
        raw = cp.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise DomainError(f"config: missing {section}.{key}") from exc
    try:
        return conv(raw)
    except ValueError as exc:
        raise DomainError(f"config: bad value for {section}.{key}: {raw!r}") from exc


def load_config(path=None) -> Config:
    """Read a parameter file; values missing from ``path`` fall back to the defaults."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(default_config_text())
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)

    p_th = _get(cp, "drive", "p_threshold_mw")
    raw_eps = cp.get("cavity", "epsilon", fallback="").strip()
    cavity = CavityParams(
        kappa_a1=_get(cp, "cavity", "kappa_a1"),
        kappa_a2=_get(cp, "cavity", "kappa_a2"),
        kappa_b1=_get(cp, "cavity", "kappa_b1"),
        kappa_b2=_get(cp, "cavity", "kappa_b2"),
        epsilon=float(raw_eps) if raw_eps else 0.0,
        lambda_a=_get(cp, "cavity", "lambda_a"),
        xi_a=_get(cp, "gawbs", "xi_a"),
        xi_b=_get(cp, "gawbs", "xi_b"),
        eta_a=_get(cp, "detection", "eta_a"),
        eta_b=_get(cp, "detection", "eta_b"),
        omega=2 * np.pi * _get(cp, "cavity", "sideband_hz"),
    )
    if not raw_eps:
        cavity = dataclasses.replace(cavity, epsilon=calibrate_epsilon(cavity, p_th))
    drive = DriveConfig(
        seed_power=_get(cp, "drive", "seed_mw"),
        pump_power=_get(cp, "drive", "pump_mw"),
        relative_phase=_get(cp, "drive", "relative_phase"),
        p_threshold=p_th,
    )
    sampling = SamplingConfig(
        dark_clearance_db=_get(cp, "detection", "dark_clearance_db"),
        excess_a=_get(cp, "detection", "excess_a"),
        excess_b=_get(cp, "detection", "excess_b"),
        n_samples=_get(cp, "sweep", "n_samples", int),
    )
    sweep = SweepSpec(
        total_power=_get(cp, "sweep", "total_mw"),
        angle_range=(_get(cp, "sweep", "angle_min"), _get(cp, "sweep", "angle_max")),
        grid=_get(cp, "sweep", "grid", int),
        map_extent=(_get(cp, "sweep", "map_seed_max"), _get(cp, "sweep", "map_pump_max")),
        workers=_get(cp, "sweep", "workers", int),
    )
    return Config(cavity, drive, sampling, sweep)
