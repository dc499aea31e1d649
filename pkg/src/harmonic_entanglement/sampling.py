"""Synthetic homodyne records and correlation-matrix estimation.

Each detector records the demodulated quadrature it is locked to. A data set
holds four runs, one per pair of locked quadratures, each with its own
vacuum, dark-noise and no-local-oscillator (excess noise) references.
Samples are i.i.d. Gaussian; no temporal correlations are modelled.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, DomainError
from .gaussian import CorrelationMatrix

__all__ = [
    "SETTINGS",
    "DEFAULT_SAMPLES",
    "DEFAULT_DARK_VARIANCE",
    "MeasurementRun",
    "synthesize_runs",
    "estimate_correlation_matrix",
    "write_run",
    "read_run",
]

SETTINGS = (("+", "+"), ("+", "-"), ("-", "+"), ("-", "-"))
DEFAULT_SAMPLES = 260_000
# 15 dB shot-noise to dark-noise clearance
DEFAULT_DARK_VARIANCE = 10 ** (-15 / 10)

_SECTIONS = ("samples", "vacuum_reference", "dark_reference", "excess_reference")


def _pairs(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise DomainError(f"{name} must be a non-empty sequence of pairs, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class MeasurementRun:
    """Paired records of detector a (fundamental) and b (harmonic)."""

    setting: tuple[str, str]
    samples: np.ndarray
    vacuum_reference: np.ndarray
    dark_reference: np.ndarray
    excess_reference: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        setting = tuple(self.setting)
        if setting not in SETTINGS:
            raise DomainError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        object.__setattr__(self, "setting", setting)
        for name in _SECTIONS:
            object.__setattr__(self, name, _pairs(getattr(self, name), name))


def _sqrt_factor(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(m)
        return v * np.sqrt(np.clip(w, 0, None))


def synthesize_runs(
    m,
    n: int = DEFAULT_SAMPLES,
    seed: int = 0,
    v_dark=DEFAULT_DARK_VARIANCE,
    v_excess=0.0,
    gain=1.0,
    n_ref: int | None = None,
) -> tuple[MeasurementRun, ...]:
    """Draw one run per quadrature setting from covariance ``m``.

    Parameters
    ----------
    m : CorrelationMatrix or array_like
        Target correlations in vacuum units; must be physical.
    n : int
        Samples per run.
    seed : int
        Seed of the random generator; output is fully determined by it.
    v_dark, v_excess : float or pair of float
        Dark-noise and excess-noise variances per detector, in vacuum units.
        Dark noise is added to every recorded channel; excess noise only to
        signal and no-LO records.
    gain : float or pair of float
        Detector gains (vacuum standard deviation in recorded units).
    n_ref : int, optional
        Length of each reference record, defaults to ``n``.

    Returns
    -------
    tuple of MeasurementRun
        In the order of :data:`SETTINGS`.
    """
    cm = m if isinstance(m, CorrelationMatrix) else CorrelationMatrix(m)
    if not cm.is_physical():
        raise DomainError("cannot sample a non-physical correlation matrix")
    if n < 2:
        raise DomainError("need at least two samples")
    n_ref = n if n_ref is None else n_ref
    if n_ref < 2:
        raise DomainError("need at least two reference samples")
    v_dark = np.broadcast_to(np.asarray(v_dark, dtype=float), (2,))
    v_excess = np.broadcast_to(np.asarray(v_excess, dtype=float), (2,))
    gain = np.broadcast_to(np.asarray(gain, dtype=float), (2,))
    if np.any(v_dark < 0) or np.any(v_excess < 0) or np.any(gain <= 0):
        raise DomainError("noise variances must be non-negative and gains positive")

    rng = np.random.default_rng(seed)
    factor = _sqrt_factor(cm.m)
    dark_sd = gain * np.sqrt(v_dark)
    excess_sd = gain * np.sqrt(v_excess)
    index = {"+": 0, "-": 1}

    def dark(k):
        return rng.standard_normal((k, 2)) * dark_sd

    runs = []
    for setting in SETTINGS:
        x = rng.standard_normal((n, 4)) @ factor.T
        cols = [index[setting[0]], 2 + index[setting[1]]]
        signal = x[:, cols] * gain + rng.standard_normal((n, 2)) * excess_sd + dark(n)
        vacuum = rng.standard_normal((n_ref, 2)) * gain + dark(n_ref)
        dark_ref = dark(n_ref)
        excess = rng.standard_normal((n_ref, 2)) * excess_sd + dark(n_ref)
        meta = {
            "seed": seed,
            "n": n,
            "v_dark": tuple(float(v) for v in v_dark),
            "v_excess": tuple(float(v) for v in v_excess),
        }
        runs.append(MeasurementRun(setting, signal, vacuum, dark_ref, excess, meta))
    return tuple(runs)


def _pooled_var(records, col):
    return float(np.var(np.concatenate([r[:, col] for r in records]), ddof=1))


def estimate_correlation_matrix(runs) -> CorrelationMatrix:
    """Rebuild the correlation matrix from four runs.

    Vacuum, dark and excess references characterize the detectors, so they
    are pooled over all runs. Each channel is normalized as
    ``(V_sig - V_dark) / (V_vac - V_dark)``, cross-color covariances by the
    geometric mean of the two denominators, and the normalized excess
    variance is subtracted from the single-color diagonal entries. Diagonal
    entries measured in two settings are averaged. Single-color
    cross-quadrature entries are never measured jointly and are set to zero.
    """
    runs = list(runs)
    by_setting = {}
    for run in runs:
        if run.setting in by_setting:
            raise DomainError(f"duplicate setting {run.setting}")
        by_setting[run.setting] = run
    missing = [s for s in SETTINGS if s not in by_setting]
    if missing:
        raise DomainError(f"missing settings {missing}")
    lengths = {len(r.samples) for r in runs}
    if len(lengths) != 1:
        raise DomainError(f"runs have mismatched lengths {sorted(lengths)}")

    v_vac = np.array([_pooled_var([r.vacuum_reference for r in runs], i) for i in (0, 1)])
    v_dark = np.array([_pooled_var([r.dark_reference for r in runs], i) for i in (0, 1)])
    v_exc = np.array([_pooled_var([r.excess_reference for r in runs], i) for i in (0, 1)])
    scale = v_vac - v_dark
    if np.any(scale <= 0):
        raise CalibrationError("vacuum reference variance does not exceed dark noise")
    excess = (v_exc - v_dark) / scale

    index = {"+": 0, "-": 1}
    diag = {i: [] for i in range(4)}
    out = np.zeros((4, 4))
    for (ka, kb), run in by_setting.items():
        i, j = index[ka], 2 + index[kb]
        cov = np.cov(run.samples, rowvar=False)
        diag[i].append((cov[0, 0] - v_dark[0]) / scale[0] - excess[0])
        diag[j].append((cov[1, 1] - v_dark[1]) / scale[1] - excess[1])
        out[i, j] = out[j, i] = cov[0, 1] / np.sqrt(scale[0] * scale[1])
    for i, vals in diag.items():
        out[i, i] = np.mean(vals)

    est = CorrelationMatrix(out)
    if not est.is_physical(1e-9):
        warnings.warn("estimated correlation matrix violates the uncertainty bound",
                      RuntimeWarning, stacklevel=2)
    return est


def write_run(run: MeasurementRun, path) -> None:
    """Write a run as '#' header lines followed by one pair per line per section."""
    meta = dict(run.meta)
    buf = io.StringIO()
    buf.write("# measurement run\n")
    buf.write(f"# setting: {run.setting[0]} {run.setting[1]}\n")
    for key in ("seed", "n"):
        if key in meta:
            buf.write(f"# {key}: {meta[key]}\n")
    for key in ("v_dark", "v_excess"):
        if key in meta:
            buf.write(f"# {key}: {meta[key][0]!r} {meta[key][1]!r}\n")
    for name in _SECTIONS:
        arr = getattr(run, name)
        buf.write(f"# section: {name} {len(arr)}\n")
        np.savetxt(buf, arr, fmt="%.10g")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_run(path) -> MeasurementRun:
    with open(path) as fh:
        text = fh.read()
    meta = {}
    setting = None
    sections = {}
    current = None
    chunk: list[str] = []

    def flush():
        if current is not None:
            data = np.loadtxt(io.StringIO("".join(chunk)), ndmin=2) if chunk else np.empty((0, 2))
            sections[current] = data

    for line in text.splitlines(keepends=True):
        if line.startswith("#"):
            body = line[1:].strip()
            key, _, value = body.partition(":")
            value = value.strip()
            if key == "section":
                flush()
                current, chunk = value.split()[0], []
            elif key == "setting":
                setting = tuple(value.split())
            elif key in ("seed", "n"):
                meta[key] = int(value)
            elif key in ("v_dark", "v_excess"):
                meta[key] = tuple(float(v) for v in value.split())
        elif line.strip():
            chunk.append(line)
    flush()
    if setting is None:
        raise DomainError(f"{path}: missing setting header")
    missing = [s for s in _SECTIONS if s not in sections]
    if missing:
        raise DomainError(f"{path}: missing sections {missing}")
    return MeasurementRun(setting, *(sections[s] for s in _SECTIONS), meta=meta)
