"""Doubly resonant optical parametric amplifier: classical steady state and
linearized transfer of quantum noise to the reflected fields.

Field amplitudes are in SI-derived flux units: drive amplitudes in
sqrt(photons/s), intracavity amplitudes in sqrt(photons). Decay rates and
frequencies are angular (rad/s).

Phase convention
----------------
The seed drive is real and positive. The pump drive is
``-exp(1j * relative_phase) * |beta_in|``, so ``relative_phase = 0`` is the
parametric de-amplification point of the fundamental and
``relative_phase = pi`` the amplification point.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy import constants

from .errors import DomainError, SingularSystemError, SolverError

__all__ = [
    "CavityParams",
    "DriveConfig",
    "SteadyState",
    "TransferMatrix",
    "INPUT_CHANNELS",
    "OUTPUT_QUADRATURES",
    "photon_flux_amplitude",
    "calibrate_epsilon",
    "opo_threshold",
    "solve_steady_state",
    "system_matrix",
    "drift_matrix",
    "is_stable",
    "reflected_transfer",
    "mean_reflected_fields",
    "classical_gains",
]

INPUT_CHANNELS = (
    "A1+", "A1-", "A2+", "A2-",
    "B1+", "B1-", "B2+", "B2-",
    "P",
)
OUTPUT_QUADRATURES = ("a+", "a-", "b+", "b-")

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 200


@dataclass(frozen=True)
class CavityParams:
    """Fixed physical constants of the OPA and its detection chain.

    The second-harmonic wavelength is not stored; it is always
    ``lambda_a / 2``.
    """

    kappa_a1: float
    kappa_a2: float
    kappa_b1: float
    kappa_b2: float
    epsilon: float
    lambda_a: float = 1064e-9
    xi_a: float = 0.0
    xi_b: float = 0.0
    eta_a: float = 1.0
    eta_b: float = 1.0
    omega: float = 0.0

    def __post_init__(self):
        for name in ("kappa_a1", "kappa_b1"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("kappa_a2", "kappa_b2"):
            if not getattr(self, name) >= 0:
                raise DomainError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        if not self.epsilon >= 0:
            raise DomainError(f"epsilon must be non-negative, got {self.epsilon!r}")
        if not self.lambda_a > 0:
            raise DomainError("lambda_a must be positive")
        for name in ("eta_a", "eta_b"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {getattr(self, name)!r}")

    @property
    def kappa_a(self) -> float:
        return self.kappa_a1 + self.kappa_a2

    @property
    def kappa_b(self) -> float:
        return self.kappa_b1 + self.kappa_b2

    @property
    def lambda_b(self) -> float:
        return self.lambda_a / 2

    @classmethod
    def from_characterization(
        cls,
        linewidth_a: float,
        linewidth_b: float,
        escape_a: float,
        escape_b: float,
        epsilon: float = 0.0,
        **kwargs,
    ) -> "CavityParams":
        """Build parameters from measured full linewidths (Hz) and escape efficiencies.

        The total decay rate is the half width at half maximum in angular
        units, ``kappa = 2*pi*linewidth/2``; the escape efficiency fixes the
        input-output mirror share ``kappa_1 = escape * kappa``.
        """
        if not (0 < escape_a < 1 and 0 < escape_b < 1):
            raise DomainError("escape efficiencies must lie strictly between 0 and 1")
        ka = np.pi * linewidth_a
        kb = np.pi * linewidth_b
        return cls(
            kappa_a1=escape_a * ka,
            kappa_a2=(1 - escape_a) * ka,
            kappa_b1=escape_b * kb,
            kappa_b2=(1 - escape_b) * kb,
            epsilon=epsilon,
            **kwargs,
        )

    def without_gawbs(self) -> "CavityParams":
        return dataclasses.replace(self, xi_a=0.0, xi_b=0.0)

    def gawbs_rates(self) -> tuple[float, float]:
        """Detuning per unit of the GAWBS noise variable, ``-2*pi*c/lambda * xi``."""
        return (
            -2 * np.pi * constants.c / self.lambda_a * self.xi_a,
            -2 * np.pi * constants.c / self.lambda_b * self.xi_b,
        )


@dataclass(frozen=True)
class DriveConfig:
    """Coherent seed and pump drives. Powers in mW, phase in radians."""

    seed_power: float
    pump_power: float
    relative_phase: float = 0.0
    p_threshold: float = 85.0

    def __post_init__(self):
        if not (self.seed_power >= 0 and self.pump_power >= 0):
            raise DomainError("drive powers must be non-negative")
        if not self.p_threshold > 0:
            raise DomainError("p_threshold must be positive")
        if not np.isfinite(self.relative_phase):
            raise DomainError("relative_phase must be finite")

    def seed_amplitude(self, params: CavityParams) -> complex:
        return complex(photon_flux_amplitude(self.seed_power, params.lambda_a))

    def pump_amplitude(self, params: CavityParams) -> complex:
        amp = photon_flux_amplitude(self.pump_power, params.lambda_b)
        return -amp * np.exp(1j * self.relative_phase)


@dataclass(frozen=True)
class SteadyState:
    """Intracavity mean fields; ``stable`` is True when the drift is damped."""

    alpha: complex
    beta: complex
    stable: bool
    residual: float = 0.0
    theta_alpha: float = field(init=False)
    theta_beta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        object.__setattr__(self, "theta_alpha", float(np.angle(self.alpha)))
        object.__setattr__(self, "theta_beta", float(np.angle(self.beta)))


@dataclass(frozen=True)
class TransferMatrix:
    """Linear map from the 9 input channels to the 4 reflected quadratures.

    Rows follow :data:`OUTPUT_QUADRATURES`, columns :data:`INPUT_CHANNELS`.
    """

    entries: np.ndarray
    omega: float

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.shape != (4, 9):
            raise DomainError(f"transfer matrix must be 4x9, got {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise DomainError("transfer matrix has non-finite entries")
        object.__setattr__(self, "entries", entries)


def photon_flux_amplitude(power_mw: float, wavelength: float) -> float:
    """sqrt(photons/s) carried by ``power_mw`` milliwatts at ``wavelength``."""
    if power_mw < 0:
        raise DomainError("power must be non-negative")
    return float(np.sqrt(power_mw * 1e-3 * wavelength / (constants.h * constants.c)))


def calibrate_epsilon(params: CavityParams, p_threshold: float) -> float:
    """Nonlinear coupling that puts the OPO threshold at ``p_threshold`` mW.

    Below threshold and without seed the intracavity pump is
    ``beta = sqrt(2 kappa_b1) beta_in / kappa_b`` and the fundamental becomes
    unstable once ``epsilon |beta| = kappa_a``.
    """
    if not p_threshold > 0:
        raise DomainError(f"p_threshold must be positive, got {p_threshold!r}")
    beta_in = photon_flux_amplitude(p_threshold, params.lambda_b)
    beta = np.sqrt(2 * params.kappa_b1) * beta_in / params.kappa_b
    return float(params.kappa_a / beta)


def _below_threshold_pump(params: CavityParams, drive: DriveConfig) -> complex:
    return np.sqrt(2 * params.kappa_b1) * drive.pump_amplitude(params) / params.kappa_b


def opo_threshold(params: CavityParams, upper: float | None = None, rtol: float = 1e-12) -> float:
    """Pump power (mW) at which the zero-seed, zero-fundamental state destabilizes.

    Found by bisection on the eigenvalues of the drift matrix; it does not use
    the closed-form threshold condition.
    """
    if params.epsilon <= 0:
        return float("inf")

    def stable_at(p_mw):
        drive = DriveConfig(0.0, p_mw)
        ss = SteadyState(0j, _below_threshold_pump(params, drive), True)
        return is_stable(params, ss)

    lo = 0.0
    hi = upper if upper is not None else 1.0
    while stable_at(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            raise SolverError("no instability found below 1e12 mW")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if stable_at(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- steady state -----------------------------------------------------------
#
# In the scaled variables x = alpha / alpha0, y = beta / beta0 with
# alpha0 = sqrt(2 kappa_a kappa_b)/epsilon and beta0 = kappa_a/epsilon the
# steady-state equations read
#     x = conj(x) y + s,    y = p - x**2,
# with s, p the scaled drives; the OPO threshold is |p| = 1.


def _scales(params: CavityParams) -> tuple[float, float]:
    eps = params.epsilon
    return np.sqrt(2 * params.kappa_a * params.kappa_b) / eps, params.kappa_a / eps


def _scaled_drives(params, drive):
    alpha0, beta0 = _scales(params)
    s = np.sqrt(2 * params.kappa_a1) * drive.seed_amplitude(params) / (params.kappa_a * alpha0)
    p = np.sqrt(2 * params.kappa_b1) * drive.pump_amplitude(params) / (params.kappa_b * beta0)
    return complex(s), complex(p)


def _residual(z, s, p):
    x = z[0] + 1j * z[1]
    y = z[2] + 1j * z[3]
    f1 = x - np.conj(x) * y - s
    f2 = y + x * x - p
    return np.array([f1.real, f1.imag, f2.real, f2.imag])


def _jacobian(z):
    xr, xi, yr, yi = z
    return np.array([
        [1 - yr, -yi, -xr, -xi],
        [-yi, 1 + yr, xi, -xr],
        [2 * xr, -2 * xi, 1.0, 0.0],
        [2 * xi, 2 * xr, 0.0, 1.0],
    ])


def _term_scale(z, s, p):
    """Magnitude of the terms of each scaled equation, for a relative test."""
    x = complex(z[0], z[1])
    y = complex(z[2], z[3])
    s1 = abs(x) + abs(x * y) + abs(s)
    s2 = abs(y) + abs(x * x) + abs(p)
    return np.array([s1, s1, s2, s2])


def _converged(z, f, s, p, tol):
    return bool(np.all(np.abs(f) <= tol * _term_scale(z, s, p)))


def _newton(z0, s, p, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER):
    """Damped Newton iteration; returns (z, residual norm, converged).

    Convergence is relative to the size of the terms in each equation, so
    very weak drives are resolved to full relative precision.
    """
    z = np.array(z0, dtype=float)
    f = _residual(z, s, p)
    norm = np.max(np.abs(f))
    for _ in range(maxiter):
        if _converged(z, f, s, p, tol):
            return z, norm, True
        try:
            step = np.linalg.solve(_jacobian(z), -f)
        except np.linalg.LinAlgError:
            return z, norm, False
        lam = 1.0
        while lam > 1e-6:
            trial = z + lam * step
            f_trial = _residual(trial, s, p)
            n_trial = np.max(np.abs(f_trial))
            if n_trial < norm or _converged(trial, f_trial, s, p, tol):
                break
            lam *= 0.5
        z, f, norm = trial, f_trial, n_trial
    return z, norm, _converged(z, f, s, p, tol)


def _continuation(s, p, steps=16):
    """Track the root from zero drive out to (s, p) along a straight ray."""
    z = np.zeros(4)
    t = 0.0
    dt = 1.0 / steps
    last = np.inf
    while t < 1.0:
        t_next = min(1.0, t + dt)
        z_next, last, ok = _newton(z, t_next * s, t_next * p)
        if ok:
            z, t = z_next, t_next
            dt = min(2 * dt, 0.25)
        else:
            dt *= 0.5
            if dt < 1e-6:
                return None, last
    return z, last


def solve_steady_state(params: CavityParams, drive: DriveConfig) -> SteadyState:
    """Classical intracavity fields for the given drive.

    Newton's method on the four real unknowns (Re/Im of alpha and beta) is
    started from the drive-continuation path, the passive-cavity solution and,
    above threshold, the zero-seed oscillation branch. The continuation root
    is returned when stable; otherwise the nearest stable root; if no root is
    stable the continuation root is returned with ``stable=False``.
    """
    alpha_in = drive.seed_amplitude(params)
    beta_in = drive.pump_amplitude(params)
    if params.epsilon == 0:
        alpha = np.sqrt(2 * params.kappa_a1) * alpha_in / params.kappa_a
        beta = np.sqrt(2 * params.kappa_b1) * beta_in / params.kappa_b
        return SteadyState(alpha, beta, True, 0.0)

    s, p = _scaled_drives(params, drive)
    roots = []
    z_path, last = _continuation(s, p)
    if z_path is not None:
        roots.append(z_path)

    guesses = [np.array([s.real, s.imag, p.real, p.imag])]
    if abs(p) > 1:
        r = np.sqrt(abs(p) - 1)
        half = np.exp(0.5j * np.angle(p))
        unit = p / abs(p)
        for sign in (1, -1):
            x0 = sign * r * half
            guesses.append(np.array([x0.real, x0.imag, unit.real, unit.imag]))
    for g in guesses:
        z, res, ok = _newton(g, s, p)
        last = min(last, res)
        if ok and all(np.max(np.abs(z - q)) > 1e-8 for q in roots):
            roots.append(z)
    if not roots:
        raise SolverError("steady-state solver did not converge", last)

    alpha0, beta0 = _scales(params)

    def to_state(z):
        return SteadyState(alpha0 * (z[0] + 1j * z[1]), beta0 * (z[2] + 1j * z[3]), True,
                           float(np.max(np.abs(_residual(z, s, p)))))

    stable = [is_stable(params, to_state(z)) for z in roots]
    ref = roots[0]
    if z_path is not None and stable[0]:
        chosen, flag = ref, True
    elif any(stable):
        cands = [z for z, st in zip(roots, stable) if st]
        chosen = min(cands, key=lambda z: np.linalg.norm(z - ref))
        flag = True
    else:
        chosen, flag = ref, False

    return dataclasses.replace(to_state(chosen), stable=flag)


# -- linearized fluctuations -----------------------------------------------


def system_matrix(params: CavityParams, ss: SteadyState, omega: float) -> np.ndarray:
    """5x5 matrix mapping intracavity fluctuations to accumulated inputs.

    Unknown and source vectors are ordered (Xa+, Xa-, Xb+, Xb-, P).
    """
    eps = params.epsilon
    abs_a, abs_b = abs(ss.alpha), abs(ss.beta)
    ta, tb = ss.theta_alpha, ss.theta_beta
    ga, gb = params.gawbs_rates()

    a_minus = params.kappa_a - 1j * omega - eps * abs_b * np.cos(tb)
    a_plus = params.kappa_a - 1j * omega + eps * abs_b * np.cos(tb)
    b = -eps * abs_b * np.sin(tb)
    c = -eps * abs_a * np.cos(ta)
    d = -eps * abs_a * np.sin(ta)
    e = params.kappa_b - 1j * omega
    f_a = 2j * abs_a * np.sin(ta) * ga
    f_b = 2j * abs_b * np.sin(tb) * gb
    g_a = 2 * abs_a * np.cos(ta) * ga
    g_b = 2 * abs_b * np.cos(tb) * gb

    return np.array([
        [a_minus, b, c, d, f_a],
        [b, a_plus, -d, c, g_a],
        [-c, d, e, 0, f_b],
        [-d, -c, 0, e, g_b],
        [0, 0, 0, 0, 1],
    ], dtype=complex)


def drift_matrix(params: CavityParams, ss: SteadyState) -> np.ndarray:
    """Real 4x4 drift of the quadrature fluctuations (minus the zero-frequency block)."""
    return -system_matrix(params, ss, 0.0)[:4, :4].real


def is_stable(params: CavityParams, ss: SteadyState) -> bool:
    return bool(np.all(np.linalg.eigvals(drift_matrix(params, ss)).real < 0))


def _injection(params: CavityParams) -> np.ndarray:
    p = np.zeros((5, 9))
    ra1, ra2 = np.sqrt(2 * params.kappa_a1), np.sqrt(2 * params.kappa_a2)
    rb1, rb2 = np.sqrt(2 * params.kappa_b1), np.sqrt(2 * params.kappa_b2)
    p[0, 0] = p[1, 1] = ra1
    p[0, 2] = p[1, 3] = ra2
    p[2, 4] = p[3, 5] = rb1
    p[2, 6] = p[3, 7] = rb2
    p[4, 8] = 1.0
    return p


def _outcoupling(params: CavityParams) -> np.ndarray:
    o = np.zeros((4, 5))
    o[0, 0] = o[1, 1] = np.sqrt(2 * params.kappa_a1)
    o[2, 2] = o[3, 3] = np.sqrt(2 * params.kappa_b1)
    return o


_SELECTOR = np.zeros((4, 9))
_SELECTOR[0, 0] = _SELECTOR[1, 1] = _SELECTOR[2, 4] = _SELECTOR[3, 5] = 1.0


def reflected_transfer(params: CavityParams, ss: SteadyState, omega: float) -> TransferMatrix:
    """Reflected-quadrature response to every input channel at sideband ``omega``."""
    m = system_matrix(params, ss, omega)
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularSystemError(f"system matrix singular at omega={omega:g}", cond)
    try:
        intracavity = np.linalg.solve(m, _injection(params))
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc), cond) from exc
    return TransferMatrix(_outcoupling(params) @ intracavity - _SELECTOR, omega)


def mean_reflected_fields(params: CavityParams, ss: SteadyState, drive: DriveConfig) -> tuple[complex, complex]:
    """Classical reflected amplitudes (sqrt(photons/s)) of fundamental and harmonic."""
    a_ref = np.sqrt(2 * params.kappa_a1) * ss.alpha - drive.seed_amplitude(params)
    b_ref = np.sqrt(2 * params.kappa_b1) * ss.beta - drive.pump_amplitude(params)
    return complex(a_ref), complex(b_ref)


def classical_gains(params: CavityParams, ss: SteadyState, drive: DriveConfig) -> dict:
    """Reflected powers (mW) and power gains relative to the respective drives."""
    a_ref, b_ref = mean_reflected_fields(params, ss, drive)
    to_mw_a = constants.h * constants.c / params.lambda_a * 1e3
    to_mw_b = constants.h * constants.c / params.lambda_b * 1e3
    pa = abs(a_ref) ** 2 * to_mw_a
    pb = abs(b_ref) ** 2 * to_mw_b
    with np.errstate(divide="ignore", invalid="ignore"):
        gain_a = pa / drive.seed_power if drive.seed_power > 0 else float("nan")
        gain_b = pb / drive.pump_power if drive.pump_power > 0 else float("nan")
    return {
        "reflected_seed_mw": pa,
        "reflected_pump_mw": pb,
        "seed_gain": gain_a,
        "pump_gain": gain_b,
    }
