"""Bipartite Gaussian analysis of the reflected fields.

Quadratures are ordered (Xa+, Xa-, Xb+, Xb-) and normalized so that the
vacuum has unit variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError
from .opa import TransferMatrix

__all__ = [
    "QUADRATURE_LABELS",
    "SYMPLECTIC_FORM",
    "CorrelationMatrix",
    "RawInseparability",
    "InseparabilityResult",
    "Ellipse",
    "correlation_from_transfer",
    "apply_detection_efficiency",
    "align_quadratures",
    "local_scaling",
    "inseparability_raw",
    "standard_form",
    "ellipse_contour",
]

QUADRATURE_LABELS = ("Xa+", "Xa-", "Xb+", "Xb-")
_INDEX = {"a+": 0, "a-": 1, "b+": 2, "b-": 3}

_J1 = np.array([[0.0, 1.0], [-1.0, 0.0]])
SYMPLECTIC_FORM = np.block([[_J1, np.zeros((2, 2))], [np.zeros((2, 2)), _J1]])


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Real symmetric 4x4 matrix of symmetrized quadrature correlations."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (4, 4):
            raise DomainError(f"correlation matrix must be 4x4, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DomainError("correlation matrix has non-finite entries")
        if np.max(np.abs(m - m.T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
            raise DomainError("correlation matrix is not symmetric")
        if np.any(np.diag(m) <= 0):
            raise DomainError("correlation matrix diagonal must be positive")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def __array__(self, dtype=None, copy=None):
        return self.m if dtype is None else self.m.astype(dtype)

    def __getitem__(self, idx):
        return self.m[idx]

    def uncertainty_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``m + iJ``; all are non-negative for a physical state."""
        return np.linalg.eigvalsh(self.m + 1j * SYMPLECTIC_FORM)

    def is_physical(self, tol: float = 1e-9) -> bool:
        return bool(self.uncertainty_eigenvalues().min() >= -tol)

    def to_text(self) -> str:
        """Interchange format: one header line, then four rows of 17 significant digits."""
        lines = ["# quadratures: " + " ".join(QUADRATURE_LABELS)]
        for row in self.m:
            lines.append(" ".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CorrelationMatrix":
        rows = [line.split() for line in text.splitlines()
                if line.strip() and not line.lstrip().startswith("#")]
        try:
            m = np.array([[float(v) for v in row] for row in rows])
        except ValueError as exc:
            raise DomainError(f"malformed correlation matrix: {exc}") from exc
        return cls(m)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "CorrelationMatrix":
        with open(path) as fh:
            return cls.from_text(fh.read())


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, CorrelationMatrix):
        return m.m
    return CorrelationMatrix(m).m


class RawInseparability(NamedTuple):
    """Direct evaluation of the criterion; ``value`` is None when not evaluable."""

    value: float | None
    k_plus: float
    k_minus: float


@dataclass(frozen=True, eq=False)
class InseparabilityResult:
    value: float
    k: float
    r_a: float
    r_b: float
    standard_form: CorrelationMatrix
    evaluable: bool = True
    diagnostic: str = ""

    @property
    def entangled(self) -> bool:
        return self.evaluable and self.value < 1


class Ellipse(NamedTuple):
    semi_axes: tuple[float, float]
    orientation: float


def correlation_from_transfer(t: TransferMatrix) -> CorrelationMatrix:
    """Correlations of the reflected fields for unit-variance, uncorrelated inputs."""
    entries = t.entries
    return CorrelationMatrix((entries @ entries.conj().T).real)


def apply_detection_efficiency(m, eta_a: float, eta_b: float) -> CorrelationMatrix:
    """Mix each color with vacuum on a beam splitter of transmission ``eta``."""
    for eta in (eta_a, eta_b):
        if not 0.0 <= eta <= 1.0:
            raise DomainError(f"detection efficiency must lie in [0, 1], got {eta!r}")
    m = _as_matrix(m)
    e = np.array([eta_a, eta_a, eta_b, eta_b])
    return CorrelationMatrix(np.sqrt(np.outer(e, e)) * m + np.diag(1 - e))


def _rotation_angle(block: np.ndarray) -> float:
    p, q, r = block[0, 0], block[0, 1], block[1, 1]
    if q == 0:
        return 0.0
    if p == r:
        return np.copysign(np.pi / 4, q)
    return 0.5 * np.arctan(2 * q / (p - r))


def align_quadratures(m) -> CorrelationMatrix:
    """Rotate each mode so its single-color block is diagonal.

    This mirrors locking each homodyne detector to the max/min noise angles;
    the smallest rotation (|angle| <= pi/4) is used, so amplitude stays
    amplitude. Single-color cross-quadrature entries come out exactly zero.
    """
    m = _as_matrix(m)
    rot = np.zeros((4, 4))
    for i in (0, 2):
        th = _rotation_angle(m[i:i + 2, i:i + 2])
        c, s = np.cos(th), np.sin(th)
        rot[i:i + 2, i:i + 2] = [[c, s], [-s, c]]
    out = rot @ m @ rot.T
    out[0, 1] = out[1, 0] = out[2, 3] = out[3, 2] = 0.0
    return CorrelationMatrix(out)


def local_scaling(m, r_a: float, r_b: float) -> CorrelationMatrix:
    """Apply local squeezing Xa+/- -> exp(+/-r_a) Xa+/-, likewise for mode b."""
    m = _as_matrix(m)
    s = np.exp(np.array([r_a, -r_a, r_b, -r_b]))
    return CorrelationMatrix(s[:, None] * m * s[None, :])


def _k_squared(caa, cbb):
    da, db = caa - 1, cbb - 1
    if da == 0:
        return float("nan")
    return db / da


def inseparability_raw(m) -> RawInseparability:
    """Evaluate the inseparability as written, with k taken from the amplitude pair.

    ``value`` is None when either gain ratio is undefined (0/0 or a sign
    mismatch between the two modes' deviations from vacuum).
    """
    m = _as_matrix(m)
    kp2 = _k_squared(m[0, 0], m[2, 2])
    km2 = _k_squared(m[1, 1], m[3, 3])
    k_plus = np.sqrt(kp2) if kp2 > 0 else float("nan")
    k_minus = np.sqrt(km2) if km2 > 0 else float("nan")
    if not (np.isfinite(k_plus) and np.isfinite(k_minus)):
        return RawInseparability(None, k_plus, k_minus)
    k = k_plus
    ci_plus = k * m[0, 0] + m[2, 2] / k - 2 * abs(m[0, 2])
    ci_minus = k * m[1, 1] + m[3, 3] / k - 2 * abs(m[1, 3])
    return RawInseparability(float((ci_plus + ci_minus) / (2 * k + 2 / k)), k_plus, k_minus)


# -- standard form ----------------------------------------------------------
#
# Along the one-parameter family (r_a, r_b) with k+ = k-, u = exp(2 r_b)
# solves P*B+*u**2 + (Q - P)*u - Q*B- = 0, where P = A-' - 1 and Q = A+' - 1
# are the scaled mode-a deviations from vacuum. Eliminating r_b this way
# leaves a 1-D minimization over r_a.


def _constrained_branches(A, B, c, ra):
    """Return [(I, r_b, k), ...] for both roots of the constraint at each r_a."""
    ra = np.asarray(ra, dtype=float)
    ap = A[0] * np.exp(2 * ra)
    am = A[1] * np.exp(-2 * ra)
    P, Q = am - 1, ap - 1
    qa, qb, qc = B[0] * P, Q - P, -B[1] * Q
    out = []
    with np.errstate(all="ignore"):
        disc = qb * qb - 4 * qa * qc
        root = np.sqrt(disc)
        q = -0.5 * (qb + np.where(qb >= 0, 1.0, -1.0) * root)
        for u in (q / qa, qc / q):
            rb = 0.5 * np.log(u)
            bp, bm = B[0] * u, B[1] / u
            k2 = np.where(np.abs(Q) >= np.abs(P), (bp - 1) / Q, (bm - 1) / P)
            k = np.sqrt(k2)
            cross = c[0] * np.exp(ra + rb) + c[1] * np.exp(-ra - rb)
            val = (k * (ap + am) + (bp + bm) / k - 2 * cross) / (2 * k + 2 / k)
            ok = (disc >= 0) & np.isfinite(u) & (u > 0) & (k2 > 0) & np.isfinite(val)
            out.append((np.where(ok, val, np.inf), rb, k))
    return out


def _reduced(A, B, c, ra):
    """min over constraint roots at each r_a; returns (I, r_b, k)."""
    branches = _constrained_branches(A, B, c, ra)
    vals = np.stack([b[0] for b in branches])
    pick = np.argmin(vals, axis=0)
    take = lambda j: np.choose(pick, [b[j] for b in branches])  # noqa: E731
    return take(0), take(1), take(2)


def _separable(m: np.ndarray, why: str) -> InseparabilityResult:
    return InseparabilityResult(1.0, float("nan"), 0.0, 0.0, CorrelationMatrix(m), False, why)


def standard_form(m, r_max: float = 4.0, n_scan: int = 1601) -> InseparabilityResult:
    """Minimize the inseparability over local squeezings subject to k+ = k-.

    A coarse scan over ``r_a`` in ``[-r_max, r_max]`` locates the best basin,
    which is then refined by golden-section search; ``r_b`` follows from the
    constraint in closed form. States with no feasible point are reported as
    separable with ``value = 1``.
    """
    m = _as_matrix(m)
    A = np.array([m[0, 0], m[1, 1]])
    B = np.array([m[2, 2], m[3, 3]])
    c = np.abs(np.array([m[0, 2], m[1, 3]]))
    if not np.any(c > 0):
        return _separable(m, "no inter-mode correlations")

    grid = np.linspace(-r_max, r_max, n_scan)
    vals, _, _ = _reduced(A, B, c, grid)
    if not np.any(np.isfinite(vals)):
        grid = np.linspace(-r_max, r_max, 10 * n_scan + 1)
        vals, _, _ = _reduced(A, B, c, grid)
        if not np.any(np.isfinite(vals)):
            return _separable(m, "no local squeezing equalizes k+ and k-")

    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]

    def objective(x):
        return float(_reduced(A, B, c, np.array([x]))[0][0])

    best_x, best_v = grid[i], vals[i]
    try:
        if 0 < i < len(grid) - 1:
            res = minimize_scalar(objective, bracket=(lo, grid[i], hi), method="golden",
                                  tol=1e-10)
        else:
            raise ValueError("minimum on scan boundary")
    except ValueError:
        res = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
    if np.isfinite(res.fun) and res.fun <= best_v and lo <= res.x <= hi:
        best_x, best_v = float(res.x), float(res.fun)

    _, rb, k = _reduced(A, B, c, np.array([best_x]))
    r_b = float(rb[0])
    return InseparabilityResult(
        value=float(best_v),
        k=float(k[0]),
        r_a=float(best_x),
        r_b=r_b,
        standard_form=local_scaling(m, best_x, r_b),
    )


def _pair_indices(pair) -> tuple[int, int]:
    if isinstance(pair, str) and pair in ("++", "--", "+-", "-+"):
        return _INDEX["a" + pair[0]], _INDEX["b" + pair[1]]
    try:
        return _INDEX[pair[0]], _INDEX[pair[1]]
    except (KeyError, TypeError, IndexError):
        raise DomainError(f"unknown quadrature pair {pair!r}") from None


def ellipse_contour(m, pair="++") -> Ellipse:
    """Standard-deviation ellipse of a two-quadrature marginal.

    ``pair`` is either a sign string such as ``"++"`` (Xa+ vs Xb+) or two
    labels from ``{"a+", "a-", "b+", "b-"}``. Semi-axes are returned major
    first; the orientation is the angle of the major axis in (-pi/2, pi/2].
    A round marginal reports orientation 0.
    """
    m = _as_matrix(m)
    i, j = _pair_indices(pair)
    sub = m[np.ix_([i, j], [i, j])]
    w, v = np.linalg.eigh(sub)
    if w[0] <= 0:
        raise DomainError("selected marginal is not positive definite")
    if np.isclose(w[0], w[1], rtol=1e-12, atol=0):
        return Ellipse((float(np.sqrt(w[1])), float(np.sqrt(w[0]))), 0.0)
    major = v[:, 1]
    theta = np.arctan2(major[1], major[0])
    if theta <= -np.pi / 2:
        theta += np.pi
    elif theta > np.pi / 2:
        theta -= np.pi
    return Ellipse((float(np.sqrt(w[1])), float(np.sqrt(w[0]))), float(theta))
