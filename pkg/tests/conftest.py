import numpy as np
import pytest

from harmonic_entanglement.config import load_config


@pytest.fixture(scope="session")
def config():
    return load_config()


def random_physical_matrix(rng):
    """Aligned two-mode Gaussian state: squeezed EPR pair, local squeezing, loss and noise."""
    r = rng.uniform(0.05, 1.2)
    ch, sh = np.cosh(2 * r), np.sinh(2 * r)
    sign = rng.choice([-1.0, 1.0])
    m = np.array([
        [ch, 0, sign * sh, 0],
        [0, ch, 0, -sign * sh],
        [sign * sh, 0, ch, 0],
        [0, -sign * sh, 0, ch],
    ])
    s = np.exp(np.array([1, -1, 1, -1]) * np.repeat(rng.uniform(-0.8, 0.8, 2), 2))
    m = s[:, None] * m * s[None, :]
    e = np.repeat(rng.uniform(0.3, 1.0, 2), 2)
    m = np.sqrt(np.outer(e, e)) * m + np.diag(1 - e)
    # added noise on individual quadratures keeps the state physical
    m = m + np.diag(rng.uniform(0, 0.3, 4))
    return m


def grid_oracle(m, r_max=1.0, n=2001):
    """Brute-force minimum of the inseparability over (r_a, r_b) with k+ = k-.

    The constraint curve is located by sign changes of k+^2 - k-^2 between
    neighbouring grid nodes along both axes and linear interpolation.
    Returns 1.0 when no crossing exists.
    """
    r = np.linspace(-r_max, r_max, n)
    ra, rb = np.meshgrid(r, r, indexing="ij")
    a1, a2, b1, b2 = np.diag(m)
    cp, cm = abs(m[0, 2]), abs(m[1, 3])

    def pieces(ra, rb):
        ap, am = a1 * np.exp(2 * ra), a2 * np.exp(-2 * ra)
        bp, bm = b1 * np.exp(2 * rb), b2 * np.exp(-2 * rb)
        with np.errstate(all="ignore"):
            kp2 = (bp - 1) / (ap - 1)
            km2 = (bm - 1) / (am - 1)
        return ap, am, bp, bm, kp2, km2

    def insep(ra, rb):
        ap, am, bp, bm, kp2, km2 = pieces(ra, rb)
        with np.errstate(all="ignore"):
            k = np.sqrt(np.where(np.abs(ap - 1) >= np.abs(am - 1), kp2, km2))
            cross = cp * np.exp(ra + rb) + cm * np.exp(-ra - rb)
            v = (k * (ap + am) + (bp + bm) / k - 2 * cross) / (2 * k + 2 / k)
        return v

    # k+^2 - k-^2 without divisions, so poles give no spurious sign flips
    ap, am, bp, bm, _, _ = pieces(ra, rb)
    g = (bp - 1) * (am - 1) - (bm - 1) * (ap - 1)
    best = np.inf
    for axis in (0, 1):
        g0 = np.take(g, range(n - 1), axis=axis)
        g1 = np.take(g, range(1, n), axis=axis)
        hit = (np.sign(g0) != np.sign(g1)) | (g0 == 0)
        if not np.any(hit):
            continue
        t = np.where(hit, g0 / (g0 - g1 + (g0 == g1)), 0.0)
        ra0, rb0 = np.take(ra, range(n - 1), axis=axis), np.take(rb, range(n - 1), axis=axis)
        ra1, rb1 = np.take(ra, range(1, n), axis=axis), np.take(rb, range(1, n), axis=axis)
        xr = ra0 + t * (ra1 - ra0)
        yr = rb0 + t * (rb1 - rb0)
        xr, yr = xr[hit], yr[hit]
        _, _, _, _, kp2, km2 = pieces(xr, yr)
        ok = (kp2 > 0) & (km2 > 0)
        if np.any(ok):
            v = insep(xr[ok], yr[ok])
            v = v[np.isfinite(v)]
            if v.size:
                best = min(best, float(v.min()))
    return 1.0 if not np.isfinite(best) else best


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
