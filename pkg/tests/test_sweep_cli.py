import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from harmonic_entanglement import cli, sweep
from harmonic_entanglement.config import load_config
from harmonic_entanglement.errors import DomainError
from harmonic_entanglement.gaussian import CorrelationMatrix
from harmonic_entanglement.opa import DriveConfig, SteadyState, is_stable
from harmonic_entanglement.reference import MEASURED_CORRELATION
from harmonic_entanglement.sweep import (
    SweepSpec,
    angle_parameterization,
    entangled_bands,
    run_angle_sweep,
    run_map,
    run_point,
    write_table,
)


def small(config, **kw):
    return dataclasses.replace(config.sweep, **kw)


# -- angle convention -------------------------------------------------------

def test_angle_endpoints():
    d = angle_parameterization(0.0, 65.0)
    assert d.seed_power == 65.0 and d.pump_power == 0.0
    d = angle_parameterization(math.pi / 2, 65.0)
    assert d.seed_power == pytest.approx(0.0, abs=1e-12) and d.pump_power == 65.0
    assert d.relative_phase == math.pi
    assert angle_parameterization(-0.1, 65.0).relative_phase == 0.0
    with pytest.raises(DomainError):
        angle_parameterization(0.1, 0.0)


@given(phi=st.floats(-math.pi / 2, math.pi / 2), total=st.floats(1e-3, 500))
def test_angle_conserves_total_power(phi, total):
    d = angle_parameterization(phi, total)
    assert d.seed_power + d.pump_power == pytest.approx(total, rel=1e-12)


@pytest.mark.parametrize("kw", [
    dict(mode="plot"),
    dict(total_power=0.0),
    dict(grid=1),
    dict(angle_range=(0.2, -0.2)),
    dict(workers=0),
])
def test_sweep_spec_validation(kw):
    with pytest.raises(DomainError):
        SweepSpec(**kw)


def test_degenerate_range_allows_single_point():
    assert list(SweepSpec(angle_range=(0.1, 0.1), grid=1).angles()) == [0.1]


# -- point reports ----------------------------------------------------------

def test_best_point_is_amplitude_squeezed_and_entangled(config):
    rep = run_point(config, config.drive)
    m = rep.correlation.m
    assert rep.steady_state.stable
    assert m[0, 0] < 1 and m[2, 2] < 1
    assert rep.inseparability < 1
    # uncertainty product of the fundamental well above the bound
    assert m[0, 0] * m[1, 1] > 1
    assert set(rep.gains) == {"reflected_seed_mw", "reflected_pump_mw", "seed_gain", "pump_gain"}


def test_no_nonlinearity_is_separable(config):
    cfg = dataclasses.replace(config, cavity=dataclasses.replace(config.cavity, epsilon=0.0))
    assert run_point(cfg, config.drive, gawbs=False).inseparability == 1.0
    # common-mode GAWBS phase noise adds only classical correlations
    assert run_point(cfg, config.drive, gawbs=True).inseparability >= 1.0


def test_point_deterministic(config):
    a = run_point(config, config.drive).as_dict()
    b = run_point(config, config.drive).as_dict()
    assert json.dumps(a) == json.dumps(b)


# -- angle sweep ------------------------------------------------------------

@pytest.fixture(scope="module")
def both_curves(config):
    spec = small(config, grid=81, compare_gawbs=True)
    rows = run_angle_sweep(config, spec)
    phis = spec.angles()
    on = np.array([r["I"] for r in rows if r["gawbs"] == 1])
    off = np.array([r["I"] for r in rows if r["gawbs"] == 0])
    return phis, on, off


def test_gawbs_free_curve_contiguous_and_superset(both_curves):
    phis, on, off = both_curves
    bands = entangled_bands(phis, off)
    assert len(bands) == 1 and bands[0][0] < 0 < bands[0][1]
    assert np.all(off[on < 1] < 1)


def test_gawbs_band_pattern(both_curves):
    phis, on, _ = both_curves
    bands = entangled_bands(phis, on)
    assert len(bands) == 2
    (a0, a1), (b0, b1) = bands
    assert a0 < 0 < a1 < b0 < b1
    for got, want in zip((a0, a1, b0, b1), (-0.41, 0.15, 0.41, 0.47)):
        assert got == pytest.approx(want, abs=0.05 + 1 / 80)


def test_sweep_matches_point_exactly(config):
    spec = small(config, grid=5)
    rows = run_angle_sweep(config, spec)
    for row, phi in zip(rows, spec.angles()):
        rep = run_point(config, angle_parameterization(phi * math.pi, spec.total_power))
        assert row["I"] == pytest.approx(rep.inseparability, abs=1e-12)
        assert row["C_aa_pp"] == pytest.approx(rep.correlation.m[0, 0], abs=1e-12)


def test_single_angle_reduces_to_point(config):
    spec = small(config, angle_range=(-0.1, -0.1), grid=1)
    (row,) = run_angle_sweep(config, spec)
    rep = run_point(config, angle_parameterization(-0.1 * math.pi, spec.total_power))
    assert row["I"] == rep.inseparability


def test_failed_point_becomes_gap_row(config, monkeypatch):
    real = sweep.run_point

    def flaky(cfg, drive, gawbs=True, steady_state=None):
        if drive.pump_power > 60:
            raise RuntimeError("boom")
        return real(cfg, drive, gawbs, steady_state)

    monkeypatch.setattr(sweep, "run_point", flaky)
    rows = run_angle_sweep(config, small(config, grid=5))
    status = [r["status"] for r in rows]
    assert status[0].startswith("failed") and status[-1].startswith("failed")
    assert status[1:-1] == ["ok"] * 3
    assert math.isnan(rows[0]["I"])
    text = write_table(None, rows, sweep.ANGLE_COLUMNS, {"x": 1})
    assert text.endswith("# failures: 2/5\n")


def test_parallel_rows_match_serial(config):
    serial = run_angle_sweep(config, small(config, grid=9, workers=1))
    parallel = run_angle_sweep(config, small(config, grid=9, workers=3))
    assert serial == parallel


# -- map --------------------------------------------------------------------

def test_map_zero_corner_and_circle(config):
    p_th = config.drive.p_threshold
    r = math.sqrt(65.0 / p_th)
    phis = np.array([-0.3, 0.0, 0.1])
    rows = run_map(config, small(config),
                   seed_axis=[0.0] + list(r * np.cos(phis * math.pi)),
                   pump_axis=[0.0] + list(r * np.sin(phis * math.pi)))
    corner = rows[0]
    assert corner["I"] == 1.0
    width = len(phis) + 1
    sweep_rows = run_angle_sweep(config, small(config, angle_range=(-0.3, 0.1), grid=5))
    by_phi = {round(row["phi_over_pi"], 9): row["I"] for row in sweep_rows}
    for i, phi in enumerate(phis, start=1):
        cell = rows[i * width + i]
        assert cell["I"] == pytest.approx(by_phi[round(phi, 9)], abs=1e-9)


def test_map_beyond_threshold_is_finite_and_flagged(config):
    pump_axis = np.linspace(-1.3, 1.3, 27)
    rows = run_map(config, small(config), seed_axis=[0.0, 0.2], pump_axis=pump_axis)
    assert all(np.isfinite(r["I"]) for r in rows)
    # independent bisection of the zero-fundamental state's stability
    p = config.cavity
    lo, hi = 0.0, 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        beta = np.sqrt(2 * p.kappa_b1) * DriveConfig(0, mid ** 2 * 85).pump_amplitude(p) / p.kappa_b
        lo, hi = (mid, hi) if is_stable(p, SteadyState(0, beta, True)) else (lo, mid)
    assert hi == pytest.approx(1.0, abs=1e-9)
    for r in rows:
        if abs(abs(r["pump_amp"]) - hi) < 1e-6:
            continue  # on the boundary itself
        above = abs(r["pump_amp"]) > hi
        assert (r["regime"] == "above_threshold") == above
        if r["flag"] != "ok":
            assert r["I"] == 1.0


def test_map_unstable_point_uses_sentinel(config, monkeypatch):
    real = sweep.run_point

    def unstable(cfg, drive, gawbs=True, steady_state=None):
        rep = real(cfg, drive, gawbs, steady_state)
        return dataclasses.replace(rep, steady_state=dataclasses.replace(rep.steady_state, stable=False))

    monkeypatch.setattr(sweep, "run_point", unstable)
    (row,) = run_map(config, small(config), seed_axis=[1.0], pump_axis=[-0.3])
    assert row["flag"] == "unstable" and row["I"] == 1.0 and row["I_model"] < 1


# -- output and CLI ---------------------------------------------------------

def test_csv_header_and_repr_floats(config, tmp_path):
    rows = run_angle_sweep(config, small(config, grid=3))
    path = tmp_path / "a.csv"
    write_table(path, rows, sweep.ANGLE_COLUMNS, sweep.sweep_metadata(config, "angle"))
    lines = path.read_text().splitlines()
    meta = [line for line in lines if line.startswith("#")]
    assert any(line.startswith("# config_sha256: ") for line in meta)
    assert any(line.startswith("# xi_a: ") for line in meta)
    assert any(line.startswith("# omega_rad_s: ") for line in meta)
    header = next(line for line in lines if not line.startswith("#"))
    assert header.split(",") == list(sweep.ANGLE_COLUMNS)
    data = [line.split(",") for line in lines if not line.startswith("#")][1:]
    assert float(data[1][header.split(",").index("I")]) == rows[1]["I"]


def run_cli(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_angle_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["angle", "--grid", "7", "--out", str(a)]) == 0
    assert cli.main(["angle", "--grid", "7", "--workers", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_cli_point_json(capsys):
    code, out, _ = run_cli(["point", "--seed-mw", "81", "--pump-mw", "9", "--phase", "0"], capsys)
    assert code == 0
    d = json.loads(out)
    assert d["stable"] and d["inseparability"] < 1
    code, out, _ = run_cli(["point", "--no-gawbs"], capsys)
    assert json.loads(out)["inseparability"] < d["inseparability"]


def test_cli_map(tmp_path):
    out = tmp_path / "m.csv"
    assert cli.main(["map", "--grid", "3", "--out", str(out)]) == 0
    rows = [line for line in out.read_text().splitlines() if not line.startswith("#")]
    assert len(rows) == 1 + 9


def test_cli_synth_estimate(tmp_path, capsys):
    src = tmp_path / "src.txt"
    CorrelationMatrix(MEASURED_CORRELATION).save(src)
    d = tmp_path / "runs"
    code, _, err = run_cli(["synth", "--matrix", str(src), "--rng-seed", "4", "--samples", "100000",
                            "--out", str(d)], capsys)
    assert code == 0 and "wrote 4 runs" in err
    code, out, _ = run_cli(["estimate", str(d)], capsys)
    assert code == 0
    est = CorrelationMatrix.from_text(out)
    expect = MEASURED_CORRELATION.copy()
    expect[0, 1] = expect[1, 0] = expect[2, 3] = expect[3, 2] = 0.0
    assert np.abs(est.m - expect).max() < 0.04
    assert "# inseparability:" in out


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[drive]\nseed_mw = lots\n")
    code, _, err = run_cli(["point", "--config", str(bad)], capsys)
    assert code != 0 and "error" in err
    code, _, err = run_cli(["point", "--seed-mw", "-3"], capsys)
    assert code != 0
    code, _, err = run_cli(["estimate", str(tmp_path / "nothing")], capsys)
    assert code != 0
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])


# -- configuration ------------------------------------------------------------

def test_default_config_values(config):
    c = config.cavity
    assert c.kappa_a == pytest.approx(math.pi * 18e6)
    assert c.kappa_b == pytest.approx(math.pi * 60e6)
    assert c.kappa_a1 / c.kappa_a == pytest.approx(0.92)
    assert c.kappa_b1 / c.kappa_b == pytest.approx(0.86)
    assert (c.eta_a, c.eta_b) == (0.87, 0.88)
    assert c.omega == pytest.approx(2 * math.pi * 7.8e6)
    assert c.xi_a > 0 and c.xi_b > 0
    assert config.drive.p_threshold == 85.0


def test_config_overlay_and_digest(tmp_path, config):
    path = tmp_path / "c.ini"
    path.write_text("[gawbs]\nxi_a = 0\nxi_b = 0\n")
    cfg = load_config(path)
    assert cfg.cavity.xi_a == 0 and cfg.cavity.kappa_a == config.cavity.kappa_a
    assert cfg.digest() != config.digest()
    assert load_config().digest() == config.digest()
