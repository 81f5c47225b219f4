"""Scenario generator checks: distance law, shadowing moments, determinism.

The statistical oracles are worked out independently of the generator: the
linear-domain mean of 10^(X/10) for X ~ N(0, sigma^2) is exp((sigma*ln10/10)^2/2),
and the slope of E[ln |h|^2] against ln d is fixed by the 37.6 dB/decade law.
"""

import io

import numpy as np
import numpy.testing as npt
import pytest

from cran_ee.channel import (
    ScenarioError,
    ScenarioSpec,
    export_realizations,
    generate,
    import_realizations,
    pathloss_db,
    ru_layout,
)
from cran_ee.model import NetworkConfig


def small_config(num_rus=1, num_users=1, antennas=1, cell_radius=1000.0):
    return NetworkConfig(
        num_rus=num_rus, num_users=num_users, antennas_per_ru=antennas,
        bandwidth=10e6, noise_psd=10 ** (-174.0 / 10.0) * 1e-3, pa_efficiency=0.35,
        p_cir_per_link=2.0, p_ru=56.0, p_user=0.1, power_budget_per_ru=10.0,
        fronthaul_capacity_per_ru=50e6, cell_radius=cell_radius,
    )


def test_pathloss_reference_point():
    # 1 km must come out at exactly the 128.1 dB intercept
    spec = ScenarioSpec(rng_seed=0)
    assert pathloss_db(spec, np.array([1000.0]))[0] == pytest.approx(128.1, abs=1e-12)
    # and a decade costs 37.6 dB
    assert (pathloss_db(spec, np.array([10000.0]))[0]
            - pathloss_db(spec, np.array([1000.0]))[0]) == pytest.approx(37.6, abs=1e-12)


def test_pathloss_clamps_to_min_distance():
    spec = ScenarioSpec(rng_seed=0, min_distance=10.0)
    at_zero = pathloss_db(spec, np.array([0.0]))[0]
    at_min = pathloss_db(spec, np.array([10.0]))[0]
    assert at_zero == at_min
    assert np.isfinite(at_zero)


def test_ru_layout_symmetric_on_half_radius_circle():
    cfg = small_config(num_rus=4, cell_radius=750.0)
    pos = ru_layout(cfg)
    npt.assert_allclose(np.linalg.norm(pos, axis=1), 375.0, rtol=1e-12)
    # evenly spaced: consecutive angle gaps all equal
    angles = np.sort(np.arctan2(pos[:, 1], pos[:, 0]))
    gaps = np.diff(angles)
    npt.assert_allclose(gaps, np.pi / 2, rtol=1e-12)


def test_generate_deterministic_and_index_sensitive():
    cfg = small_config(num_rus=2, num_users=3, antennas=2)
    spec = ScenarioSpec(rng_seed=1234, num_realizations=5)
    a = generate(spec, cfg, 2)
    b = generate(spec, cfg, 2)
    npt.assert_array_equal(a.rows, b.rows)
    npt.assert_array_equal(a.user_positions, b.user_positions)
    c = generate(spec, cfg, 3)
    assert not np.array_equal(a.rows, c.rows)
    # different root seed changes the draw too
    d = generate(ScenarioSpec(rng_seed=1235, num_realizations=5), cfg, 2)
    assert not np.array_equal(a.rows, d.rows)


def test_generate_index_bounds_checked():
    cfg = small_config()
    spec = ScenarioSpec(rng_seed=0, num_realizations=3)
    with pytest.raises(ScenarioError):
        generate(spec, cfg, 3)
    with pytest.raises(ScenarioError):
        generate(spec, cfg, -1)


def test_random_users_stay_in_cell_and_away_from_rus():
    cfg = small_config(num_rus=3, num_users=6, antennas=1, cell_radius=400.0)
    spec = ScenarioSpec(rng_seed=7, num_realizations=50)
    rus = ru_layout(cfg)
    for idx in range(50):
        real = generate(spec, cfg, idx)
        radii = np.linalg.norm(real.user_positions, axis=1)
        assert np.all(radii <= cfg.cell_radius + 1e-9)
        dist = np.linalg.norm(real.user_positions[:, None, :] - rus[None, :, :], axis=2)
        assert dist.min() >= spec.min_distance


def test_mean_power_matches_lognormal_moment():
    # one RU, eight users pinned 100 m away: mean |h|^2 should hit
    # 10^(-PL/10) * exp((sigma ln10 / 10)^2 / 2) within 5% over ~1e4 draws
    distance = 100.0
    cfg = small_config(num_rus=1, num_users=8, antennas=2, cell_radius=1000.0)
    ru = ru_layout(cfg)[0]
    angles = 2 * np.pi * np.arange(8) / 8
    users = ru + distance * np.column_stack([np.cos(angles), np.sin(angles)])
    spec = ScenarioSpec(rng_seed=31415, num_realizations=1250, placement="fixed",
                        fixed_user_positions=users)
    acc = []
    for idx in range(1250):
        acc.append(np.abs(generate(spec, cfg, idx).rows) ** 2)
    sample_mean = float(np.mean(acc))
    pl_linear = 10.0 ** (-pathloss_db(spec, np.array([distance]))[0] / 10.0)
    c = np.log(10.0) / 10.0
    shadow_mean = np.exp((c * spec.shadowing_std_db) ** 2 / 2.0)
    assert sample_mean == pytest.approx(pl_linear * shadow_mean, rel=0.05)


def test_log_power_slope_tracks_distance_law():
    # regression of mean ln|h|^2 on ln d must recover -3.76 within 5%
    distances = np.array([50.0, 100.0, 200.0, 400.0])
    cfg = small_config(num_rus=1, num_users=4, antennas=1, cell_radius=1000.0)
    ru = ru_layout(cfg)[0]
    users = ru + np.column_stack([distances, np.zeros(4)])
    spec = ScenarioSpec(rng_seed=99, num_realizations=4000, placement="fixed",
                        fixed_user_positions=users)
    logs = np.zeros((4000, 4))
    for idx in range(4000):
        logs[idx] = np.log(np.abs(generate(spec, cfg, idx).rows[:, 0]) ** 2)
    mean_log = logs.mean(axis=0)
    slope = np.polyfit(np.log(distances), mean_log, 1)[0]
    assert slope == pytest.approx(-3.76, rel=0.05)


def test_consecutive_realizations_uncorrelated():
    cfg = small_config(num_rus=1, num_users=1, antennas=1)
    spec = ScenarioSpec(rng_seed=5, num_realizations=1001)
    vals = np.array([np.log(np.abs(generate(spec, cfg, i).rows[0, 0]) ** 2)
                     for i in range(1001)])
    lag1 = np.corrcoef(vals[:-1], vals[1:])[0, 1]
    assert abs(lag1) < 0.05


def test_fixed_positions_validated():
    cfg = small_config(num_rus=1, num_users=2, antennas=1, cell_radius=100.0)
    with pytest.raises(ScenarioError):
        ScenarioSpec(rng_seed=0, placement="fixed")  # positions missing
    with pytest.raises(ScenarioError):
        ScenarioSpec(rng_seed=0, placement="somewhere")
    outside = ScenarioSpec(rng_seed=0, placement="fixed",
                           fixed_user_positions=np.array([[500.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ScenarioError, match="outside"):
        generate(outside, cfg, 0)
    wrong_count = ScenarioSpec(rng_seed=0, placement="fixed",
                               fixed_user_positions=np.array([[1.0, 0.0]]))
    with pytest.raises(ScenarioError, match="users"):
        generate(wrong_count, cfg, 0)


def test_export_import_roundtrip_exact():
    cfg = small_config(num_rus=2, num_users=3, antennas=2)
    spec = ScenarioSpec(rng_seed=42, num_realizations=3)
    originals = [generate(spec, cfg, i) for i in range(3)]
    buf = io.StringIO()
    export_realizations(originals, buf)
    buf.seek(0)
    loaded = import_realizations(buf)
    assert len(loaded) == 3
    for a, b in zip(originals, loaded):
        npt.assert_array_equal(a.rows, b.rows)
        npt.assert_array_equal(a.ru_positions, b.ru_positions)
        npt.assert_array_equal(a.user_positions, b.user_positions)
        assert a.seed == b.seed


def test_import_rejects_malformed_stream():
    with pytest.raises(ScenarioError, match="unknown record"):
        import_realizations(io.StringIO("bogus 1 2 3\n"))
    with pytest.raises(ScenarioError, match="truncated"):
        import_realizations(io.StringIO("realization seed=1 users=1 dim=1 rus=1\n"))
