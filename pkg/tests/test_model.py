"""Closed-form metric checks for the network model.

The rate/fronthaul/power formulas are frozen against values computed two
independent ways: tiny scalar cases worked out by hand, and a Monte Carlo
estimate straight from the sampled signal chain.
"""

import numpy as np
import numpy.testing as npt
import pytest

from cran_ee.model import (
    ChannelRealization,
    DimensionMismatchError,
    NetworkConfig,
    NotRankOneError,
    SingularCovarianceError,
    SolutionCandidate,
    block_trace,
    check_feasibility,
    energy_efficiency,
    extract_rank1_vectors,
    fronthaul_usage,
    power_breakdown,
    rank1_ratio,
    simulate_samples,
    user_rate,
    user_rates,
)


def tiny_config(num_rus=2, num_users=2, antennas=1, bandwidth=1.0, noise_psd=1.0):
    """Unit-bandwidth, unit-noise scenario so rates reduce to bare logs."""
    return NetworkConfig(
        num_rus=num_rus, num_users=num_users, antennas_per_ru=antennas,
        bandwidth=bandwidth, noise_psd=noise_psd, pa_efficiency=0.5,
        p_cir_per_link=1.0, p_ru=5.0, p_user=0.25,
        power_budget_per_ru=10.0, fronthaul_capacity_per_ru=100.0,
        cell_radius=100.0,
    )


def identity_channel(cfg, seed=0):
    k, n = cfg.num_users, cfg.dim
    rows = np.zeros((k, n), dtype=complex)
    for i in range(k):
        rows[i, i % n] = 1.0
    return ChannelRealization(rows=rows, seed=seed,
                              ru_positions=np.zeros((cfg.num_rus, 2)),
                              user_positions=np.zeros((k, 2)))


def random_channel(cfg, rng):
    rows = (rng.standard_normal((cfg.num_users, cfg.dim))
            + 1j * rng.standard_normal((cfg.num_users, cfg.dim))) / np.sqrt(2)
    return ChannelRealization(rows=rows, seed=0,
                              ru_positions=np.zeros((cfg.num_rus, 2)),
                              user_positions=np.zeros((cfg.num_users, 2)))


def rank1(vec):
    v = np.asarray(vec, dtype=complex)
    return np.outer(v, v.conj())


def random_psd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (a @ a.conj().T) / n


# ---------------------------------------------------------------------------
# rate formula


def test_single_user_rate_is_w_log2():
    # one active user, channel gain 1, signal power 3, quantization power 2,
    # unit noise: SINR = 3/(2+1) = 1 so the rate is exactly W log 2
    cfg = tiny_config(num_rus=1, num_users=1, antennas=1, bandwidth=7.0, noise_psd=1 / 7.0)
    cand = SolutionCandidate(
        precoders=np.array([rank1([np.sqrt(3.0)])]),
        compression=np.array([[2.0 + 0j]]),
        selection=np.ones((1, 1)),
        soft_powers=np.full((1, 1), 5.0),
    )
    chan = identity_channel(cfg)
    assert user_rate(cand, chan, cfg, 0) == pytest.approx(7.0 * np.log(2.0), rel=1e-12)


def test_two_user_rate_with_interference():
    # user 0 sees signal 4, interference 1 (from user 1), quantization 0.5,
    # noise 1: rate = log(1 + 4/2.5)
    cfg = tiny_config(num_rus=2, num_users=2, antennas=1)
    h = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex)
    chan = ChannelRealization(rows=h, seed=0, ru_positions=np.zeros((2, 2)),
                              user_positions=np.zeros((2, 2)))
    w0 = rank1([1.0, 1.0])          # h_0 W_0 h_0^H = 4, h_1 W_0 h_1^H = 0
    w1 = rank1([0.5, -0.5])         # h_0 W_1 h_0^H = 0 ... careful, recompute
    # h_0 = [1, 1]: h_0 @ w1 vec = 0.5 - 0.5 = 0; pick something interfering instead
    w1 = rank1([0.5, 0.5j])         # |h_0 w1|^2 = |0.5 + 0.5j|^2 = 0.5 -> too small
    w1 = rank1([1.0, 0.0])          # |h_0 [1,0]|^2 = 1, |h_1 [1,0]|^2 = 1
    q = np.diag([0.25, 0.25]).astype(complex)  # h_0 Q h_0^H = 0.5
    cand = SolutionCandidate(precoders=np.array([w0, w1]), compression=q,
                             selection=np.ones((2, 2)), soft_powers=np.full((2, 2), 9.0))
    expected0 = np.log(1 + 4.0 / (1.0 + 0.5 + 1.0))
    assert user_rate(cand, chan, cfg, 0) == pytest.approx(expected0, rel=1e-12)
    # user 1: signal |h_1 [1,0]|^2 = 1, interference |h_1 [1,1]|^2 = 0, quant 0.5
    expected1 = np.log(1 + 1.0 / (0.5 + 1.0))
    assert user_rate(cand, chan, cfg, 1) == pytest.approx(expected1, rel=1e-12)


def test_rate_monotone_in_signal_and_interference():
    rng = np.random.default_rng(11)
    cfg = tiny_config(num_rus=2, num_users=2, antennas=2)
    chan = random_channel(cfg, rng)
    base = SolutionCandidate(
        precoders=np.array([random_psd(rng, 4), random_psd(rng, 4)]),
        compression=random_psd(rng, 4, 0.1) + 0.01 * np.eye(4),
        selection=np.ones((2, 2)), soft_powers=np.full((2, 2), 10.0))
    r0 = user_rate(base, chan, cfg, 0)
    boosted = SolutionCandidate(precoders=base.precoders * np.array([2.0, 1.0])[:, None, None],
                                compression=base.compression,
                                selection=base.selection, soft_powers=base.soft_powers)
    assert user_rate(boosted, chan, cfg, 0) > r0
    jammed = SolutionCandidate(precoders=base.precoders * np.array([1.0, 3.0])[:, None, None],
                               compression=base.compression,
                               selection=base.selection, soft_powers=base.soft_powers)
    assert user_rate(jammed, chan, cfg, 0) < r0


def test_rates_permutation_equivariant():
    rng = np.random.default_rng(3)
    cfg = tiny_config(num_rus=2, num_users=3, antennas=2)
    chan = random_channel(cfg, rng)
    cand = SolutionCandidate(
        precoders=np.array([random_psd(rng, 4) for _ in range(3)]),
        compression=random_psd(rng, 4, 0.2) + 0.01 * np.eye(4),
        selection=np.ones((2, 3)), soft_powers=np.full((2, 3), 10.0))
    rates = user_rates(cand, chan, cfg)
    perm = [2, 0, 1]
    chan_p = ChannelRealization(rows=chan.rows[perm], seed=0,
                                ru_positions=chan.ru_positions,
                                user_positions=chan.user_positions[perm])
    cand_p = SolutionCandidate(precoders=cand.precoders[perm],
                               compression=cand.compression,
                               selection=cand.selection[:, perm],
                               soft_powers=cand.soft_powers[:, perm])
    npt.assert_allclose(user_rates(cand_p, chan_p, cfg), rates[perm], rtol=1e-12)


# ---------------------------------------------------------------------------
# fronthaul usage


def test_fronthaul_scalar_blocks_closed_form():
    # M=1, B=2: usage = W * (log(q1+w1) + log(q2+w2) - log q1 - log q2)
    cfg = tiny_config(num_rus=2, num_users=1, antennas=1, bandwidth=3.0)
    q1, q2, w1, w2 = 0.5, 2.0, 1.5, 4.0
    cand = SolutionCandidate(
        precoders=np.array([np.diag([w1, w2]).astype(complex)]),
        compression=np.diag([q1, q2]).astype(complex),
        selection=np.ones((2, 1)), soft_powers=np.full((2, 1), 10.0))
    expected = 3.0 * (np.log(q1 + w1) + np.log(q2 + w2) - np.log(q1) - np.log(q2))
    assert fronthaul_usage(cand, cfg) == pytest.approx(expected, rel=1e-12)


def test_fronthaul_correlation_only():
    # zero precoders, correlated Q: usage = -W log(1 - rho^2) > 0; the gain
    # of joint over independent compression is exactly this correlation term
    cfg = tiny_config(num_rus=2, num_users=1, antennas=1, bandwidth=1.0)
    rho = 0.6
    cand = SolutionCandidate(
        precoders=np.zeros((1, 2, 2), dtype=complex),
        compression=np.array([[1.0, rho], [rho, 1.0]], dtype=complex),
        selection=np.ones((2, 1)), soft_powers=np.zeros((2, 1)))
    assert fronthaul_usage(cand, cfg) == pytest.approx(-np.log(1 - rho**2), rel=1e-12)
    # block-diagonal Q with no precoding costs nothing
    cand_bd = SolutionCandidate(
        precoders=np.zeros((1, 2, 2), dtype=complex),
        compression=np.eye(2, dtype=complex),
        selection=np.ones((2, 1)), soft_powers=np.zeros((2, 1)))
    assert fronthaul_usage(cand_bd, cfg) == pytest.approx(0.0, abs=1e-12)


def test_fronthaul_nonnegative_on_random_psd_inputs():
    rng = np.random.default_rng(7)
    cfg = tiny_config(num_rus=2, num_users=2, antennas=2)
    for _ in range(50):
        cand = SolutionCandidate(
            precoders=np.array([random_psd(rng, 4), random_psd(rng, 4)]),
            compression=random_psd(rng, 4) + 0.05 * np.eye(4),
            selection=np.ones((2, 2)), soft_powers=np.full((2, 2), 10.0))
        assert fronthaul_usage(cand, cfg) >= 0.0


def test_fronthaul_singular_covariance_names_block():
    cfg = tiny_config(num_rus=2, num_users=1, antennas=1)
    cand = SolutionCandidate(
        precoders=np.zeros((1, 2, 2), dtype=complex) + np.eye(2),
        compression=np.diag([1.0, 0.0]).astype(complex),
        selection=np.ones((2, 1)), soft_powers=np.ones((2, 1)))
    with pytest.raises(SingularCovarianceError, match=r"\(1,1\)"):
        fronthaul_usage(cand, cfg)


# ---------------------------------------------------------------------------
# power model


def test_static_power_of_default_scenario():
    # 4 RUs x 8 users x 2 W + 8 x 0.1 W + 4 x 10^1.75 W
    cfg = NetworkConfig.default_desk()
    cand = SolutionCandidate.zeros(cfg)
    pb = power_breakdown(cand, cfg)
    expected = 4 * 8 * 2.0 + 8 * 0.1 + 4 * 10 ** 1.75
    assert pb.p_static == pytest.approx(expected, rel=1e-12)
    assert pb.p_static == pytest.approx(289.73653007613964, rel=1e-12)
    assert pb.p_data == 0.0


def test_data_power_is_scaled_trace_sum():
    rng = np.random.default_rng(5)
    cfg = tiny_config(num_rus=2, num_users=2, antennas=2)
    ws = np.array([random_psd(rng, 4), random_psd(rng, 4)])
    q = random_psd(rng, 4)
    cand = SolutionCandidate(precoders=ws, compression=q,
                             selection=np.ones((2, 2)), soft_powers=np.full((2, 2), 10.0))
    expected = (sum(np.real(np.trace(w)) for w in ws) + np.real(np.trace(q))) / 0.5
    assert power_breakdown(cand, cfg).p_data == pytest.approx(expected, rel=1e-12)
    # only the diagonal blocks of the precoders count, and for aggregate
    # matrices the block traces add up to the full trace
    m = cfg.antennas_per_ru
    per_block = sum(block_trace(ws[k], b, m) for k in range(2) for b in range(2))
    assert per_block == pytest.approx(sum(np.real(np.trace(w)) for w in ws), rel=1e-12)


def test_static_power_tracks_selection():
    cfg = tiny_config(num_rus=2, num_users=2, antennas=1)
    cand = SolutionCandidate.zeros(cfg)
    cand.selection = np.array([[1.0, 0.0], [1.0, 1.0]])
    pb = power_breakdown(cand, cfg)
    assert pb.p_static == pytest.approx(3 * 1.0 + 2 * 0.25 + 2 * 5.0, rel=1e-12)


def test_energy_efficiency_ratio():
    cfg = tiny_config(num_rus=1, num_users=1, antennas=1, bandwidth=2.0, noise_psd=0.5)
    cand = SolutionCandidate(
        precoders=np.array([rank1([1.0])]), compression=np.array([[1.0 + 0j]]),
        selection=np.ones((1, 1)), soft_powers=np.ones((1, 1)))
    chan = identity_channel(cfg)
    met = energy_efficiency(cand, chan, cfg)
    rate = 2.0 * np.log(1 + 1.0 / 2.0)
    power = (1.0 + 1.0) / 0.5 + (1.0 + 0.25 + 5.0)
    assert met.sum_rate == pytest.approx(rate, rel=1e-12)
    assert met.total_power == pytest.approx(power, rel=1e-12)
    assert met.energy_efficiency == pytest.approx(rate / power, rel=1e-12)


# ---------------------------------------------------------------------------
# feasibility reporting


def test_feasibility_report_flags_each_violation():
    cfg = tiny_config(num_rus=2, num_users=2, antennas=1)
    chan = identity_channel(cfg)
    good = SolutionCandidate(
        precoders=np.array([rank1([1.0, 0.0]), rank1([0.0, 1.0])]),
        compression=0.5 * np.eye(2, dtype=complex),
        selection=np.ones((2, 2)), soft_powers=np.full((2, 2), 2.0))
    rep = check_feasibility(good, chan, cfg)
    assert rep.feasible
    assert rep.slack("per_ru_power") == pytest.approx(10.0 - 4.0 - 0.5)
    assert rep.compression_full_rank
    npt.assert_allclose(rep.rank1_ratios, 1.0)

    over = SolutionCandidate(
        precoders=np.array([rank1([4.0, 0.0]), rank1([0.0, 1.0])]),
        compression=0.5 * np.eye(2, dtype=complex),
        selection=np.ones((2, 2)), soft_powers=np.full((2, 2), 2.0))
    rep = check_feasibility(over, chan, cfg)
    assert not rep.feasible
    assert rep.slack("link_power_coupling") < 0  # tr block = 16 > 2

    fractional = SolutionCandidate(
        precoders=np.zeros((2, 2, 2), complex), compression=np.eye(2, dtype=complex),
        selection=np.array([[0.4, 1.0], [1.0, 1.0]]), soft_powers=np.ones((2, 2)))
    rep = check_feasibility(fractional, chan, cfg)
    assert not rep.slack("binary_selection") >= 0
    assert rep.slack("min_connectivity") >= 0

    orphan = SolutionCandidate(
        precoders=np.zeros((2, 2, 2), complex), compression=np.eye(2, dtype=complex),
        selection=np.array([[0.0, 1.0], [0.0, 1.0]]), soft_powers=np.ones((2, 2)))
    rep = check_feasibility(orphan, chan, cfg)
    assert rep.slack("min_connectivity") == pytest.approx(-1.0)
    assert not rep.feasible


def test_feasibility_never_raises_on_singular_compression():
    cfg = tiny_config(num_rus=2, num_users=1, antennas=1)
    chan = identity_channel(cfg)
    cand = SolutionCandidate(
        precoders=np.zeros((1, 2, 2), complex),
        compression=np.zeros((2, 2), complex),
        selection=np.ones((2, 1)), soft_powers=np.ones((2, 1)))
    rep = check_feasibility(cand, chan, cfg)
    assert not rep.compression_full_rank
    assert rep.slack("fronthaul_capacity") == -np.inf
    assert not rep.feasible


# ---------------------------------------------------------------------------
# rank-one handling


def test_rank1_ratio_and_extraction():
    rng = np.random.default_rng(19)
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    w = rank1(v)
    assert rank1_ratio(w) == pytest.approx(1.0, abs=1e-12)
    mixed = w + 0.5 * np.eye(4)
    assert rank1_ratio(mixed) < 0.99

    cfg = tiny_config(num_rus=2, num_users=1, antennas=2)
    cand = SolutionCandidate(precoders=np.array([w]), compression=np.eye(4, dtype=complex),
                             selection=np.ones((2, 1)), soft_powers=np.full((2, 1), 50.0))
    vecs = extract_rank1_vectors(cand, 0.99)
    npt.assert_allclose(np.outer(vecs[0], vecs[0].conj()), w, atol=1e-10)

    cand_bad = SolutionCandidate(precoders=np.array([mixed]),
                                 compression=np.eye(4, dtype=complex),
                                 selection=np.ones((2, 1)), soft_powers=np.full((2, 1), 50.0))
    with pytest.raises(NotRankOneError):
        extract_rank1_vectors(cand_bad, 0.99)


def test_dimension_mismatch_raises():
    cfg = tiny_config(num_rus=2, num_users=2, antennas=1)
    chan = identity_channel(cfg)
    cand = SolutionCandidate(
        precoders=np.zeros((2, 3, 3), complex), compression=np.eye(3, dtype=complex),
        selection=np.ones((2, 2)), soft_powers=np.ones((2, 2)))
    with pytest.raises(DimensionMismatchError):
        user_rate(cand, chan, cfg, 0)


# ---------------------------------------------------------------------------
# Monte Carlo signal-chain oracle


def test_sampled_rates_match_formula():
    # the closed-form SINR must agree with brute-force sampling of the actual
    # transmit -> compress -> propagate -> decode chain
    rng = np.random.default_rng(23)
    cfg = tiny_config(num_rus=2, num_users=2, antennas=2, bandwidth=4.0, noise_psd=0.25)
    chan = random_channel(cfg, rng)
    v0 = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    v1 = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    cand = SolutionCandidate(
        precoders=np.array([rank1(0.8 * v0), rank1(0.5 * v1)]),
        compression=random_psd(rng, 4, 0.3) + 0.05 * np.eye(4),
        selection=np.ones((2, 2)), soft_powers=np.full((2, 2), 100.0))
    exact = user_rates(cand, chan, cfg)
    est = simulate_samples(cand, chan, cfg, n_samples=200_000, seed=99)
    npt.assert_allclose(est.rates, exact, rtol=0.02)
    # estimate tightens with more samples
    est2 = simulate_samples(cand, chan, cfg, n_samples=800_000, seed=100)
    assert np.max(np.abs(est2.rates - exact) / exact) < 0.01


def test_sampled_quantization_noise_has_requested_covariance():
    rng = np.random.default_rng(31)
    cfg = tiny_config(num_rus=2, num_users=1, antennas=2)
    chan = random_channel(cfg, rng)
    q = random_psd(rng, 4, 1.0) + 0.1 * np.eye(4)
    cand = SolutionCandidate(
        precoders=np.array([rank1([1.0, 0, 0, 0])]), compression=q,
        selection=np.ones((2, 1)), soft_powers=np.full((2, 1), 100.0))
    est = simulate_samples(cand, chan, cfg, n_samples=400_000, seed=1)
    qn = est.samples.quantization_noise
    sample_cov = qn.T @ qn.conj() / qn.shape[0]  # E[q q^H]
    npt.assert_allclose(sample_cov, q, atol=0.02 * np.linalg.norm(q))


def test_sampling_deterministic_in_seed():
    rng = np.random.default_rng(37)
    cfg = tiny_config(num_rus=2, num_users=2, antennas=1)
    chan = random_channel(cfg, rng)
    cand = SolutionCandidate(
        precoders=np.array([rank1([1.0, 0.2]), rank1([0.1, 0.9])]),
        compression=0.2 * np.eye(2, dtype=complex),
        selection=np.ones((2, 2)), soft_powers=np.full((2, 2), 10.0))
    a = simulate_samples(cand, chan, cfg, n_samples=1000, seed=5)
    b = simulate_samples(cand, chan, cfg, n_samples=1000, seed=5)
    npt.assert_array_equal(a.rates, b.rates)
    c = simulate_samples(cand, chan, cfg, n_samples=1000, seed=6)
    assert not np.array_equal(a.rates, c.rates)
