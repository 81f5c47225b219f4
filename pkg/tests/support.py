"""Shared helpers for the test suite.

Two kinds of independent evidence live here:

* a brute-force log-grid optimizer for the one-RU/one-user/one-antenna
  network, where the whole design collapses to two scalars (transmit
  power, compression noise variance) and every metric has a closed form;
* a witness builder that packs a solver iterate into the variable vector
  of a freshly assembled subproblem, so tests can check the defining DC
  property (the linearization point is feasible for its own subproblem)
  with nothing but linear-expression arithmetic.
"""

import numpy as np

from cran_ee import conic
from cran_ee.model import ChannelRealization, NetworkConfig, SolutionCandidate
from cran_ee.sdpdc import (
    EE_SELECT,
    SE_MAX,
    EpigraphState,
    _ActiveSets,
    _Rebalance,
    _Scale,
)


# ---------------------------------------------------------------------------
# scalar-network grid oracle


def tiny_grid_oracle(channel: ChannelRealization, cfg: NetworkConfig,
                     grid: int = 200, span_decades: float = 5.0):
    """Best EE and best sum rate over a log grid of (power, quantization).

    Only meaningful for num_rus = num_users = antennas_per_ru = 1.  Returns
    ``(best_ee, best_rate)`` in nats/J and nats/s over the feasible grid
    points; raises if nothing on the grid is feasible.
    """
    assert cfg.num_rus == cfg.num_users == cfg.antennas_per_ru == 1
    gain = float(abs(channel.rows[0, 0]) ** 2)
    noise = cfg.noise_power
    budget = cfg.power_budget_per_ru
    cap_nats_per_hz = cfg.fronthaul_capacity_per_ru / cfg.bandwidth
    static = cfg.p_cir_per_link + cfg.p_user + cfg.p_ru

    axis = np.logspace(np.log10(budget) - span_decades, np.log10(budget), grid)
    p, q = np.meshgrid(axis, axis, indexing="ij")
    feasible = (p + q <= budget) & (np.log1p(p / q) <= cap_nats_per_hz)
    if not feasible.any():
        raise AssertionError("empty feasible grid; widen span_decades")
    rate = cfg.bandwidth * np.log1p(gain * p / (gain * q + noise))
    power = (p + q) / cfg.pa_efficiency + static
    ee = np.where(feasible, rate / power, -np.inf)
    rate = np.where(feasible, rate, -np.inf)
    return float(ee.max()), float(rate.max())


# ---------------------------------------------------------------------------
# subproblem witness at the linearization point


def anchor_assignment(program: conic.ConicProgram, candidate: SolutionCandidate,
                      epigraph: EpigraphState, channel: ChannelRealization,
                      cfg: NetworkConfig, algorithm: str = EE_SELECT,
                      power_unit: float = 1.0) -> np.ndarray:
    """Variable vector holding the iterate the program was linearized at.

    Mirrors the internal rescaling and product-rebalancing substitutions,
    and fills the log-det auxiliary block from a Cholesky factor (the
    standard equality-achieving witness).  DC touching means this point
    must satisfy every constraint of ``program`` to float precision.
    """
    scale = _Scale.for_run(channel, cfg, power_unit)
    reb = _Rebalance.at(epigraph, scale)
    cand_int = scale.candidate_internal(candidate)
    active = _ActiveSets(candidate.selection, cfg.antennas_per_ru)

    values = {"Q": cand_int.compression,
              "u": cand_int.soft_powers.reshape(-1),
              "z": epigraph.rate_terms,
              "g": epigraph.sinr_bounds / reb.sinr,
              "q": scale.q_internal(epigraph) * reb.sinr}
    for k in range(cfg.num_users):
        idx = active.indices[k]
        values[f"W{k}"] = cand_int.precoders[k][np.ix_(idx, idx)]
    if algorithm == EE_SELECT:
        values["phi"] = candidate.selection.reshape(-1)
        values["lam"] = epigraph.penalty_slack
    if algorithm != SE_MAX:
        values["eta"] = scale.eta_internal(epigraph) / reb.ee
        values["t"] = scale.t_internal(epigraph) * reb.ee

    # equality-achieving witness for v <= log det(embedded Q / sigma),
    # sigma being the anchor's geometric-mean eigenvalue as used by the
    # assembler: Z = diag(L_ii) L^T from the Cholesky factor S = L L^T
    sigma = float(np.exp(np.linalg.slogdet(cand_int.compression)[1] / cfg.dim))
    s = conic.embed_hermitian(cand_int.compression) / sigma
    chol = np.linalg.cholesky(s)
    d = np.diag(chol)
    for i in range(s.shape[0]):
        for j in range(i, s.shape[0]):
            values[f"_logdet0.z[{i},{j}]"] = d[i] * chol[j, i]
    values["_logdet0.t"] = 2.0 * np.log(d)
    return program.assignment(values)


def worst_slack(program: conic.ConicProgram, x: np.ndarray) -> float:
    return min(s for _, _, s in program.constraint_slacks(x))
