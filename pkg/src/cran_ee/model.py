"""Domain types and closed-form metrics for the compressed-fronthaul C-RAN downlink.

A baseband unit precodes all users' symbols jointly, compresses the per-RU
baseband signals with correlated (multivariate) quantization noise, and ships
them over finite-capacity fronthaul links to B radio units with M antennas
each.  Everything here is a pure function of immutable value types; the
optimization machinery lives in :mod:`cran_ee.sdpdc`.

Conventions
-----------
* Aggregate beamformer/channel dimension is ``M*B``; the antennas of RU ``b``
  occupy entries ``b*M .. (b+1)*M - 1`` (block selection is index arithmetic,
  selector matrices are never materialized).
* Rates are in nats/s (natural log), powers in W, energy efficiency in
  nats/Joule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ModelError(Exception):
    """Base class for domain-model errors."""


class DimensionMismatchError(ModelError):
    def __init__(self, what: str, expected, got):
        self.what, self.expected, self.got = what, expected, got
        super().__init__(f"{what}: expected {expected}, got {got}")


class IndefiniteInputError(ModelError):
    """A quadratic form that must be nonnegative came out negative."""

    def __init__(self, what: str, value: float):
        self.what, self.value = what, value
        super().__init__(f"{what} is negative ({value:.3e}); input matrix is indefinite")


class SingularCovarianceError(ModelError):
    """log-det of a compression covariance is not finite."""

    def __init__(self, which: str):
        self.which = which
        super().__init__(f"compression covariance {which} is singular; log-det undefined")


class NotRankOneError(ModelError):
    """A covariance is too far from rank one to factor into a beamformer."""

    def __init__(self, user: int, ratio: float, tol: float):
        self.user, self.ratio, self.tol = user, ratio, tol
        super().__init__(
            f"W[{user}] has dominant-eigenvalue ratio {ratio:.6f} < {tol}; "
            "run beamformer extraction before sampling"
        )


def block_slice(b: int, m: int) -> slice:
    """Index range of RU ``b``'s antennas inside an aggregate vector."""
    return slice(b * m, (b + 1) * m)


def block(mat: np.ndarray, b: int, c: int, m: int) -> np.ndarray:
    """(b, c) sub-block of an aggregate ``MB x MB`` matrix."""
    return mat[block_slice(b, m), block_slice(c, m)]


def block_trace(mat: np.ndarray, b: int, m: int) -> float:
    """Real trace of the (b, b) diagonal block."""
    return float(np.real(np.trace(block(mat, b, b, m))))


@dataclass(frozen=True)
class NetworkConfig:
    """Scenario constants.

    ``scale_factor`` is the physical receiver noise power (bandwidth times
    noise PSD) that the solver maps to 1.0 internally; it is derived
    automatically when left at 0.  Raw channel gains sit ~120 dB below the
    transmit powers, which makes unscaled conic data hopelessly
    ill-conditioned.
    """

    num_rus: int
    num_users: int
    antennas_per_ru: int
    bandwidth: float                 # Hz
    noise_psd: float                 # W/Hz, linear
    pa_efficiency: float             # in (0, 1]
    p_cir_per_link: float            # W, per selected RU-user link
    p_ru: float                      # W, per radio unit
    p_user: float                    # W, per user terminal
    power_budget_per_ru: float       # W
    fronthaul_capacity_per_ru: float # nats/s, uniform across RUs
    cell_radius: float               # m
    scale_factor: float = 0.0        # W; 0 = derive as bandwidth * noise_psd

    def __post_init__(self):
        positive = {
            "num_rus": self.num_rus,
            "num_users": self.num_users,
            "antennas_per_ru": self.antennas_per_ru,
            "bandwidth": self.bandwidth,
            "noise_psd": self.noise_psd,
            "pa_efficiency": self.pa_efficiency,
            "p_cir_per_link": self.p_cir_per_link,
            "p_ru": self.p_ru,
            "p_user": self.p_user,
            "power_budget_per_ru": self.power_budget_per_ru,
            "fronthaul_capacity_per_ru": self.fronthaul_capacity_per_ru,
            "cell_radius": self.cell_radius,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"NetworkConfig.{name} must be strictly positive, got {value}")
        if self.pa_efficiency > 1.0:
            raise ValueError("pa_efficiency must lie in (0, 1]")
        if self.scale_factor == 0.0:
            object.__setattr__(self, "scale_factor", self.bandwidth * self.noise_psd)
        elif self.scale_factor < 0:
            raise ValueError("scale_factor must be positive")

    @property
    def dim(self) -> int:
        """Aggregate beamformer dimension M*B."""
        return self.antennas_per_ru * self.num_rus

    @property
    def noise_power(self) -> float:
        """Receiver noise power over the signal bandwidth, W."""
        return self.bandwidth * self.noise_psd

    @classmethod
    def default_desk(cls, power_budget_dbm: float = 40.0,
                     fronthaul_mnats_per_s: float = 50.0) -> "NetworkConfig":
        """The 4-RU / 8-user / 2-antenna urban scenario used throughout.

        17.5 dBW RU circuit power, 20 dBm user circuit power, -174 dBm/Hz
        noise PSD, 10 MHz bandwidth, 0.35 PA efficiency, 2 W per-link
        precoding circuitry, 750 m cell radius.
        """
        return cls(
            num_rus=4,
            num_users=8,
            antennas_per_ru=2,
            bandwidth=10e6,
            noise_psd=10 ** (-174.0 / 10.0) * 1e-3,
            pa_efficiency=0.35,
            p_cir_per_link=2.0,
            p_ru=10 ** (17.5 / 10.0),
            p_user=10 ** (20.0 / 10.0) * 1e-3,
            power_budget_per_ru=10 ** (power_budget_dbm / 10.0) * 1e-3,
            fronthaul_capacity_per_ru=fronthaul_mnats_per_s * 1e6,
            cell_radius=750.0,
        )


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ChannelRealization:
    """One flat-fading draw: aggregate channel rows plus the geometry behind them.

    ``rows[k]`` is the length-``M*B`` row vector of user ``k``; entries
    ``b*M .. (b+1)*M - 1`` belong to RU ``b``.
    """

    rows: np.ndarray            # (K, M*B) complex
    seed: int
    ru_positions: np.ndarray    # (B, 2) m
    user_positions: np.ndarray  # (K, 2) m

    def __post_init__(self):
        object.__setattr__(self, "rows", _readonly(np.asarray(self.rows, dtype=complex)))
        object.__setattr__(self, "ru_positions", _readonly(np.asarray(self.ru_positions, float)))
        object.__setattr__(self, "user_positions", _readonly(np.asarray(self.user_positions, float)))
        if self.rows.ndim != 2:
            raise DimensionMismatchError("channel rows", "2-d array (K, M*B)", self.rows.shape)
        if not np.all(np.isfinite(self.rows.view(float))):
            raise ValueError("channel rows contain non-finite entries")

    @property
    def num_users(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def row(self, k: int) -> np.ndarray:
        return self.rows[k]

    def ru_block(self, k: int, b: int, m: int) -> np.ndarray:
        """Channel from RU ``b`` to user ``k`` (length M)."""
        return self.rows[k, block_slice(b, m)]


@dataclass
class SolutionCandidate:
    """A (possibly infeasible) design point of the joint problem.

    ``precoders[k]`` is the transmit covariance of user ``k`` (``MB x MB``
    Hermitian PSD), ``compression`` the joint quantization-noise covariance
    with per-RU diagonal blocks, ``selection[b, k]`` the (relaxed) RU-user
    assignment in [0, 1], and ``soft_powers[b, k]`` the per-link power
    ceiling coupled to it.
    """

    precoders: np.ndarray     # (K, MB, MB) complex
    compression: np.ndarray   # (MB, MB) complex
    selection: np.ndarray     # (B, K) float
    soft_powers: np.ndarray   # (B, K) float

    def __post_init__(self):
        self.precoders = np.asarray(self.precoders, dtype=complex)
        self.compression = np.asarray(self.compression, dtype=complex)
        self.selection = np.asarray(self.selection, dtype=float)
        self.soft_powers = np.asarray(self.soft_powers, dtype=float)
        if self.precoders.ndim != 3 or self.precoders.shape[1] != self.precoders.shape[2]:
            raise DimensionMismatchError("precoders", "(K, MB, MB)", self.precoders.shape)
        if self.compression.shape != self.precoders.shape[1:]:
            raise DimensionMismatchError(
                "compression covariance", self.precoders.shape[1:], self.compression.shape)
        if self.selection.shape != self.soft_powers.shape:
            raise DimensionMismatchError(
                "selection/soft_powers", self.selection.shape, self.soft_powers.shape)

    @property
    def num_users(self) -> int:
        return self.precoders.shape[0]

    @property
    def dim(self) -> int:
        return self.precoders.shape[1]

    @classmethod
    def zeros(cls, cfg: NetworkConfig, selection_value: float = 1.0) -> "SolutionCandidate":
        n = cfg.dim
        return cls(
            precoders=np.zeros((cfg.num_users, n, n), dtype=complex),
            compression=np.zeros((n, n), dtype=complex),
            selection=np.full((cfg.num_rus, cfg.num_users), selection_value),
            soft_powers=np.zeros((cfg.num_rus, cfg.num_users)),
        )

    def total_transmit_power(self, cfg: NetworkConfig) -> float:
        """Sum of all precoder block traces plus quantization power, W."""
        m = cfg.antennas_per_ru
        w = sum(block_trace(self.precoders[k], b, m)
                for k in range(self.num_users) for b in range(cfg.num_rus))
        q = sum(block_trace(self.compression, b, m) for b in range(cfg.num_rus))
        return w + q


@dataclass(frozen=True)
class Metrics:
    """Closed-form performance figures of a candidate on one channel draw."""

    per_user_rate: np.ndarray   # (K,) nats/s
    sum_rate: float             # nats/s
    fronthaul_usage: float      # nats/s
    p_data: float               # W
    p_static: float             # W
    total_power: float          # W
    energy_efficiency: float    # nats/Joule

    @property
    def ee_mnats_per_joule(self) -> float:
        return self.energy_efficiency / 1e6


@dataclass(frozen=True)
class PowerBreakdown:
    """Power part of :class:`Metrics` (data-dependent, static, total)."""

    p_data: float
    p_static: float

    @property
    def total(self) -> float:
        return self.p_data + self.p_static


@dataclass(frozen=True)
class SignalSample:
    """A batch of sampled baseband quantities from the received-signal chain.

    All arrays share the leading sample axis: ``symbols`` are unit-energy
    Gaussian data symbols, ``quantization_noise`` the correlated compression
    noise (covariance = candidate's compression matrix), ``transmitted`` the
    post-compression aggregate signal, ``received``/``receiver_noise`` the
    per-user observations and thermal noise.
    """

    symbols: np.ndarray             # (n, K) complex
    quantization_noise: np.ndarray  # (n, MB) complex
    transmitted: np.ndarray         # (n, MB) complex
    received: np.ndarray            # (n, K) complex
    receiver_noise: np.ndarray      # (n, K) complex


@dataclass(frozen=True)
class EmpiricalRates:
    """Sample-average SINR estimates and the rates they imply."""

    sinr: np.ndarray   # (K,)
    rates: np.ndarray  # (K,) nats/s
    samples: SignalSample


def _check_dims(candidate: SolutionCandidate, channel: ChannelRealization, cfg: NetworkConfig):
    if candidate.dim != cfg.dim:
        raise DimensionMismatchError("candidate dimension", cfg.dim, candidate.dim)
    if channel.dim != cfg.dim:
        raise DimensionMismatchError("channel dimension", cfg.dim, channel.dim)
    if candidate.num_users != cfg.num_users or channel.num_users != cfg.num_users:
        raise DimensionMismatchError(
            "user count", cfg.num_users, (candidate.num_users, channel.num_users))
    if candidate.selection.shape != (cfg.num_rus, cfg.num_users):
        raise DimensionMismatchError(
            "selection shape", (cfg.num_rus, cfg.num_users), candidate.selection.shape)


def _quad(h: np.ndarray, mat: np.ndarray, what: str) -> float:
    """Real value of h @ mat @ h^H, raising if meaningfully negative.

    Negative beyond 1e-6 of the form's natural magnitude means the matrix is
    genuinely indefinite; smaller excursions are floating-point noise on a
    PSD input and clamp to zero.
    """
    v = float(np.real(h @ mat @ h.conj()))
    scale = float(np.linalg.norm(h) ** 2 * np.linalg.norm(mat))
    if v < -1e-6 * max(scale, 1e-300):
        raise IndefiniteInputError(what, v)
    return max(v, 0.0)


def user_rate(candidate: SolutionCandidate, channel: ChannelRealization,
              cfg: NetworkConfig, k: int) -> float:
    """Achievable rate of user ``k`` in nats/s.

    Single-user decoding with interference, correlated quantization noise and
    thermal noise all treated as Gaussian:
    ``W * log(1 + h W_k h^H / (sum_{j != k} h W_j h^H + h Q h^H + W*N0))``.
    """
    _check_dims(candidate, channel, cfg)
    h = channel.row(k)
    signal = _quad(h, candidate.precoders[k], f"signal power of user {k}")
    interference = sum(
        _quad(h, candidate.precoders[j], f"interference from user {j} at user {k}")
        for j in range(candidate.num_users) if j != k)
    quant = _quad(h, candidate.compression, f"quantization noise power at user {k}")
    denom = interference + quant + cfg.noise_power
    return cfg.bandwidth * float(np.log1p(signal / denom))


def user_rates(candidate: SolutionCandidate, channel: ChannelRealization,
               cfg: NetworkConfig) -> np.ndarray:
    return np.array([user_rate(candidate, channel, cfg, k) for k in range(cfg.num_users)])


def fronthaul_usage(candidate: SolutionCandidate, cfg: NetworkConfig) -> float:
    """Aggregate fronthaul rate consumed by the compressed signals, nats/s.

    ``W * (sum_b log|Q_bb + sum_k block_b(W_k)| - log|Q|)``.  The log-dets
    are per channel use; multiplying by the bandwidth puts both sides of the
    capacity comparison in nats/s.  Nonnegative for PSD input (Fischer's
    inequality) and exactly 0 when all precoders vanish and Q is
    block-diagonal.
    """
    m = cfg.antennas_per_ru
    n = cfg.dim
    if candidate.dim != n:
        raise DimensionMismatchError("candidate dimension", n, candidate.dim)
    total_w = candidate.precoders.sum(axis=0)
    acc = 0.0
    for b in range(cfg.num_rus):
        sub = block(candidate.compression, b, b, m) + block(total_w, b, b, m)
        sign, logdet = np.linalg.slogdet(sub)
        if sign <= 0 or not np.isfinite(logdet):
            raise SingularCovarianceError(f"block ({b},{b}) plus precoder load")
        acc += logdet
    sign, logdet_q = np.linalg.slogdet(candidate.compression)
    if sign <= 0 or not np.isfinite(logdet_q):
        # name the first offending diagonal block if one exists, else the full matrix
        for b in range(cfg.num_rus):
            s_b, l_b = np.linalg.slogdet(block(candidate.compression, b, b, m))
            if s_b <= 0 or not np.isfinite(l_b):
                raise SingularCovarianceError(f"diagonal block ({b},{b})")
        raise SingularCovarianceError("full joint matrix")
    return cfg.bandwidth * (acc - logdet_q)


def power_breakdown(candidate: SolutionCandidate, cfg: NetworkConfig) -> PowerBreakdown:
    """Data-dependent PA power and data-independent circuit power, W.

    ``p_data = (1/eps) * (sum_{b,k} tr block_b(W_k) + sum_b tr Q_bb)``;
    ``p_static = sum_{b,k} sel_{b,k} * P_cir + K * P_user + B * P_ru``.
    """
    m = cfg.antennas_per_ru
    tx = candidate.total_transmit_power(cfg)
    p_data = tx / cfg.pa_efficiency
    p_static = (float(candidate.selection.sum()) * cfg.p_cir_per_link
                + cfg.num_users * cfg.p_user
                + cfg.num_rus * cfg.p_ru)
    return PowerBreakdown(p_data=p_data, p_static=p_static)


def energy_efficiency(candidate: SolutionCandidate, channel: ChannelRealization,
                      cfg: NetworkConfig) -> Metrics:
    """Full metric set; EE = sum rate / total consumed power."""
    rates = user_rates(candidate, channel, cfg)
    power = power_breakdown(candidate, cfg)
    total = power.total
    return Metrics(
        per_user_rate=rates,
        sum_rate=float(rates.sum()),
        fronthaul_usage=fronthaul_usage(candidate, cfg),
        p_data=power.p_data,
        p_static=power.p_static,
        total_power=total,
        energy_efficiency=float(rates.sum()) / total,
    )


@dataclass(frozen=True)
class ConstraintSlack:
    """One constraint of the joint problem with its worst-case slack.

    Slack is `limit - value` oriented so that feasible means ``slack >= -tol``.
    """

    name: str
    slack: float
    satisfied: bool


@dataclass(frozen=True)
class FeasibilityReport:
    constraints: tuple
    rank1_ratios: np.ndarray       # (K,) dominant-eigenvalue share of each precoder
    compression_full_rank: bool    # every diagonal block of Q numerically full rank
    feasible: bool

    def slack(self, name: str) -> float:
        for c in self.constraints:
            if c.name == name:
                return c.slack
        raise KeyError(name)


def rank1_ratio(w: np.ndarray) -> float:
    """Share of the trace captured by the dominant eigenvalue (1.0 = rank one)."""
    tr = float(np.real(np.trace(w)))
    if tr <= 0:
        return 1.0  # zero matrix: trivially a (zero) beamformer
    eigs = np.linalg.eigvalsh(0.5 * (w + w.conj().T))
    return float(eigs[-1] / tr)


def check_feasibility(candidate: SolutionCandidate, channel: ChannelRealization,
                      cfg: NetworkConfig, tol: float = 1e-6) -> FeasibilityReport:
    """Slack report for every constraint of the joint design problem.

    Reports, never raises: link power coupling, per-RU power budget, minimum
    connectivity, binary selection, fronthaul capacity, PSD-ness, and the
    rank-style diagnostics (precoder rank-1 ratio, full-rank compression
    blocks).  ``slack >= -tol`` counts as satisfied.
    """
    _check_dims(candidate, channel, cfg)
    m = cfg.antennas_per_ru
    b_count, k_count = cfg.num_rus, cfg.num_users
    out = []

    # per-link power coupling: tr block_b(W_k) <= sel * soft_power
    coupling = min(
        candidate.selection[b, k] * candidate.soft_powers[b, k]
        - block_trace(candidate.precoders[k], b, m)
        for b in range(b_count) for k in range(k_count))
    out.append(ConstraintSlack("link_power_coupling", coupling, coupling >= -tol))

    # per-RU power budget: sum_k u_{b,k} + tr Q_bb <= P_budget
    budget = min(
        cfg.power_budget_per_ru
        - float(candidate.soft_powers[b, :].sum())
        - block_trace(candidate.compression, b, m)
        for b in range(b_count))
    out.append(ConstraintSlack("per_ru_power", budget, budget >= -tol))

    # minimum connectivity: each user served by at least one RU
    connectivity = float(candidate.selection.sum(axis=0).min() - 1.0)
    out.append(ConstraintSlack("min_connectivity", connectivity, connectivity >= -tol))

    # binary selection: distance to {0, 1}
    dev = float(np.minimum(candidate.selection, 1.0 - candidate.selection).max())
    out.append(ConstraintSlack("binary_selection", -dev, dev <= tol))

    # fronthaul capacity (nats/s)
    try:
        usage = fronthaul_usage(candidate, cfg)
        fh = cfg.num_rus * cfg.fronthaul_capacity_per_ru - usage
    except SingularCovarianceError:
        fh = -np.inf
    out.append(ConstraintSlack("fronthaul_capacity", fh, fh >= -tol * cfg.bandwidth))

    # PSD-ness of each precoder and of the joint compression matrix
    psd = np.inf
    for k in range(k_count):
        w = candidate.precoders[k]
        scale = max(1.0, float(np.linalg.norm(w)))
        psd = min(psd, float(np.linalg.eigvalsh(0.5 * (w + w.conj().T))[0]) / scale)
    qmat = candidate.compression
    qscale = max(1.0, float(np.linalg.norm(qmat)))
    psd = min(psd, float(np.linalg.eigvalsh(0.5 * (qmat + qmat.conj().T))[0]) / qscale)
    out.append(ConstraintSlack("psd", psd, psd >= -tol))

    ratios = np.array([rank1_ratio(candidate.precoders[k]) for k in range(k_count)])
    full_rank = all(
        np.linalg.eigvalsh(0.5 * (block(qmat, b, b, m) + block(qmat, b, b, m).conj().T))[0] > 0
        for b in range(b_count))

    return FeasibilityReport(
        constraints=tuple(out),
        rank1_ratios=ratios,
        compression_full_rank=bool(full_rank),
        feasible=all(c.satisfied for c in out),
    )


def extract_rank1_vectors(candidate: SolutionCandidate, tol: float) -> np.ndarray:
    """Dominant-eigenpair beamformers; raises if any precoder is not near rank one."""
    k_count, n = candidate.num_users, candidate.dim
    vecs = np.zeros((k_count, n), dtype=complex)
    for k in range(k_count):
        w = 0.5 * (candidate.precoders[k] + candidate.precoders[k].conj().T)
        ratio = rank1_ratio(w)
        if ratio < tol:
            raise NotRankOneError(k, ratio, tol)
        eigval, eigvec = np.linalg.eigh(w)
        vecs[k] = np.sqrt(max(eigval[-1], 0.0)) * eigvec[:, -1]
    return vecs


def _covariance_factor(q: np.ndarray) -> np.ndarray:
    """A (possibly rank-deficient) factor A with A @ A^H = Q."""
    qh = 0.5 * (q + q.conj().T)
    eigval, eigvec = np.linalg.eigh(qh)
    eigval = np.clip(eigval, 0.0, None)
    return eigvec * np.sqrt(eigval)


def simulate_samples(candidate: SolutionCandidate, channel: ChannelRealization,
                     cfg: NetworkConfig, n_samples: int, seed: int,
                     rank1_tol: float = 0.99) -> EmpiricalRates:
    """Monte Carlo estimate of per-user SINR straight from the signal chain.

    Draws unit-energy Gaussian symbols, correlated quantization noise with
    the candidate's compression covariance, and thermal noise; the empirical
    SINR is the ratio of sample-average signal power to sample-average
    interference-plus-noise power, and the empirical rate is
    ``W * log(1 + SINR)``.  Serves as the independent oracle for
    :func:`user_rate`.
    """
    _check_dims(candidate, channel, cfg)
    vecs = extract_rank1_vectors(candidate, rank1_tol)
    rng = np.random.default_rng(seed)
    k_count, n = cfg.num_users, cfg.dim

    def crandn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    symbols = crandn(n_samples, k_count)
    qfactor = _covariance_factor(candidate.compression)
    # rows are samples, so right-multiplying by A^T gives E[q q^H] = A A^H = Q
    quant = crandn(n_samples, n) @ qfactor.T
    thermal = np.sqrt(cfg.noise_power) * crandn(n_samples, k_count)

    transmitted = symbols @ vecs + quant                    # (n_samples, MB)
    gains = channel.rows @ vecs.T                           # (k, j): h_k w_j
    received = symbols @ gains.T + quant @ channel.rows.T + thermal

    sinr = np.zeros(k_count)
    for k in range(k_count):
        desired = symbols[:, k] * gains[k, k]
        others = received[:, k] - desired
        p_sig = float(np.mean(np.abs(desired) ** 2))
        p_rest = float(np.mean(np.abs(others) ** 2))
        sinr[k] = p_sig / p_rest
    rates = cfg.bandwidth * np.log1p(sinr)
    batch = SignalSample(symbols=symbols, quantization_noise=quant,
                         transmitted=transmitted, received=received,
                         receiver_noise=thermal)
    return EmpiricalRates(sinr=sinr, rates=rates, samples=batch)
