"""Penalized successive-convexification solver for the joint design problem.

The nonconvex joint problem (precoders W_k, compression covariance Q, soft
powers u, selection phi) is attacked through its epigraph form: per-user
rate terms z <= log(1+g), an SINR surrogate g*q <= h W h^H, an
interference epigraph q >= I+N, and a power epigraph t, with the
energy-efficiency objective eta entering through t*eta <= sum z.  Every
bilinear term x*y is rewritten with the identity 4xy = (x+y)^2 - (x-y)^2
and the concave side is linearized at the current iterate, the fronthaul
log-det difference is handled with an affine majorant plus an exact
log-det lower bound, and the boolean selection is relaxed to [0,1] with a
penalized concave constraint driving it back to {0,1}: a slack lam >= 0
enters the objective as eta - alpha*lam with alpha grown geometrically
while the selection keeps moving.

Everything in the public API is in physical units (W, nats/s); the conic
subproblems are assembled in scaled units (thermal noise -> 1, powers
divided by ``power_unit``) for conditioning, and solutions are mapped back.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, TextIO, Tuple

import numpy as np

from cran_ee import conic
from cran_ee.model import (
    ChannelRealization,
    IndefiniteInputError,
    NetworkConfig,
    SingularCovarianceError,
    SolutionCandidate,
    block,
    block_slice,
    block_trace,
    check_feasibility,
    fronthaul_usage,
    power_breakdown,
    rank1_ratio,
    user_rates,
)

log = logging.getLogger(__name__)

EE_SELECT = "ee-select"
EE_NOSELECT = "ee-noselect"
SE_MAX = "se-max"
ALGORITHMS = (EE_SELECT, EE_NOSELECT, SE_MAX)

# Eigenvalue floor on the compression covariance, relative to the per-RU
# power budget.  The exponential-cone encoding of log|Q| is accurate to an
# absolute tolerance in the matrix entries, which translates into an
# unbounded log-domain error as Q degenerates; an understated log|Q| lets
# an apparently solved subproblem overfill the fronthaul, and the repair
# step then has to crush the precoders to restore feasibility.  80 dB below
# the budget the floor is physically inert (quantization noise that far
# under the transmit scale never matters) while keeping every cone entry
# in the solver's comfortable range.
_Q_FLOOR_REL = 1e-8


def _q_floor(cfg: "NetworkConfig", power_unit: float) -> float:
    """Internal-unit spectrum floor for the compression covariance."""
    return _Q_FLOOR_REL * cfg.power_budget_per_ru / power_unit


class InitializationError(Exception):
    """Could not construct a feasible starting point."""


class SolverFailureError(Exception):
    """The conic backend failed; carries the trace accumulated so far."""

    def __init__(self, message: str, trace: "IterationTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass
class SdpDcSettings:
    """Knobs of the successive-convexification loop.

    ``alpha0_scale`` sets the initial penalty weight relative to the
    initial objective surrogate; ``alpha_growth`` multiplies it whenever the
    selection variables moved more than ``phi_move_tol`` in one iteration
    (capped at ``alpha_cap_factor`` times the initial value).  Termination
    requires an iteration with unchanged penalty weight, relative surrogate
    improvement at most ``conv_tol``, and penalty slack at most
    ``lambda_tol``.  Selection entries within ``binary_snap_tol`` of 0/1
    are snapped to exact binary between iterations (the interior-point
    solver never lands exactly on the boundary), with deactivated links'
    powers and precoder blocks zeroed, so the reported penalty slack is the
    candidate's true boolean violation.  ``power_unit`` rescales powers
    internally (0 picks 1 W; the automatic retry after a numerical failure
    uses the per-RU budget instead).  ``record_timing`` writes wall-clock
    seconds into the trace; leave off for byte-reproducible outputs.
    """

    alpha0_scale: float = 0.01
    alpha_growth: float = 3.0
    phi_move_tol: float = 1e-3
    conv_tol: float = 1e-3
    lambda_tol: float = 1e-5
    max_iterations: int = 100
    alpha_cap_factor: float = 1e6
    rank1_tol: float = 0.99
    binary_snap_tol: float = 1e-4
    power_unit: float = 0.0
    record_timing: bool = False
    max_init_halvings: int = 60
    backend: Optional[conic.ConicBackend] = None

    def resolved_power_unit(self) -> float:
        return self.power_unit if self.power_unit > 0 else 1.0


@dataclass
class EpigraphState:
    """Auxiliary epigraph variables tied to a candidate, in physical units.

    ``rate_terms`` are per-user nats/s/Hz, ``sinr_bounds`` dimensionless,
    ``noise_plus_interference`` per-user watts, ``power`` the consumed-power
    epigraph in watts, ``ee_per_watt`` the objective surrogate in
    nats/s/Hz/W, and ``penalty_slack`` the (dimensionless) selection
    penalty.
    """

    ee_per_watt: float
    power: float
    rate_terms: np.ndarray
    sinr_bounds: np.ndarray
    noise_plus_interference: np.ndarray
    penalty_slack: float

    def __post_init__(self):
        self.rate_terms = np.asarray(self.rate_terms, dtype=float)
        self.sinr_bounds = np.asarray(self.sinr_bounds, dtype=float)
        self.noise_plus_interference = np.asarray(self.noise_plus_interference, dtype=float)
        vals = np.concatenate([[self.ee_per_watt, self.power, self.penalty_slack],
                               self.rate_terms, self.sinr_bounds,
                               self.noise_plus_interference])
        if not np.all(np.isfinite(vals)):
            raise ValueError("epigraph state contains non-finite entries")
        if self.penalty_slack < -1e-9 or self.power < 0 or \
                np.any(self.sinr_bounds < -1e-9) or np.any(self.noise_plus_interference < 0):
            raise ValueError("epigraph state violates sign constraints")


@dataclass
class PenaltySchedule:
    """Geometric penalty-weight schedule with a safety cap."""

    alpha: float
    growth_factor: float
    phi_move_tol: float
    alpha_cap: float

    def maybe_grow(self, phi_move: float) -> bool:
        """Grow alpha if the selection still moves; returns whether it grew."""
        if phi_move > self.phi_move_tol and self.alpha < self.alpha_cap:
            self.alpha = min(self.alpha * self.growth_factor, self.alpha_cap)
            return True
        return False

    def force_grow(self) -> bool:
        """Grow alpha regardless of movement (anti-stall); False at the cap."""
        if self.alpha < self.alpha_cap:
            self.alpha = min(self.alpha * self.growth_factor, self.alpha_cap)
            return True
        return False


@dataclass
class TraceRow:
    n: int
    objective: float
    ee: float
    lam: float
    alpha: float
    phi_move: float
    status: str
    seconds: float


@dataclass
class IterationTrace:
    """Per-iteration diagnostics of one run.

    ``converged`` records whether the run met the relative-improvement
    stopping rule; a run that exhausted its iteration budget or stopped at a
    solver stall keeps it False while still returning its last candidate.
    """

    algorithm: str
    rows: List[TraceRow] = field(default_factory=list)
    converged: bool = False

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.rows])

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    @property
    def stabilization_index(self) -> int:
        """First iteration from which the penalty weight stayed constant."""
        if not self.rows:
            return 0
        final_alpha = self.rows[-1].alpha
        n0 = len(self.rows) - 1
        while n0 > 0 and self.rows[n0 - 1].alpha == final_alpha:
            n0 -= 1
        return n0

    CSV_COLUMNS = ("n", "objective", "EE", "lambda", "alpha", "phi_move",
                   "status", "seconds")

    def to_csv(self, fh: TextIO, include_algorithm: bool = False) -> None:
        cols = (("algorithm",) if include_algorithm else ()) + self.CSV_COLUMNS
        fh.write(",".join(cols) + "\n")
        for r in self.rows:
            fields = [str(r.n), repr(r.objective), repr(r.ee), repr(r.lam),
                      repr(r.alpha), repr(r.phi_move), r.status, repr(r.seconds)]
            if include_algorithm:
                fields.insert(0, self.algorithm)
            fh.write(",".join(fields) + "\n")


# ---------------------------------------------------------------------------
# scaling between physical and solver-internal units


@dataclass(frozen=True)
class _Scale:
    """Internal units for the conic subproblems.

    Powers are divided by ``power_unit`` and every channel row is scaled to
    unit norm, which is exact: user k's rate chain only ever sees its own
    row, so its interference epigraph and noise floor rescale with the same
    per-user gain.  This keeps all subproblem data within a few orders of
    magnitude even when users sit right next to an RU (raw channel gains
    span many orders of magnitude across a cell, which stalls interior-point
    equilibration).
    """

    power_unit: float
    noise_power: float   # physical W*N0
    gains: np.ndarray    # (K,) squared channel row norms

    @classmethod
    def for_run(cls, channel: ChannelRealization, cfg: NetworkConfig,
                power_unit: float) -> "_Scale":
        gains = np.sum(np.abs(channel.rows) ** 2, axis=1)
        if np.any(gains <= 0):
            raise InitializationError("channel has an all-zero row")
        return cls(power_unit=power_unit, noise_power=cfg.noise_power, gains=gains)

    def channel_rows(self, rows: np.ndarray) -> np.ndarray:
        return rows / np.sqrt(self.gains)[:, None]

    def noise_floor(self) -> np.ndarray:
        """Per-user internal noise constant."""
        return self.noise_power / (self.power_unit * self.gains)

    def candidate_internal(self, c: SolutionCandidate) -> SolutionCandidate:
        return SolutionCandidate(
            precoders=c.precoders / self.power_unit,
            compression=c.compression / self.power_unit,
            selection=c.selection.copy(),
            soft_powers=c.soft_powers / self.power_unit,
        )

    def eta_internal(self, e: EpigraphState) -> float:
        return e.ee_per_watt * self.power_unit

    def t_internal(self, e: EpigraphState) -> float:
        return e.power / self.power_unit

    def q_internal(self, e: EpigraphState) -> np.ndarray:
        return e.noise_plus_interference / (self.power_unit * self.gains)

    def q_physical(self, q_int: np.ndarray) -> np.ndarray:
        return q_int * self.power_unit * self.gains


# ---------------------------------------------------------------------------
# initialization


def initialize(channel: ChannelRealization, cfg: NetworkConfig,
               settings: Optional[SdpDcSettings] = None
               ) -> Tuple[SolutionCandidate, EpigraphState]:
    """Feasible all-links-active starting point.

    Matched-filter rank-1 precoders scaled so every per-RU block trace sits
    at the soft power level P_budget/(2K), white compression noise at
    P_budget/(4M) per antenna, and precoders halved until the fronthaul
    constraint holds.  The epigraph variables are set to make every epigraph
    inequality tight.
    """
    settings = settings or SdpDcSettings()
    b_count, k_count, m = cfg.num_rus, cfg.num_users, cfg.antennas_per_ru
    n = cfg.dim
    p_bar = cfg.power_budget_per_ru

    selection = np.ones((b_count, k_count))
    u0 = p_bar / (2.0 * k_count)
    soft = np.full((b_count, k_count), u0)

    precoders = np.zeros((k_count, n, n), dtype=complex)
    for k in range(k_count):
        h = channel.row(k)
        nrm = np.linalg.norm(h)
        if nrm == 0:
            raise InitializationError(f"user {k} has an all-zero channel row")
        v = h.conj() / nrm
        block_loads = [float(np.linalg.norm(v[block_slice(b, m)]) ** 2)
                       for b in range(b_count)]
        p_k = u0 / max(block_loads)
        precoders[k] = p_k * np.outer(v, v.conj())

    beta = p_bar / (4.0 * m)
    compression = beta * np.eye(n, dtype=complex)
    capacity = b_count * cfg.fronthaul_capacity_per_ru

    candidate = SolutionCandidate(precoders=precoders, compression=compression,
                                  selection=selection, soft_powers=soft)
    halvings = 0
    while fronthaul_usage(candidate, cfg) > capacity * (1.0 - 1e-9):
        halvings += 1
        if halvings > settings.max_init_halvings:
            raise InitializationError(
                f"fronthaul constraint still violated after {settings.max_init_halvings}"
                " precoder halvings")
        candidate.precoders /= 2.0

    return candidate, _tight_epigraph(candidate, channel, cfg)


def _tight_epigraph(candidate: SolutionCandidate, channel: ChannelRealization,
                    cfg: NetworkConfig) -> EpigraphState:
    """Epigraph variables that make (rate, SINR, interference, power) tight."""
    k_count = cfg.num_users
    noise = cfg.noise_power
    g = np.zeros(k_count)
    q = np.zeros(k_count)
    for k in range(k_count):
        h = channel.row(k)
        signal = float(np.real(h @ candidate.precoders[k] @ h.conj()))
        interf = sum(float(np.real(h @ candidate.precoders[j] @ h.conj()))
                     for j in range(k_count) if j != k)
        quant = float(np.real(h @ candidate.compression @ h.conj()))
        q[k] = interf + quant + noise
        g[k] = max(signal, 0.0) / q[k]
    z = np.log1p(g)
    t = _power_epigraph_value(candidate, cfg)
    return EpigraphState(
        ee_per_watt=float(z.sum()) / t,
        power=t,
        rate_terms=z,
        sinr_bounds=g,
        noise_plus_interference=q,
        penalty_slack=0.0,
    )


def _power_epigraph_value(candidate: SolutionCandidate, cfg: NetworkConfig) -> float:
    """Power epigraph in W: soft powers (not block traces) plus compression."""
    m = cfg.antennas_per_ru
    q_power = sum(float(np.real(np.trace(block(candidate.compression, b, b, m))))
                  for b in range(cfg.num_rus))
    return (float(candidate.soft_powers.sum()) + q_power) / cfg.pa_efficiency \
        + float(candidate.selection.sum()) * cfg.p_cir_per_link \
        + cfg.num_users * cfg.p_user + cfg.num_rus * cfg.p_ru


# ---------------------------------------------------------------------------
# penalty and majorization pieces


def penalty_term(phi: np.ndarray, phi_hat: np.ndarray) -> float:
    """Linearized boolean penalty sum(2*phi*phi_hat - phi_hat^2 - phi).

    Touches sum(phi^2 - phi) at phi = phi_hat and under-estimates it
    elsewhere, so requiring ``slack + penalty_term >= 0`` inner-approximates
    the relaxed boolean constraint.
    """
    phi = np.asarray(phi, dtype=float)
    phi_hat = np.asarray(phi_hat, dtype=float)
    if phi.shape != phi_hat.shape:
        raise ValueError(f"shape mismatch {phi.shape} vs {phi_hat.shape}")
    for name, arr in (("phi", phi), ("phi_hat", phi_hat)):
        if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
            raise ValueError(f"{name} entries must lie in [0, 1]")
    return float(np.sum(2.0 * phi * phi_hat - phi_hat ** 2 - phi))


@dataclass(frozen=True)
class RuMajorantPart:
    """Affine upper bound of one RU's compressed-signal log-volume term."""

    constant: float
    coefficient: np.ndarray  # (m, m) complex Hermitian; multiplies Q_bb and T_b W_k T_b^T


@dataclass(frozen=True)
class FronthaulMajorant:
    """Per-RU affine majorants of log|Q_bb + sum_k T_b W_k T_b^T|."""

    parts: Tuple[RuMajorantPart, ...]
    antennas_per_ru: int

    def evaluate(self, precoders: np.ndarray, compression: np.ndarray) -> float:
        m = self.antennas_per_ru
        total = np.sum(precoders, axis=0)
        acc = 0.0
        for b, part in enumerate(self.parts):
            x_b = block(compression, b, b, m) + block(total, b, b, m)
            acc += part.constant + float(np.real(np.trace(part.coefficient @ x_b)))
        return acc


def majorize_h(candidate: SolutionCandidate, cfg: NetworkConfig) -> FronthaulMajorant:
    """First-order (hence global, by concavity) upper bound at the iterate.

    For each RU the bound is ``log|M_b| - m + tr(M_b^{-1} (Q_bb + sum_k
    T_b W_k T_b^T))`` with M_b the block value at the linearization point;
    it touches there and majorizes everywhere on the PSD domain.
    """
    m = cfg.antennas_per_ru
    total = candidate.precoders.sum(axis=0)
    parts = []
    for b in range(cfg.num_rus):
        m_b = block(candidate.compression, b, b, m) + block(total, b, b, m)
        m_b = 0.5 * (m_b + m_b.conj().T)
        try:
            chol = np.linalg.cholesky(m_b)
        except np.linalg.LinAlgError:
            raise SingularCovarianceError(
                f"fronthaul linearization block ({b},{b})") from None
        logdet = 2.0 * float(np.sum(np.log(np.real(np.diag(chol)))))
        inv = np.linalg.inv(m_b)
        inv = 0.5 * (inv + inv.conj().T)
        parts.append(RuMajorantPart(constant=logdet - m, coefficient=inv))
    return FronthaulMajorant(parts=tuple(parts), antennas_per_ru=m)


# ---------------------------------------------------------------------------
# subproblem assembly


class _ActiveSets:
    """Per-user sets of RU blocks that are alive at the current anchor.

    Once the penalty drives a link's selection and soft power to exact
    zero, the convexified coupling constraint forces the corresponding
    precoder block to stay identically zero.  Keeping those rows and
    columns as variables would pin the PSD cone to its boundary (no
    strictly feasible point, which stalls interior-point solvers), so each
    W_k is parameterized only over its active blocks and dead links reduce
    to the scalar constraint phi = u the surrogate implies at a zero
    anchor.
    """

    def __init__(self, selection: np.ndarray, m: int):
        self.m = m
        self.blocks = [np.flatnonzero(selection[:, k] > 0.0)
                       for k in range(selection.shape[1])]
        self.indices = [np.concatenate([np.arange(b * m, (b + 1) * m)
                                        for b in blks])
                        for blks in self.blocks]

    def dim(self, k: int) -> int:
        return len(self.indices[k])

    def is_active(self, b: int, k: int) -> bool:
        return b in self.blocks[k]

    def local_slice(self, b: int, k: int) -> slice:
        """Position of RU b's antennas inside user k's active parameterization."""
        pos = int(np.searchsorted(self.blocks[k], b))
        return slice(pos * self.m, (pos + 1) * self.m)


@dataclass(frozen=True)
class _Rebalance:
    """Product-preserving substitutions that condition the bilinear pairs.

    The epigraph couplings are products (g*q, eta*t) whose factors can sit
    many orders of magnitude apart (t is dominated by static power, eta is
    tiny), making the difference-of-squares convexification numerically
    fragile.  Substituting g = gamma*g', q = q'/gamma (and likewise
    eta = beta*eta', t = t'/beta) leaves every product unchanged but makes
    the primed pair equal at the linearization point, so the surrogate's
    constant term vanishes and all subproblem data stays near unity.
    """

    sinr: np.ndarray       # (K,) gamma_k
    ee: float              # beta

    @classmethod
    def at(cls, epigraph: EpigraphState, scale: _Scale) -> "_Rebalance":
        g_hat = np.maximum(epigraph.sinr_bounds, 1e-9)
        q_hat = scale.q_internal(epigraph)
        eta_hat = max(scale.eta_internal(epigraph), 1e-9)
        t_hat = scale.t_internal(epigraph)
        return cls(sinr=np.sqrt(g_hat / q_hat), ee=float(np.sqrt(eta_hat / t_hat)))


def _assemble(algorithm: str, candidate: SolutionCandidate, epigraph: EpigraphState,
              channel: ChannelRealization, cfg: NetworkConfig, alpha: float,
              scale: _Scale) -> Tuple[conic.ConicProgram, _Rebalance]:
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    with_selection = algorithm == EE_SELECT
    with_ee = algorithm in (EE_SELECT, EE_NOSELECT)

    b_count, k_count, m = cfg.num_rus, cfg.num_users, cfg.antennas_per_ru
    n = cfg.dim
    cand_int = scale.candidate_internal(candidate)
    rows_int = scale.channel_rows(channel.rows)
    p_bar = cfg.power_budget_per_ru / scale.power_unit
    p_cir = cfg.p_cir_per_link / scale.power_unit
    p_fixed = (cfg.num_users * cfg.p_user + cfg.num_rus * cfg.p_ru) / scale.power_unit
    capacity = b_count * cfg.fronthaul_capacity_per_ru / cfg.bandwidth

    if not np.all(np.isfinite(cand_int.precoders.view(float))):
        raise ValueError("candidate precoders contain non-finite entries")

    active = _ActiveSets(candidate.selection, m)
    for k in range(k_count):
        if active.dim(k) == 0:
            raise ValueError(f"user {k} has no active links at the anchor")

    prog = conic.ConicProgram()
    w_blocks = [prog.hermitian_psd(f"W{k}", active.dim(k)) for k in range(k_count)]
    q_block = prog.hermitian_psd("Q", n)
    u = prog.vector("u", b_count * k_count)       # soft power, index b*K + k
    z = prog.vector("z", k_count)
    g = prog.vector("g", k_count)
    q = prog.vector("q", k_count)
    if with_selection:
        phi = prog.vector("phi", b_count * k_count)
        lam = prog.scalar("lam")
    if with_ee:
        eta = prog.scalar("eta")
        t = prog.scalar("t")

    # quadratic channel coefficients, restricted to each W_j's active rows:
    # entry [k][j] couples user k's channel with user j's precoder
    coupling = [[np.outer(rows_int[k][active.indices[j]].conj(),
                          rows_int[k][active.indices[j]])
                 for j in range(k_count)] for k in range(k_count)]
    noise_floor = scale.noise_floor()
    reb = _Rebalance.at(epigraph, scale)

    # rate hypographs z_k <= log(1 + g_k) and g_k >= 0; the program variable
    # holds the rebalanced g' = g / gamma_k
    for k in range(k_count):
        prog.add_log_upper(z[k], float(reb.sinr[k]) * g[k], label=f"rate[{k}]")
        prog.add_nonneg(g[k], label=f"sinr sign[{k}]")

    # interference epigraph q_k >= sum_{j != k} h W_j h^H + h Q h^H + noise,
    # with the program variable holding q' = q * gamma_k
    for k in range(k_count):
        load = q_block.trace_inner(np.outer(rows_int[k].conj(), rows_int[k]))
        for j in range(k_count):
            if j != k:
                load = load + w_blocks[j].trace_inner(coupling[k][j])
        prog.add_nonneg((1.0 / float(reb.sinr[k])) * q[k] - load
                        - float(noise_floor[k]), label=f"interference[{k}]")

    # SINR surrogate (g'+q')^2 <= 2(g.'-q.')(g'-q') - (g.'-q.')^2 + 4 h W_k h^H
    g_hat, q_hat = epigraph.sinr_bounds, scale.q_internal(epigraph)
    for k in range(k_count):
        gam = float(reb.sinr[k])
        d = float(g_hat[k]) / gam - float(q_hat[k]) * gam
        rhs = (2.0 * d) * (g[k] - q[k]) - d * d \
            + 4.0 * w_blocks[k].trace_inner(coupling[k][k])
        prog.add_quad_le_affine(g[k] + q[k], rhs, label=f"sinr dc[{k}]")

    # per-link soft power coupling; at a dead anchor the surrogate collapses
    # to phi = u with a zero precoder block (which is not parameterized)
    for b in range(b_count):
        for k in range(k_count):
            idx = b * k_count + k
            if not active.is_active(b, k):
                if with_selection:
                    prog.add_eq(phi[idx] - u[idx], label=f"dead link[{b},{k}]")
                else:
                    prog.add_nonneg(u[idx], label=f"dead link[{b},{k}]")
                continue
            tr_b = w_blocks[k].block_trace(active.local_slice(b, k))
            if with_selection:
                s = float(candidate.selection[b, k]
                          + cand_int.soft_powers[b, k])
                rhs = (2.0 * s) * (phi[idx] + u[idx]) - s * s - 4.0 * tr_b
                prog.add_quad_le_affine(phi[idx] - u[idx], rhs,
                                        label=f"link power dc[{b},{k}]")
            else:
                prog.add_nonneg(u[idx] - tr_b, label=f"link power[{b},{k}]")

    # per-RU transmit power budget
    for b in range(b_count):
        total_u = conic.LinExpr()
        for k in range(k_count):
            total_u = total_u + u[b * k_count + k]
        prog.add_nonneg(p_bar - total_u - q_block.block_trace(block_slice(b, m)),
                        label=f"ru budget[{b}]")

    # spectrum floor keeping the log|Q| certificate numerically faithful
    delta = _q_floor(cfg, scale.power_unit)
    emb = q_block.embedded()
    dim2 = 2 * n
    prog.add_psd([[emb[i][j] - delta if i == j else emb[i][j]
                   for j in range(dim2)] for i in range(dim2)],
                 label="compression floor")

    # fronthaul: affine majorant minus exact log-det lower bound
    majorant = majorize_h(cand_int, cfg)
    usage = conic.LinExpr.constant(sum(p.constant for p in majorant.parts))
    for b, part in enumerate(majorant.parts):
        coeff = np.zeros((n, n), dtype=complex)
        coeff[block_slice(b, m), block_slice(b, m)] = part.coefficient
        usage = usage + q_block.trace_inner(coeff)
        for k in range(k_count):
            if not active.is_active(b, k):
                continue
            local = np.zeros((active.dim(k), active.dim(k)), dtype=complex)
            ls = active.local_slice(b, k)
            local[ls, ls] = part.coefficient
            usage = usage + w_blocks[k].trace_inner(local)
    # usage - log|Q| <= capacity, via v <= logdet(embedded Q) = 2 logdet Q.
    # The embedding is fed scaled by the anchor's geometric-mean eigenvalue:
    # the witness's exponential cones then operate near unity however small
    # the compression covariance runs, instead of hitting the solver's
    # absolute tolerance floor where their log-domain accuracy collapses.
    sigma = float(np.exp(np.linalg.slogdet(cand_int.compression)[1] / n))
    scaled = [[entry * (1.0 / sigma) for entry in row] for row in emb]
    prog.add_logdet_lower(
        scaled, 2.0 * (usage - capacity) - 2.0 * n * np.log(sigma),
        label="fronthaul")

    if with_selection:
        # box, minimum connectivity, and the penalized boolean constraint
        for idx in range(b_count * k_count):
            prog.add_nonneg(phi[idx], label=f"phi lower[{idx}]")
            prog.add_nonneg(1.0 - phi[idx], label=f"phi upper[{idx}]")
        for k in range(k_count):
            served = conic.LinExpr()
            for b in range(b_count):
                served = served + phi[b * k_count + k]
            prog.add_nonneg(served - 1.0, label=f"connectivity[{k}]")
        prog.add_nonneg(lam, label="penalty slack sign")
        phi_hat = candidate.selection
        pen = lam.copy()
        for b in range(b_count):
            for k in range(k_count):
                hat = float(phi_hat[b, k])
                pen = pen + (2.0 * hat - 1.0) * phi[b * k_count + k] - hat * hat
        prog.add_nonneg(pen, label="boolean penalty")

    if with_ee:
        # power epigraph on the rebalanced t' = t * beta
        power = conic.LinExpr.constant(p_fixed)
        for idx in range(b_count * k_count):
            power = power + (1.0 / cfg.pa_efficiency) * u[idx]
            if with_selection:
                power = power + p_cir * phi[idx]
            else:
                power = power + p_cir
        for b in range(b_count):
            power = power + (1.0 / cfg.pa_efficiency) \
                * q_block.block_trace(block_slice(b, m))
        prog.add_nonneg(t - reb.ee * power, label="power epigraph")
        prog.add_nonneg(eta, label="ee sign")
        # EE surrogate (eta'+t')^2 <= 2(e.-t.)(eta'-t') - (e.-t.)^2 + 4 sum z
        d = scale.eta_internal(epigraph) / reb.ee - scale.t_internal(epigraph) * reb.ee
        zsum = conic.LinExpr()
        for k in range(k_count):
            zsum = zsum + z[k]
        rhs = (2.0 * d) * (eta - t) - d * d + 4.0 * zsum
        prog.add_quad_le_affine(eta + t, rhs, label="ee dc")
        if with_selection:
            prog.set_objective(reb.ee * eta - alpha * lam, maximize=True)
        else:
            prog.set_objective(reb.ee * eta, maximize=True)
    else:
        zsum = conic.LinExpr()
        for k in range(k_count):
            zsum = zsum + z[k]
        prog.set_objective(zsum, maximize=True)

    return prog, reb


def build_subproblem(candidate: SolutionCandidate, epigraph: EpigraphState,
                     channel: ChannelRealization, cfg: NetworkConfig,
                     alpha: float, power_unit: float = 1.0) -> conic.ConicProgram:
    """Convex subproblem of the selection-enabled solver at the given iterate."""
    scale = _Scale.for_run(channel, cfg, power_unit)
    program, _ = _assemble(EE_SELECT, candidate, epigraph, channel, cfg, alpha, scale)
    return program


# ---------------------------------------------------------------------------
# the outer loop


@dataclass
class SdpDcState:
    """Mutable loop state; advance with :func:`iterate`."""

    algorithm: str
    channel: ChannelRealization
    cfg: NetworkConfig
    settings: SdpDcSettings
    scale: _Scale
    candidate: SolutionCandidate
    epigraph: EpigraphState
    schedule: PenaltySchedule
    trace: IterationTrace
    iteration: int = 0
    done: bool = False


def begin_run(channel: ChannelRealization, cfg: NetworkConfig,
              settings: Optional[SdpDcSettings] = None,
              algorithm: str = EE_SELECT,
              power_unit: Optional[float] = None) -> SdpDcState:
    """Initialize a run: feasible starting point plus penalty schedule."""
    settings = settings or SdpDcSettings()
    rho = power_unit if power_unit is not None else settings.resolved_power_unit()
    scale = _Scale.for_run(channel, cfg, rho)
    candidate, epigraph = initialize(channel, cfg, settings)
    eta0 = scale.eta_internal(epigraph)
    alpha0 = settings.alpha0_scale * max(eta0, 1e-12)
    schedule = PenaltySchedule(
        alpha=alpha0,
        growth_factor=settings.alpha_growth,
        phi_move_tol=settings.phi_move_tol,
        alpha_cap=settings.alpha_cap_factor * alpha0,
    )
    return SdpDcState(
        algorithm=algorithm, channel=channel, cfg=cfg, settings=settings,
        scale=scale, candidate=candidate, epigraph=epigraph,
        schedule=schedule, trace=IterationTrace(algorithm=algorithm),
    )


def _merit(state: SdpDcState, epigraph: EpigraphState) -> float:
    """Exact merit of a candidate at the current penalty weight.

    Sum rate (nats/s) in SE mode, otherwise the epigraph energy efficiency
    (nats/J) minus the penalty-weighted boolean violation.  Measured on
    accepted candidates -- not on raw subproblem optima -- this is the
    sequence the convexification theory makes nondecreasing, so it doubles
    as the acceptance test for numerically shaky subproblem solutions.
    """
    cfg = state.cfg
    if state.algorithm == SE_MAX:
        return cfg.bandwidth * float(epigraph.rate_terms.sum())
    merit = cfg.bandwidth * epigraph.ee_per_watt
    if state.algorithm == EE_SELECT:
        alpha_phys = state.schedule.alpha * cfg.bandwidth / state.scale.power_unit
        merit -= alpha_phys * epigraph.penalty_slack
    return merit


def _psd_clip(mat: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (eigenvalues below ``floor`` raised).

    Interior-point iterates satisfy the cone constraints only to solver
    tolerance; clipping keeps every downstream quadratic form nonnegative.
    A positive ``floor`` (absolute, in the matrix's own units) additionally
    keeps log-determinants finite.
    """
    sym = 0.5 * (mat + mat.conj().T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals.size == 0:
        return sym
    if eigvals[0] >= floor:
        return sym
    return (eigvecs * np.clip(eigvals, floor, None)) @ eigvecs.conj().T


def _repair_candidate(candidate: SolutionCandidate, cfg: NetworkConfig
                      ) -> SolutionCandidate:
    """Project a near-feasible candidate onto the hard constraint set.

    Mutates ``candidate`` in place.  Three cheap exact repairs, each a
    no-op on already-feasible input:

    * every user keeps at least one (fractionally) selected link -- a
      deficit is pushed into the largest selection entries;
    * each soft power covers the matching precoder block trace scaled by
      the link's selection, so the bilinear coupling holds at the anchor;
    * precoders and soft powers are shrunk by a common factor restoring the
      per-RU transmit budget (closed form) and the total fronthaul capacity
      (bisection on the exact log-det usage), both of which are monotone in
      that factor.
    """
    b_count, k_count, m = cfg.num_rus, cfg.num_users, cfg.antennas_per_ru
    sel, soft = candidate.selection, candidate.soft_powers

    for k in range(k_count):
        deficit = 1.0 - float(sel[:, k].sum())
        if deficit <= 0.0:
            continue
        for b in np.argsort(sel[:, k])[::-1]:
            add = min(1.0 - sel[b, k], deficit)
            sel[b, k] += add
            deficit -= add
            if deficit <= 0.0:
                break

    np.clip(soft, 0.0, None, out=soft)
    for k in range(k_count):
        for b in range(b_count):
            if sel[b, k] <= 0.0:
                continue
            # pin the soft power to the smallest feasible value: any slack
            # above the block trace is committed budget that neither radiates
            # nor serves the selection coupling, so removing it is free
            soft[b, k] = max(float(np.real(block_trace(candidate.precoders[k],
                                                       b, m))), 0.0) / sel[b, k]

    budget = cfg.power_budget_per_ru
    scale = 1.0
    q_traces = np.array([float(np.real(block_trace(candidate.compression, b, m)))
                         for b in range(b_count)])
    for b in range(b_count):
        load = float(soft[b].sum())
        room = budget - q_traces[b]
        if load > room:
            if room <= 0.0:
                raise InitializationError(
                    f"compression power alone exceeds the budget of RU {b}")
            scale = min(scale, room / load)

    load_blocks = [block(candidate.precoders.sum(axis=0), b, b, m)
                   for b in range(b_count)]
    q_blocks = [block(candidate.compression, b, b, m) for b in range(b_count)]
    sign_q, logdet_q = np.linalg.slogdet(candidate.compression)
    if sign_q <= 0 or not np.isfinite(logdet_q):
        raise InitializationError("compression covariance is numerically singular")
    capacity = cfg.num_rus * cfg.fronthaul_capacity_per_ru

    def usage(s: float) -> float:
        acc = -logdet_q
        for qb, lb in zip(q_blocks, load_blocks):
            acc += float(np.linalg.slogdet(qb + s * lb)[1])
        return cfg.bandwidth * acc

    if usage(scale) > capacity:
        lo_s, hi_s = 0.0, scale
        for _ in range(60):
            mid = 0.5 * (lo_s + hi_s)
            if usage(mid) > capacity:
                hi_s = mid
            else:
                lo_s = mid
        scale = lo_s

    if scale < 1.0:
        candidate.precoders *= scale
        soft *= scale
    return candidate


def _fill_power(candidate: SolutionCandidate, cfg: NetworkConfig) -> None:
    """Pin every RU's transmit budget tight by per-RU congruence scaling.

    Block-diagonal scaling leaves the fronthaul usage exactly invariant:
    each per-RU log-det picks up m*log(c_b), and their sum cancels against
    the same terms appearing in log|Q|, so budget headroom can always be
    folded back into the candidate without touching that constraint.  A
    common factor strictly raises every SINR (noise is the only unscaled
    term); unequal factors additionally reweight the RUs, which can move
    individual rates either way, so full-budget operation is imposed as
    part of the scheme's definition rather than derived: every accepted
    iterate is the best budget-tight candidate found so far, and the
    exact-merit acceptance gate keeps that sequence monotone.  Mutates
    ``candidate`` in place.
    """
    b_count, m = cfg.num_rus, cfg.antennas_per_ru
    loads = np.array([float(candidate.soft_powers[b].sum())
                      + float(np.real(block_trace(candidate.compression, b, m)))
                      for b in range(b_count)])
    if np.any(loads <= 0.0):
        return
    factors = cfg.power_budget_per_ru / loads * (1.0 - 1e-14)
    d = np.repeat(np.sqrt(factors), m)
    congr = np.outer(d, d)
    candidate.precoders *= congr
    candidate.compression *= congr
    candidate.soft_powers *= factors[:, None]


def _iterate_values(state: SdpDcState, result: conic.SolveResult
                    ) -> Tuple[SolutionCandidate, EpigraphState]:
    """Next iterate from a subproblem solution.

    Selection entries within ``binary_snap_tol`` of binary are snapped (the
    solver keeps strictly interior points, so converged entries land at
    solver-tolerance distance from 0/1), deactivated links get their soft
    power and precoder rows/columns zeroed -- a projection that can only
    loosen the power, fronthaul, and coupling constraints -- and the
    epigraph is re-anchored tightly at the resulting candidate, so all
    convexified constraints of the next subproblem touch there.
    """
    cfg, scale = state.cfg, state.scale
    b_count, k_count, m = cfg.num_rus, cfg.num_users, cfg.antennas_per_ru
    rho = scale.power_unit
    vals = result.values
    active = _ActiveSets(state.candidate.selection, m)
    precoders = np.zeros((k_count, cfg.dim, cfg.dim), dtype=complex)
    for k in range(k_count):
        idx = active.indices[k]
        precoders[k][np.ix_(idx, idx)] = _psd_clip(vals[f"W{k}"])
    precoders *= rho
    compression = _psd_clip(vals["Q"], floor=_q_floor(cfg, rho)) * rho
    soft = vals["u"].reshape(b_count, k_count) * rho
    if state.algorithm == EE_SELECT:
        selection = np.clip(vals["phi"].reshape(b_count, k_count), 0.0, 1.0)
        snap = state.settings.binary_snap_tol
        selection[selection >= 1.0 - snap] = 1.0
        selection[selection <= snap] = 0.0
        soft[selection == 0.0] = 0.0
        for k in range(k_count):
            if np.all(selection[:, k] > 0.0):
                continue
            mask = np.repeat(selection[:, k] > 0.0, m).astype(float)
            precoders[k] *= np.outer(mask, mask)
    else:
        selection = np.ones((b_count, k_count))
    candidate = SolutionCandidate(precoders=precoders, compression=compression,
                                  selection=selection, soft_powers=soft)
    _repair_candidate(candidate, cfg)
    if state.algorithm == SE_MAX:
        _fill_power(candidate, cfg)
    epigraph = _tight_epigraph(candidate, state.channel, cfg)
    if state.algorithm == EE_SELECT:
        epigraph.penalty_slack = float(np.sum(selection - selection ** 2))
    return candidate, epigraph


def _achieved_ee(candidate: SolutionCandidate, channel: ChannelRealization,
                 cfg: NetworkConfig) -> float:
    rates = user_rates(candidate, channel, cfg)
    return float(rates.sum()) / power_breakdown(candidate, cfg).total


def iterate(state: SdpDcState) -> SdpDcState:
    """One convexify-solve-accept step; mutates and returns the state.

    The subproblem solution is vetted before becoming the next anchor
    (see :func:`_try_accept`); a shaky solve is retried at relaxed
    tolerances and then with a first-order solver, and an iteration with
    no acceptable outcome at all holds the anchor or ends the run (see
    :func:`_handle_rejected`).  Sets
    ``state.done`` on convergence or the iteration cap; raises
    :class:`SolverFailureError` only when no useful candidate exists.
    """
    if state.done:
        return state
    t0 = time.perf_counter() if state.settings.record_timing else 0.0
    try:
        program, _ = _assemble(state.algorithm, state.candidate, state.epigraph,
                               state.channel, state.cfg, state.schedule.alpha,
                               state.scale)
    except SingularCovarianceError as degenerate:
        raise SolverFailureError(
            f"{state.algorithm} anchor at iteration {state.iteration} is "
            f"degenerate: {degenerate}", state.trace) from degenerate

    near_misses: List[float] = []
    accepted = _try_accept(state, program,
                           conic.solve(program, state.settings.backend),
                           near_misses)
    if accepted is None:
        # A fresh interior-point run at relaxed tolerances often pushes
        # through where the tight one stalled on the same subproblem.
        accepted = _try_accept(state, program,
                               conic.solve(program, _rescue_backend()),
                               near_misses)
    rescued = False
    if accepted is None:
        # Interior-point step sizes collapse when the subproblem optimum
        # pins whole precoder blocks to the PSD boundary (muted users).
        # A first-order splitting solve has no such degeneracy wall and
        # lands close enough for the merit gate to vet.
        accepted = _try_accept(state, program,
                               conic.solve(program, _foc_backend()),
                               near_misses)
        rescued = accepted is not None
    if accepted is None:
        return _handle_rejected(state, t0, near_misses)

    new_candidate, new_epigraph, status = accepted
    if rescued and status == "optimal":
        status = "rescued"
    phi_move = float(np.linalg.norm(new_candidate.selection - state.candidate.selection)) \
        if state.algorithm == EE_SELECT else 0.0
    lam = new_epigraph.penalty_slack
    alpha_used = state.schedule.alpha if state.algorithm == EE_SELECT else 0.0
    objective = _merit(state, new_epigraph)
    ee = _achieved_ee(new_candidate, state.channel, state.cfg)
    seconds = (time.perf_counter() - t0) if state.settings.record_timing else 0.0
    row = TraceRow(n=state.iteration, objective=objective, ee=ee, lam=lam,
                   alpha=alpha_used, phi_move=phi_move, status=status,
                   seconds=seconds)

    prev_row = state.trace.rows[-1] if state.trace.rows else None
    state.trace.append(row)

    grew = False
    if state.algorithm == EE_SELECT:
        grew = state.schedule.maybe_grow(phi_move)
    converged = False
    if prev_row is not None and not grew and prev_row.alpha == row.alpha \
            and status != "stalled":
        rel = abs(row.objective - prev_row.objective) \
            / max(abs(prev_row.objective), 1e-12)
        lam_ok = lam <= state.settings.lambda_tol or state.algorithm != EE_SELECT
        converged = rel <= state.settings.conv_tol and lam_ok

    state.candidate, state.epigraph = new_candidate, new_epigraph
    state.iteration += 1
    if converged:
        state.trace.converged = True
    if converged or state.iteration >= state.settings.max_iterations:
        state.done = True
    return state


def _rescue_backend() -> conic.ConicBackend:
    return conic.ClarabelBackend(feas_tol=1e-7, gap_tol=1e-7, max_iter=400)


def _foc_backend() -> conic.ConicBackend:
    # 1e-6 is reachable within a few thousand sweeps on these subproblems;
    # asking for more mostly burns the iteration budget without producing
    # an iterate the merit gate would take.
    return conic.ScsBackend(eps=1e-6, max_iters=25_000)


def _try_accept(state: SdpDcState, program: conic.ConicProgram,
                result: conic.SolveResult,
                near_misses: Optional[List[float]] = None,
                ) -> Optional[Tuple[SolutionCandidate, EpigraphState, str]]:
    """Vet one solve outcome; None means it must not become the next anchor.

    A clean solve is accepted directly.  A failed solve may still carry a
    usable last iterate: it is kept when it satisfies the subproblem
    constraints to modest accuracy (the convexified constraints of the
    following subproblem touch wherever it is re-anchored, so exactness is
    not required) and, after repair, does not lose exact merit -- a stall
    mid-path would otherwise silently replace a better anchor with a worse
    one.  Merit-rejected iterates record their merit in ``near_misses`` so
    the caller can tell a stalled-but-converged run from a genuine failure.
    """
    status = result.status
    if result.x is None:
        return None
    if not result.ok:
        worst = min(s for _, _, s in program.constraint_slacks(result.x))
        if worst < -1e-3:
            log.warning("%s: iteration %d solve ended %s with unusable iterate "
                        "(worst constraint slack %.2e)", state.algorithm,
                        state.iteration, result.raw_status, worst)
            return None
        status = "stalled"
    try:
        candidate, epigraph = _iterate_values(state, result)
    except (ValueError, InitializationError, IndefiniteInputError,
            SingularCovarianceError) as bad:
        log.warning("%s: iteration %d iterate rejected while mapping back (%s)",
                    state.algorithm, state.iteration, bad)
        return None
    floor = _merit(state, state.epigraph)
    merit = _merit(state, epigraph)
    if merit < floor - 1e-6 * max(1.0, abs(floor)):
        log.warning("%s: iteration %d %s iterate loses merit (%.6g -> %.6g); "
                    "rejected", state.algorithm, state.iteration,
                    result.raw_status, floor, merit)
        if near_misses is not None:
            near_misses.append(merit)
        return None
    if status == "stalled":
        log.info("%s: accepting a stalled subproblem iterate at iteration %d "
                 "(%s)", state.algorithm, state.iteration, result.raw_status)
    return candidate, epigraph, status


def _handle_rejected(state: SdpDcState, t0: float,
                     near_misses: Sequence[float] = ()) -> SdpDcState:
    """No usable subproblem iterate: hold, push the penalty, or stop.

    In selection mode the anchor is kept and the penalty weight grown -- a
    harder-penalized subproblem is numerically a different problem and in
    practice escapes the stall well before the weight cap, even when the
    selection is already binary.  Only at the cap does the run stop: at a
    binary selection with no penalty slack the current candidate is a valid
    terminal design, while a still-fractional selection (or a failure
    before any iterate was accepted) propagates as
    :class:`SolverFailureError`.

    A stop is still a convergence when the best merit-rejected iterate sits
    within the convergence tolerance of the anchor: the subproblem step then
    moved the objective by less than a regular accepted step is allowed to,
    so the anchor is a fixed point to within tolerance even though the gate
    (rightly) refused to re-anchor on a strictly worse candidate.
    """
    if not state.trace.rows:
        raise SolverFailureError(
            f"{state.algorithm}: first subproblem produced no usable iterate",
            state.trace)
    anchor_lam = float(state.epigraph.penalty_slack)
    selection = state.candidate.selection
    binary = bool(np.all((selection == 0.0) | (selection == 1.0)))
    if state.algorithm == EE_SELECT:
        alpha_used = state.schedule.alpha
        held_objective = _merit(state, state.epigraph)
        if state.schedule.force_grow():
            log.warning("%s: holding the anchor at iteration %d and growing "
                        "the penalty weight to %.3g", state.algorithm,
                        state.iteration, state.schedule.alpha)
            seconds = (time.perf_counter() - t0) if state.settings.record_timing else 0.0
            row = TraceRow(n=state.iteration, objective=held_objective,
                           ee=_achieved_ee(state.candidate, state.channel, state.cfg),
                           lam=anchor_lam, alpha=alpha_used, phi_move=0.0,
                           status="stalled-hold", seconds=seconds)
            state.trace.append(row)
            state.iteration += 1
            if state.iteration >= state.settings.max_iterations:
                state.done = True
            return state
        if not (binary and anchor_lam <= state.settings.lambda_tol):
            raise SolverFailureError(
                f"{state.algorithm}: no usable subproblem iterate at iteration "
                f"{state.iteration} with the penalty weight already at its cap "
                "and a non-binary selection", state.trace)
    floor = _merit(state, state.epigraph)
    if near_misses and (floor - max(near_misses)
                        <= state.settings.conv_tol * max(abs(floor), 1e-12)):
        log.info("%s: merit stalled within tolerance at iteration %d "
                 "(%.6g vs %.6g); converged at the current candidate",
                 state.algorithm, state.iteration, max(near_misses), floor)
        state.trace.converged = True
    else:
        log.warning("%s: no usable subproblem iterate at iteration %d; "
                    "stopping at the current candidate",
                    state.algorithm, state.iteration)
    state.done = True
    return state


def _run_once(channel: ChannelRealization, cfg: NetworkConfig,
              settings: SdpDcSettings, algorithm: str,
              power_unit: float) -> Tuple[SolutionCandidate, IterationTrace]:
    state = begin_run(channel, cfg, settings, algorithm, power_unit)
    while not state.done:
        iterate(state)
    if algorithm == SE_MAX:
        _fill_power(state.candidate, cfg)
    return state.candidate, state.trace


def run(channel: ChannelRealization, cfg: NetworkConfig,
        settings: Optional[SdpDcSettings] = None,
        algorithm: str = EE_SELECT) -> Tuple[SolutionCandidate, IterationTrace]:
    """Full solve: iterate to convergence, retrying once on solver failure.

    The retry rescales internal powers by the per-RU budget, which usually
    clears conditioning trouble; a second failure propagates with the trace
    attached.  The returned candidate still carries the relaxed selection
    and (near-)rank-1 precoder covariances; follow with
    :func:`extract_beamformers` for a binary, beamformed design.
    """
    settings = settings or SdpDcSettings()
    first_unit = settings.resolved_power_unit()
    try:
        return _run_once(channel, cfg, settings, algorithm, first_unit)
    except SolverFailureError as failure:
        retry_unit = cfg.power_budget_per_ru
        if retry_unit == first_unit:
            raise
        log.warning("%s failed at power unit %.3g W (%s); retrying at %.3g W",
                    algorithm, first_unit, failure, retry_unit)
        return _run_once(channel, cfg, settings, algorithm, retry_unit)


# ---------------------------------------------------------------------------
# beamformer extraction


@dataclass(frozen=True)
class ExtractionReport:
    """Rank-1 extraction diagnostics."""

    beamformers: np.ndarray        # (K, MB) complex
    ratios: np.ndarray             # (K,) dominant-eigenvalue share
    warnings: Tuple[str, ...]
    repaired_users: Tuple[int, ...]
    feasibility: object            # model.FeasibilityReport of the rebuilt candidate

    @property
    def clean(self) -> bool:
        return not self.warnings


def extract_beamformers(candidate: SolutionCandidate, channel: ChannelRealization,
                        cfg: NetworkConfig, rank1_tol: float = 0.99,
                        trace_floor: float = 1e-3
                        ) -> Tuple[SolutionCandidate, ExtractionReport]:
    """Round the selection, factor precoders to rank one, zero unused blocks.

    Selection entries round to the nearest binary value; a user left with no
    serving RU gets its largest-soft-power link re-activated.  Each precoder
    covariance is replaced by its dominant-eigenpair rank-1 reconstruction
    (ratios below ``rank1_tol`` are reported as warnings, not errors), and
    blocks of deselected links are zeroed, which can only shrink block
    traces and fronthaul usage.  Covariances whose trace is below
    ``trace_floor`` times the largest user's are residual solver noise on a
    muted user: they are zeroed outright and count as rank-1.  The rebuilt
    candidate is feasibility-checked with the exact model expressions.
    """
    b_count, k_count, m = cfg.num_rus, cfg.num_users, cfg.antennas_per_ru
    warnings: List[str] = []

    rounded = (candidate.selection >= 0.5).astype(float)
    repaired = []
    for k in range(k_count):
        if rounded[:, k].sum() < 1.0:
            b_star = int(np.argmax(candidate.soft_powers[:, k]))
            rounded[b_star, k] = 1.0
            repaired.append(k)
            warnings.append(f"user {k}: no serving RU after rounding; "
                            f"re-activated RU {b_star}")

    traces = np.array([max(float(np.real(np.trace(w))), 0.0)
                       for w in candidate.precoders])
    floor = trace_floor * float(traces.max(initial=0.0))
    vectors = np.zeros((k_count, cfg.dim), dtype=complex)
    ratios = np.zeros(k_count)
    for k in range(k_count):
        if traces[k] <= floor:
            ratios[k] = 1.0
            log.info("extraction: user %d carries negligible power "
                     "(trace %.3g); beamformer zeroed", k, traces[k])
            continue
        w = 0.5 * (candidate.precoders[k] + candidate.precoders[k].conj().T)
        ratios[k] = rank1_ratio(w)
        if ratios[k] < rank1_tol:
            warnings.append(f"user {k}: dominant-eigenvalue share {ratios[k]:.4f} "
                            f"below {rank1_tol}")
        eigval, eigvec = np.linalg.eigh(w)
        vectors[k] = np.sqrt(max(eigval[-1], 0.0)) * eigvec[:, -1]
        for b in range(b_count):
            if rounded[b, k] == 0.0:
                vectors[k][block_slice(b, m)] = 0.0

    precoders = np.array([np.outer(v, v.conj()) for v in vectors])
    out = SolutionCandidate(precoders=precoders,
                            compression=candidate.compression.copy(),
                            selection=rounded,
                            soft_powers=candidate.soft_powers.copy())
    for message in warnings:
        log.warning("extraction: %s", message)
    report = ExtractionReport(
        beamformers=vectors, ratios=ratios, warnings=tuple(warnings),
        repaired_users=tuple(repaired),
        feasibility=check_feasibility(out, channel, cfg),
    )
    return out, report
