"""Reproducible random scenario generation: geometry, pathloss, shadowing, fading.

The propagation chain per RU-user pair is the standard urban macro model:
``pathloss_dB = 128.1 + 37.6*log10(d_km)``, log-normal shadowing with 8 dB
standard deviation, and i.i.d. unit-variance circularly-symmetric complex
Gaussian small-scale fading per antenna.  RUs sit evenly on a circle of half
the cell radius; users are dropped uniformly in the cell disk, at least 10 m
away from every RU.

Every realization is a pure function of ``(rng_seed, index)`` via independent
``SeedSequence`` streams, so draws are reproducible one at a time and safe to
generate in parallel.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO, Union

import numpy as np

from cran_ee.model import ChannelRealization, NetworkConfig


class ScenarioError(ValueError):
    """Invalid scenario description (placement, counts, positions)."""


@dataclass(frozen=True)
class ScenarioSpec:
    """How to draw channel realizations.

    Parameters
    ----------
    rng_seed : int
        Root seed; realization ``index`` uses the independent child stream
        ``SeedSequence(rng_seed, spawn_key=(index,))``.
    num_realizations : int
        Number of independent draws the spec describes.
    placement : str
        ``"uniform_in_disk"`` (default) or ``"fixed"`` with
        ``fixed_user_positions`` supplied.
    fixed_user_positions : array (K, 2), optional
        User coordinates in m, required iff placement is ``"fixed"``.
    pathloss_intercept_db, pathloss_per_decade_db : float
        Distance law ``intercept + slope*log10(d_km)`` in dB.
    shadowing_std_db : float
        Log-normal shadowing standard deviation, dB (one draw per RU-user
        pair, shared across that RU's antennas).
    min_distance : float
        Distances are clamped below at this value (m) and random placement
        rejects users closer than this to any RU.
    """

    rng_seed: int
    num_realizations: int = 1
    placement: str = "uniform_in_disk"
    fixed_user_positions: Optional[np.ndarray] = None
    pathloss_intercept_db: float = 128.1
    pathloss_per_decade_db: float = 37.6
    shadowing_std_db: float = 8.0
    min_distance: float = 10.0

    def __post_init__(self):
        if self.num_realizations < 1:
            raise ScenarioError("num_realizations must be >= 1")
        if self.placement not in ("uniform_in_disk", "fixed"):
            raise ScenarioError(f"unknown placement {self.placement!r}")
        if self.placement == "fixed":
            if self.fixed_user_positions is None:
                raise ScenarioError("placement 'fixed' requires fixed_user_positions")
            pos = np.asarray(self.fixed_user_positions, dtype=float)
            if pos.ndim != 2 or pos.shape[1] != 2:
                raise ScenarioError("fixed_user_positions must be (K, 2)")
            object.__setattr__(self, "fixed_user_positions", pos)
        if self.min_distance <= 0:
            raise ScenarioError("min_distance must be positive")


def ru_layout(cfg: NetworkConfig) -> np.ndarray:
    """Deterministic RU positions: evenly spaced on a circle of radius R/2."""
    angles = 2.0 * np.pi * np.arange(cfg.num_rus) / cfg.num_rus
    r = cfg.cell_radius / 2.0
    return np.column_stack([r * np.cos(angles), r * np.sin(angles)])


def pathloss_db(spec: ScenarioSpec, distance_m: np.ndarray) -> np.ndarray:
    """Distance-dependent loss in dB, with the minimum-distance clamp applied."""
    d = np.maximum(np.asarray(distance_m, dtype=float), spec.min_distance)
    return spec.pathloss_intercept_db + spec.pathloss_per_decade_db * np.log10(d / 1000.0)


def _draw_user_positions(spec: ScenarioSpec, cfg: NetworkConfig,
                         rus: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if spec.placement == "fixed":
        pos = spec.fixed_user_positions
        if pos.shape[0] != cfg.num_users:
            raise ScenarioError(
                f"fixed_user_positions has {pos.shape[0]} rows, scenario has "
                f"{cfg.num_users} users")
        radii = np.linalg.norm(pos, axis=1)
        if np.any(radii > cfg.cell_radius + 1e-9):
            raise ScenarioError("fixed user positions fall outside the cell radius")
        return pos.copy()
    out = np.empty((cfg.num_users, 2))
    for k in range(cfg.num_users):
        while True:
            radius = cfg.cell_radius * np.sqrt(rng.random())
            angle = 2.0 * np.pi * rng.random()
            p = np.array([radius * np.cos(angle), radius * np.sin(angle)])
            if np.min(np.linalg.norm(rus - p, axis=1)) >= spec.min_distance:
                out[k] = p
                break
    return out


def generate(spec: ScenarioSpec, cfg: NetworkConfig, index: int) -> ChannelRealization:
    """Draw realization ``index`` of the scenario.

    Returns the aggregate channel rows (K, M*B) together with the geometry
    that produced them.  Deterministic in ``(spec.rng_seed, index)``.
    """
    if not 0 <= index < spec.num_realizations:
        raise ScenarioError(
            f"index {index} outside [0, {spec.num_realizations}) realizations")
    rng = np.random.default_rng(np.random.SeedSequence(spec.rng_seed, spawn_key=(index,)))
    rus = ru_layout(cfg)
    users = _draw_user_positions(spec, cfg, rus, rng)

    m, b_count, k_count = cfg.antennas_per_ru, cfg.num_rus, cfg.num_users
    dist = np.linalg.norm(users[:, None, :] - rus[None, :, :], axis=2)  # (K, B)
    loss_db = pathloss_db(spec, dist)
    shadow_db = rng.normal(0.0, spec.shadowing_std_db, size=(k_count, b_count))
    amp = np.sqrt(10.0 ** (-(loss_db + shadow_db) / 10.0))             # (K, B)

    fading = (rng.standard_normal((k_count, b_count, m))
              + 1j * rng.standard_normal((k_count, b_count, m))) / np.sqrt(2.0)
    rows = (amp[:, :, None] * fading).reshape(k_count, b_count * m)
    return ChannelRealization(rows=rows, seed=spec.rng_seed,
                              ru_positions=rus, user_positions=users)


# ---------------------------------------------------------------------------
# structured-text export/import for cross-implementation regression


def export_realizations(realizations: Sequence[ChannelRealization],
                        dest: Union[str, TextIO]) -> None:
    """Write realizations as a plain-text record stream (lossless roundtrip)."""
    own = isinstance(dest, str)
    fh = open(dest, "w") if own else dest
    try:
        for real in realizations:
            k, n = real.rows.shape
            fh.write(f"realization seed={real.seed} users={k} dim={n} "
                     f"rus={real.ru_positions.shape[0]}\n")
            for b, (x, y) in enumerate(real.ru_positions):
                fh.write(f"ru {b} {float(x)!r} {float(y)!r}\n")
            for k_i, (x, y) in enumerate(real.user_positions):
                fh.write(f"user {k_i} {float(x)!r} {float(y)!r}\n")
            for k_i in range(k):
                parts = " ".join(f"{float(v.real)!r} {float(v.imag)!r}"
                                 for v in real.rows[k_i])
                fh.write(f"row {k_i} {parts}\n")
            fh.write("end\n")
    finally:
        if own:
            fh.close()


def import_realizations(src: Union[str, TextIO]) -> list:
    """Inverse of :func:`export_realizations`."""
    own = isinstance(src, str)
    fh = open(src) if own else src
    out = []
    try:
        header = None
        rus, users, rows = [], [], {}
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            kind = tokens[0]
            if kind == "realization":
                header = dict(t.split("=", 1) for t in tokens[1:])
            elif kind == "ru":
                rus.append((float(tokens[2]), float(tokens[3])))
            elif kind == "user":
                users.append((float(tokens[2]), float(tokens[3])))
            elif kind == "row":
                vals = np.array([float(t) for t in tokens[2:]])
                rows[int(tokens[1])] = vals[0::2] + 1j * vals[1::2]
            elif kind == "end":
                if header is None:
                    raise ScenarioError(f"line {lineno}: 'end' without a realization header")
                k, n = int(header["users"]), int(header["dim"])
                mat = np.array([rows[i] for i in range(k)])
                if mat.shape != (k, n):
                    raise ScenarioError(f"line {lineno}: row block is {mat.shape}, "
                                        f"header says {(k, n)}")
                out.append(ChannelRealization(
                    rows=mat, seed=int(header["seed"]),
                    ru_positions=np.array(rus), user_positions=np.array(users)))
                header, rus, users, rows = None, [], [], {}
            else:
                raise ScenarioError(f"line {lineno}: unknown record {kind!r}")
        if header is not None:
            raise ScenarioError("truncated file: missing final 'end'")
    finally:
        if own:
            fh.close()
    return out
