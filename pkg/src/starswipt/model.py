"""Physical-layer model of an amplifying dual-sided surface serving SWIPT users.

Pure, deterministic evaluation of every link-level quantity: effective
channels through the surface, per-user SINR and RF harvest, the logistic
harvester curve and its closed-form inverse, sum rate, the system power
model, the resulting energy efficiency, and the thirteen feasibility
constraints of the joint design problem.

Conventions
-----------
* All powers are in watts internally; dBm appears only at the config boundary.
* Vectors are column vectors; ``w`` is scaled so that ``||w||^2`` is watts.
* ``side`` arguments take ``"r"`` (reflection zone) or ``"t"`` (re-transmission
  zone).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "SystemParams",
    "EhParams",
    "LinearEhParams",
    "ChannelSet",
    "StarRisConfig",
    "BeamformingSet",
    "PowerSplitSet",
    "ConstraintReport",
    "LinkMetrics",
    "DegenerateInputWarning",
    "InfeasibleTargetError",
    "CONSTRAINT_TOL",
    "dbm_to_watt",
    "ris_diagonal",
    "effective_channel",
    "sinr",
    "harvested_rf_power",
    "nonlinear_eh",
    "inverse_eh",
    "sum_rate",
    "ris_output_power",
    "total_power",
    "energy_efficiency",
    "check_constraints",
    "link_metrics",
    "neutral_ris_config",
]

# Absolute feasibility tolerance, natural units (matches SDP solver accuracy).
CONSTRAINT_TOL = 1e-6


class DegenerateInputWarning(UserWarning):
    """Raised-as-warning when a SINR denominator is exactly zero."""


class InfeasibleTargetError(ValueError):
    """Harvest target at or above the saturation level can never be met."""


def dbm_to_watt(x_dbm: float) -> float:
    """Convert dBm to watts: 30 dBm -> 1 W."""
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def _as_float_array(x, name: str, length: int | None = None) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if length is not None and arr.shape != (length,):
        raise ValueError(f"{name}: expected shape ({length},), got {arr.shape}")
    return arr


@dataclass
class SystemParams:
    """Static network parameters (antenna counts, budgets, noise floors, circuits).

    ``sigma2_awgn_*``, ``delta2_*``, ``gamma_min_*`` and ``e_min_*`` are
    per-user arrays; scalars broadcast at construction.
    """

    n_tx: int
    m_elements: int
    n_active_max: int
    u_r: int
    u_t: int
    p_bs_max: float
    p_i_max: float
    a_max: float
    sigma2_ris_r: float
    sigma2_ris_t: float
    sigma2_awgn_r: np.ndarray
    sigma2_awgn_t: np.ndarray
    delta2_r: np.ndarray
    delta2_t: np.ndarray
    gamma_min_r: np.ndarray
    gamma_min_t: np.ndarray
    e_min_r: np.ndarray
    e_min_t: np.ndarray
    p_cir_bs: float
    p_cir_user: float
    p_c: float
    p_dc: float
    zeta: float
    # "active" counts only switched-on elements in the surface power budget;
    # "all" reproduces the lifted-form bookkeeping that charges every element.
    asr_count_mode: str = "active"
    # "passive" drops the amplifier terms from the power model (unit-gain surface).
    ris_mode: str = "active"

    def __post_init__(self):
        if self.n_tx < 1 or self.m_elements < 1:
            raise ValueError("n_tx and m_elements must be >= 1")
        if not (1 <= self.n_active_max <= self.m_elements):
            raise ValueError("need 1 <= n_active_max <= m_elements")
        if self.u_r < 0 or self.u_t < 0:
            raise ValueError("user counts must be >= 0")
        if self.zeta < 1.0:
            raise ValueError("zeta (inverse amplifier efficiency) must be >= 1")
        if self.asr_count_mode not in ("active", "all"):
            raise ValueError(f"unknown asr_count_mode {self.asr_count_mode!r}")
        if self.ris_mode not in ("active", "passive"):
            raise ValueError(f"unknown ris_mode {self.ris_mode!r}")
        for name, n in (("r", self.u_r), ("t", self.u_t)):
            for attr in ("sigma2_awgn", "delta2", "gamma_min", "e_min"):
                key = f"{attr}_{name}"
                val = np.asarray(getattr(self, key), dtype=float)
                if val.ndim == 0:
                    val = np.full(n, float(val))
                if val.shape != (n,):
                    raise ValueError(f"{key}: expected {n} entries, got shape {val.shape}")
                if np.any(val < 0):
                    raise ValueError(f"{key} entries must be >= 0")
                setattr(self, key, val)
        for key in ("p_bs_max", "p_i_max", "a_max", "sigma2_ris_r", "sigma2_ris_t",
                    "p_cir_bs", "p_cir_user", "p_c", "p_dc"):
            if getattr(self, key) < 0:
                raise ValueError(f"{key} must be >= 0")

    def users(self, side: str) -> int:
        return self.u_r if side == "r" else self.u_t

    def sigma2_ris(self, side: str) -> float:
        return self.sigma2_ris_r if side == "r" else self.sigma2_ris_t


@dataclass
class EhParams:
    """Logistic (non-linear) harvester constants.

    ``m_sat`` is the saturation harvest in watts; ``a_curve`` (1/W) and
    ``b_curve`` (W) shape the circuit response.  ``omega`` is the zero-input
    correction so that zero RF in gives exactly zero harvest out.
    """

    m_sat: float
    a_curve: float
    b_curve: float

    def __post_init__(self):
        if self.m_sat <= 0 or self.a_curve <= 0 or self.b_curve <= 0:
            raise ValueError("m_sat, a_curve and b_curve must be > 0")

    @property
    def omega(self) -> float:
        return 1.0 / (1.0 + math.exp(self.a_curve * self.b_curve))


@dataclass
class LinearEhParams:
    """Idealized linear harvester, E = mu * P_in (benchmarking only)."""

    mu: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.mu <= 1.0):
            raise ValueError("mu must be in (0, 1]")


@dataclass
class ChannelSet:
    """One realization of all complex links for a network snapshot.

    ``g_bs_ris`` is M x N_t; per-user direct vectors have length N_t and
    per-user surface-side vectors length M.  Rows index users.
    """

    g_bs_ris: np.ndarray
    h_direct_r: np.ndarray
    h_direct_t: np.ndarray
    h_ris_r: np.ndarray
    h_ris_t: np.ndarray

    def __post_init__(self):
        self.g_bs_ris = np.asarray(self.g_bs_ris, dtype=complex)
        m, n_tx = self.g_bs_ris.shape
        for key, cols in (("h_direct_r", n_tx), ("h_direct_t", n_tx),
                          ("h_ris_r", m), ("h_ris_t", m)):
            arr = np.asarray(getattr(self, key), dtype=complex)
            arr = arr.reshape(-1, cols) if arr.size else arr.reshape(0, cols)
            if not np.all(np.isfinite(arr.view(float))):
                raise ValueError(f"{key} has non-finite entries")
            setattr(self, key, arr)
        if not np.all(np.isfinite(self.g_bs_ris.view(float))):
            raise ValueError("g_bs_ris has non-finite entries")
        if self.h_direct_r.shape[0] != self.h_ris_r.shape[0]:
            raise ValueError("r-side direct/surface user counts differ")
        if self.h_direct_t.shape[0] != self.h_ris_t.shape[0]:
            raise ValueError("t-side direct/surface user counts differ")

    @property
    def m_elements(self) -> int:
        return self.g_bs_ris.shape[0]

    @property
    def n_tx(self) -> int:
        return self.g_bs_ris.shape[1]

    def direct(self, side: str) -> np.ndarray:
        return self.h_direct_r if side == "r" else self.h_direct_t

    def ris_side(self, side: str) -> np.ndarray:
        return self.h_ris_r if side == "r" else self.h_ris_t


@dataclass
class StarRisConfig:
    """Per-element surface state: amplification gain, on/off flag, split and phases.

    Energy conservation ties the two amplitude splits: beta_r + beta_t = 1
    for every element.
    """

    gain: np.ndarray
    on: np.ndarray
    beta_r: np.ndarray
    beta_t: np.ndarray
    phi_r: np.ndarray
    phi_t: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.gain)).shape[0]
        self.gain = _as_float_array(self.gain, "gain", m)
        self.on = np.atleast_1d(np.asarray(self.on, dtype=int))
        if self.on.shape != (m,):
            raise ValueError("on: length mismatch with gain")
        if not np.all((self.on == 0) | (self.on == 1)):
            raise ValueError("on entries must be binary")
        for key in ("beta_r", "beta_t", "phi_r", "phi_t"):
            setattr(self, key, _as_float_array(getattr(self, key), key, m))
        if np.max(np.abs(self.beta_r + self.beta_t - 1.0)) > 1e-12:
            raise ValueError("beta_r + beta_t must equal 1 per element")

    @property
    def m_elements(self) -> int:
        return self.gain.shape[0]

    @property
    def n_on(self) -> int:
        return int(np.sum(self.on))

    def beta(self, side: str) -> np.ndarray:
        return self.beta_r if side == "r" else self.beta_t

    def phi(self, side: str) -> np.ndarray:
        return self.phi_r if side == "r" else self.phi_t


@dataclass
class BeamformingSet:
    """Per-user transmit vectors; rows of ``w_r``/``w_t`` have length N_t."""

    w_r: np.ndarray
    w_t: np.ndarray

    def __post_init__(self):
        self.w_r = np.atleast_2d(np.asarray(self.w_r, dtype=complex))
        self.w_t = np.atleast_2d(np.asarray(self.w_t, dtype=complex))

    def side(self, side: str) -> np.ndarray:
        return self.w_r if side == "r" else self.w_t

    @property
    def total_transmit_power(self) -> float:
        return float(np.sum(np.abs(self.w_r) ** 2) + np.sum(np.abs(self.w_t) ** 2))


@dataclass
class PowerSplitSet:
    """Per-user split: fraction rho routed to decoding, 1 - rho to harvesting."""

    rho_r: np.ndarray
    rho_t: np.ndarray

    def __post_init__(self):
        self.rho_r = _as_float_array(self.rho_r, "rho_r")
        self.rho_t = _as_float_array(self.rho_t, "rho_t")

    def side(self, side: str) -> np.ndarray:
        return self.rho_r if side == "r" else self.rho_t


@dataclass
class ConstraintReport:
    """Signed feasibility margins for constraints 1..13 (positive = slack)."""

    satisfied: dict
    margin: dict
    violation_count: int

    def violated(self) -> list[int]:
        return [x for x in sorted(self.satisfied) if not self.satisfied[x]]


def ris_diagonal(ris: StarRisConfig, side: str) -> np.ndarray:
    """Diagonal of A F Theta_side as a length-M complex vector."""
    return (ris.gain * ris.on * np.sqrt(ris.beta(side))
            * np.exp(1j * ris.phi(side)))


def effective_channel(ch: ChannelSet, ris: StarRisConfig, side: str, user: int) -> np.ndarray:
    """End-to-end channel h_bar = h_direct + G^H (A F Theta)^H h_surface.

    With every element switched off this is exactly the direct channel.
    """
    if ris.m_elements != ch.m_elements:
        raise ValueError("surface size does not match channel set")
    gamma = ris_diagonal(ris, side)
    h_s = ch.ris_side(side)[user]
    return ch.direct(side)[user] + ch.g_bs_ris.conj().T @ (np.conj(gamma) * h_s)


def _amplified_noise_gain(ch: ChannelSet, ris: StarRisConfig, side: str, user: int) -> float:
    """||h^H A F Theta||^2: gain seen by the surface noise at this user."""
    gamma = ris_diagonal(ris, side)
    h_s = ch.ris_side(side)[user]
    return float(np.sum(np.abs(h_s) ** 2 * np.abs(gamma) ** 2))


def _received_beam_powers(ch: ChannelSet, ris: StarRisConfig, bf: BeamformingSet,
                          side: str, user: int) -> np.ndarray:
    """|h_bar^H w_k|^2 for every same-side beam k."""
    h_bar = effective_channel(ch, ris, side, user)
    w = bf.side(side)
    return np.abs(w.conj() @ h_bar) ** 2 if w.size else np.zeros(0)


def sinr(ch: ChannelSet, ris: StarRisConfig, bf: BeamformingSet, ps: PowerSplitSet,
         params: SystemParams, side: str, user: int) -> float:
    """Decoding SINR of one user, including amplified surface noise and the
    split-independent processing noise delta^2."""
    rho = float(ps.side(side)[user])
    powers = _received_beam_powers(ch, ris, bf, side, user)
    signal = rho * powers[user]
    interference = rho * (np.sum(powers) - powers[user])
    amp_noise = rho * params.sigma2_ris(side) * _amplified_noise_gain(ch, ris, side, user)
    awgn = rho * float(getattr(params, f"sigma2_awgn_{side}")[user])
    delta2 = float(getattr(params, f"delta2_{side}")[user])
    denom = interference + amp_noise + awgn + delta2
    if denom == 0.0:
        if signal != 0.0:
            warnings.warn("SINR denominator is zero with nonzero signal",
                          DegenerateInputWarning, stacklevel=2)
        return 0.0
    return float(signal / denom)


def harvested_rf_power(ch: ChannelSet, ris: StarRisConfig, bf: BeamformingSet,
                       ps: PowerSplitSet, params: SystemParams, side: str,
                       user: int) -> float:
    """RF power routed to the harvester: (1-rho) times all same-side beams
    plus the amplified surface noise."""
    rho = float(ps.side(side)[user])
    powers = _received_beam_powers(ch, ris, bf, side, user)
    amp_noise = params.sigma2_ris(side) * _amplified_noise_gain(ch, ris, side, user)
    return float((1.0 - rho) * (np.sum(powers) + amp_noise))


def nonlinear_eh(p_in: float, eh) -> float:
    """Harvested power through the logistic curve, zero-corrected so that
    nonlinear_eh(0) == 0 exactly.  Monotone increasing, saturating at m_sat."""
    if isinstance(eh, LinearEhParams):
        return eh.mu * float(p_in)
    if p_in < 0:
        raise ValueError("input RF power must be >= 0")
    psi = eh.m_sat / (1.0 + math.exp(-eh.a_curve * (float(p_in) - eh.b_curve)))
    omega = eh.omega
    return (psi - eh.m_sat * omega) / (1.0 - omega)


def inverse_eh(e_target: float, eh) -> float:
    """RF input that yields the requested harvest; exact inverse of
    :func:`nonlinear_eh` on [0, m_sat)."""
    if isinstance(eh, LinearEhParams):
        if e_target < 0:
            raise ValueError("harvest target must be >= 0")
        return float(e_target) / eh.mu
    if e_target < 0:
        raise ValueError("harvest target must be >= 0")
    if e_target >= eh.m_sat:
        raise InfeasibleTargetError(
            f"harvest target {e_target} W is at or above saturation {eh.m_sat} W")
    omega = eh.omega
    psi = float(e_target) * (1.0 - omega) + eh.m_sat * omega
    return eh.b_curve - math.log((eh.m_sat - psi) / psi) / eh.a_curve


def sum_rate(ch: ChannelSet, ris: StarRisConfig, bf: BeamformingSet,
             ps: PowerSplitSet, params: SystemParams) -> float:
    """Total rate over both zones, bits/s/Hz."""
    rate = 0.0
    for side in ("r", "t"):
        for u in range(params.users(side)):
            rate += math.log2(1.0 + sinr(ch, ris, bf, ps, params, side, u))
    return rate


def ris_output_power(ch: ChannelSet, ris: StarRisConfig, bf: BeamformingSet,
                     params: SystemParams) -> float:
    """Radiated power of the surface: amplified beams plus amplified noise."""
    p = 0.0
    for side in ("r", "t"):
        gamma = ris_diagonal(ris, side)
        gw = ch.g_bs_ris @ bf.side(side).T  # (M, U) columns are G w_k
        if gw.size:
            p += float(np.sum(np.abs(gamma[:, None] * gw) ** 2))
        p += params.sigma2_ris(side) * float(np.sum(np.abs(gamma) ** 2))
    return p


def _asr_element_count(ris: StarRisConfig, params: SystemParams) -> int:
    return ris.n_on if params.asr_count_mode == "active" else params.m_elements


def total_power(ch: ChannelSet, ris: StarRisConfig, bf: BeamformingSet,
                params: SystemParams) -> float:
    """System power draw: transmit, circuits, and the surface budget."""
    p_cir = params.p_cir_bs + (params.u_r + params.u_t) * params.p_cir_user
    n_el = _asr_element_count(ris, params)
    if params.ris_mode == "passive":
        p_asr = n_el * params.p_c
    else:
        p_asr = n_el * (params.p_c + params.p_dc) + params.zeta * ris_output_power(ch, ris, bf, params)
    return bf.total_transmit_power + p_cir + p_asr


def energy_efficiency(ch: ChannelSet, ris: StarRisConfig, bf: BeamformingSet,
                      ps: PowerSplitSet, params: SystemParams) -> float:
    """Sum rate per watt of total consumption, bits/s/Hz/W."""
    return sum_rate(ch, ris, bf, ps, params) / total_power(ch, ris, bf, params)


@dataclass
class LinkMetrics:
    """Convenience bundle of everything the environment and bench report."""

    sinr_r: np.ndarray
    sinr_t: np.ndarray
    harvested_rf_r: np.ndarray
    harvested_rf_t: np.ndarray
    eh_r: np.ndarray
    eh_t: np.ndarray
    rate: float
    p_out: float
    power: float
    ee: float

    def sinr_side(self, side: str) -> np.ndarray:
        return self.sinr_r if side == "r" else self.sinr_t

    def eh_side(self, side: str) -> np.ndarray:
        return self.eh_r if side == "r" else self.eh_t


def link_metrics(ch: ChannelSet, ris: StarRisConfig, bf: BeamformingSet,
                 ps: PowerSplitSet, params: SystemParams, eh) -> LinkMetrics:
    """Evaluate every per-user and system-level quantity in one pass."""
    out = {}
    for side in ("r", "t"):
        n = params.users(side)
        out[f"sinr_{side}"] = np.array(
            [sinr(ch, ris, bf, ps, params, side, u) for u in range(n)])
        out[f"harvested_rf_{side}"] = np.array(
            [harvested_rf_power(ch, ris, bf, ps, params, side, u) for u in range(n)])
        out[f"eh_{side}"] = np.array(
            [nonlinear_eh(p, eh) for p in out[f"harvested_rf_{side}"]])
    rate = float(sum(math.log2(1.0 + g)
                     for g in np.concatenate([out["sinr_r"], out["sinr_t"]])))
    p_out = ris_output_power(ch, ris, bf, params)
    power = total_power(ch, ris, bf, params)
    return LinkMetrics(rate=rate, p_out=p_out, power=power, ee=rate / power, **out)


def _family_margin(values: np.ndarray) -> float:
    return float(np.min(values)) if values.size else float("inf")


def check_constraints(ch: ChannelSet, ris: StarRisConfig, bf: BeamformingSet,
                      ps: PowerSplitSet, params: SystemParams, eh,
                      tol: float = CONSTRAINT_TOL) -> ConstraintReport:
    """Evaluate constraints C1..C13 with signed margins; reports, never raises.

    A family over users or elements reports its worst (minimum) margin.
    ``satisfied`` uses an absolute tolerance of ``tol`` in natural units.
    """
    margin = {}

    gammas = {s: np.array([sinr(ch, ris, bf, ps, params, s, u)
                           for u in range(params.users(s))]) for s in ("r", "t")}
    margin[1] = _family_margin(gammas["r"] - params.gamma_min_r)
    margin[2] = _family_margin(gammas["t"] - params.gamma_min_t)

    for idx, side in ((3, "r"), (4, "t")):
        harvested = np.array([nonlinear_eh(
            harvested_rf_power(ch, ris, bf, ps, params, side, u), eh)
            for u in range(params.users(side))])
        margin[idx] = _family_margin(harvested - getattr(params, f"e_min_{side}"))

    margin[5] = params.p_bs_max - bf.total_transmit_power
    margin[6] = params.p_i_max - ris_output_power(ch, ris, bf, params)

    for idx, side in ((7, "r"), (8, "t")):
        rho = ps.side(side)
        margin[idx] = _family_margin(np.minimum(rho, 1.0 - rho))

    margin[9] = _family_margin(np.minimum(ris.gain, params.a_max - ris.gain))
    binary_dev = np.minimum(np.abs(ris.on), np.abs(ris.on - 1))
    margin[10] = -float(np.max(binary_dev)) if binary_dev.size else 0.0
    margin[11] = float(params.n_active_max - ris.n_on)

    beta_box = np.minimum(np.minimum(ris.beta_r, 1.0 - ris.beta_r),
                          np.minimum(ris.beta_t, 1.0 - ris.beta_t))
    conservation = float(np.max(np.abs(ris.beta_r + ris.beta_t - 1.0)))
    # Margin is the box slack when the conservation equality holds, else the
    # negative equality residual.
    margin[12] = _family_margin(beta_box) if conservation <= tol else -conservation

    phases = np.concatenate([ris.phi_r, ris.phi_t])
    margin[13] = _family_margin(np.minimum(phases, 2.0 * np.pi - phases))

    satisfied = {x: bool(m >= -tol) for x, m in margin.items()}
    return ConstraintReport(satisfied=satisfied, margin=margin,
                            violation_count=sum(not v for v in satisfied.values()))


def neutral_ris_config(params: SystemParams) -> StarRisConfig:
    """Feasible-by-construction start: first n_active_max elements on at half
    gain, even split, zero phases."""
    m = params.m_elements
    on = np.zeros(m, dtype=int)
    on[: params.n_active_max] = 1
    gain = np.full(m, 1.0 if params.ris_mode == "passive" else params.a_max / 2.0)
    return StarRisConfig(gain=gain, on=on,
                         beta_r=np.full(m, 0.5), beta_t=np.full(m, 0.5),
                         phi_r=np.zeros(m), phi_t=np.zeros(m))
