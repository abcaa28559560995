"""Episodic environment over the surface configuration.

One episode holds the channels and the transmit-side solution (beams and
splits from the convex stage) fixed; each step decodes a hybrid action into
a full surface state, scores it by energy efficiency with constraint-count
penalties, and re-encodes the observation.

The observation layout is versioned and published by :func:`state_layout`;
power-like entries are log10-compressed and clipped so the learner sees
O(1)-scale inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channels as chan
from .model import (
    BeamformingSet,
    ChannelSet,
    PowerSplitSet,
    StarRisConfig,
    SystemParams,
    check_constraints,
    effective_channel,
    link_metrics,
    neutral_ris_config,
)
from .rng import named_stream

__all__ = [
    "TaskSpec",
    "HybridAction",
    "Transition",
    "ReplayBuffer",
    "StepInfo",
    "SwiptEnv",
    "decode_action",
    "compute_reward",
    "state_layout",
    "encode_state",
]

STATE_LAYOUT_VERSION = 1
LOG_CLIP = 10.0  # power-like entries are log10(x) clipped to +/- this
# constraints owned by the transmit stage; they never contribute penalties
TRANSMIT_STAGE_CONSTRAINTS = frozenset({5, 7, 8})


@dataclass(frozen=True)
class TaskSpec:
    """A task is one placement of users plus one channel realization seed."""

    task_id: int
    placement_seed: int
    channel_seed: int
    geometry_overrides: dict | None = None


@dataclass
class HybridAction:
    """Raw two-head action: element-selection scores plus continuous knobs.

    ``continuous_raw`` is laid out [gain | beta_r | phi_r | phi_t], each of
    length M, entries in [-1, 1].
    """

    discrete_raw: np.ndarray
    continuous_raw: np.ndarray

    def __post_init__(self):
        self.discrete_raw = np.atleast_1d(np.asarray(self.discrete_raw, dtype=float))
        self.continuous_raw = np.clip(
            np.atleast_1d(np.asarray(self.continuous_raw, dtype=float)), -1.0, 1.0)
        if self.continuous_raw.shape[0] != 4 * self.discrete_raw.shape[0]:
            raise ValueError("continuous head must have 4M entries")

    def flat(self) -> np.ndarray:
        return np.concatenate([self.discrete_raw, self.continuous_raw])


@dataclass
class Transition:
    state: np.ndarray
    action: HybridAction
    reward: float
    next_state: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform batch sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._records: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._records)

    def add(self, transition: Transition) -> None:
        if len(self._records) < self.capacity:
            self._records.append(transition)
        else:
            self._records[self._next] = transition
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform mini-batch without replacement; never more than stored."""
        n = min(batch_size, len(self._records))
        idx = rng.choice(len(self._records), size=n, replace=False)
        return [self._records[i] for i in idx]


def decode_action(raw: HybridAction, params: SystemParams,
                  gain_override: float | None = None,
                  phase_override: tuple | None = None) -> StarRisConfig:
    """Map raw heads onto a surface state that satisfies the box, binary,
    budget, conservation and phase-domain constraints by construction.

    Element selection thresholds the scores at zero; when more than
    ``n_active_max`` elements come out on, the largest pre-threshold scores
    win (ties broken toward the lowest index).
    """
    m = params.m_elements
    if raw.discrete_raw.shape[0] != m:
        raise ValueError(f"discrete head must have {m} entries")
    scores = np.tanh(raw.discrete_raw)
    on = (scores > 0).astype(int)
    if on.sum() > params.n_active_max:
        order = np.lexsort((np.arange(m), -scores))
        on = np.zeros(m, dtype=int)
        on[order[: params.n_active_max]] = 1
    c = raw.continuous_raw
    gain = params.a_max * (c[0:m] + 1.0) / 2.0
    beta_r = (c[m:2 * m] + 1.0) / 2.0
    phi_r = np.mod(np.pi * (c[2 * m:3 * m] + 1.0), 2.0 * np.pi)
    phi_t = np.mod(np.pi * (c[3 * m:4 * m] + 1.0), 2.0 * np.pi)
    if gain_override is not None:
        gain = np.full(m, float(gain_override))
    if phase_override is not None:
        phi_r, phi_t = (np.asarray(p, dtype=float).copy() for p in phase_override)
    return StarRisConfig(gain=gain, on=on, beta_r=beta_r, beta_t=1.0 - beta_r,
                         phi_r=phi_r, phi_t=phi_t)


def compute_reward(ee: float, report) -> float:
    """Energy efficiency scaled by (1 - violation count); transmit-stage
    constraints (power budget and split boxes) never count."""
    v = sum(1 for x, ok in report.satisfied.items()
            if not ok and x not in TRANSMIT_STAGE_CONSTRAINTS)
    return float(ee) * (1.0 - v)


def _log_compress(x) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    return np.clip(np.log10(np.maximum(arr, 1e-30)), -LOG_CLIP, LOG_CLIP)


def state_layout(params: SystemParams) -> dict:
    """Versioned observation schema: ordered (name, offset, length) entries."""
    u = params.u_r + params.u_t
    m = params.m_elements
    entries = []
    offset = 0
    for name, length in [
        ("sinr", u),
        ("sinr_floor", u),
        ("harvest", u),
        ("harvest_floor", u),
        ("channels_re_im", u * 2 * params.n_tx),
        ("p_bs_max", 1),
        ("p_i_max", 1),
        ("prev_action", 5 * m),
        ("prev_reward", 1),
    ]:
        entries.append({"name": name, "offset": offset, "length": length})
        offset += length
    return {"version": STATE_LAYOUT_VERSION, "dim": offset, "entries": entries}


def encode_state(metrics, ch_eff: np.ndarray, params: SystemParams,
                 prev_action: np.ndarray, prev_reward: float,
                 channel_scale: float = 1.0) -> np.ndarray:
    """Assemble the observation per the published layout.

    ``ch_eff`` stacks the effective channels of the r-side users then the
    t-side users, one row per user.
    """
    floors_g = np.concatenate([params.gamma_min_r, params.gamma_min_t])
    floors_e = np.concatenate([params.e_min_r, params.e_min_t])
    sinrs = np.concatenate([metrics.sinr_r, metrics.sinr_t])
    harvests = np.concatenate([metrics.eh_r, metrics.eh_t])
    ch_block = (ch_eff * channel_scale).view(float).reshape(-1)
    return np.concatenate([
        _log_compress(sinrs),
        _log_compress(floors_g),
        _log_compress(harvests),
        _log_compress(floors_e),
        ch_block,
        _log_compress([params.p_bs_max]),
        _log_compress([params.p_i_max]),
        np.asarray(prev_action, dtype=float),
        [np.clip(prev_reward, -LOG_CLIP, LOG_CLIP)],
    ])


@dataclass
class StepInfo:
    report: object
    metrics: object
    ris: StarRisConfig
    step: int


class SwiptEnv:
    """Deterministic per-task environment; all stochasticity lives in the
    task seeds and the agent."""

    def __init__(self, params: SystemParams, eh, geometry: chan.Geometry,
                 fading: chan.FadingParams, episode_steps: int = 200,
                 gain_override: float | None = None,
                 phase_override_seed: int | None = None):
        self.params = params
        self.eh = eh
        self.geometry = geometry
        self.fading = fading
        self.episode_steps = int(episode_steps)
        self.gain_override = gain_override
        if phase_override_seed is not None:
            rng = named_stream(phase_override_seed, "phase-override")
            m = params.m_elements
            self.phase_override = (rng.uniform(0, 2 * np.pi, m),
                                   rng.uniform(0, 2 * np.pi, m))
        else:
            self.phase_override = None
        d_ref = float(np.linalg.norm(geometry.ris_pos - geometry.bs_pos))
        pl_ref = 10.0 ** (chan.path_loss_db(d_ref, fading.pathloss_exp_ris,
                                            fading.l0_db, fading.d0) / 10.0)
        self.channel_scale = 1.0 / np.sqrt(pl_ref)
        self._channel_cache: dict[tuple, ChannelSet] = {}
        self._bf: BeamformingSet | None = None
        self._ps: PowerSplitSet | None = None
        self.channel_set: ChannelSet | None = None
        self.ris_config: StarRisConfig | None = None
        self._prev_action = np.zeros(5 * params.m_elements)
        self._prev_reward = 0.0
        self._step_count = 0
        self._ready = False

    # ------------------------------------------------------------- channels

    def channels(self, task: TaskSpec) -> ChannelSet:
        """Deterministic channel realization for a task (cached)."""
        key = (task.placement_seed, task.channel_seed)
        if key not in self._channel_cache:
            geom = self.geometry
            if task.geometry_overrides:
                import dataclasses
                geom = dataclasses.replace(geom, **task.geometry_overrides)
            placed = chan.sample_positions(
                geom, self.params.u_r, self.params.u_t,
                named_stream(task.placement_seed, "positions"))
            import dataclasses
            fading = dataclasses.replace(self.fading, seed=task.channel_seed)
            self._channel_cache[key] = chan.build_channel_set(
                placed, fading, self.params)
        return self._channel_cache[key]

    def set_transmit(self, bf: BeamformingSet, ps: PowerSplitSet) -> None:
        """Install the beams and splits the episode evaluates against."""
        self._bf = bf
        self._ps = ps

    def _default_transmit(self, ch: ChannelSet):
        """Matched beams on the direct links at half power, even splits."""
        p = self.params
        share = 0.5 * p.p_bs_max / max(p.u_r + p.u_t, 1)

        def beams(h_rows):
            out = np.zeros_like(h_rows)
            for i, h in enumerate(h_rows):
                norm = np.linalg.norm(h)
                direction = h / norm if norm > 0 else np.eye(p.n_tx)[0]
                out[i] = np.sqrt(share) * direction
            return out

        bf = BeamformingSet(w_r=beams(ch.h_direct_r), w_t=beams(ch.h_direct_t))
        ps = PowerSplitSet(rho_r=np.full(p.u_r, 0.5), rho_t=np.full(p.u_t, 0.5))
        return bf, ps

    # ------------------------------------------------------------- lifecycle

    def _apply_overrides(self, ris: StarRisConfig) -> StarRisConfig:
        if self.gain_override is not None:
            ris.gain[:] = self.gain_override
        if self.phase_override is not None:
            ris.phi_r[:] = self.phase_override[0]
            ris.phi_t[:] = self.phase_override[1]
        return ris

    def reset(self, task: TaskSpec) -> np.ndarray:
        self.channel_set = self.channels(task)
        if self._bf is None:
            self._bf, self._ps = self._default_transmit(self.channel_set)
        self.ris_config = self._apply_overrides(neutral_ris_config(self.params))
        self._prev_action = np.zeros(5 * self.params.m_elements)
        self._prev_reward = 0.0
        self._step_count = 0
        self._ready = True
        return self._observe()

    def _observe(self) -> np.ndarray:
        metrics = link_metrics(self.channel_set, self.ris_config, self._bf,
                               self._ps, self.params, self.eh)
        ch_eff = np.array([
            effective_channel(self.channel_set, self.ris_config, side, u)
            for side in ("r", "t") for u in range(self.params.users(side))])
        if ch_eff.size == 0:
            ch_eff = np.zeros((0, self.params.n_tx), dtype=complex)
        return encode_state(metrics, ch_eff, self.params, self._prev_action,
                            self._prev_reward, self.channel_scale)

    def step(self, action: HybridAction):
        if not self._ready:
            raise RuntimeError("step() before reset()")
        self.ris_config = self._apply_overrides(
            decode_action(action, self.params))
        metrics = link_metrics(self.channel_set, self.ris_config, self._bf,
                               self._ps, self.params, self.eh)
        report = check_constraints(self.channel_set, self.ris_config, self._bf,
                                   self._ps, self.params, self.eh)
        reward = compute_reward(metrics.ee, report)
        self._prev_action = action.flat()
        self._prev_reward = reward
        self._step_count += 1
        info = StepInfo(report=report, metrics=metrics, ris=self.ris_config,
                        step=self._step_count)
        return self._observe(), reward, info

    @property
    def state_dim(self) -> int:
        return state_layout(self.params)["dim"]

    @property
    def transmit(self):
        return self._bf, self._ps
