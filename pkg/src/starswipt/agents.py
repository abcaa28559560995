"""Hybrid discrete/continuous actor-critic learner.

A deterministic-policy actor-critic drives the element-selection head (its
tanh scores are thresholded by the environment decoder), while a max-entropy
stochastic actor-critic with twin critics drives the continuous gain/split/
phase head.  Both share the replay buffer and the environment and are
updated every step; target networks track their online counterparts through
soft mixing.

The gradient computations are pure functions of explicit networks so the
meta-learning layer can apply them to adapted parameter copies.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .env import HybridAction, ReplayBuffer, SwiptEnv, TaskSpec, Transition
from .nets import Mlp
from .rng import named_stream

__all__ = [
    "AgentHyper",
    "MdsAgent",
    "TrainingDivergedError",
    "TrainingLog",
    "select_action",
    "ddpg_targets",
    "ddpg_critic_grad",
    "ddpg_critic_update",
    "ddpg_actor_grad",
    "ddpg_actor_update",
    "sac_targets",
    "sac_critic_grad",
    "sac_critic_update",
    "sac_actor_grad",
    "sac_actor_update",
    "soft_update",
    "mds_train",
]

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class AgentHyper:
    """Learning configuration; everything the update rules parameterize."""

    discount: float = 0.95
    entropy_weight: float = 0.2
    lr_critic: float = 1e-3
    lr_actor: float = 1e-4
    lr_sac_actor: float = 1e-4
    tau_soft: float = 0.005
    batch_size: int = 64
    buffer_capacity: int = 100_000
    noise_scale: float = 0.1
    noise_decay: float = 0.999
    hidden: tuple = (256, 256)
    grad_clip: float | None = 10.0  # global-norm cap on each update step

    def __post_init__(self):
        if not (0.0 < self.discount <= 1.0):
            raise ValueError("discount must be in (0, 1]")
        if self.entropy_weight < 0:
            raise ValueError("entropy weight must be >= 0")
        self.hidden = tuple(int(h) for h in self.hidden)


class MdsAgent:
    """Nine networks plus their hyper-parameters and private random streams."""

    def __init__(self, state_dim: int, m_elements: int, hyper: AgentHyper,
                 seed: int = 0):
        self.state_dim = int(state_dim)
        self.m_elements = int(m_elements)
        self.hyper = hyper
        self.seed = int(seed)
        h = hyper.hidden
        init = named_stream(seed, "net-init")
        self.ddpg_actor = Mlp((state_dim, *h, m_elements), out_act="tanh", rng=init)
        self.ddpg_critic = Mlp((state_dim + m_elements, *h, 1), rng=init)
        self.ddpg_target_actor = self.ddpg_actor.copy()
        self.ddpg_target_critic = self.ddpg_critic.copy()
        cont = 4 * m_elements
        self.sac_actor = Mlp((state_dim, *h, 2 * cont), rng=init)
        # start the continuous policy wide (sigma = 0.3, state-independent) so
        # the early episodes are genuinely exploratory rather than one
        # arbitrary deterministic act
        spread_raw = math.atanh(
            2.0 * (math.log(0.3) - LOG_STD_MIN) / (LOG_STD_MAX - LOG_STD_MIN) - 1.0)
        self.sac_actor._weights[-1][:, cont:] = 0.0
        self.sac_actor._biases[-1][cont:] = spread_raw
        self.sac_critic1 = Mlp((state_dim + cont, *h, 1), rng=init)
        self.sac_critic2 = Mlp((state_dim + cont, *h, 1), rng=init)
        self.sac_target_critic1 = self.sac_critic1.copy()
        self.sac_target_critic2 = self.sac_critic2.copy()
        self.noise_scale = hyper.noise_scale
        self._rng_noise = named_stream(seed, "ddpg-noise")
        self._rng_sample = named_stream(seed, "sac-sample")
        self._rng_batch = named_stream(seed, "batch")

    # network bundles, keyed the way checkpoints store them
    def online_nets(self) -> dict:
        return {"ddpg_actor": self.ddpg_actor, "ddpg_critic": self.ddpg_critic,
                "sac_actor": self.sac_actor, "sac_critic1": self.sac_critic1,
                "sac_critic2": self.sac_critic2}

    def target_nets(self) -> dict:
        return {"ddpg_target_actor": self.ddpg_target_actor,
                "ddpg_target_critic": self.ddpg_target_critic,
                "sac_target_critic1": self.sac_target_critic1,
                "sac_target_critic2": self.sac_target_critic2}

    def all_nets(self) -> dict:
        return {**self.online_nets(), **self.target_nets()}


# --------------------------------------------------------------- action heads

def _split_sac_head(out: np.ndarray, m_elements: int):
    cont = 4 * m_elements
    mean = out[:, :cont]
    s_raw = out[:, cont:]
    t = np.tanh(s_raw)
    log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (t + 1.0)
    dlog_std = 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t)
    return mean, log_std, dlog_std


def _squashed_sample(mean, log_std, eps):
    """a = tanh(mean + eps * sigma) and its log-density under the policy."""
    sigma = np.exp(log_std)
    u = mean + eps * sigma
    a = np.tanh(u)
    log_pi = np.sum(
        -0.5 * eps ** 2 - log_std - 0.5 * math.log(2 * math.pi)
        - np.log(1.0 - a ** 2 + SQUASH_EPS), axis=1)
    return a, u, log_pi


def select_action(agent: MdsAgent, state: np.ndarray, explore: bool) -> HybridAction:
    """Deterministic evaluation unless ``explore``: Gaussian score noise on
    the selection head, a reparameterized squashed draw on the continuous
    head."""
    state = np.atleast_2d(state)
    discrete = agent.ddpg_actor.forward(state)[0]
    if explore and agent.noise_scale > 0:
        discrete = discrete + agent.noise_scale * agent._rng_noise.standard_normal(
            agent.m_elements)
    discrete = np.clip(discrete, -1.0, 1.0)
    out = agent.sac_actor.forward(state)
    mean, log_std, _ = _split_sac_head(out, agent.m_elements)
    if explore:
        eps = agent._rng_sample.standard_normal(mean.shape)
        cont, _, _ = _squashed_sample(mean, log_std, eps)
    else:
        cont = np.tanh(mean)
    return HybridAction(discrete_raw=discrete, continuous_raw=cont[0])


# ----------------------------------------------------------------- batch utils

def _stack_batch(batch: list[Transition]):
    states = np.stack([t.state for t in batch])
    next_states = np.stack([t.next_state for t in batch])
    rewards = np.array([t.reward for t in batch])
    discrete = np.stack([t.action.discrete_raw for t in batch])
    cont = np.stack([t.action.continuous_raw for t in batch])
    return states, discrete, cont, rewards, next_states


def _critic_value_and_action_grad(critic: Mlp, states, actions):
    """q(s, a) rows plus dq/da rows (parameters untouched)."""
    x = np.concatenate([states, actions], axis=1)
    q, cache = critic.forward_cache(x)
    _, grad_x = critic.backward(cache, np.ones_like(q))
    return q[:, 0], grad_x[:, states.shape[1]:]


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise TrainingDivergedError(f"non-finite {what}")


def _clipped(grad: np.ndarray, clip: float | None) -> np.ndarray:
    if clip is None:
        return grad
    norm = float(np.linalg.norm(grad))
    return grad if norm <= clip else grad * (clip / norm)


# ----------------------------------------------------------- selection learner

def ddpg_targets(batch: list[Transition], agent: MdsAgent,
                 target_actor: Mlp | None = None,
                 target_critic: Mlp | None = None) -> np.ndarray:
    """y = r + discount * q_target(s', mu_target(s')); target networks only."""
    target_actor = target_actor or agent.ddpg_target_actor
    target_critic = target_critic or agent.ddpg_target_critic
    states, _, _, rewards, next_states = _stack_batch(batch)
    next_actions = target_actor.forward(next_states)
    q_next = target_critic.forward(
        np.concatenate([next_states, next_actions], axis=1))[:, 0]
    return rewards + agent.hyper.discount * q_next


def ddpg_critic_grad(batch, agent, critic: Mlp | None = None,
                     targets: np.ndarray | None = None):
    """Mean-squared Bellman error and its parameter gradient."""
    critic = critic or agent.ddpg_critic
    y = ddpg_targets(batch, agent) if targets is None else targets
    states, discrete, _, _, _ = _stack_batch(batch)
    x = np.concatenate([states, discrete], axis=1)
    q, cache = critic.forward_cache(x)
    resid = q[:, 0] - y
    loss = float(np.mean(resid ** 2))
    _check_finite(loss, "selection critic loss")
    grad, _ = critic.backward(cache, (2.0 * resid / len(batch))[:, None])
    return loss, grad


def ddpg_critic_update(batch, agent) -> float:
    loss, grad = ddpg_critic_grad(batch, agent)
    agent.ddpg_critic.axpy(-agent.hyper.lr_critic,
                           _clipped(grad, agent.hyper.grad_clip))
    return loss


def ddpg_actor_grad(batch, agent, actor: Mlp | None = None,
                    critic: Mlp | None = None):
    """Mean critic value of the actor's own action, with its ascent gradient."""
    actor = actor or agent.ddpg_actor
    critic = critic or agent.ddpg_critic
    states, _, _, _, _ = _stack_batch(batch)
    actions, cache = actor.forward_cache(states)
    q, dq_da = _critic_value_and_action_grad(critic, states, actions)
    objective = float(np.mean(q))
    _check_finite(objective, "selection actor objective")
    grad, _ = actor.backward(cache, dq_da / len(batch))
    return objective, grad


def ddpg_actor_update(batch, agent) -> float:
    objective, grad = ddpg_actor_grad(batch, agent)
    # ascent on q
    agent.ddpg_actor.axpy(+agent.hyper.lr_actor,
                          _clipped(grad, agent.hyper.grad_clip))
    return objective


# ------------------------------------------------------------ continuous learner

def sac_targets(batch, agent, eps: np.ndarray | None = None,
                actor: Mlp | None = None) -> np.ndarray:
    """Twin-min bootstrapped target with the entropy bonus of the next action."""
    actor = actor or agent.sac_actor
    states, _, _, rewards, next_states = _stack_batch(batch)
    out = actor.forward(next_states)
    mean, log_std, _ = _split_sac_head(out, agent.m_elements)
    if eps is None:
        eps = agent._rng_sample.standard_normal(mean.shape)
    a_next, _, log_pi = _squashed_sample(mean, log_std, eps)
    q1 = agent.sac_target_critic1.forward(
        np.concatenate([next_states, a_next], axis=1))[:, 0]
    q2 = agent.sac_target_critic2.forward(
        np.concatenate([next_states, a_next], axis=1))[:, 0]
    q_min = np.minimum(q1, q2)
    return rewards + agent.hyper.discount * (
        q_min - agent.hyper.entropy_weight * log_pi)


def sac_critic_grad(batch, agent, critic: Mlp, targets: np.ndarray):
    states, _, cont, _, _ = _stack_batch(batch)
    x = np.concatenate([states, cont], axis=1)
    q, cache = critic.forward_cache(x)
    resid = q[:, 0] - targets
    loss = float(np.mean(resid ** 2))
    _check_finite(loss, "continuous critic loss")
    grad, _ = critic.backward(cache, (2.0 * resid / len(batch))[:, None])
    return loss, grad


def sac_critic_update(batch, agent, eps: np.ndarray | None = None):
    """Update both critics against the same target; returns (loss1, loss2)."""
    y = sac_targets(batch, agent, eps=eps)
    loss1, grad1 = sac_critic_grad(batch, agent, agent.sac_critic1, y)
    loss2, grad2 = sac_critic_grad(batch, agent, agent.sac_critic2, y)
    agent.sac_critic1.axpy(-agent.hyper.lr_critic,
                           _clipped(grad1, agent.hyper.grad_clip))
    agent.sac_critic2.axpy(-agent.hyper.lr_critic,
                           _clipped(grad2, agent.hyper.grad_clip))
    return loss1, loss2


def sac_actor_grad(batch, agent, actor: Mlp | None = None,
                   critic1: Mlp | None = None, critic2: Mlp | None = None,
                   eps: np.ndarray | None = None):
    """Entropy-regularized policy loss: mean(lambda*log_pi - min_i q_i) with
    the reparameterized squashed action; critics held fixed."""
    actor = actor or agent.sac_actor
    critic1 = critic1 or agent.sac_critic1
    critic2 = critic2 or agent.sac_critic2
    lam = agent.hyper.entropy_weight
    states, _, _, _, _ = _stack_batch(batch)
    out, cache = actor.forward_cache(states)
    mean, log_std, dlog_std = _split_sac_head(out, agent.m_elements)
    if eps is None:
        eps = agent._rng_sample.standard_normal(mean.shape)
    sigma = np.exp(log_std)
    a, u, log_pi = _squashed_sample(mean, log_std, eps)
    q1, dq1 = _critic_value_and_action_grad(critic1, states, a)
    q2, dq2 = _critic_value_and_action_grad(critic2, states, a)
    take1 = (q1 <= q2)[:, None]
    q_min = np.where(take1[:, 0], q1, q2)
    dq_da = np.where(take1, dq1, dq2)
    loss = float(np.mean(lam * log_pi - q_min))
    _check_finite(loss, "continuous actor loss")

    one_m_a2 = 1.0 - a ** 2
    dlogpi_du = 2.0 * a * one_m_a2 / (one_m_a2 + SQUASH_EPS)
    dq_du = dq_da * one_m_a2
    d_mean = lam * dlogpi_du - dq_du
    d_log_std = (lam * (dlogpi_du * eps * sigma - 1.0)
                 - dq_du * eps * sigma)
    grad_out = np.concatenate([d_mean, d_log_std * dlog_std], axis=1) / len(batch)
    grad, _ = actor.backward(cache, grad_out)
    return loss, grad


def sac_actor_update(batch, agent, eps: np.ndarray | None = None) -> float:
    loss, grad = sac_actor_grad(batch, agent, eps=eps)
    agent.sac_actor.axpy(-agent.hyper.lr_sac_actor,
                         _clipped(grad, agent.hyper.grad_clip))
    return loss


def soft_update(online: Mlp, target: Mlp, tau_soft: float) -> None:
    """target <- tau * online + (1 - tau) * target, elementwise."""
    target.theta *= (1.0 - tau_soft)
    target.theta += tau_soft * online.theta


def agent_update_step(agent: MdsAgent, batch) -> dict:
    """One full learning step: all five online networks plus soft targets."""
    losses = {}
    losses["ddpg_critic"] = ddpg_critic_update(batch, agent)
    losses["ddpg_actor"] = ddpg_actor_update(batch, agent)
    losses["sac_critic1"], losses["sac_critic2"] = sac_critic_update(batch, agent)
    losses["sac_actor"] = sac_actor_update(batch, agent)
    tau = agent.hyper.tau_soft
    soft_update(agent.ddpg_actor, agent.ddpg_target_actor, tau)
    soft_update(agent.ddpg_critic, agent.ddpg_target_critic, tau)
    soft_update(agent.sac_critic1, agent.sac_target_critic1, tau)
    soft_update(agent.sac_critic2, agent.sac_target_critic2, tau)
    return losses


# -------------------------------------------------------------------- training

def random_ris_init(env: SwiptEnv, seed: int):
    """Seeded random surface state for the first transmit-stage solve."""
    from .env import HybridAction, decode_action

    rng = named_stream(seed, "init-ris")
    m = env.params.m_elements
    raw = HybridAction(discrete_raw=rng.uniform(-1, 1, m),
                       continuous_raw=rng.uniform(-1, 1, 4 * m))
    return env._apply_overrides(decode_action(raw, env.params))


class TrainingLog:
    """Append-only per-episode records with a stable content digest."""

    def __init__(self):
        self.records: list[dict] = []

    def append(self, **record):
        self.records.append(record)

    def mean_reward(self, episodes=None):
        recs = self.records if episodes is None else self.records[episodes]
        return float(np.mean([r["mean_reward"] for r in recs])) if recs else float("nan")

    def digest(self) -> str:
        """sha256 of the canonical record stream, wallclock excluded."""
        payload = [{k: v for k, v in sorted(r.items()) if k != "wallclock_s"}
                   for r in self.records]
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for record in self.records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def run_episode(env: SwiptEnv, agent: MdsAgent, task: TaskSpec,
                buffer: ReplayBuffer | None, steps: int,
                explore: bool, update: bool):
    """Roll one episode; optionally store transitions and learn every step.

    Also tracks the best-reward surface state seen, which the trainer hands
    to the next episode's transmit-stage solve.
    """
    obs = env.reset(task)
    rewards = []
    ees = []
    violations = 0
    best_reward = -np.inf
    best_ris = env.ris_config
    for _ in range(steps):
        action = select_action(agent, obs, explore=explore)
        next_obs, reward, info = env.step(action)
        if buffer is not None:
            buffer.add(Transition(state=obs, action=action, reward=reward,
                                  next_state=next_obs))
        if update and buffer is not None and len(buffer) >= agent.hyper.batch_size:
            batch = buffer.sample(agent.hyper.batch_size, agent._rng_batch)
            agent_update_step(agent, batch)
        rewards.append(reward)
        ees.append(info.metrics.ee)
        penalized = [x for x in info.report.violated() if x not in (5, 7, 8)]
        violations += bool(penalized)
        if reward > best_reward:
            best_reward = reward
            best_ris = info.ris
        obs = next_obs
    return {"mean_reward": float(np.mean(rewards)),
            "mean_ee": float(np.mean(ees)),
            "violation_rate": violations / max(steps, 1),
            "best_ris": best_ris}


def mds_train(env: SwiptEnv, solver, task: TaskSpec, episodes: int,
              hyper: AgentHyper, seed: int = 0,
              agent: MdsAgent | None = None, explore: bool = True):
    """Alternating training loop: per episode, re-solve the transmit stage for
    the surface state carried from the previous episode, then roll and learn.

    An infeasible transmit stage keeps the last feasible beams and tags the
    episode record.
    """
    agent = agent or MdsAgent(env.state_dim, env.params.m_elements, hyper, seed)
    buffer = ReplayBuffer(hyper.buffer_capacity)
    log = TrainingLog()
    carried_ris = random_ris_init(env, seed)
    steps = env.episode_steps
    for episode in range(episodes):
        ch = env.channels(task)
        outcome = solver.solve(ch, carried_ris)
        if outcome.status == "infeasible":
            solver_status = "infeasible-reused-last"
        else:
            env.set_transmit(outcome.bf, outcome.ps)
            solver_status = outcome.status
        stats = run_episode(env, agent, task, buffer, steps,
                            explore=explore, update=True)
        # the alternation passes the episode's best surface state onward
        carried_ris = stats.pop("best_ris")
        agent.noise_scale *= hyper.noise_decay
        log.append(episode=episode, task_id=task.task_id,
                   solver_status=solver_status,
                   mu_star=float(outcome.mu_star), **stats)
    return agent, log
