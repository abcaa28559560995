"""Task-distribution meta-training and fast adaptation.

Tasks differ by user placement (and channel realization).  Meta-training
keeps one set of global networks; per task and episode it rolls out the
global policy, takes an inner gradient step on a support batch to form
task-adapted copies, and then moves the globals along the summed validation
gradients evaluated at those adapted copies (first-order treatment: the
adapted-point gradient stands in for the full derivative through the inner
step).  Adaptation re-runs the ordinary training loop from the meta-trained
initialization with its own replay memory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .agents import (
    AgentHyper,
    MdsAgent,
    TrainingLog,
    ddpg_actor_grad,
    ddpg_critic_grad,
    ddpg_targets,
    mds_train,
    run_episode,
    sac_actor_grad,
    sac_critic_grad,
    sac_targets,
    select_action,
    soft_update,
    _clipped,
)
from .env import ReplayBuffer, SwiptEnv, TaskSpec, Transition
from .nets import Mlp
from .rng import named_stream

__all__ = [
    "TaskSpec",
    "MetaState",
    "MetaHyper",
    "sample_tasks",
    "inner_update",
    "outer_update",
    "meta_train",
    "meta_adapt",
    "checkpoint_from_agent",
    "agent_from_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


@dataclass
class MetaHyper:
    """Meta-level knobs on top of the shared agent hyper-parameters."""

    inner_steps: int = 1
    inner_rate_scale: float = 0.1  # inner rates = outer rates * this
    adapt_rates_scale: float = 1.0


@dataclass
class MetaState:
    """Globals plus per-task adapted copies and replay memories."""

    agent: MdsAgent
    adapted: dict = field(default_factory=dict)   # task_id -> {name: Mlp}
    buffers: dict = field(default_factory=dict)   # task_id -> ReplayBuffer


def sample_tasks(z_count: int, rng: np.random.Generator) -> list[TaskSpec]:
    """Draw distinct placement/channel seed pairs for a task set."""
    if z_count < 1:
        raise ValueError("need at least one task")
    seeds = set()
    tasks = []
    while len(tasks) < z_count:
        placement = int(rng.integers(0, 2**31 - 1))
        channel = int(rng.integers(0, 2**31 - 1))
        if placement in seeds:
            continue
        seeds.add(placement)
        tasks.append(TaskSpec(task_id=len(tasks), placement_seed=placement,
                              channel_seed=channel))
    return tasks


# -------------------------------------------------------------- inner / outer

def _grads_at(agent: MdsAgent, nets: dict, batch, eps_key: int) -> dict:
    """Gradients of all five losses with the given online networks.

    Target networks and the bootstrapped targets always come from the
    globals; ``eps_key`` pins the reparameterization draws.
    """
    rng = named_stream(eps_key, "meta-eps")
    eps_shape = (len(batch), 4 * agent.m_elements)
    grads = {}
    y_ddpg = ddpg_targets(batch, agent)
    _, grads["ddpg_critic"] = ddpg_critic_grad(
        batch, agent, critic=nets["ddpg_critic"], targets=y_ddpg)
    _, grads["ddpg_actor"] = ddpg_actor_grad(
        batch, agent, actor=nets["ddpg_actor"], critic=nets["ddpg_critic"])
    y_sac = sac_targets(batch, agent, eps=rng.standard_normal(eps_shape))
    _, grads["sac_critic1"] = sac_critic_grad(batch, agent, nets["sac_critic1"], y_sac)
    _, grads["sac_critic2"] = sac_critic_grad(batch, agent, nets["sac_critic2"], y_sac)
    _, grads["sac_actor"] = sac_actor_grad(
        batch, agent, actor=nets["sac_actor"], critic1=nets["sac_critic1"],
        critic2=nets["sac_critic2"], eps=rng.standard_normal(eps_shape))
    return grads


_SIGNS = {"ddpg_critic": -1.0, "ddpg_actor": +1.0, "sac_critic1": -1.0,
          "sac_critic2": -1.0, "sac_actor": -1.0}


def _rates(agent: MdsAgent, scale: float) -> dict:
    h = agent.hyper
    return {"ddpg_critic": h.lr_critic * scale, "ddpg_actor": h.lr_actor * scale,
            "sac_critic1": h.lr_critic * scale, "sac_critic2": h.lr_critic * scale,
            "sac_actor": h.lr_sac_actor * scale}


def inner_update(agent: MdsAgent, support_batch, steps: int,
                 rate_scale: float, eps_key: int = 0) -> dict:
    """Adapt copies of the global online networks on the support batch.

    Globals are untouched; ``steps = 0`` returns exact copies.
    """
    adapted = {name: net.copy() for name, net in agent.online_nets().items()}
    rates = _rates(agent, rate_scale)
    for step in range(steps):
        grads = _grads_at(agent, adapted, support_batch, eps_key + step)
        for name, net in adapted.items():
            net.axpy(_SIGNS[name] * rates[name],
                     _clipped(grads[name], agent.hyper.grad_clip))
    return adapted


def outer_update(meta_state: MetaState, validation_batches: dict,
                 eps_key: int = 0) -> None:
    """Move the globals along the summed validation gradients taken at the
    adapted parameters (first-order); then refresh the target networks."""
    agent = meta_state.agent
    totals = {name: np.zeros(net.n_params)
              for name, net in agent.online_nets().items()}
    for task_id, batch in validation_batches.items():
        nets = meta_state.adapted.get(task_id)
        if nets is None:
            continue
        grads = _grads_at(agent, nets, batch, eps_key + task_id)
        for name in totals:
            totals[name] += grads[name]
    rates = _rates(agent, 1.0)
    for name, net in agent.online_nets().items():
        net.axpy(_SIGNS[name] * rates[name],
                 _clipped(totals[name], agent.hyper.grad_clip))
    tau = agent.hyper.tau_soft
    soft_update(agent.ddpg_actor, agent.ddpg_target_actor, tau)
    soft_update(agent.ddpg_critic, agent.ddpg_target_critic, tau)
    soft_update(agent.sac_critic1, agent.sac_target_critic1, tau)
    soft_update(agent.sac_critic2, agent.sac_target_critic2, tau)


# ------------------------------------------------------------------ train/adapt

def meta_train(tasks: list[TaskSpec], env_factory, solver, episodes: int,
               hyper: AgentHyper, meta_hyper: MetaHyper | None = None,
               seed: int = 0):
    """Meta-training over a task set; returns (checkpoint, log).

    Per episode and task: transmit-stage solve for the carried surface state,
    a stored rollout of the global policy, and an inner adaptation step on a
    support batch; afterwards one outer update on per-task validation batches.
    """
    from .agents import random_ris_init

    meta_hyper = meta_hyper or MetaHyper()
    envs = {t.task_id: env_factory(t) for t in tasks}
    any_env = next(iter(envs.values()))
    agent = MdsAgent(any_env.state_dim, any_env.params.m_elements, hyper, seed)
    state = MetaState(agent=agent)
    for t in tasks:
        state.buffers[t.task_id] = ReplayBuffer(hyper.buffer_capacity)
    carried = {t.task_id: random_ris_init(envs[t.task_id], seed + t.task_id)
               for t in tasks}
    rng_batch = named_stream(seed, "meta-batch")
    log = TrainingLog()
    for episode in range(episodes):
        val_batches = {}
        for t in tasks:
            env = envs[t.task_id]
            outcome = solver.solve(env.channels(t), carried[t.task_id])
            if outcome.status != "infeasible":
                env.set_transmit(outcome.bf, outcome.ps)
            stats = run_episode(env, agent, t, state.buffers[t.task_id],
                                env.episode_steps, explore=True, update=False)
            carried[t.task_id] = stats.pop("best_ris")
            buf = state.buffers[t.task_id]
            if len(buf) >= hyper.batch_size:
                support = buf.sample(hyper.batch_size, rng_batch)
                state.adapted[t.task_id] = inner_update(
                    agent, support, meta_hyper.inner_steps,
                    meta_hyper.inner_rate_scale,
                    eps_key=seed * 1_000_003 + episode * 131 + t.task_id)
                val_batches[t.task_id] = buf.sample(hyper.batch_size, rng_batch)
            log.append(episode=episode, task_id=t.task_id,
                       solver_status=outcome.status,
                       mu_star=float(outcome.mu_star), **stats)
        if val_batches:
            outer_update(state, val_batches,
                         eps_key=seed * 7_000_003 + episode * 977)
        agent.noise_scale *= hyper.noise_decay
    checkpoint = checkpoint_from_agent(agent, tasks=tasks)
    return checkpoint, log


def meta_adapt(checkpoint: dict, new_task: TaskSpec, env_factory, solver,
               episodes: int, meta_hyper: MetaHyper | None = None,
               seed: int = 0):
    """Fast adaptation on a fresh task starting from the meta-trained
    parameters, with its own replay memory; returns (agent, log)."""
    meta_hyper = meta_hyper or MetaHyper()
    env = env_factory(new_task)
    agent = agent_from_checkpoint(checkpoint, seed=seed)
    scale = meta_hyper.adapt_rates_scale
    if scale != 1.0:
        import dataclasses
        agent.hyper = dataclasses.replace(
            agent.hyper, lr_critic=agent.hyper.lr_critic * scale,
            lr_actor=agent.hyper.lr_actor * scale,
            lr_sac_actor=agent.hyper.lr_sac_actor * scale)
    if episodes == 0:
        return agent, TrainingLog()
    return mds_train(env, solver, new_task, episodes, agent.hyper,
                     seed=seed, agent=agent)


# ------------------------------------------------------------------ checkpoints

def checkpoint_from_agent(agent: MdsAgent, tasks=None) -> dict:
    """Self-describing container: nine parameter vectors, architecture
    descriptors, hyper-parameters, and the task manifest."""
    nets = agent.all_nets()
    return {
        "version": CHECKPOINT_VERSION,
        "state_dim": agent.state_dim,
        "m_elements": agent.m_elements,
        "hyper": vars(agent.hyper).copy(),
        "arch": {name: net.descriptor() for name, net in nets.items()},
        "params": {name: net.theta.copy() for name, net in nets.items()},
        "tasks": [vars(t).copy() for t in (tasks or [])],
    }


def agent_from_checkpoint(checkpoint: dict, seed: int = 0) -> MdsAgent:
    if checkpoint.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {checkpoint.get('version')}")
    hyper_kwargs = dict(checkpoint["hyper"])
    hyper = AgentHyper(**hyper_kwargs)
    agent = MdsAgent(checkpoint["state_dim"], checkpoint["m_elements"], hyper,
                     seed=seed)
    for name, net in agent.all_nets().items():
        expect = checkpoint["arch"][name]
        if net.descriptor() != expect:
            raise ValueError(f"architecture mismatch for {name}")
        net.set_theta(checkpoint["params"][name])
    return agent


def save_checkpoint(checkpoint: dict, path) -> None:
    manifest = {k: v for k, v in checkpoint.items() if k != "params"}
    manifest["hyper"] = {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in manifest["hyper"].items()}
    np.savez(path, manifest=json.dumps(manifest, sort_keys=True),
             **{f"theta_{name}": theta
                for name, theta in checkpoint["params"].items()})


def load_checkpoint(path) -> dict:
    with np.load(path, allow_pickle=False) as data:
        manifest = json.loads(str(data["manifest"]))
        params = {key[len("theta_"):]: data[key]
                  for key in data.files if key.startswith("theta_")}
    manifest["hyper"]["hidden"] = tuple(manifest["hyper"]["hidden"])
    manifest["params"] = params
    manifest["tasks"] = [dict(t) for t in manifest.get("tasks", [])]
    return manifest
