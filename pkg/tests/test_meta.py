import numpy as np
import pytest

from starswipt import agents as A
from starswipt import convex as CV
from starswipt import env as E
from starswipt import meta as MT
from starswipt.channels import FadingParams, default_geometry
from conftest import TABLE_EH, tiny_params

from test_agents import toy_agent, toy_batch


def desk_env():
    params = tiny_params(u_r=1, u_t=1, n_tx=3, m=8,
                         gamma_min_r=0.05, gamma_min_t=0.05,
                         e_min_r=1e-14, e_min_t=1e-14)
    fading = FadingParams(pathloss_exp_direct=4.5)
    return E.SwiptEnv(params, TABLE_EH, default_geometry(), fading,
                      episode_steps=6)


def small_hyper():
    return A.AgentHyper(hidden=(16,), batch_size=8, buffer_capacity=500)


# ----------------------------------------------------------------- task sampling

def test_sample_tasks_distinct_and_deterministic():
    a = MT.sample_tasks(3, np.random.default_rng(1))
    b = MT.sample_tasks(3, np.random.default_rng(1))
    assert [t.placement_seed for t in a] == [t.placement_seed for t in b]
    assert len({t.placement_seed for t in a}) == 3
    assert [t.task_id for t in a] == [0, 1, 2]


def test_sample_tasks_single_task():
    tasks = MT.sample_tasks(1, np.random.default_rng(2))
    assert len(tasks) == 1


# ----------------------------------------------------------------- inner update

def test_inner_update_zero_steps_copies_globals():
    agent = toy_agent()
    batch = toy_batch(agent)
    adapted = MT.inner_update(agent, batch, steps=0, rate_scale=0.1)
    for name, net in agent.online_nets().items():
        np.testing.assert_array_equal(adapted[name].theta, net.theta)
        assert adapted[name] is not net


def test_inner_update_leaves_globals_untouched():
    agent = toy_agent()
    batch = toy_batch(agent)
    before = {name: net.theta.copy() for name, net in agent.all_nets().items()}
    MT.inner_update(agent, batch, steps=3, rate_scale=0.5)
    for name, net in agent.all_nets().items():
        np.testing.assert_array_equal(net.theta, before[name])


def test_inner_update_same_batch_same_result():
    agent = toy_agent()
    batch = toy_batch(agent)
    a = MT.inner_update(agent, batch, steps=2, rate_scale=0.1, eps_key=5)
    b = MT.inner_update(agent, batch, steps=2, rate_scale=0.1, eps_key=5)
    for name in a:
        np.testing.assert_array_equal(a[name].theta, b[name].theta)


def test_inner_update_descends_on_support_batch():
    agent = toy_agent()
    batch = toy_batch(agent, n=8)
    y = A.ddpg_targets(batch, agent)
    loss_before, _ = A.ddpg_critic_grad(batch, agent, targets=y)
    adapted = MT.inner_update(agent, batch, steps=3, rate_scale=1.0)
    loss_after, _ = A.ddpg_critic_grad(batch, agent,
                                       critic=adapted["ddpg_critic"], targets=y)
    assert loss_after < loss_before


# ----------------------------------------------------------------- outer update

def test_outer_update_single_task_zero_inner_equals_plain_update():
    agent = toy_agent()
    batch = toy_batch(agent, n=8)
    state = MT.MetaState(agent=agent)
    state.adapted[0] = MT.inner_update(agent, batch, steps=0, rate_scale=0.1)

    reference = toy_agent()  # identical init (same seed)
    grads = MT._grads_at(reference, reference.online_nets(), batch, eps_key=7)
    rates = MT._rates(reference, 1.0)
    for name, net in reference.online_nets().items():
        net.axpy(MT._SIGNS[name] * rates[name],
                 A._clipped(grads[name], reference.hyper.grad_clip))

    MT.outer_update(state, {0: batch}, eps_key=7)
    for name, net in agent.online_nets().items():
        np.testing.assert_allclose(net.theta,
                                   reference.online_nets()[name].theta,
                                   atol=1e-12)


def _freeze_policy_spread(agent):
    """Pin the continuous head's sigma to its floor so the stochastic draws
    have no effect and gradients become draw-independent."""
    cont = 4 * agent.m_elements
    agent.sac_actor._biases[-1][cont:] = -50.0
    agent.sac_actor._weights[-1][:, cont:] = 0.0


def test_outer_update_duplicated_task_doubles_gradient():
    agent1 = toy_agent(seed=3, entropy_weight=0.0)
    agent2 = toy_agent(seed=3, entropy_weight=0.0)
    batch = toy_batch(agent1, n=8)
    for agent in (agent1, agent2):
        agent.hyper.grad_clip = None  # additivity only without clipping
        _freeze_policy_spread(agent)

    state1 = MT.MetaState(agent=agent1)
    state1.adapted[0] = MT.inner_update(agent1, batch, steps=0, rate_scale=0.1)
    base1 = {n: net.theta.copy() for n, net in agent1.online_nets().items()}
    MT.outer_update(state1, {0: batch}, eps_key=11)
    delta1 = {n: agent1.online_nets()[n].theta - base1[n] for n in base1}

    state2 = MT.MetaState(agent=agent2)
    state2.adapted[0] = MT.inner_update(agent2, batch, steps=0, rate_scale=0.1)
    state2.adapted[1] = MT.inner_update(agent2, batch, steps=0, rate_scale=0.1)
    base2 = {n: net.theta.copy() for n, net in agent2.online_nets().items()}
    MT.outer_update(state2, {0: batch, 1: batch}, eps_key=11)
    delta2 = {n: agent2.online_nets()[n].theta - base2[n] for n in base2}
    for name in delta1:
        np.testing.assert_allclose(delta2[name], 2.0 * delta1[name], atol=1e-10)


def test_outer_update_descends_validation_loss_on_frozen_buffer():
    agent = toy_agent()
    agent.hyper.grad_clip = None
    batch = toy_batch(agent, n=8)
    state = MT.MetaState(agent=agent)
    losses = []
    for it in range(6):
        y = A.ddpg_targets(batch, agent)
        loss, _ = A.ddpg_critic_grad(batch, agent, targets=y)
        losses.append(loss)
        state.adapted[0] = MT.inner_update(agent, batch, steps=0,
                                           rate_scale=0.1, eps_key=it)
        MT.outer_update(state, {0: batch}, eps_key=it)
    assert losses[-1] < losses[0]


# -------------------------------------------------------------------- training

def test_meta_train_zero_episodes_checkpoint_is_init():
    env = desk_env()
    hyper = small_hyper()
    tasks = MT.sample_tasks(2, np.random.default_rng(3))
    solver = CV.ConvexStage(env.params, TABLE_EH)
    ckpt, log = MT.meta_train(tasks, lambda t: desk_env(), solver, 0, hyper,
                              seed=4)
    fresh = A.MdsAgent(env.state_dim, env.params.m_elements, hyper, seed=4)
    for name, net in fresh.all_nets().items():
        np.testing.assert_array_equal(ckpt["params"][name], net.theta)
    assert log.records == []


def test_meta_train_reproducible_checkpoint_digest():
    hyper = small_hyper()
    tasks = MT.sample_tasks(2, np.random.default_rng(5))

    def run():
        solver = CV.ConvexStage(desk_env().params, TABLE_EH)
        ckpt, log = MT.meta_train(tasks, lambda t: desk_env(), solver, 2,
                                  hyper, seed=6)
        return ckpt, log

    ckpt1, log1 = run()
    ckpt2, log2 = run()
    assert log1.digest() == log2.digest()
    for name in ckpt1["params"]:
        np.testing.assert_array_equal(ckpt1["params"][name],
                                      ckpt2["params"][name])


def test_meta_train_single_task_pre_update_phase_matches_mds():
    # while the replay buffer is under the batch size neither variant updates,
    # so the first-episode trajectories must coincide bit-exactly
    hyper = small_hyper()
    hyper.batch_size = 1000  # never reached in 1 episode of 6 steps
    task = MT.sample_tasks(1, np.random.default_rng(7))[0]
    solver = CV.ConvexStage(desk_env().params, TABLE_EH)
    _, meta_log = MT.meta_train([task], lambda t: desk_env(), solver, 1,
                                hyper, seed=8)
    env = desk_env()
    _, mds_log = A.mds_train(env, CV.ConvexStage(env.params, TABLE_EH), task,
                             1, hyper, seed=8)
    assert meta_log.records[0]["mean_reward"] == mds_log.records[0]["mean_reward"]
    assert meta_log.records[0]["mean_ee"] == mds_log.records[0]["mean_ee"]


def test_meta_adapt_zero_episodes_returns_checkpoint_params():
    hyper = small_hyper()
    tasks = MT.sample_tasks(2, np.random.default_rng(9))
    solver = CV.ConvexStage(desk_env().params, TABLE_EH)
    ckpt, _ = MT.meta_train(tasks, lambda t: desk_env(), solver, 1, hyper,
                            seed=10)
    new_task = MT.sample_tasks(3, np.random.default_rng(11))[2]
    agent, log = MT.meta_adapt(ckpt, new_task, lambda t: desk_env(), solver, 0,
                               seed=12)
    for name, net in agent.all_nets().items():
        np.testing.assert_array_equal(net.theta, ckpt["params"][name])
    assert log.records == []


def test_meta_adapt_initializes_from_checkpoint_then_trains():
    hyper = small_hyper()
    tasks = MT.sample_tasks(2, np.random.default_rng(13))
    solver = CV.ConvexStage(desk_env().params, TABLE_EH)
    ckpt, _ = MT.meta_train(tasks, lambda t: desk_env(), solver, 1, hyper,
                            seed=14)
    new_task = MT.sample_tasks(3, np.random.default_rng(15))[2]
    agent, log = MT.meta_adapt(ckpt, new_task, lambda t: desk_env(), solver, 2,
                               seed=16)
    assert len(log.records) == 2
    changed = any(not np.array_equal(net.theta, ckpt["params"][name])
                  for name, net in agent.online_nets().items())
    assert changed


# ------------------------------------------------------------------ checkpoints

def test_checkpoint_save_load_round_trip(tmp_path):
    agent = toy_agent(seed=17)
    tasks = MT.sample_tasks(2, np.random.default_rng(18))
    ckpt = MT.checkpoint_from_agent(agent, tasks=tasks)
    path = tmp_path / "ckpt.npz"
    MT.save_checkpoint(ckpt, path)
    loaded = MT.load_checkpoint(path)
    assert loaded["version"] == MT.CHECKPOINT_VERSION
    assert loaded["m_elements"] == agent.m_elements
    assert len(loaded["tasks"]) == 2
    restored = MT.agent_from_checkpoint(loaded, seed=19)
    for name, net in agent.all_nets().items():
        np.testing.assert_array_equal(restored.all_nets()[name].theta, net.theta)


def test_checkpoint_rejects_wrong_version():
    agent = toy_agent()
    ckpt = MT.checkpoint_from_agent(agent)
    ckpt["version"] = 999
    with pytest.raises(ValueError, match="version"):
        MT.agent_from_checkpoint(ckpt)
