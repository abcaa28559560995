"""Shared builders for randomized tiny test instances."""

import numpy as np
import pytest

from starswipt.model import (
    BeamformingSet,
    ChannelSet,
    EhParams,
    PowerSplitSet,
    StarRisConfig,
    SystemParams,
)

TABLE_EH = EhParams(m_sat=0.02, a_curve=6400.0, b_curve=0.003)


def tiny_params(u_r=2, u_t=2, n_tx=2, m=3, rng=None, **overrides):
    """Small random-but-benign parameter set for oracle comparisons."""
    rng = rng or np.random.default_rng(0)
    base = dict(
        n_tx=n_tx, m_elements=m, n_active_max=m, u_r=u_r, u_t=u_t,
        p_bs_max=10.0, p_i_max=3.16e-3, a_max=4.0,
        sigma2_ris_r=1e-11, sigma2_ris_t=1e-11,
        sigma2_awgn_r=1e-11, sigma2_awgn_t=1e-11,
        delta2_r=1e-8, delta2_t=1e-8,
        gamma_min_r=0.0, gamma_min_t=0.0,
        e_min_r=0.0, e_min_t=0.0,
        p_cir_bs=1.0, p_cir_user=5.0119e-3,
        p_c=1e-4, p_dc=3.1623e-4, zeta=1.25,
    )
    base.update(overrides)
    return SystemParams(**base)


def random_channels(params, rng, scale=1.0):
    def cplx(*shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    m, n = params.m_elements, params.n_tx
    return ChannelSet(
        g_bs_ris=cplx(m, n),
        h_direct_r=cplx(params.u_r, n), h_direct_t=cplx(params.u_t, n),
        h_ris_r=cplx(params.u_r, m), h_ris_t=cplx(params.u_t, m),
    )


def random_ris(params, rng, all_on=False):
    m = params.m_elements
    beta_r = rng.uniform(0.05, 0.95, m)
    on = np.ones(m, dtype=int) if all_on else rng.integers(0, 2, m)
    return StarRisConfig(
        gain=rng.uniform(0.0, params.a_max, m), on=on,
        beta_r=beta_r, beta_t=1.0 - beta_r,
        phi_r=rng.uniform(0.0, 2 * np.pi, m), phi_t=rng.uniform(0.0, 2 * np.pi, m),
    )


def random_beams(params, rng, power=1.0):
    def beams(count):
        w = rng.standard_normal((count, params.n_tx)) + 1j * rng.standard_normal((count, params.n_tx))
        return w * np.sqrt(power / max(count, 1)) / np.linalg.norm(w, axis=1, keepdims=True)

    return BeamformingSet(w_r=beams(params.u_r) if params.u_r else np.zeros((0, params.n_tx)),
                          w_t=beams(params.u_t) if params.u_t else np.zeros((0, params.n_tx)))


def random_split(params, rng):
    return PowerSplitSet(rho_r=rng.uniform(0.1, 0.9, params.u_r),
                         rho_t=rng.uniform(0.1, 0.9, params.u_t))


def random_instance(seed, u_r=2, u_t=2, n_tx=2, m=3, **overrides):
    rng = np.random.default_rng(seed)
    params = tiny_params(u_r=u_r, u_t=u_t, n_tx=n_tx, m=m, rng=rng, **overrides)
    ch = random_channels(params, rng)
    ris = random_ris(params, rng)
    bf = random_beams(params, rng)
    ps = random_split(params, rng)
    return params, ch, ris, bf, ps


def scaled_instance(seed, u_r=2, u_t=2, n_tx=2, m=3, **overrides):
    """Random tiny instance with link magnitudes at realistic path-loss scale,
    so received powers and the processing-noise terms are commensurate."""
    params, ch, ris, bf, ps = random_instance(seed, u_r=u_r, u_t=u_t,
                                              n_tx=n_tx, m=m, **overrides)
    ch.g_bs_ris *= 1e-3
    ch.h_ris_r *= 1e-3
    ch.h_ris_t *= 1e-3
    ch.h_direct_r *= 1e-4
    ch.h_direct_t *= 1e-4
    return params, ch, ris, bf, ps


def feasible_tiny_instance(seed, frac=0.3, u_r=2, u_t=1, n_tx=2, m=3, **overrides):
    """Random tiny instance whose SINR/harvest floors sit at ``frac`` of what a
    matched-beam half-power start achieves, so the start point is feasible."""
    from starswipt import convex as CV
    from starswipt import model as M

    params, ch, ris, bf, ps = random_instance(seed, u_r=u_r, u_t=u_t,
                                              n_tx=n_tx, m=m, **overrides)
    ch.g_bs_ris *= 1e-3
    ch.h_ris_r *= 1e-3
    ch.h_ris_t *= 1e-3
    ch.h_direct_r *= 1e-4
    ch.h_direct_t *= 1e-4
    lifted = CV.lift(ch, ris, params)
    bf0, ps0 = CV.recover_beamforming(lifted, CV.mrt_start(lifted), TABLE_EH)
    for side in ("r", "t"):
        n = params.users(side)
        gam = np.array([M.sinr(ch, ris, bf0, ps0, params, side, u) for u in range(n)])
        ehv = np.array([M.nonlinear_eh(
            M.harvested_rf_power(ch, ris, bf0, ps0, params, side, u), TABLE_EH)
            for u in range(n)])
        setattr(params, f"gamma_min_{side}", frac * gam)
        setattr(params, f"e_min_{side}", frac * ehv)
    return params, ch, ris


@pytest.fixture
def table_eh():
    return TABLE_EH
