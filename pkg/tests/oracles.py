"""Independent scalar-loop reference implementations.

Everything here is written with explicit per-index loops and no shared code
with the package, so it can serve as an oracle for the vectorized paths.
"""

import cmath
import math


def eff_channel_scalar(ch, ris, side, user):
    """h_bar entry by entry: h_d[n] + sum_m conj(h_m a_m f_m sqrt(b_m) e^{j phi_m}) G[m, n] ... ,
    assembled from the row-vector identity h_bar^H = h_d^H + h^H A F Theta G."""
    h_d = ch.direct(side)[user]
    h_s = ch.ris_side(side)[user]
    beta = ris.beta(side)
    phi = ris.phi(side)
    n_tx = ch.g_bs_ris.shape[1]
    m_el = ch.g_bs_ris.shape[0]
    h_bar_h = [complex(h_d[n].conjugate()) for n in range(n_tx)]
    for n in range(n_tx):
        acc = 0j
        for m in range(m_el):
            theta = math.sqrt(beta[m]) * cmath.exp(1j * phi[m])
            acc += h_s[m].conjugate() * ris.gain[m] * ris.on[m] * theta * ch.g_bs_ris[m, n]
        h_bar_h[n] += acc
    return [v.conjugate() for v in h_bar_h]


def _beam_power_scalar(ch, ris, side, user, w_vec):
    h_bar = eff_channel_scalar(ch, ris, side, user)
    acc = 0j
    for n in range(len(w_vec)):
        acc += h_bar[n].conjugate() * w_vec[n]
    return abs(acc) ** 2


def _amp_noise_gain_scalar(ch, ris, side, user):
    h_s = ch.ris_side(side)[user]
    beta = ris.beta(side)
    phi = ris.phi(side)
    acc = 0.0
    for m in range(ch.g_bs_ris.shape[0]):
        theta = math.sqrt(beta[m]) * cmath.exp(1j * phi[m])
        acc += abs(h_s[m].conjugate() * ris.gain[m] * ris.on[m] * theta) ** 2
    return acc


def sinr_scalar(ch, ris, bf, ps, params, side, user):
    rho = float(ps.side(side)[user])
    w = bf.side(side)
    signal = rho * _beam_power_scalar(ch, ris, side, user, w[user])
    interf = 0.0
    for k in range(w.shape[0]):
        if k != user:
            interf += _beam_power_scalar(ch, ris, side, user, w[k])
    sigma_z2 = params.sigma2_ris_r if side == "r" else params.sigma2_ris_t
    awgn = params.sigma2_awgn_r[user] if side == "r" else params.sigma2_awgn_t[user]
    delta2 = params.delta2_r[user] if side == "r" else params.delta2_t[user]
    den = rho * interf + rho * sigma_z2 * _amp_noise_gain_scalar(ch, ris, side, user) \
        + rho * awgn + delta2
    return 0.0 if den == 0.0 else signal / den


def harvested_scalar(ch, ris, bf, ps, params, side, user):
    rho = float(ps.side(side)[user])
    w = bf.side(side)
    total = 0.0
    for k in range(w.shape[0]):
        total += _beam_power_scalar(ch, ris, side, user, w[k])
    sigma_z2 = params.sigma2_ris_r if side == "r" else params.sigma2_ris_t
    total += sigma_z2 * _amp_noise_gain_scalar(ch, ris, side, user)
    return (1.0 - rho) * total


def sum_rate_scalar(ch, ris, bf, ps, params):
    rate = 0.0
    for side, count in (("r", params.u_r), ("t", params.u_t)):
        for u in range(count):
            rate += math.log2(1.0 + sinr_scalar(ch, ris, bf, ps, params, side, u))
    return rate


def ris_output_scalar(ch, ris, bf, params):
    m_el, n_tx = ch.g_bs_ris.shape
    total = 0.0
    for side in ("r", "t"):
        beta = ris.beta(side)
        phi = ris.phi(side)
        sigma_z2 = params.sigma2_ris_r if side == "r" else params.sigma2_ris_t
        w = bf.side(side)
        for k in range(w.shape[0]):
            for m in range(m_el):
                gw = 0j
                for n in range(n_tx):
                    gw += ch.g_bs_ris[m, n] * w[k][n]
                theta = math.sqrt(beta[m]) * cmath.exp(1j * phi[m])
                total += abs(ris.gain[m] * ris.on[m] * theta * gw) ** 2
        fro = 0.0
        for m in range(m_el):
            theta = math.sqrt(beta[m]) * cmath.exp(1j * phi[m])
            fro += abs(ris.gain[m] * ris.on[m] * theta) ** 2
        total += sigma_z2 * fro
    return total


def total_power_scalar(ch, ris, bf, params):
    p_tx = 0.0
    for side in ("r", "t"):
        w = bf.side(side)
        for k in range(w.shape[0]):
            for n in range(w.shape[1]):
                p_tx += abs(w[k][n]) ** 2
    n_on = sum(int(f) for f in ris.on)
    n_el = n_on if params.asr_count_mode == "active" else params.m_elements
    p_cir = params.p_cir_bs + (params.u_r + params.u_t) * params.p_cir_user
    if params.ris_mode == "passive":
        p_asr = n_el * params.p_c
    else:
        p_asr = n_el * (params.p_c + params.p_dc) \
            + params.zeta * ris_output_scalar(ch, ris, bf, params)
    return p_tx + p_cir + p_asr
