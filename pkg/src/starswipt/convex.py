"""Joint transmit-beamforming / power-split stage for a fixed surface state.

The non-convex rate is split as a difference of two jointly concave terms
(concave in the lifted beam matrices W and in the inverse split q = 1/rho);
the subtracted term is replaced by its tangent plane at the current iterate,
and the rate/power ratio is maximized by an outer loop that re-solves the
resulting concave program for a sequence of ratio parameters mu until
|R_tilde - mu * P| falls below the tolerance.

Harvest floors are pre-inverted through the logistic curve so they become
linear thresholds of the form  received RF >= P_req / (1 - rho).

A thin backend interface isolates the one external numerical dependency;
the shipped adapter models the subproblem with cvxpy (Hermitian variables
are handled natively by its canonicalization, so no manual real embedding
is required).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    BeamformingSet,
    ChannelSet,
    PowerSplitSet,
    StarRisConfig,
    SystemParams,
    check_constraints,
    effective_channel,
    energy_efficiency,
    inverse_eh,
    ris_diagonal,
)

__all__ = [
    "LiftedConstants",
    "SdpIterate",
    "GSurrogate",
    "SolveOutcome",
    "RecoveryFailedError",
    "lift",
    "eval_f",
    "eval_g",
    "eval_rate",
    "eval_power",
    "eval_g_tilde",
    "linearize_g",
    "lifted_margins",
    "solve_inner_sdp",
    "recover_rank1",
    "recover_beamforming",
    "dinkelbach",
    "mrt_start",
    "CvxpyBackend",
    "ConvexStage",
]

LN2 = math.log(2.0)
RHO_EPS = 1e-6  # strictly positive split so 1/rho terms stay finite


def _hermitianize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


def complex_embed(h: np.ndarray) -> np.ndarray:
    """Standard [[X, -Y], [Y, X]] real embedding of a complex matrix.

    For Hermitian H the image is symmetric, H >= 0 iff embed(H) >= 0, and
    Re tr(H W) = tr(embed(H) @ embed(W)) / 2.
    """
    x, y = h.real, h.imag
    return np.block([[x, -y], [y, x]])


def complex_unembed(v: np.ndarray) -> np.ndarray:
    """Recover a complex matrix from a (possibly unstructured) real double.

    Averages the two diagonal blocks and antisymmetrizes the off-diagonal
    ones, which maps any optimal unstructured double back onto the embedded
    subspace without changing linear functionals of embedded data.
    """
    n = v.shape[0] // 2
    x = 0.5 * (v[:n, :n] + v[n:, n:])
    y = 0.5 * (v[n:, :n] - v[:n, n:])
    return x + 1j * y


class RecoveryFailedError(RuntimeError):
    """No feasible rank-1 candidate was found; carries the relaxation bound."""

    def __init__(self, msg, bound=None):
        super().__init__(msg)
        self.bound = bound


@dataclass
class LiftedConstants:
    """Everything constant during one solve: effective channels, their rank-1
    outer products, the diagonal surface matrices and derived noise/power
    coefficients."""

    params: SystemParams
    channels: ChannelSet
    ris: StarRisConfig
    gamma_r: np.ndarray             # M x M diagonal, A F Theta_r
    gamma_t: np.ndarray
    h_bar_r: np.ndarray             # U_r x N_t effective channels
    h_bar_t: np.ndarray
    h_outer_r: list                 # rank-1 Hermitian N_t x N_t per user
    h_outer_t: list
    ris_noise_r: np.ndarray         # sigma_z^2 ||h_i^H Gamma_r||^2 per user
    ris_noise_t: np.ndarray
    through_r: np.ndarray           # Gamma_r G, M x N_t
    through_t: np.ndarray
    fro_r: float                    # ||Gamma_r||_F^2
    fro_t: float

    def side(self, s: str):
        if s == "r":
            return self.h_bar_r, self.h_outer_r, self.ris_noise_r
        return self.h_bar_t, self.h_outer_t, self.ris_noise_t

    def users(self, s: str) -> int:
        return self.params.users(s)


@dataclass
class SdpIterate:
    """One point of the lifted problem: beam matrices, splits, the current
    ratio parameter, and the expansion point that produced it."""

    w_mat_r: list
    w_mat_t: list
    rho_r: np.ndarray
    rho_t: np.ndarray
    mu: float = 0.0
    q_r: np.ndarray | None = None   # inverse splits; defaults to 1/rho
    q_t: np.ndarray | None = None
    surrogate_point: "SdpIterate | None" = None

    def __post_init__(self):
        self.rho_r = np.atleast_1d(np.asarray(self.rho_r, dtype=float))
        self.rho_t = np.atleast_1d(np.asarray(self.rho_t, dtype=float))
        if self.q_r is None:
            self.q_r = 1.0 / np.maximum(self.rho_r, RHO_EPS)
        if self.q_t is None:
            self.q_t = 1.0 / np.maximum(self.rho_t, RHO_EPS)
        self.q_r = np.atleast_1d(np.asarray(self.q_r, dtype=float))
        self.q_t = np.atleast_1d(np.asarray(self.q_t, dtype=float))

    def w_side(self, s: str):
        return self.w_mat_r if s == "r" else self.w_mat_t

    def rho_side(self, s: str):
        return self.rho_r if s == "r" else self.rho_t

    def q_side(self, s: str):
        return self.q_r if s == "r" else self.q_t


@dataclass
class GSurrogate:
    """Tangent plane of the subtracted rate term.

    ``grad_q_*`` are the partials with respect to q = 1/rho; the surrogate is
    affine in (W, q), which is the coordinate system in which the subtracted
    term is jointly concave (and hence the tangent over-estimates it).
    ``grad_rho_*`` are the equivalent chain-ruled partials in rho itself.
    """

    value: float
    grad_w_r: list
    grad_w_t: list
    grad_rho_r: np.ndarray
    grad_rho_t: np.ndarray
    grad_q_r: np.ndarray
    grad_q_t: np.ndarray
    expansion: SdpIterate


@dataclass
class SolveOutcome:
    bf: BeamformingSet | None
    ps: PowerSplitSet | None
    mu_star: float
    iterations: int
    status: str                      # converged | max_iter | infeasible
    sdp_objective_gap: float = float("nan")
    trace: list = field(default_factory=list)
    iterate: SdpIterate | None = None


def lift(ch: ChannelSet, ris: StarRisConfig, params: SystemParams) -> LiftedConstants:
    """Freeze the surface state into the constants of the lifted program."""
    gamma_diag = {s: ris_diagonal(ris, s) for s in ("r", "t")}
    out = {}
    for s in ("r", "t"):
        n = params.users(s)
        h_bar = np.array([effective_channel(ch, ris, s, u) for u in range(n)]) \
            if n else np.zeros((0, params.n_tx), dtype=complex)
        out[f"h_bar_{s}"] = h_bar
        out[f"h_outer_{s}"] = [np.outer(h, h.conj()) for h in h_bar]
        sig_z = params.sigma2_ris(s)
        h_s = ch.ris_side(s)
        out[f"ris_noise_{s}"] = np.array(
            [sig_z * float(np.sum(np.abs(h_s[u]) ** 2 * np.abs(gamma_diag[s]) ** 2))
             for u in range(n)])
        out[f"through_{s}"] = gamma_diag[s][:, None] * ch.g_bs_ris
        out[f"fro_{s}"] = float(np.sum(np.abs(gamma_diag[s]) ** 2))
    return LiftedConstants(params=params, channels=ch, ris=ris,
                           gamma_r=np.diag(gamma_diag["r"]),
                           gamma_t=np.diag(gamma_diag["t"]), **out)


def _log_args(lifted: LiftedConstants, iterate: SdpIterate, side: str,
              exclude_own: bool):
    """Arguments of the per-user logs: interference(+signal) + noises + delta^2 q."""
    h_bar, h_outer, ris_noise = lifted.side(side)
    awgn = getattr(lifted.params, f"sigma2_awgn_{side}")
    delta2 = getattr(lifted.params, f"delta2_{side}")
    w = iterate.w_side(side)
    q = iterate.q_side(side)
    args = []
    for i in range(lifted.users(side)):
        acc = ris_noise[i] + awgn[i] + delta2[i] * q[i]
        for k in range(lifted.users(side)):
            if exclude_own and k == i:
                continue
            acc += float(np.real(np.trace(h_outer[i] @ w[k])))
        args.append(acc)
    return np.array(args)


def eval_f(lifted: LiftedConstants, iterate: SdpIterate) -> float:
    """Sum of logs over full received power (signal included)."""
    total = 0.0
    for s in ("r", "t"):
        args = _log_args(lifted, iterate, s, exclude_own=False)
        total += float(np.sum(np.log2(args))) if args.size else 0.0
    return total


def eval_g(lifted: LiftedConstants, iterate: SdpIterate) -> float:
    """Sum of logs over interference-plus-noise only."""
    total = 0.0
    for s in ("r", "t"):
        args = _log_args(lifted, iterate, s, exclude_own=True)
        total += float(np.sum(np.log2(args))) if args.size else 0.0
    return total


def eval_rate(lifted: LiftedConstants, iterate: SdpIterate) -> float:
    """f - g, the exact sum rate of the lifted variables when q = 1/rho."""
    return eval_f(lifted, iterate) - eval_g(lifted, iterate)


def eval_power(lifted: LiftedConstants, iterate: SdpIterate) -> float:
    """Lifted total power: transmit traces, amplifier draw, circuits."""
    p = lifted.params
    total = sum(float(np.real(np.trace(w))) for w in iterate.w_mat_r)
    total += sum(float(np.real(np.trace(w))) for w in iterate.w_mat_t)
    n_el = lifted.ris.n_on if p.asr_count_mode == "active" else p.m_elements
    p_cir = p.p_cir_bs + (p.u_r + p.u_t) * p.p_cir_user
    if p.ris_mode == "passive":
        return total + p_cir + n_el * p.p_c
    amp = 0.0
    for s, fro, sig in (("r", lifted.fro_r, p.sigma2_ris_r),
                        ("t", lifted.fro_t, p.sigma2_ris_t)):
        t_mat = getattr(lifted, f"through_{s}")
        for w in iterate.w_side(s):
            amp += float(np.real(np.sum((t_mat @ w) * np.conj(t_mat))))
        amp += sig * fro
    return total + p_cir + n_el * (p.p_c + p.p_dc) + p.zeta * amp


def ris_output_lifted(lifted: LiftedConstants, iterate: SdpIterate) -> float:
    """Surface radiated power in the lifted variables."""
    p = lifted.params
    total = 0.0
    for s, fro, sig in (("r", lifted.fro_r, p.sigma2_ris_r),
                        ("t", lifted.fro_t, p.sigma2_ris_t)):
        t_mat = getattr(lifted, f"through_{s}")
        for w in iterate.w_side(s):
            total += float(np.real(np.sum((t_mat @ w) * np.conj(t_mat))))
        total += sig * fro
    return total


def linearize_g(lifted: LiftedConstants, expansion: SdpIterate) -> GSurrogate:
    """First-order tangent of g at the expansion point.

    Gradients with respect to a beam matrix collect the interference terms of
    every *other* user on the same side; the own-signal block is zero.
    """
    if np.any(expansion.rho_r <= 0) or np.any(expansion.rho_t <= 0):
        raise ValueError("expansion point must have strictly positive splits")
    grads_w = {}
    grads_rho = {}
    grads_q = {}
    for s in ("r", "t"):
        _, h_outer, _ = lifted.side(s)
        delta2 = getattr(lifted.params, f"delta2_{s}")
        rho0 = expansion.rho_side(s)
        q0 = expansion.q_side(s)
        args = _log_args(lifted, expansion, s, exclude_own=True)
        n = lifted.users(s)
        grads_w[s] = [sum((h_outer[i] / (LN2 * args[i]) for i in range(n) if i != m),
                          start=np.zeros_like(h_outer[0]) if n else 0.0)
                      for m in range(n)]
        grads_q[s] = np.array([delta2[i] / (LN2 * args[i]) for i in range(n)])
        grads_rho[s] = np.array([-delta2[i] / (rho0[i] ** 2 * LN2 * args[i])
                                 for i in range(n)])
        # unused but keeps q0 referenced for clarity of the tangent point
        del q0
    return GSurrogate(value=eval_g(lifted, expansion),
                      grad_w_r=grads_w["r"], grad_w_t=grads_w["t"],
                      grad_rho_r=grads_rho["r"], grad_rho_t=grads_rho["t"],
                      grad_q_r=grads_q["r"], grad_q_t=grads_q["t"],
                      expansion=expansion)


def eval_g_tilde(surr: GSurrogate, iterate: SdpIterate) -> float:
    """Evaluate the tangent plane at another iterate (affine in W and q)."""
    val = surr.value
    exp = surr.expansion
    for s, grads in (("r", surr.grad_w_r), ("t", surr.grad_w_t)):
        w_new, w_old = iterate.w_side(s), exp.w_side(s)
        for g, wn, wo in zip(grads, w_new, w_old):
            val += float(np.real(np.trace(g.conj().T @ (wn - wo))))
        gq = surr.grad_q_r if s == "r" else surr.grad_q_t
        val += float(np.sum(gq * (iterate.q_side(s) - exp.q_side(s))))
    return val


def eval_surrogate_rate(lifted: LiftedConstants, surr: GSurrogate,
                        iterate: SdpIterate) -> float:
    """R_tilde = f - g_tilde; never exceeds the true rate, equal at the
    expansion point."""
    return eval_f(lifted, iterate) - eval_g_tilde(surr, iterate)


def _eh_thresholds(params: SystemParams, eh, side: str) -> np.ndarray:
    e_min = getattr(params, f"e_min_{side}")
    return np.array([inverse_eh(e, eh) if e > 0 else 0.0 for e in e_min])


def lifted_margins(lifted: LiftedConstants, iterate: SdpIterate, eh) -> dict:
    """Signed margins of the lifted constraints C1..C8 at a point."""
    p = lifted.params
    margins = {}
    c1 = []
    c3 = []
    for s in ("r", "t"):
        _, h_outer, ris_noise = lifted.side(s)
        awgn = getattr(p, f"sigma2_awgn_{s}")
        delta2 = getattr(p, f"delta2_{s}")
        gamma_min = getattr(p, f"gamma_min_{s}")
        p_req = _eh_thresholds(p, eh, s)
        w = iterate.w_side(s)
        rho = iterate.rho_side(s)
        q = iterate.q_side(s)
        sig = np.array([[float(np.real(np.trace(h_outer[i] @ w[k])))
                         for k in range(lifted.users(s))]
                        for i in range(lifted.users(s))])
        for i in range(lifted.users(s)):
            interf = float(np.sum(sig[i])) - sig[i, i]
            if gamma_min[i] > 0:
                c1.append(sig[i, i] / gamma_min[i] - interf
                          - (ris_noise[i] + awgn[i] + delta2[i] * q[i]))
            else:
                c1.append(float("inf"))
            if p_req[i] > 0:
                c3.append(float(np.sum(sig[i])) + ris_noise[i]
                          - p_req[i] / max(1.0 - rho[i], 1e-12))
            else:
                c3.append(float("inf"))
    margins["c1_c2"] = min(c1) if c1 else float("inf")
    margins["c3_c4"] = min(c3) if c3 else float("inf")
    total_tx = sum(float(np.real(np.trace(w))) for w in iterate.w_mat_r + iterate.w_mat_t)
    margins["c5"] = p.p_bs_max - total_tx
    margins["c6"] = p.p_i_max - ris_output_lifted(lifted, iterate)
    rho_all = np.concatenate([iterate.rho_r, iterate.rho_t])
    margins["c7_c8"] = float(np.min(np.minimum(rho_all, 1.0 - rho_all))) \
        if rho_all.size else float("inf")
    margins["coupling"] = float(np.min(np.concatenate([iterate.q_r, iterate.q_t])
                                       * np.concatenate([iterate.rho_r, iterate.rho_t]) - 1.0)) \
        if rho_all.size else float("inf")
    return margins


def mrt_start(lifted: LiftedConstants, power_fraction: float = 0.5,
              rho: float = 0.5) -> SdpIterate:
    """Matched-direction, equal-power start with an even split."""
    p = lifted.params
    total_users = max(p.u_r + p.u_t, 1)
    share = power_fraction * p.p_bs_max / total_users
    mats = {}
    for s in ("r", "t"):
        h_bar, _, _ = lifted.side(s)
        side_mats = []
        for h in h_bar:
            norm = np.linalg.norm(h)
            direction = h / norm if norm > 0 else np.eye(p.n_tx, dtype=complex)[:, 0]
            w = np.sqrt(share) * direction
            side_mats.append(np.outer(w, w.conj()))
        mats[s] = side_mats
    return SdpIterate(w_mat_r=mats["r"], w_mat_t=mats["t"],
                      rho_r=np.full(p.u_r, rho), rho_t=np.full(p.u_t, rho))


class CvxpyBackend:
    """Conic adapter built on cvxpy; declares itself reentrant (each solve
    builds an independent problem, and cached compiled problems are refilled
    atomically per call).

    The inner subproblem is compiled once per problem *structure* with every
    instance-dependent coefficient as a Parameter, so the repeated solves of
    the outer ratio loop (and of per-episode re-solves during training) skip
    canonicalization.  Received powers are normalized per user by delta^2 to
    keep the exponential-cone blocks well scaled; the normalization cancels
    between the two log terms, so objective values are recomputed unscaled in
    numpy by the caller.
    """

    name = "cvxpy"
    reentrant = True

    def __init__(self, solver: str | None = None, **solver_kwargs):
        import cvxpy as cp  # deferred so the physics stack has no hard dep

        self._cp = cp
        self.solver = solver or "CLARABEL"
        self.solver_kwargs = solver_kwargs
        self._inner_cache = {}

    # -- compiled inner problem ----------------------------------------------

    def _structure_key(self, lifted, eh, fix_rho):
        p = lifted.params
        masks = []
        for s in ("r", "t"):
            gamma_min = getattr(p, f"gamma_min_{s}")
            p_req = _eh_thresholds(p, eh, s)
            masks.append(tuple(bool(g > 0) for g in gamma_min))
            masks.append(tuple(bool(r > 0) for r in p_req))
        return (p.n_tx, p.u_r, p.u_t, fix_rho, p.p_bs_max, tuple(masks))

    def _build_inner(self, lifted, eh, fix_rho):
        cp = self._cp
        p = lifted.params
        d = 2 * p.n_tx  # real-embedded block size
        prob = {"v": {}, "rho": {}, "q": {}, "h_hat": {}, "noise": {},
                "noise_eh": {}, "g_w": {}, "g_q": {}, "preq": {},
                "amp_mu": {}, "amp": {}}
        cons = []
        f_terms = []
        g_lin = 0
        mu_tx = cp.Parameter(nonneg=True)
        prob["mu_tx"] = mu_tx

        for s in ("r", "t"):
            n = lifted.users(s)
            gamma_min = getattr(p, f"gamma_min_{s}")
            c1_mask = [g > 0 for g in gamma_min]
            c3_mask = [r > 0 for r in _eh_thresholds(p, eh, s)]
            v = [cp.Variable((d, d), PSD=True) for _ in range(n)]
            prob["v"][s] = v
            if fix_rho is None and n:
                rho = cp.Variable(n, nonneg=True)
                q = cp.Variable(n, nonneg=True)
                cons += [rho >= RHO_EPS, rho <= 1.0, q >= 1.0, q >= cp.inv_pos(rho)]
            else:
                rho = np.full(n, fix_rho if fix_rho is not None else 0.5)
                q = 1.0 / rho if n else np.zeros(0)
            prob["rho"][s], prob["q"][s] = rho, q
            h_hat = [cp.Parameter((d, d), symmetric=True) for _ in range(n)]
            noise = cp.Parameter(n, nonneg=True) if n else None
            noise_eh = cp.Parameter(n, nonneg=True) if n else None
            g_w = [cp.Parameter((d, d), symmetric=True) for _ in range(n)]
            g_q = cp.Parameter(n, nonneg=True) if n else None
            prob["h_hat"][s], prob["noise"][s] = h_hat, noise
            prob["noise_eh"][s] = noise_eh
            prob["g_w"][s], prob["g_q"][s] = g_w, g_q
            prob.setdefault("gamma_inv", {})[s] = {}
            for i in range(n):
                sig = [0.5 * cp.trace(h_hat[i] @ v[k]) for k in range(n)]
                f_terms.append(cp.log(sum(sig) + noise[i] + q[i]) / LN2)
                g_lin = g_lin + g_q[i] * q[i]
                if n > 1:
                    g_lin = g_lin + 0.5 * cp.trace(g_w[i] @ v[i])
                if c1_mask[i]:
                    gamma_inv = cp.Parameter(nonneg=True)
                    prob["gamma_inv"][s][i] = gamma_inv
                    interf = sum(sig[k] for k in range(n) if k != i)
                    cons.append(sig[i] * gamma_inv - interf >= noise[i] + q[i])
                if c3_mask[i]:
                    preq = cp.Parameter(nonneg=True)
                    prob["preq"][(s, i)] = preq
                    received = sum(sig) + noise_eh[i]
                    if fix_rho is None:
                        t_epi = cp.Variable(nonneg=True)
                        cons.append(t_epi >= cp.inv_pos(1.0 - rho[i]))
                        cons.append(received >= preq * t_epi)
                    else:
                        cons.append(received >= preq / (1.0 - fix_rho))
            prob["amp"][s] = cp.Parameter((d, d), symmetric=True)
            prob["amp_mu"][s] = cp.Parameter((d, d), symmetric=True)

        all_v = prob["v"]["r"] + prob["v"]["t"]
        tx_total = 0.5 * sum(cp.trace(vm) for vm in all_v)
        cons.append(tx_total / p.p_bs_max <= 1.0)
        amp_expr = 0.5 * sum(cp.trace(prob["amp"][s] @ vm)
                             for s in ("r", "t") for vm in prob["v"][s])
        amp_budget = cp.Parameter()
        prob["amp_budget"] = amp_budget
        cons.append(amp_expr <= amp_budget)
        amp_mu_expr = 0.5 * sum(cp.trace(prob["amp_mu"][s] @ vm)
                                for s in ("r", "t") for vm in prob["v"][s])
        objective = sum(f_terms) - g_lin - mu_tx * tx_total - amp_mu_expr
        prob["problem"] = cp.Problem(cp.Maximize(objective), cons)
        return prob

    def _fill_inner(self, prob, lifted, surr, mu, eh, fix_rho):
        p = lifted.params
        for s in ("r", "t"):
            n = lifted.users(s)
            _, h_outer, ris_noise = lifted.side(s)
            awgn = getattr(p, f"sigma2_awgn_{s}")
            delta2 = getattr(p, f"delta2_{s}")
            p_req = _eh_thresholds(p, eh, s)
            grads_w = surr.grad_w_r if s == "r" else surr.grad_w_t
            grads_q = surr.grad_q_r if s == "r" else surr.grad_q_t
            gamma_min = getattr(p, f"gamma_min_{s}")
            for i in range(n):
                prob["h_hat"][s][i].value = complex_embed(_hermitianize(h_outer[i] / delta2[i]))
                if n > 1:
                    prob["g_w"][s][i].value = complex_embed(_hermitianize(grads_w[i]))
                else:
                    prob["g_w"][s][i].value = np.zeros((2 * p.n_tx, 2 * p.n_tx))
                if i in prob["gamma_inv"].get(s, {}):
                    prob["gamma_inv"][s][i].value = 1.0 / gamma_min[i]
                if (s, i) in prob["preq"]:
                    prob["preq"][(s, i)].value = p_req[i] / delta2[i]
            if n:
                prob["noise"][s].value = (ris_noise + awgn) / delta2
                prob["noise_eh"][s].value = ris_noise / delta2
                prob["g_q"][s].value = np.maximum(grads_q, 0.0)
            t_mat = getattr(lifted, f"through_{s}")
            k_mat = _hermitianize(t_mat.conj().T @ t_mat)
            zeta_eff = 0.0 if p.ris_mode == "passive" else p.zeta
            prob["amp"][s].value = complex_embed(k_mat)
            prob["amp_mu"][s].value = complex_embed(mu * zeta_eff * k_mat)
        prob["mu_tx"].value = mu
        amp_const = p.sigma2_ris_r * lifted.fro_r + p.sigma2_ris_t * lifted.fro_t
        prob["amp_budget"].value = p.p_i_max - amp_const

    def _extract_inner(self, prob, lifted, fix_rho, mu):
        p = lifted.params

        def mats(side):
            out = []
            for vm in prob["v"][side]:
                w = complex_unembed(np.asarray(vm.value))
                out.append(_hermitianize(w))
            return out

        def vec(v, n):
            if isinstance(v, np.ndarray):
                return v.copy()
            return np.atleast_1d(np.asarray(v.value, dtype=float)) if n else np.zeros(0)

        rho_r = np.clip(vec(prob["rho"]["r"], p.u_r), RHO_EPS, 1.0)
        rho_t = np.clip(vec(prob["rho"]["t"], p.u_t), RHO_EPS, 1.0)
        q_r = np.maximum(vec(prob["q"]["r"], p.u_r), 1.0 / rho_r) if p.u_r else np.zeros(0)
        q_t = np.maximum(vec(prob["q"]["t"], p.u_t), 1.0 / rho_t) if p.u_t else np.zeros(0)
        return SdpIterate(w_mat_r=mats("r"), w_mat_t=mats("t"),
                          rho_r=rho_r, rho_t=rho_t, mu=mu, q_r=q_r, q_t=q_t)

    def _run(self, problem):
        cp = self._cp
        # drop per-solver state: incremental data updates assume a fixed
        # sparsity pattern, which parameter refills do not guarantee
        if hasattr(problem, "_solver_cache"):
            problem._solver_cache.clear()
        try:
            problem.solve(solver=self.solver, **self.solver_kwargs)
        except Exception:
            problem.solve(solver="SCS", eps=1e-8, max_iters=50_000)
        return problem.status

    # -- public surface ------------------------------------------------------

    def solve_inner(self, lifted, surr, mu, eh, fix_rho=None):
        """Maximize R_tilde - mu * P over the lifted feasible set."""
        key = self._structure_key(lifted, eh, fix_rho)
        if key not in self._inner_cache:
            self._inner_cache[key] = self._build_inner(lifted, eh, fix_rho)
        prob = self._inner_cache[key]
        self._fill_inner(prob, lifted, surr, mu, eh, fix_rho)
        status = self._run(prob["problem"])
        if status in ("infeasible", "infeasible_inaccurate"):
            return None, status
        if prob["problem"].value is None or not np.isfinite(prob["problem"].value):
            return None, status or "failed"
        return self._extract_inner(prob, lifted, fix_rho, mu), status

    def solve_phase1(self, lifted, eh, fix_rho=None):
        """Minimize total violation of C1-C4/C6 with hard power/split bounds.

        Built fresh per call (no cache) since feasibility restoration is rare.
        """
        cp = self._cp
        p = lifted.params
        d = 2 * p.n_tx
        cons = []
        slacks = []
        var = {"v": {}, "rho": {}, "q": {}}
        for s in ("r", "t"):
            n = lifted.users(s)
            _, h_outer, ris_noise = lifted.side(s)
            awgn = getattr(p, f"sigma2_awgn_{s}")
            delta2 = getattr(p, f"delta2_{s}")
            gamma_min = getattr(p, f"gamma_min_{s}")
            p_req = _eh_thresholds(p, eh, s)
            v = [cp.Variable((d, d), PSD=True) for _ in range(n)]
            var["v"][s] = v
            if n and fix_rho is None:
                rho = cp.Variable(n, nonneg=True)
                q = cp.Variable(n, nonneg=True)
                cons += [rho >= RHO_EPS, rho <= 1.0, q >= 1.0, q >= cp.inv_pos(rho)]
            else:
                rho = np.full(n, fix_rho if fix_rho is not None else 0.5)
                q = 1.0 / rho if n else np.zeros(0)
            var["rho"][s], var["q"][s] = rho, q
            for i in range(n):
                scale = delta2[i]
                h_emb = complex_embed(_hermitianize(h_outer[i] / scale))
                sig = [0.5 * cp.trace(h_emb @ v[k]) for k in range(n)]
                interf = sum(sig[k] for k in range(n) if k != i)
                noise = (ris_noise[i] + awgn[i]) / scale
                if gamma_min[i] > 0:
                    s1 = cp.Variable(nonneg=True)
                    slacks.append(s1)
                    cons.append(sig[i] / gamma_min[i] - interf + s1 >= noise + q[i])
                if p_req[i] > 0:
                    s3 = cp.Variable(nonneg=True)
                    slacks.append(s3)
                    received = sum(sig) + ris_noise[i] / scale
                    if fix_rho is None:
                        cons.append(received + s3 >= (p_req[i] / scale) * cp.inv_pos(1.0 - rho[i]))
                    else:
                        cons.append(received + s3 >= (p_req[i] / scale) / (1.0 - fix_rho))
        all_v = var["v"]["r"] + var["v"]["t"]
        cons.append(0.5 * sum(cp.trace(vm) for vm in all_v) / p.p_bs_max <= 1.0)
        amp_const = p.sigma2_ris_r * lifted.fro_r + p.sigma2_ris_t * lifted.fro_t
        amp_expr = 0
        for s in ("r", "t"):
            t_mat = getattr(lifted, f"through_{s}")
            k_emb = complex_embed(_hermitianize(t_mat.conj().T @ t_mat))
            for vm in var["v"][s]:
                amp_expr = amp_expr + 0.5 * cp.trace(k_emb @ vm)
        s6 = cp.Variable(nonneg=True)
        slacks.append(s6)
        cons.append((amp_expr + amp_const) / max(p.p_i_max, 1e-30) <= 1.0 + s6)
        problem = cp.Problem(cp.Minimize(sum(slacks) if slacks else 0), cons)
        status = self._run(problem)
        if status in ("infeasible", "infeasible_inaccurate") or problem.value is None:
            return None, float("inf"), status
        return self._extract_inner(var, lifted, fix_rho, 0.0), float(problem.value), status


def solve_inner_sdp(lifted: LiftedConstants, surr: GSurrogate, mu: float,
                    eh, backend: CvxpyBackend | None = None,
                    fix_rho: float | None = None) -> SdpIterate:
    """One concave subproblem solve; raises on an infeasible model."""
    backend = backend or CvxpyBackend()
    iterate, status = backend.solve_inner(lifted, surr, mu, eh, fix_rho=fix_rho)
    if iterate is None:
        raise RecoveryFailedError(f"inner subproblem not solved: {status}")
    iterate.surrogate_point = surr.expansion
    return iterate


def recover_rank1(w_mat: np.ndarray, rng: np.random.Generator | None = None,
                  n_candidates: int = 200, rank_tol: float = 1e-6,
                  score=None) -> np.ndarray:
    """Extract a beam vector from a PSD matrix.

    Numerically rank-1 inputs return sqrt(lambda_1) * u_1 directly; otherwise
    Gaussian candidates v ~ CN(0, W) are drawn, rescaled to the matrix trace,
    and the best under ``score`` (default: Rayleigh quotient against W) wins.
    """
    w_mat = 0.5 * (w_mat + w_mat.conj().T)
    vals, vecs = np.linalg.eigh(w_mat)
    lead = float(vals[-1])
    if lead <= 0:
        return np.zeros(w_mat.shape[0], dtype=complex)
    second = max(float(vals[-2]), 0.0) if len(vals) > 1 else 0.0
    if second / lead <= rank_tol:
        return np.sqrt(lead) * vecs[:, -1]
    rng = rng or np.random.default_rng(0)
    root = vecs @ np.diag(np.sqrt(np.maximum(vals, 0.0)))
    trace = float(np.real(np.trace(w_mat)))
    if score is None:
        score = lambda v: float(np.real(v.conj() @ w_mat @ v)) / max(float(np.real(v.conj() @ v)), 1e-300)
    best, best_score = None, -np.inf
    n = w_mat.shape[0]
    for _ in range(n_candidates):
        g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        v = root @ g
        nv = float(np.real(v.conj() @ v))
        if nv <= 0:
            continue
        v = v * np.sqrt(trace / nv)
        sc = score(v)
        if sc > best_score:
            best, best_score = v, sc
    return best


def _is_near_rank1(w_mat, rank_tol=1e-6):
    vals = np.linalg.eigvalsh(0.5 * (w_mat + w_mat.conj().T))
    lead = float(vals[-1])
    if lead <= 0:
        return True
    second = max(float(vals[-2]), 0.0) if len(vals) > 1 else 0.0
    return second / lead <= rank_tol


def recover_beamforming(lifted: LiftedConstants, iterate: SdpIterate, eh,
                        rng: np.random.Generator | None = None,
                        n_candidates: int = 200):
    """Turn the lifted solution into feasible beam vectors and splits.

    All-rank-1 solutions map directly; otherwise joint Gaussian randomization
    draws candidate vector tuples, rescales them against the transmit and
    amplifier budgets, and keeps the best feasible tuple by realized energy
    efficiency.  Raises :class:`RecoveryFailedError` (carrying the relaxation
    bound) when no candidate is feasible.
    """
    p = lifted.params
    rng = rng or np.random.default_rng(0)
    ps = PowerSplitSet(rho_r=iterate.rho_r.copy(), rho_t=iterate.rho_t.copy())

    def beams_from(vectors_r, vectors_t):
        return BeamformingSet(
            w_r=np.array(vectors_r).reshape(p.u_r, p.n_tx) if p.u_r else np.zeros((0, p.n_tx)),
            w_t=np.array(vectors_t).reshape(p.u_t, p.n_tx) if p.u_t else np.zeros((0, p.n_tx)))

    all_rank1 = all(_is_near_rank1(w) for w in iterate.w_mat_r + iterate.w_mat_t)
    if all_rank1:
        bf = beams_from([recover_rank1(w) for w in iterate.w_mat_r],
                        [recover_rank1(w) for w in iterate.w_mat_t])
        return bf, ps

    amp_noise_const = p.sigma2_ris_r * lifted.fro_r + p.sigma2_ris_t * lifted.fro_t
    best_bf, best_ee = None, -np.inf
    for c in range(n_candidates):
        vecs = {"r": [], "t": []}
        for s in ("r", "t"):
            for w in iterate.w_side(s):
                if _is_near_rank1(w):
                    vecs[s].append(recover_rank1(w))
                else:
                    vecs[s].append(recover_rank1(w, rng=rng, n_candidates=1))
        bf = beams_from(vecs["r"], vecs["t"])
        # joint rescale against the transmit and amplifier budgets
        tx = bf.total_transmit_power
        scale = min(1.0, np.sqrt(p.p_bs_max / tx)) if tx > 0 else 1.0
        from .model import ris_output_power as _rop
        bf_scaled = BeamformingSet(w_r=scale * bf.w_r, w_t=scale * bf.w_t)
        beam_out = _rop(lifted.channels, lifted.ris, bf_scaled, p) - amp_noise_const
        budget = p.p_i_max - amp_noise_const
        if beam_out > budget > 0:
            extra = np.sqrt(budget / beam_out)
            bf_scaled = BeamformingSet(w_r=extra * bf_scaled.w_r, w_t=extra * bf_scaled.w_t)
        report = check_constraints(lifted.channels, lifted.ris, bf_scaled, ps, p, eh)
        if report.violation_count == 0:
            ee = energy_efficiency(lifted.channels, lifted.ris, bf_scaled, ps, p)
            if ee > best_ee:
                best_bf, best_ee = bf_scaled, ee
    if best_bf is None:
        raise RecoveryFailedError("no feasible rank-1 candidate",
                                  bound=iterate.mu)
    return best_bf, ps


def dinkelbach(lifted: LiftedConstants, eh, epsilon: float = 1e-2,
               k_max: int = 10, backend: CvxpyBackend | None = None,
               fix_rho: float | None = None,
               rng: np.random.Generator | None = None) -> SolveOutcome:
    """Ratio-maximization outer loop over the concave subproblem.

    Starts from mu = 0, re-linearizes the subtracted rate term at each
    iterate, updates mu to the achieved surrogate-rate/power ratio, and stops
    once |R_tilde - mu * P| < epsilon or the iteration cap is reached.
    """
    backend = backend or CvxpyBackend()
    start = mrt_start(lifted)
    if fix_rho is not None:
        start = SdpIterate(w_mat_r=start.w_mat_r, w_mat_t=start.w_mat_t,
                           rho_r=np.full(lifted.params.u_r, fix_rho),
                           rho_t=np.full(lifted.params.u_t, fix_rho))
    margins = lifted_margins(lifted, start, eh)
    if min(margins.values()) < -1e-9:
        start, residual, status = backend.solve_phase1(lifted, eh, fix_rho=fix_rho)
        if start is None or residual > 1e-6:
            return SolveOutcome(bf=None, ps=None, mu_star=0.0, iterations=0,
                                status="infeasible")

    mu = 0.0
    expansion = start
    trace = []
    status = "max_iter"
    iterate = start
    k = 0
    while k < k_max:
        surr = linearize_g(lifted, expansion)
        try:
            iterate = solve_inner_sdp(lifted, surr, mu, eh, backend=backend,
                                      fix_rho=fix_rho)
        except RecoveryFailedError:
            status = "infeasible" if k == 0 else "max_iter"
            iterate = expansion
            break
        r_tilde = eval_surrogate_rate(lifted, surr, iterate)
        power = eval_power(lifted, iterate)
        trace.append({"k": k, "mu": mu, "r_tilde": r_tilde, "power": power,
                      "status": "ok"})
        k += 1
        if abs(r_tilde - mu * power) < epsilon:
            mu = r_tilde / power
            status = "converged"
            break
        mu = r_tilde / power
        expansion = iterate

    if status == "infeasible":
        return SolveOutcome(bf=None, ps=None, mu_star=0.0, iterations=k,
                            status="infeasible", trace=trace)
    iterate.mu = mu
    bf, ps = recover_beamforming(lifted, iterate, eh, rng=rng)
    ee = energy_efficiency(lifted.channels, lifted.ris, bf, ps, lifted.params)
    return SolveOutcome(bf=bf, ps=ps, mu_star=mu, iterations=k, status=status,
                        sdp_objective_gap=mu - ee, trace=trace, iterate=iterate)


class ConvexStage:
    """Callable bundle used by the training loops: channels + surface in,
    beams + splits out."""

    def __init__(self, params: SystemParams, eh, epsilon: float = 1e-2,
                 k_max: int = 10, backend: CvxpyBackend | None = None,
                 fix_rho: float | None = None):
        self.params = params
        self.eh = eh
        self.epsilon = epsilon
        self.k_max = k_max
        self.backend = backend or CvxpyBackend()
        self.fix_rho = fix_rho

    def solve(self, ch: ChannelSet, ris: StarRisConfig) -> SolveOutcome:
        lifted = lift(ch, ris, self.params)
        return dinkelbach(lifted, self.eh, epsilon=self.epsilon,
                          k_max=self.k_max, backend=self.backend,
                          fix_rho=self.fix_rho)
