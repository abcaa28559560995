"""Seeded synthesis of channel realizations from the network geometry.

Direct BS-user links are Rayleigh; the BS-surface matrix and surface-user
links are Rician around a steering-vector line-of-sight component.  Every
link is scaled by a log-distance path loss.  All draws come from named
Philox streams so a (seed, geometry, params) triple maps to a bit-identical
:class:`~starswipt.model.ChannelSet`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .model import ChannelSet, SystemParams
from .rng import named_stream

__all__ = [
    "Geometry",
    "FadingParams",
    "path_loss_db",
    "steering_vector",
    "gen_rayleigh",
    "gen_rician",
    "sample_positions",
    "build_channel_set",
    "default_geometry",
]


@dataclass
class Geometry:
    """Node positions in meters; users live on ground-level disks."""

    bs_pos: np.ndarray
    ris_pos: np.ndarray
    center_r: np.ndarray
    center_t: np.ndarray
    radius_r: float = 3.0
    radius_t: float = 3.0
    user_pos_r: np.ndarray | None = None
    user_pos_t: np.ndarray | None = None

    def __post_init__(self):
        for key in ("bs_pos", "ris_pos", "center_r", "center_t"):
            setattr(self, key, np.asarray(getattr(self, key), dtype=float).reshape(3))
        if self.radius_r < 0 or self.radius_t < 0:
            raise ValueError("disk radii must be >= 0")
        for key in ("user_pos_r", "user_pos_t"):
            val = getattr(self, key)
            if val is not None:
                setattr(self, key, np.asarray(val, dtype=float).reshape(-1, 3))


def default_geometry() -> Geometry:
    """BS and surface 15 m up, user disks of radius 3 m straddling the surface."""
    return Geometry(bs_pos=[0.0, 0.0, 15.0], ris_pos=[0.0, 20.0, 15.0],
                    center_r=[0.0, 16.0, 0.0], center_t=[0.0, 24.0, 0.0])


@dataclass
class FadingParams:
    """Fading and path-loss configuration.

    The direct exponent is deliberately higher than the surface-leg exponent:
    the deployment assumes weak direct links.
    """

    rician_k_db: float = 5.0
    pathloss_exp_direct: float = 3.5
    pathloss_exp_ris: float = 2.2
    l0_db: float = -30.0
    d0: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.d0 <= 0:
            raise ValueError("d0 must be > 0")


def path_loss_db(d: float, exp: float, l0_db: float, d0: float = 1.0) -> float:
    """Log-distance gain in dB (negative): l0 - 10*exp*log10(d/d0)."""
    if d < d0:
        raise ValueError(f"distance {d} below the reference distance {d0}")
    return l0_db - 10.0 * exp * np.log10(d / d0)


def steering_vector(n_el: int, spatial_angle: float) -> np.ndarray:
    """Half-wavelength uniform linear array response, unit-modulus entries."""
    if n_el < 1:
        raise ValueError("n_el must be >= 1")
    k = np.arange(n_el)
    return np.exp(1j * np.pi * k * np.sin(spatial_angle))


def gen_rayleigh(rows: int, cols: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. circularly-symmetric complex Gaussian entries, per-entry power = scale."""
    if scale < 0:
        raise ValueError("scale must be >= 0")
    shape = (rows, cols)
    draw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return np.sqrt(scale / 2.0) * draw


def gen_rician(los: np.ndarray, k_db: float, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Mix a deterministic unit-modulus LoS with a scattered component.

    Per-entry mean power equals ``scale`` and the LoS carries the K/(K+1)
    fraction of it.
    """
    los = np.asarray(los, dtype=complex)
    k_lin = 10.0 ** (k_db / 10.0)
    nlos = (rng.standard_normal(los.shape) + 1j * rng.standard_normal(los.shape)) / np.sqrt(2.0)
    return np.sqrt(scale) * (np.sqrt(k_lin / (k_lin + 1.0)) * los
                             + np.sqrt(1.0 / (k_lin + 1.0)) * nlos)


def sample_positions(geom: Geometry, u_r: int, u_t: int,
                     rng: np.random.Generator) -> Geometry:
    """Place users area-uniformly on their disks (ground level)."""

    def draw(center, radius, n):
        r = radius * np.sqrt(rng.random(n))
        theta = 2.0 * np.pi * rng.random(n)
        pos = np.tile(center, (n, 1))
        pos[:, 0] += r * np.cos(theta)
        pos[:, 1] += r * np.sin(theta)
        return pos

    return replace(geom,
                   user_pos_r=draw(geom.center_r, geom.radius_r, u_r),
                   user_pos_t=draw(geom.center_t, geom.radius_t, u_t))


def _link_gain(d: float, exp: float, fading: FadingParams) -> float:
    """Linear power gain of one link; distances inside d0 clamp with a warning."""
    if d < fading.d0:
        warnings.warn(f"link distance {d:.3g} m clamped to d0={fading.d0} m",
                      stacklevel=3)
        d = fading.d0
    return 10.0 ** (path_loss_db(d, exp, fading.l0_db, fading.d0) / 10.0)


def _direction_cosine(src: np.ndarray, dst: np.ndarray) -> float:
    """sin(spatial angle) for arrays laid out along the x axis."""
    delta = dst - src
    d = np.linalg.norm(delta)
    return 0.0 if d == 0 else float(delta[0] / d)


def build_channel_set(geom: Geometry, fading: FadingParams, params: SystemParams,
                      rng: np.random.Generator | None = None) -> ChannelSet:
    """Synthesize one ChannelSet for given user positions.

    ``geom`` must carry user positions (see :func:`sample_positions`).  With
    ``rng=None``, independent named streams are derived from ``fading.seed``;
    passing an explicit generator draws everything from it in a documented
    order (G, surface-user r, surface-user t, direct r, direct t).
    """
    if geom.user_pos_r is None or geom.user_pos_t is None:
        raise ValueError("geometry is missing user positions")
    if geom.user_pos_r.shape[0] != params.u_r or geom.user_pos_t.shape[0] != params.u_t:
        raise ValueError("user position counts do not match params")

    rng_ris = rng if rng is not None else named_stream(fading.seed, "ris")
    rng_direct = rng if rng is not None else named_stream(fading.seed, "direct")
    m, n_tx = params.m_elements, params.n_tx

    d_g = float(np.linalg.norm(geom.ris_pos - geom.bs_pos))
    scale_g = _link_gain(d_g, fading.pathloss_exp_ris, fading)
    los_g = np.outer(steering_vector(m, np.arcsin(_direction_cosine(geom.ris_pos, geom.bs_pos))),
                     steering_vector(n_tx, np.arcsin(_direction_cosine(geom.bs_pos, geom.ris_pos))).conj())
    g_bs_ris = gen_rician(los_g, fading.rician_k_db, scale_g, rng_ris)

    def ris_user_links(positions):
        links = np.zeros((positions.shape[0], m), dtype=complex)
        for i, pos in enumerate(positions):
            d = float(np.linalg.norm(pos - geom.ris_pos))
            scale = _link_gain(d, fading.pathloss_exp_ris, fading)
            los = steering_vector(m, np.arcsin(_direction_cosine(geom.ris_pos, pos)))
            links[i] = gen_rician(los, fading.rician_k_db, scale, rng_ris).reshape(m)
        return links

    def direct_links(positions):
        links = np.zeros((positions.shape[0], n_tx), dtype=complex)
        for i, pos in enumerate(positions):
            d = float(np.linalg.norm(pos - geom.bs_pos))
            scale = _link_gain(d, fading.pathloss_exp_direct, fading)
            links[i] = gen_rayleigh(1, n_tx, scale, rng_direct).reshape(n_tx)
        return links

    h_ris_r = ris_user_links(geom.user_pos_r)
    h_ris_t = ris_user_links(geom.user_pos_t)
    h_direct_r = direct_links(geom.user_pos_r)
    h_direct_t = direct_links(geom.user_pos_t)
    return ChannelSet(g_bs_ris=g_bs_ris, h_direct_r=h_direct_r, h_direct_t=h_direct_t,
                      h_ris_r=h_ris_r, h_ris_t=h_ris_t)
