"""Experiment configuration: YAML schema, strict validation, profile builders.

Configs are plain nested dicts validated against the schema below: unknown
keys are rejected by name, and every key — including the full simulation
parameter table — must be present (dBm values are converted to watts only
when the domain objects are built).  Dotted-path overrides implement the
CLI's ``--set section.key=value``.
"""

from __future__ import annotations

import copy
import math

import yaml

from .agents import AgentHyper
from .channels import FadingParams, Geometry
from .meta import MetaHyper
from .model import EhParams, LinearEhParams, SystemParams, dbm_to_watt

__all__ = [
    "ConfigError",
    "SCHEMA",
    "validate_config",
    "load_config",
    "apply_overrides",
    "table1_config",
    "desk_config",
    "build_system_params",
    "build_eh",
    "build_geometry",
    "build_fading",
    "build_agent_hyper",
    "build_meta_hyper",
]


class ConfigError(ValueError):
    pass


_num = (int, float)

# section -> key -> allowed types (None entries allow a YAML null)
SCHEMA = {
    "": {"scheme": str, "seeds": list, "episodes": int, "output_dir": str},
    "system": {
        "n_tx": int, "m_elements": int, "n_active_max": int,
        "u_r": int, "u_t": int,
        "p_bs_max_dbm": _num, "p_i_max_dbm": _num, "a_max": _num,
        "sigma2_awgn_dbm": _num, "sigma2_ris_dbm": _num, "delta2_dbm": _num,
        "gamma_min": _num, "e_min_watt": _num,
        "p_cir_bs_dbm": _num, "p_cir_user_dbm": _num,
        "p_c_dbm": _num, "p_dc_dbm": _num, "zeta": _num,
        "asr_count_mode": str, "ris_mode": str,
    },
    "eh": {"model": str, "m_sat_watt": _num, "a_curve": _num,
           "b_curve_watt": _num, "mu_linear": _num},
    "geometry": {"bs_pos": list, "ris_pos": list, "center_r": list,
                 "center_t": list, "radius_r": _num, "radius_t": _num},
    "fading": {"rician_k_db": _num, "pathloss_exp_direct": _num,
               "pathloss_exp_ris": _num, "l0_db": _num, "d0": _num},
    "solver": {"epsilon": _num, "k_max": int, "rho_fixed": (_num, type(None))},
    "env": {"episode_steps": int},
    "agent": {"hidden": list, "discount": _num, "entropy_weight": _num,
              "lr_critic": _num, "lr_actor": _num, "lr_sac_actor": _num,
              "tau_soft": _num, "batch_size": int, "buffer_capacity": int,
              "noise_scale": _num, "noise_decay": _num,
              "grad_clip": (_num, type(None))},
    "meta": {"z_tasks": int, "episodes_train": int, "episodes_adapt": int,
             "inner_steps": int, "inner_rate_scale": _num,
             "adapt_rates_scale": _num},
    "sweep": {"parameter": (str, type(None)), "values": list},
}

# the simulation-parameter table of the reproduced setup; omitting any of
# these must fail validation by name
TABLE_KEYS = [
    "system.p_bs_max_dbm", "system.p_i_max_dbm",
    "eh.m_sat_watt", "eh.a_curve", "eh.b_curve_watt", "eh.mu_linear",
    "system.sigma2_awgn_dbm", "system.sigma2_ris_dbm", "system.delta2_dbm",
    "system.p_cir_bs_dbm", "system.p_cir_user_dbm",
    "system.p_c_dbm", "system.p_dc_dbm", "system.zeta",
    "system.n_tx", "system.u_r", "system.u_t", "system.m_elements",
    "solver.k_max",
]

SCHEMES = ("scheme1", "scheme2", "baseline1", "baseline2", "baseline3",
           "baseline4")


def validate_config(cfg: dict) -> None:
    """Raise :class:`ConfigError` naming any unknown or missing key."""
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    for key, value in cfg.items():
        if key in SCHEMA[""]:
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"section {key!r} must be a mapping")
        for sub in value:
            if sub not in SCHEMA[key]:
                raise ConfigError(f"unknown key {key}.{sub!r}")
    for key, typ in SCHEMA[""].items():
        if key not in cfg:
            raise ConfigError(f"missing key {key!r}")
        if not isinstance(cfg[key], typ) or isinstance(cfg[key], bool):
            raise ConfigError(f"key {key!r} must be {typ}")
    for section, keys in SCHEMA.items():
        if not section:
            continue
        if section not in cfg:
            raise ConfigError(f"missing section {section!r}")
        for sub, typ in keys.items():
            if sub not in cfg[section]:
                raise ConfigError(f"missing key {section}.{sub}")
            val = cfg[section][sub]
            if not isinstance(val, typ) or isinstance(val, bool):
                raise ConfigError(f"key {section}.{sub} must be {typ}")
    if cfg["scheme"] not in SCHEMES:
        raise ConfigError(f"unknown scheme {cfg['scheme']!r}; "
                          f"expected one of {SCHEMES}")
    if cfg["eh"]["model"] not in ("nonlinear", "linear"):
        raise ConfigError("eh.model must be 'nonlinear' or 'linear'")
    for dotted in TABLE_KEYS:
        section, key = dotted.split(".")
        if key not in cfg.get(section, {}):
            raise ConfigError(f"missing simulation-table key {dotted}")


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    validate_config(cfg)
    return cfg


def set_by_path(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"no such config path {dotted!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"no such config path {dotted!r}")
    node[parts[-1]] = value


def _parse_scalar(raw: str):
    value = yaml.safe_load(raw)
    if isinstance(value, str):
        # YAML 1.1 treats e.g. "1e9" as a string; accept plain numerics
        try:
            return int(value)
        except ValueError:
            pass
        try:
            return float(value)
        except ValueError:
            return value
    return value


def apply_overrides(cfg: dict, assignments: list[str]) -> dict:
    """Apply ``section.key=value`` strings (values parsed as YAML scalars)."""
    out = copy.deepcopy(cfg)
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        set_by_path(out, path.strip(), _parse_scalar(raw))
    validate_config(out)
    return out


# ---------------------------------------------------------------- profiles

def table1_config() -> dict:
    """Full-scale profile mirroring the published simulation table."""
    return {
        "scheme": "scheme1",
        "seeds": [0, 1, 2],
        "episodes": 300,
        "output_dir": "results",
        "system": {
            "n_tx": 5, "m_elements": 16, "n_active_max": 16,
            "u_r": 3, "u_t": 3,
            "p_bs_max_dbm": 40.0, "p_i_max_dbm": 5.0, "a_max": 4.0,
            "sigma2_awgn_dbm": -80.0, "sigma2_ris_dbm": -80.0,
            "delta2_dbm": -50.0,
            "gamma_min": 0.01, "e_min_watt": 1.0e-16,
            "p_cir_bs_dbm": 30.0, "p_cir_user_dbm": 7.0,
            "p_c_dbm": -10.0, "p_dc_dbm": -5.0, "zeta": 1.25,
            "asr_count_mode": "active", "ris_mode": "active",
        },
        "eh": {"model": "nonlinear", "m_sat_watt": 0.02, "a_curve": 6400.0,
               "b_curve_watt": 0.003, "mu_linear": 0.5},
        "geometry": {"bs_pos": [0.0, 0.0, 15.0], "ris_pos": [0.0, 20.0, 15.0],
                     "center_r": [0.0, 16.0, 0.0], "center_t": [0.0, 24.0, 0.0],
                     "radius_r": 3.0, "radius_t": 3.0},
        "fading": {"rician_k_db": 5.0, "pathloss_exp_direct": 3.5,
                   "pathloss_exp_ris": 2.2, "l0_db": -30.0, "d0": 1.0},
        "solver": {"epsilon": 1.0e-2, "k_max": 10, "rho_fixed": None},
        "env": {"episode_steps": 200},
        "agent": {"hidden": [256, 256], "discount": 0.95,
                  "entropy_weight": 0.2, "lr_critic": 1.0e-3,
                  "lr_actor": 1.0e-4, "lr_sac_actor": 1.0e-4,
                  "tau_soft": 0.005, "batch_size": 64,
                  "buffer_capacity": 100000, "noise_scale": 0.1,
                  "noise_decay": 0.999, "grad_clip": 10.0},
        "meta": {"z_tasks": 3, "episodes_train": 100, "episodes_adapt": 100,
                 "inner_steps": 1, "inner_rate_scale": 0.1,
                 "adapt_rates_scale": 1.0},
        "sweep": {"parameter": None, "values": []},
    }


def desk_config() -> dict:
    """CI-scale profile: small surface, one user per side, short episodes.

    The direct-link exponent is raised so the surface path materially drives
    the achievable efficiency at this scale.
    """
    cfg = table1_config()
    cfg["system"].update({"n_tx": 3, "m_elements": 8, "n_active_max": 8,
                          "u_r": 1, "u_t": 1, "gamma_min": 5.0e-4})
    cfg["fading"]["pathloss_exp_direct"] = 4.5
    cfg["env"]["episode_steps"] = 25
    cfg["agent"].update({"hidden": [64, 64], "batch_size": 32,
                         "entropy_weight": 0.05, "lr_actor": 3.0e-4,
                         "lr_sac_actor": 3.0e-4})
    cfg["meta"].update({"episodes_train": 40, "episodes_adapt": 40})
    return cfg


# ------------------------------------------------------------------ builders

def build_system_params(cfg: dict) -> SystemParams:
    s = cfg["system"]
    return SystemParams(
        n_tx=s["n_tx"], m_elements=s["m_elements"],
        n_active_max=s["n_active_max"], u_r=s["u_r"], u_t=s["u_t"],
        p_bs_max=dbm_to_watt(s["p_bs_max_dbm"]),
        p_i_max=dbm_to_watt(s["p_i_max_dbm"]),
        a_max=s["a_max"],
        sigma2_ris_r=0.0 if s["ris_mode"] == "passive"
        else dbm_to_watt(s["sigma2_ris_dbm"]),
        sigma2_ris_t=0.0 if s["ris_mode"] == "passive"
        else dbm_to_watt(s["sigma2_ris_dbm"]),
        sigma2_awgn_r=dbm_to_watt(s["sigma2_awgn_dbm"]),
        sigma2_awgn_t=dbm_to_watt(s["sigma2_awgn_dbm"]),
        delta2_r=dbm_to_watt(s["delta2_dbm"]),
        delta2_t=dbm_to_watt(s["delta2_dbm"]),
        gamma_min_r=s["gamma_min"], gamma_min_t=s["gamma_min"],
        e_min_r=s["e_min_watt"], e_min_t=s["e_min_watt"],
        p_cir_bs=dbm_to_watt(s["p_cir_bs_dbm"]),
        p_cir_user=dbm_to_watt(s["p_cir_user_dbm"]),
        p_c=dbm_to_watt(s["p_c_dbm"]), p_dc=dbm_to_watt(s["p_dc_dbm"]),
        zeta=s["zeta"], asr_count_mode=s["asr_count_mode"],
        ris_mode=s["ris_mode"])


def build_eh(cfg: dict):
    e = cfg["eh"]
    if e["model"] == "linear":
        return LinearEhParams(mu=e["mu_linear"])
    eh = EhParams(m_sat=e["m_sat_watt"], a_curve=e["a_curve"],
                  b_curve=e["b_curve_watt"])
    if cfg["system"]["e_min_watt"] >= eh.m_sat:
        raise ConfigError("system.e_min_watt must lie below eh.m_sat_watt")
    return eh


def build_geometry(cfg: dict) -> Geometry:
    g = cfg["geometry"]
    return Geometry(bs_pos=g["bs_pos"], ris_pos=g["ris_pos"],
                    center_r=g["center_r"], center_t=g["center_t"],
                    radius_r=g["radius_r"], radius_t=g["radius_t"])


def build_fading(cfg: dict, seed: int = 0) -> FadingParams:
    f = cfg["fading"]
    return FadingParams(rician_k_db=f["rician_k_db"],
                        pathloss_exp_direct=f["pathloss_exp_direct"],
                        pathloss_exp_ris=f["pathloss_exp_ris"],
                        l0_db=f["l0_db"], d0=f["d0"], seed=seed)


def build_agent_hyper(cfg: dict) -> AgentHyper:
    a = cfg["agent"]
    return AgentHyper(discount=a["discount"],
                      entropy_weight=a["entropy_weight"],
                      lr_critic=a["lr_critic"], lr_actor=a["lr_actor"],
                      lr_sac_actor=a["lr_sac_actor"], tau_soft=a["tau_soft"],
                      batch_size=a["batch_size"],
                      buffer_capacity=a["buffer_capacity"],
                      noise_scale=a["noise_scale"],
                      noise_decay=a["noise_decay"],
                      hidden=tuple(a["hidden"]), grad_clip=a["grad_clip"])


def build_meta_hyper(cfg: dict) -> MetaHyper:
    m = cfg["meta"]
    return MetaHyper(inner_steps=m["inner_steps"],
                     inner_rate_scale=m["inner_rate_scale"],
                     adapt_rates_scale=m["adapt_rates_scale"])
