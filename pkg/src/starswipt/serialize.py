"""Versioned JSON serialization of the domain types.

Complex arrays are stored as nested [re, im] pairs; every payload carries a
``"type"`` tag and ``"schema_version"`` so golden files stay self-describing.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from . import channels, model

SCHEMA_VERSION = 1

_TYPES = {
    cls.__name__: cls
    for cls in (
        model.SystemParams,
        model.EhParams,
        model.LinearEhParams,
        model.ChannelSet,
        model.StarRisConfig,
        model.BeamformingSet,
        model.PowerSplitSet,
        model.ConstraintReport,
        channels.Geometry,
        channels.FadingParams,
    )
}


def _encode_value(val):
    if isinstance(val, np.ndarray):
        if np.iscomplexobj(val):
            return {"complex": np.stack([val.real, val.imag], axis=-1).tolist()}
        return val.tolist()
    if isinstance(val, (np.integer,)):
        return int(val)
    if isinstance(val, (np.floating,)):
        return float(val)
    if isinstance(val, dict):
        return {str(k): _encode_value(v) for k, v in val.items()}
    return val


def _decode_value(val):
    if isinstance(val, dict) and set(val) == {"complex"}:
        arr = np.asarray(val["complex"], dtype=float)
        return arr[..., 0] + 1j * arr[..., 1]
    if isinstance(val, list):
        return np.asarray(val)
    return val


def encode(obj) -> dict:
    """Dataclass instance -> plain JSON-compatible dict."""
    name = type(obj).__name__
    if name not in _TYPES:
        raise TypeError(f"no schema registered for {name}")
    payload = {"type": name, "schema_version": SCHEMA_VERSION}
    for f in dataclasses.fields(obj):
        payload[f.name] = _encode_value(getattr(obj, f.name))
    return payload


def decode(payload: dict):
    """Inverse of :func:`encode`; validates the type tag."""
    name = payload.get("type")
    if name not in _TYPES:
        raise ValueError(f"unknown payload type {name!r}")
    cls = _TYPES[name]
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in payload:
            raise ValueError(f"{name} payload is missing field {f.name!r}")
        val = _decode_value(payload[f.name])
        if f.name in ("satisfied", "margin") and isinstance(val, dict):
            val = {int(k): v for k, v in val.items()}
        kwargs[f.name] = val
    return cls(**kwargs)


def dumps(obj, **json_kwargs) -> str:
    return json.dumps(encode(obj), **json_kwargs)


def loads(text: str):
    return decode(json.loads(text))
