"""Flat key = value config files with decimal-string numerics.

Values stay strings until a consumer parses them, so a parsed config
round-trips to an identical canonical serialization on every platform.
Keys are sorted in the canonical form; '#' starts a comment.
"""

from __future__ import annotations

import math
import os

from .masks import MaskSpec, MaskProfile


class ConfigError(ValueError):
    pass


def parse_config_text(text):
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in fields:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        fields[key] = value.strip()
    return fields


def read_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def canonical_text(fields):
    lines = [f"{key} = {fields[key]}" for key in sorted(fields)]
    return "\n".join(lines) + "\n"


def write_config(path, fields):
    atomic_write_text(path, canonical_text(fields))


def atomic_write_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def atomic_write_bytes(path, payload):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


# ----------------------------------------------------------------------
# Cylinder config <-> fields
# ----------------------------------------------------------------------

def cylinder_config_fields(config):
    spec = config.spec
    fields = {
        "re": repr(config.re),
        "eta": repr(config.eta),
        "profile": spec.profile.family,
        "shift": repr(spec.shift),
        "delta": repr(spec.delta),
        "r1": repr(config.r1),
        "r2": repr(config.r2),
        "n_theta": str(config.n_theta),
        "n_solid": str(config.radial_counts[0]),
        "n_mask": str(config.radial_counts[1]),
        "n_fluid": str(config.radial_counts[2]),
        "dt_max": repr(config.dt_max),
        "t_end": repr(config.t_end),
        "ramp_time": repr(config.ramp_time),
        "rotation_amplitude": repr(config.rotation_amplitude),
        "rotation_frequency": repr(config.rotation_frequency),
        "scheme": config.scheme,
        "output_interval": repr(config.output_interval),
        "snapshot_times": ",".join(repr(t) for t in config.snapshot_times),
        "n_ref": str(config.n_ref),
    }
    if config.dt is not None:
        fields["dt"] = repr(config.dt)
    if spec.profile.is_compact:
        fields["c"] = repr(spec.profile.c)
    return fields


def cylinder_config_from_fields(fields):
    from .cylinder import CylinderConfig

    def get(key, default=None):
        if key in fields:
            return fields[key]
        if default is None:
            raise ConfigError(f"missing config key {key!r}")
        return default

    c = float(fields["c"]) if "c" in fields else None
    profile = MaskProfile(get("profile", "discontinuous"), c)
    spec = MaskSpec(profile, float(get("shift", "0")), float(get("delta", "0")))
    snap = get("snapshot_times", " ").strip()
    snapshot_times = tuple(float(s) for s in snap.split(",") if s) if snap else ()
    cfg = CylinderConfig(
        re=float(get("re", "50")),
        eta=float(get("eta", "1e-3")),
        spec=spec,
        r1=float(get("r1", "0.1")),
        r2=float(get("r2", "10")),
        n_theta=int(get("n_theta", "128")),
        radial_counts=(int(get("n_solid", "96")), int(get("n_mask", "32")),
                       int(get("n_fluid", "136"))),
        dt=float(fields["dt"]) if "dt" in fields else None,
        dt_max=float(get("dt_max", "5e-4")),
        t_end=float(get("t_end", "5.0")),
        ramp_time=float(get("ramp_time", "2.0")),
        rotation_amplitude=float(get("rotation_amplitude", "1.0")),
        rotation_frequency=float(get("rotation_frequency", repr(2.0 / math.pi))),
        scheme=get("scheme", "bdf2"),
        output_interval=float(get("output_interval", "0.05")),
        snapshot_times=snapshot_times,
        n_ref=int(get("n_ref", "200")),
    )
    return cfg
