"""Serialization: profile text files, JSON documents, run manifests."""
from __future__ import annotations

import datetime as _dt
import json
import math
import os
import re
from dataclasses import asdict, is_dataclass

import numpy as np

from . import __version__
from .errors import ArtifactError
from .thresholds import ThresholdSet


class IoError(ArtifactError):
    pass


def _plain(obj):
    """JSON-safe copy: numpy scalars/arrays to python, tuples to lists, non-finite floats to strings."""
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.to_dict() if hasattr(obj, "to_dict") else asdict(obj)
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, tuple) else "".join(map(str, k)): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _revive(obj):
    if isinstance(obj, dict):
        return {k: _revive(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_revive(v) for v in obj]
    if obj in ("nan", "inf", "-inf"):
        return float(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _write(path, text):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None
    return path


def write_json(path, obj):
    return _write(path, dumps(obj))


def read_json(path):
    try:
        with open(path) as fh:
            return _revive(json.load(fh))
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from None


# ---------------------------------------------------------------- names

def slug(s) -> str:
    if isinstance(s, (tuple, list)):
        s = "".join(map(str, s))
    return re.sub(r"[^A-Za-z0-9_.=+-]+", "_", str(s)).strip("_") or "x"


def profile_name(run_id, tag) -> str:
    return f"{slug(run_id)}_{slug(tag)}.csv"


# ---------------------------------------------------------------- profiles

def profile_text(x, u, du, meta=None) -> str:
    lines = [f"# {k} = {json.dumps(_plain(v), sort_keys=True)}" for k, v in sorted((meta or {}).items())]
    lines.append("x,u,du")
    body = np.column_stack([x, u, du])
    lines += [",".join(f"{v:.17g}" for v in row) for row in body]
    return "\n".join(lines) + "\n"


def profile_meta(prof) -> dict:
    m = dict(bc=prof.bc.kind, k=prof.bc.k, residual=prof.residual, band_maxima=prof.band_maxima,
             interior=prof.interior, iterations=prof.iterations, params=prof.params)
    if prof.string is not None:
        m["string"] = "".join(map(str, prof.string))
    if prof.stability:
        m["stability"] = prof.stability
    m.update({f"meta.{k}": v for k, v in prof.meta.items()})
    return m


def write_profile(path, prof, extra=None):
    meta = profile_meta(prof)
    meta.update(extra or {})
    return _write(path, profile_text(prof.x, prof.u, prof.v, meta))


def read_profile(path):
    """Return (x, u, du, meta) from a profile file."""
    meta = {}
    try:
        with open(path) as fh:
            head = []
            for line in fh:
                if not line.startswith("#"):
                    head.append(line)
                    break
                k, _, v = line[1:].partition("=")
                meta[k.strip()] = _revive(json.loads(v))
            if head[0].strip() != "x,u,du":
                raise IoError(f"{path}: missing column header")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError, IndexError) as exc:
        raise IoError(f"cannot read profile {path}: {exc}") from None
    return data[:, 0], data[:, 1], data[:, 2], meta


# ---------------------------------------------------------------- ledgers

def flatten(d, prefix=""):
    """Nested dicts/lists to dotted keys, one scalar per key."""
    out = {}
    if isinstance(d, dict):
        for k, v in d.items():
            out.update(flatten(v, f"{prefix}{k}."))
    elif isinstance(d, (list, tuple)) and len(d) > 0:
        for i, v in enumerate(d):
            out.update(flatten(v, f"{prefix}{i}."))
    else:
        out[prefix[:-1]] = _plain(d)
    return out


def write_thresholds(path, ts: ThresholdSet, extra=None):
    d = ts.to_dict()
    if extra:
        d = dict(d, **extra)
    return write_json(path, d)


def read_thresholds(path) -> ThresholdSet:
    d = read_json(path)
    keys = set(ThresholdSet.__dataclass_fields__)
    return ThresholdSet.from_dict({k: v for k, v in d.items() if k in keys})


# ---------------------------------------------------------------- manifest

def manifest(command, cfg, files, wall_time, status=0, extra=None) -> dict:
    return dict(command=command, config_hash=cfg.digest(), config=cfg.to_dict(), version=__version__,
                workers=cfg.workers, files=sorted(os.path.basename(f) for f in files), status=status,
                wall_time=wall_time, timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
                **(extra or {}))


TIMING_KEYS = ("wall_time", "timestamp")


def strip_timing(m: dict) -> dict:
    """Manifest without its time-dependent entries (for determinism checks)."""
    return {k: v for k, v in m.items() if k not in TIMING_KEYS}
