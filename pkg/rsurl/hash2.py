import json
import hashlib

import numpy as np


default_method_name = "sha256"
default_method = hashlib.sha256


def hash2(b: bytes) -> str:
    m = default_method()
    m.update(b)
    return m.hexdigest()


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canonical(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def config_hash(d: dict, n: int = 16) -> str:
    s = json.dumps(_canonical(d), sort_keys=True, separators=(",", ":"))
    return hash2(s.encode("utf-8"))[:n]
