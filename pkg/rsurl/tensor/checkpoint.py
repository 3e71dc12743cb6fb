"""
Parameter checkpoint container (msgpack), layout in docs/formats.md:

    {"format": "rsurl-params",
     "version": 1,
     "meta": {...},                                    # free-form, json-compatible
     "params": {path: {"shape": [int, ...], "data": <bytes, float64 little-endian>}}}
"""
import numpy as np

from rsurl import files
from rsurl.tensor.tensor import Tensor

FORMAT = "rsurl-params"
VERSION = 1


def params2dict(params: dict) -> dict:
    d = {}
    for path in sorted(params):
        p = params[path]
        a = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
        d[str(path)] = {"shape": list(a.shape), "data": files.array2bytes(a)}
    return d


def dict2params(d: dict) -> dict:
    params = {}
    for path, entry in d.items():
        shape = tuple(entry["shape"])
        data = entry["data"]
        if len(data) != 8 * int(np.prod(shape, dtype=int)):
            raise ValueError(f"Checkpoint entry '{path}': {len(data)} bytes do not match shape {shape}")
        params[path] = files.bytes2array(data, shape=shape)
    return params


def save_checkpoint(file: str, params: dict, meta: dict = None):
    obj = {"format": FORMAT,
           "version": VERSION,
           "meta": {} if meta is None else meta,
           "params": params2dict(params)}
    files.save_msgpack(file=file, obj=obj)


def load_checkpoint(file: str):
    """Returns (params: path -> ndarray, meta)."""
    obj = files.load_msgpack(file)
    if not isinstance(obj, dict) or obj.get("format") != FORMAT:
        raise ValueError(f"'{file}' is not an {FORMAT} checkpoint")
    if obj.get("version") != VERSION:
        raise ValueError(f"Unsupported checkpoint version {obj.get('version')} in '{file}', expected {VERSION}")

    return dict2params(obj["params"]), obj["meta"]
