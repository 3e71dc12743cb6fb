import os
import json

import msgpack
import numpy as np
import pandas as pd


EXT_DICT = dict(json="json",
                csv="csv",
                msgpack="msgpack")

COMMENT = "#"


def mkdirs(directory):
    if directory is None or directory == "":
        return

    if isinstance(directory, list):
        for d in directory:
            mkdirs(d)
    else:
        os.makedirs(directory, exist_ok=True)


def ensure_extension_point(ext: str):
    if ext[0] != ".":
        ext = "." + ext
    return ext


def ensure_file_extension(file: str, ext: str):
    ext = ensure_extension_point(ext)

    if not file.endswith(ext):
        file += ext

    return file


def are_files_identical(file_a, file_b):
    with open(file_a, "rb") as f:
        aa = f.read()

    with open(file_b, "rb") as f:
        bb = f.read()

    return aa == bb


# json
def save_json(obj, file: str):
    file = ensure_file_extension(file=file, ext=EXT_DICT["json"])
    mkdirs(directory=os.path.split(file)[0])
    with open(file, "w") as f:
        json.dump(obj, f, indent=4, sort_keys=True)


def load_json(file: str):
    file = ensure_file_extension(file=file, ext=EXT_DICT["json"])
    with open(file, "r") as f:
        obj = json.load(f)
    return obj


# msgpack
def load_msgpack(file):
    with open(file, "rb") as f:
        b = f.read()
    return msgpack.unpackb(b, raw=False)


def save_msgpack(file, obj):
    b = msgpack.packb(obj, use_bin_type=True)
    mkdirs(directory=os.path.split(file)[0])
    with open(file, "wb") as f:
        f.write(b)


# csv
def provenance_line(seed, config_hash) -> str:
    return f"{COMMENT} rsurl seed={seed} config_hash={config_hash}"


def save_csv(df: pd.DataFrame, file: str, seed=None, config_hash=None):
    """
    Comma-separated table with a leading provenance comment row and a header row.
    Floats are written with full round-trip precision.
    """
    file = ensure_file_extension(file=file, ext=EXT_DICT["csv"])
    mkdirs(directory=os.path.split(file)[0])
    with open(file, "w", newline="") as f:
        f.write(provenance_line(seed=seed, config_hash=config_hash) + "\n")
        df.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")


def load_csv(file: str, dtype=None) -> pd.DataFrame:
    return pd.read_csv(file, comment=COMMENT, dtype=dtype, float_precision="round_trip")


def read_provenance(file: str) -> dict:
    with open(file, "r") as f:
        line = f.readline().strip()

    if not line.startswith(COMMENT):
        return {}

    d = {}
    for token in line[1:].split():
        if "=" in token:
            k, v = token.split("=", 1)
            d[k] = v
    return d


def array2bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def bytes2array(b: bytes, shape) -> np.ndarray:
    return np.frombuffer(b, dtype="<f8").astype(np.float64).reshape(shape)
