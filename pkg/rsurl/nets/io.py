"""
Run directories hold one parameter checkpoint per role, optionally the critics, and a manifest.json:

    {"roles": {"left": "actor_left.msgpack", ...}, "critic": "critic.msgpack" | null, "value": ...,
     "phase": "offline" | "online", "config_hash": str, "seed": int, "init": "offline" | "scratch"}
"""
import os

import numpy as np

from rsurl import files
from rsurl.tensor.checkpoint import save_checkpoint, load_checkpoint
from rsurl.nets.actor import Actor, RoleActorSet
from rsurl.nets.critic import TwinCritic, ValueNet

MANIFEST = "manifest.json"
PHASES = ("offline", "online")


def save_module(file, module, meta: dict):
    save_checkpoint(file, params=module.state_dict(), meta=meta)


def _build(kind, meta):
    rng = np.random.default_rng(0)  # replaced by the stored parameters
    if kind == "actor":
        return Actor(meta["role"], rng=rng, arch=meta["arch"])
    elif kind == "critic":
        return TwinCritic(rng=rng, arch=meta["arch"])
    elif kind == "value":
        return ValueNet(rng=rng, arch=meta["arch"])
    else:
        raise ValueError(f"Unknown module kind '{kind}' in checkpoint")


def load_module(file):
    params, meta = load_checkpoint(file)
    return _build(meta["kind"], meta).load_state_dict(params), meta


def save_run(directory, actors: RoleActorSet, phase, config_hash=None, seed=None, init=None,
             critic: TwinCritic = None, value: ValueNet = None):
    if phase not in PHASES:
        raise ValueError(f"Unknown phase '{phase}', expected one of {PHASES}")
    files.mkdirs(directory)
    common = dict(phase=phase, config_hash=config_hash, seed=seed)

    manifest = dict(roles={}, critic=None, value=None, init=init, **common)
    for role, actor in actors.items():
        name = f"actor_{role}.msgpack"
        save_module(os.path.join(directory, name), actor, meta=dict(kind="actor", role=role, arch=actor.arch, **common))
        manifest["roles"][role] = name
    if critic is not None:
        manifest["critic"] = "critic.msgpack"
        save_module(os.path.join(directory, manifest["critic"]), critic, meta=dict(kind="critic", arch=critic.arch,
                                                                                   **common))
    if value is not None:
        manifest["value"] = "value.msgpack"
        save_module(os.path.join(directory, manifest["value"]), value, meta=dict(kind="value", arch=value.arch,
                                                                                 **common))

    files.save_json(manifest, os.path.join(directory, MANIFEST))
    return manifest


def load_manifest(directory):
    file = os.path.join(directory, MANIFEST)
    if not os.path.isfile(file):
        raise FileNotFoundError(f"No {MANIFEST} in '{directory}'")
    return files.load_json(file)


def load_run(directory):
    """Returns (actors, critic or None, value or None, manifest)."""
    manifest = load_manifest(directory)
    actors = RoleActorSet({role: load_module(os.path.join(directory, name))[0]
                           for role, name in manifest["roles"].items()})
    critic = None if manifest.get("critic") is None else load_module(os.path.join(directory, manifest["critic"]))[0]
    value = None if manifest.get("value") is None else load_module(os.path.join(directory, manifest["value"]))[0]
    return actors, critic, value, manifest
