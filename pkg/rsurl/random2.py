import numpy as np


def seed_sequence(seed) -> np.random.SeedSequence:
    """Integers, None and SeedSequences alike."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def spawn(seed, n) -> list:
    return seed_sequence(seed).spawn(n)


def spawn_ints(seed, n) -> list:
    """n independent integer seeds, e.g. per-episode seeds for reset."""
    return [int(s.generate_state(1)[0]) for s in spawn(seed, n)]


def rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed))


def noise(rng_, shape, scale, mode="normal"):
    if mode == "constant":
        return np.full(shape=shape, fill_value=+scale)
    if mode == "plusminus":
        return np.where(rng_.random(shape) < 0.5, -scale, +scale)
    if mode == "uniform":
        return rng_.uniform(low=-scale, high=+scale, size=shape)
    elif mode == "normal":
        return rng_.normal(loc=0, scale=scale, size=shape)
    else:
        raise ValueError(f"Unknown mode '{mode}'")
