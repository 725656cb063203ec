import numpy as np

MASK64 = (1 << 64) - 1


def stream_seed(master_seed: int, *keys: int) -> np.random.SeedSequence:
    """Seed sequence of the stream addressed by ``keys`` under ``master_seed``."""
    return np.random.SeedSequence([int(master_seed) & MASK64, *(int(k) for k in keys)])


def stream_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    """Philox (counter-based, 4x64) generator for one independent stream.

    The stream depends only on (master_seed, index), never on which worker
    draws it, so parallel runs reproduce serial ones bit for bit.
    """
    return np.random.Generator(np.random.Philox(stream_seed(master_seed, index)))
