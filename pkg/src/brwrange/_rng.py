"""Per-replicate random streams.

Every replicate gets its own PCG64 generator derived from (master_seed, index)
through SeedSequence spawn keys, so the numbers a replicate sees do not depend
on which worker runs it or in what order.
"""
import numpy as np


def stream(master_seed, index):
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def kernel_seed(rng):
    """32-bit seed for a compiled kernel that draws its own randomness."""
    return int(rng.integers(0, 2**31 - 1))
