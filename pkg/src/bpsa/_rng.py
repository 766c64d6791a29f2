"""Deterministic random stream derivation.

Every source of randomness in the package is a numpy ``Generator`` backed
by the PCG64 bit generator, seeded through ``numpy.random.SeedSequence``.
Streams are split from a single root seed with a documented spawn-key
scheme so that any pipeline stage (data generation, posterior sampling,
design draws, analysis draws) can be reproduced in isolation and streams
never collide:

    SeedSequence(entropy=root_seed, spawn_key=(domain, *indices))

``domain`` is one of the constants below; ``indices`` identify the
replicate / propensity model / implementation / draw the stream belongs
to.  The mapping is stable across platforms and numpy releases per the
SeedSequence contract.
"""

from __future__ import annotations

import numpy as np

DOMAIN_DATA = 0
DOMAIN_MCMC = 1
DOMAIN_DESIGN = 2
DOMAIN_ANALYSIS = 3
DOMAIN_CELL = 4


def seed_sequence(root_seed: int, domain: int, *indices: int) -> np.random.SeedSequence:
    """Seed sequence for one (domain, *indices) stream under ``root_seed``."""
    return np.random.SeedSequence(entropy=root_seed, spawn_key=(domain, *indices))


def stream(root_seed: int, domain: int, *indices: int) -> np.random.Generator:
    """PCG64 generator for one derived stream."""
    return np.random.Generator(np.random.PCG64(seed_sequence(root_seed, domain, *indices)))


def child_seed(root_seed: int, domain: int, *indices: int) -> int:
    """Collapse a derived stream into a single integer seed.

    Used where a component takes a plain seed (e.g. a replicate task sent
    to a worker process) but the seed itself must come from the documented
    split scheme.
    """
    state = seed_sequence(root_seed, domain, *indices).generate_state(2, np.uint64)
    return int(state[0]) ^ (int(state[1]) << 64)
