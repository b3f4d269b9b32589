"""Deterministic RNG streams.

Every random draw in the engine flows through ``rng_for(seed, stream, ...)``
so that runs are reproducible bit-for-bit across platforms and thread
counts. Stream ids keep independent purposes (init, episode sampling,
validation, ...) from colliding on the same seed.
"""

from __future__ import annotations

import numpy as np

# stream ids; never renumber, files and reports depend on them
STREAM_VISUAL_INIT = 1
STREAM_HEAD_INIT = 2
STREAM_ADAPTOR_INIT = 3
STREAM_FUSION_INIT = 4
STREAM_PROMPT_COND_INIT = 5
STREAM_TOKEN_ATTR = 10
STREAM_TOKEN_PROJ = 11
STREAM_MIXER = 12
STREAM_DATA_CLASS = 20
STREAM_DATA_PROJ = 21
STREAM_TRAIN_EPISODE = 30
STREAM_VAL_EPISODE = 31
STREAM_EVAL_EPISODE = 32
STREAM_PRETRAIN_BATCH = 33
STREAM_ALIGN_BATCH = 34
STREAM_EXPORT_EPISODE = 35


def rng_for(*entropy: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    """Seeded uniform in +-1/sqrt(fan_in), the default weight initializer."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
