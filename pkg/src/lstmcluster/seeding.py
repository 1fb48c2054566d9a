"""Named random sub-streams derived from one integer seed."""

import zlib

import numpy as np

STREAMS = ("cluster", "init", "shuffle", "noise", "hyperopt")


def stream_seed(seed, name, *extra):
    """Entropy tuple for the sub-stream ``name`` of ``seed``."""
    return [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode()), *[int(e) for e in extra]]


def substream(seed, name, *extra):
    return np.random.default_rng(stream_seed(seed, name, *extra))


def derived_seed(seed, name, *extra):
    """A plain integer seed for APIs that want one."""
    return int(np.random.SeedSequence(stream_seed(seed, name, *extra)).generate_state(1)[0])
