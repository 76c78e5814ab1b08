"""Seed splitting.

Every random consumer asks for a generator by a label path, e.g.
``streams.generator("fading", episode, slot)``. The label is hashed into a
spawn key of a :class:`numpy.random.SeedSequence`, so adding a new consumer
never shifts the numbers drawn by existing ones.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _label_word(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


class SeedStreams:
    """Derives independent, reproducible generators from one master seed."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)

    def seed_sequence(self, label: str, *indices: int) -> np.random.SeedSequence:
        key = (_label_word(label),) + tuple(int(i) for i in indices)
        return np.random.SeedSequence(self.seed, spawn_key=key)

    def generator(self, label: str, *indices: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence(label, *indices)))

    def child(self, label: str, *indices: int) -> "SeedStreams":
        """A new master seed for a sub-experiment (e.g. one sweep point)."""
        word = self.seed_sequence(label, *indices).generate_state(1, np.uint32)[0]
        return SeedStreams(int(word))
