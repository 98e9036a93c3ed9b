"""Deterministic, cross-platform randomness helpers.

All stochastic choices in this package flow through a Mersenne-Twister
``random.Random`` seeded via :func:`child_seed`, and only consume the
generator through ``random()`` -- the one method CPython guarantees to stay
stable across versions. Shuffling and sampling are implemented here (plain
Fisher-Yates over ``random()``) instead of ``random.shuffle``/``sample`` so
that runs stay byte-identical across platforms and Python upgrades.
"""

from __future__ import annotations

import hashlib
import random
from typing import Sequence, TypeVar

T = TypeVar("T")


def child_seed(seed: int, purpose: str) -> int:
    """Derive an independent child seed for one purpose tag."""
    material = f"{seed}:{purpose}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


def rng_for(seed: int, purpose: str) -> random.Random:
    """A fresh generator dedicated to (seed, purpose)."""
    return random.Random(child_seed(seed, purpose))


def randbelow(rng: random.Random, n: int) -> int:
    """Uniform integer in [0, n) drawn from ``rng.random()``.

    The 2**-53 modulo bias is negligible for our sample sizes and the
    construction never changes, unlike ``Random._randbelow``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    value = int(rng.random() * n)
    return n - 1 if value >= n else value


def shuffled(items: Sequence[T], rng: random.Random) -> list[T]:
    """Fisher-Yates shuffle into a new list."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = randbelow(rng, i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def sample_without_replacement(items: Sequence[T], k: int, rng: random.Random) -> list[T]:
    """Uniform sample of k distinct items (partial Fisher-Yates)."""
    pool = list(items)
    if k > len(pool):
        raise ValueError(f"cannot sample {k} items from a pool of {len(pool)}")
    for i in range(k):
        j = i + randbelow(rng, len(pool) - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def stable_unit_float(*parts: str) -> float:
    """Deterministic hash-noise in [0, 1) derived from the given strings."""
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64
