from __future__ import annotations

import unittest

import numpy as np

SEED_MASK = (1 << 64) - 1


def instance_rng(seed: int, counter: int, stream: int = 0) -> np.random.Generator:
    """
    Generator for instance ``counter`` of a campaign seeded with ``seed``.

    Depends only on (seed, stream, counter), never on evaluation order.
    """
    return np.random.default_rng([int(seed) & SEED_MASK, int(stream), int(counter)])


class TestInstanceRng(unittest.TestCase):
    def test_counter_based(self):
        a = instance_rng(42, 7).standard_normal(4)
        b = instance_rng(42, 7).standard_normal(4)
        c = instance_rng(42, 8).standard_normal(4)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))

    def test_streams_differ(self):
        a = instance_rng(1, 0, stream=0).random()
        b = instance_rng(1, 0, stream=1).random()
        self.assertNotEqual(a, b)
