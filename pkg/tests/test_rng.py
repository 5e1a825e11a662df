import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from walshpen.rng import BLOCK_SIZE, Streams, as_streams, map_blocks


def test_same_key_same_numbers():
    a = Streams(11).generator(3, 5).random(10)
    b = Streams(11).generator(3, 5).random(10)
    assert np.array_equal(a, b)


def test_streams_and_blocks_differ():
    s = Streams(11)
    assert not np.array_equal(s.generator(1, 0).random(5), s.generator(2, 0).random(5))
    assert not np.array_equal(s.generator(1, 0).random(5), s.generator(1, 1).random(5))


def test_child_is_deterministic_and_distinct():
    s = Streams(5)
    assert s.child(3).seed == Streams(5).child(3).seed
    assert s.child(3).seed != s.child(4).seed
    assert s.child(3).seed != s.seed


@given(st.integers(1, 3 * BLOCK_SIZE + 7))
@settings(max_examples=25, deadline=None)
def test_blocks_cover_paths_exactly(n):
    blocks = Streams(0).blocks(n)
    assert sum(c for _, _, c in blocks) == n
    assert [s for _, s, _ in blocks] == list(range(0, n, BLOCK_SIZE))


def test_map_blocks_worker_independent():
    s = Streams(9, block_size=64)
    fn = lambda b, start, count: s.generator(1, b).standard_normal(64)[:count]
    one = np.concatenate(map_blocks(fn, s, 1000, workers=1))
    many = np.concatenate(map_blocks(fn, s, 1000, workers=4))
    assert one.shape == (1000,)
    assert np.array_equal(one, many)


def test_as_streams():
    assert as_streams(4).seed == 4
    s = Streams(4)
    assert as_streams(s) is s
    with pytest.raises((TypeError, ValueError)):
        as_streams("seed")
