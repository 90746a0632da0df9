import numpy as np
import pytest

from divbounds._philox import normals_block, philox_block, raw_words, seed_to_key


@pytest.mark.parametrize("counter", [(0, 0, 0, 0), (5, 7, 0, 0), (2**64 - 1, 7, 0, 0),
                                     (2**64 - 1, 2**64 - 1, 3, 9)])
@pytest.mark.parametrize("seed", [0, 123, 2**63 + 5])
def test_matches_numpy(counter, seed):
    key = tuple(int(k) for k in seed_to_key(seed))
    bg = np.random.Philox(key=np.array(key, dtype=np.uint64), counter=np.array(counter, dtype=np.uint64))
    # numpy advances the 256-bit counter before each block
    c = list(counter)
    for i in range(4):
        c[i] = (c[i] + 1) % 2**64
        if c[i] != 0:
            break
    assert raw_words(c, key) == [int(v) for v in bg.random_raw(4)]


def test_uniforms_and_normals():
    k0, k1 = seed_to_key(99)
    buf = np.empty(4)
    u, z = [], []
    for c in range(5000):
        philox_block(c, 3, 0, k0, k1, buf)
        u.extend(buf)
        normals_block(c, 3, 1, k0, k1, buf)
        z.extend(buf)
    u, z = np.array(u), np.array(z)
    assert u.min() > 0.0 and u.max() <= 1.0
    assert abs(u.mean() - 0.5) < 0.01
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1.0) < 0.02
    assert abs(np.mean(z ** 4) - 3.0) < 0.15


def test_streams_and_paths_are_distinct():
    k0, k1 = seed_to_key(1)
    a, b, c = np.empty(4), np.empty(4), np.empty(4)
    philox_block(0, 0, 0, k0, k1, a)
    philox_block(0, 1, 0, k0, k1, b)
    philox_block(0, 0, 1, k0, k1, c)
    assert len({tuple(a), tuple(b), tuple(c)}) == 3


def test_seed_range():
    with pytest.raises(ValueError):
        seed_to_key(-1)
    with pytest.raises(ValueError):
        seed_to_key(2**64)
