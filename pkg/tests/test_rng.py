import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdelimits.rng import brownian_path, normals, philox, seed_key


# Known-answer vectors of the ten-round Philox4x32 reference implementation.
def test_philox_known_answers():
    assert philox((0, 0, 0, 0), (0, 0)) == (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)
    ones = 0xFFFFFFFF
    assert philox((ones,) * 4, (ones, ones)) == (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)
    pi = (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344)
    assert philox(pi, (0xA4093822, 0x299F31D0)) == (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)


def test_seed_key_split():
    k0, k1 = seed_key(0x0123456789ABCDEF)
    assert int(k0) == 0x89ABCDEF and int(k1) == 0x01234567
    with pytest.raises(ValueError):
        seed_key(-1)
    with pytest.raises(ValueError):
        seed_key(2**64)


def test_normals_moments():
    z = normals(11, 0, 0, 0, 400_000)
    se = 1 / np.sqrt(z.size)
    assert abs(z.mean()) < 4 * se
    assert abs(z.var() - 1) < 4 * np.sqrt(2) * se
    assert abs(np.mean(z**4) - 3) < 4 * np.sqrt(96) * se


def test_normals_independent_of_offset():
    full = normals(5, 3, 1, 0, 101)
    for start in (0, 1, 2, 37, 99):
        part = normals(5, 3, 1, start, 101 - start)
        assert np.array_equal(part, full[start:])


def test_streams_and_paths_differ():
    a = normals(5, 0, 0, 0, 64)
    assert not np.array_equal(a, normals(5, 1, 0, 0, 64))
    assert not np.array_equal(a, normals(5, 0, 1, 0, 64))
    assert not np.array_equal(a, normals(6, 0, 0, 0, 64))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**20), st.integers(1, 9), st.integers(1, 4))
def test_bridge_refinement_keeps_coarse_points(seed, path, level, extra):
    coarse = brownian_path(seed, path, 0, level)
    fine = brownian_path(seed, path, 0, level + extra)
    assert np.array_equal(fine[:: 2**extra], coarse)


def test_bridge_increment_variance():
    level = 10
    incs = np.concatenate([np.diff(brownian_path(1, j, 0, level, L=2.0)) for j in range(400)])
    dt = 2.0 / 2**level
    se = dt * np.sqrt(2 / incs.size)
    assert abs(incs.var() - dt) < 4 * se
    assert abs(incs.mean()) < 4 * np.sqrt(dt / incs.size)


def test_bridge_increments_uncorrelated():
    W = np.array([brownian_path(2, j, 0, 6) for j in range(4000)])
    dW = np.diff(W, axis=1)
    C = np.corrcoef(dW.T)
    off = C[~np.eye(C.shape[0], dtype=bool)]
    assert np.max(np.abs(off)) < 5 / np.sqrt(4000) + 0.02


def test_terminal_value_is_node_zero():
    w = brownian_path(9, 4, 2, 5, L=3.0)
    assert w[0] == 0.0
    assert w[-1] == np.sqrt(3.0) * normals(9, 4, 2, 0, 1)[0]
