import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drc.errors import ConfigError
from drc.sampler import Sampler, hash_float, hash_u64


def test_hash_deterministic_and_in_range():
    a = hash_float(1, np.arange(10_000), 3, 7)
    b = hash_float(1, np.arange(10_000), 3, 7)
    assert np.array_equal(a, b)
    assert np.all((a >= 0.0) & (a < 1.0))


def test_hash_key_sensitivity():
    base = hash_u64(5, 6, 7)
    assert hash_u64(5, 6, 8) != base
    assert hash_u64(5, 7, 7) != base
    assert hash_u64(6, 6, 7) != base


def test_hash_uniformity():
    u = hash_float(0, np.arange(200_000), 0, 0)
    hist, _ = np.histogram(u, bins=20, range=(0, 1))
    assert abs(u.mean() - 0.5) < 0.005
    assert hist.min() > 9_000  # expected 10k per bin


@given(st.integers(0, 2**31), st.integers(0, 2**31), st.integers(0, 64))
@settings(max_examples=200, deadline=None)
def test_sampler_output_range(pixel, index, dim):
    s = Sampler("independent", seed=9)
    u = float(s.sample(pixel, index, dim))
    assert 0.0 <= u < 1.0


def test_stratified_covers_strata():
    spp = 16
    s = Sampler("stratified", seed=4, spp=spp)
    for dim in range(4):
        u = np.array([float(s.sample(12, i, dim)) for i in range(spp)])
        strata = np.sort((u * spp).astype(int))
        assert np.array_equal(strata, np.arange(spp))


def test_stratified_any_spp():
    spp = 7  # not a power of two
    s = Sampler("stratified", seed=1, spp=spp)
    u = np.array([float(s.sample(3, i, 0)) for i in range(spp)])
    assert np.array_equal(np.sort((u * spp).astype(int)), np.arange(spp))


def test_stream_advances_dimensions():
    s = Sampler(seed=0)
    st0 = s.stream(5, 2)
    u0, u1 = st0.next_1d(), st0.next_1d()
    assert u0 != u1
    st1 = s.stream(5, 2)
    assert st1.next_1d() == u0


def test_invalid_kind_rejected():
    with pytest.raises(ConfigError):
        Sampler("sobol")
