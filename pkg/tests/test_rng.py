import hashlib
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from zgrsim.errors import ConfigError, EmptyRequestError, ShapeError
from zgrsim.rng import (
    CLOUD_STREAM,
    GUIDANCE_LAYER,
    StreamAddress,
    full_perturbation,
    gaussian_stream,
    guided_address,
    layer_chunk,
)

U64 = st.integers(0, 2**64 - 1)


def reference_stream(address, n):
    """Independent restatement of the documented key layout and transform."""
    material = b"zgrsim/stream/v1" + struct.pack(
        "<5Q", address.root_seed, address.round, address.client_id, address.probe_index, address.layer_index)
    key = struct.unpack("<2Q", hashlib.sha256(material).digest()[:16])
    raw = np.random.Philox(key=np.array(key, dtype=np.uint64)).random_raw(2 * ((n + 1) // 2))
    out = []
    for r0, r1 in zip(raw[0::2], raw[1::2]):
        u1 = ((int(r0) >> 11) + 1) / 2**53
        u2 = (int(r1) >> 11) / 2**53
        rad = np.sqrt(-2 * np.log(u1))
        out += [rad * np.cos(2 * np.pi * u2), rad * np.sin(2 * np.pi * u2)]
    return np.array(out[:n])


def test_key_material_layout():
    a = StreamAddress(7, 3, 2, 1, 0)
    assert a.key_material().hex() == (
        "7a677273696d2f73747265616d2f7631"
        "0700000000000000" "0300000000000000" "0200000000000000" "0100000000000000" "0000000000000000")
    assert [int(k) for k in a.philox_key()] == [3215985919987149139, 8937869733499183271]


def test_frozen_stream_values():
    np.testing.assert_allclose(
        gaussian_stream(StreamAddress(7, 3, 2, 1, 0), 6),
        [3.6830771538251666e-01, 1.0148512557118776e-04, -1.6571185547021317e-01,
         -1.8307960252578681e-01, 8.1581077992678752e-01, 7.9246083097257169e-02], rtol=0, atol=1e-15)
    np.testing.assert_allclose(gaussian_stream(StreamAddress(0), 4),
                               [1.7207002603116015, 0.24639309881233595, 0.16609197190592245, 0.7183678448853567],
                               rtol=0, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(U64, U64, U64, U64, U64, st.integers(1, 33))
def test_matches_reference(seed, rnd, client, probe, layer, n):
    a = StreamAddress(seed, rnd, client, probe, layer)
    np.testing.assert_allclose(gaussian_stream(a, n), reference_stream(a, n), rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(U64, st.integers(1, 50), st.integers(1, 50))
def test_prefix_property(seed, n, extra):
    a = StreamAddress(seed, 1, 2, 3, 4)
    assert np.array_equal(gaussian_stream(a, n), gaussian_stream(a, n + extra)[:n])


def test_distinct_fields_give_distinct_streams():
    base = StreamAddress(1, 2, 3, 4, 5)
    variants = [StreamAddress(9, 2, 3, 4, 5), StreamAddress(1, 9, 3, 4, 5), StreamAddress(1, 2, 9, 4, 5),
                StreamAddress(1, 2, 3, 9, 5), StreamAddress(1, 2, 3, 4, 9)]
    ref = gaussian_stream(base, 8)
    for v in variants:
        assert not np.allclose(gaussian_stream(v, 8), ref)


def test_gaussian_distribution():
    x = gaussian_stream(StreamAddress(123), 50_000)
    assert stats.kstest(x, "norm").pvalue > 1e-3
    assert abs(x.mean()) < 0.02 and abs(x.var() - 1) < 0.03


def test_layer_chunks_use_per_layer_addresses():
    lm = ((0, 5), (5, 3))
    a = StreamAddress(4, 1, 0, 0)
    full = full_perturbation(a, lm)
    assert np.array_equal(full[:5], gaussian_stream(a.at_layer(0), 5))
    assert np.array_equal(full[5:], gaussian_stream(a.at_layer(1), 3))
    # any order of generation gives the same chunk
    assert np.array_equal(layer_chunk(a, lm, 1), full[5:])


def test_guided_address_reserved_ids():
    g = guided_address(0, 5)
    assert g.client_id == CLOUD_STREAM and g.layer_index == GUIDANCE_LAYER
    assert guided_address(0, 5, client_id=3).client_id == 3


def test_invalid_requests():
    with pytest.raises(EmptyRequestError):
        gaussian_stream(StreamAddress(0), 0)
    with pytest.raises(ConfigError):
        StreamAddress(-1)
    with pytest.raises(ConfigError):
        StreamAddress(2**64)
    with pytest.raises(ConfigError):
        StreamAddress(1.5)
    with pytest.raises(ShapeError):
        layer_chunk(StreamAddress(0), ((0, 3),), 1)
