from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zgrsim.errors import ConfigError, GuidanceUnavailable
from zgrsim.guidance import CloudGuidance, adaptive_alpha, build_basis, cloud_bp_round, sample_guided
from zgrsim.model import Batch, backprop_gradient
from zgrsim.rng import StreamAddress, gaussian_stream


def test_basis_orthonormal_and_spans_history():
    rng = np.random.default_rng(0)
    hist = [rng.standard_normal(12) for _ in range(5)]
    sub = build_basis(hist, m_max=16)
    assert sub.m == 5 and sub.d == 12
    np.testing.assert_allclose(sub.basis.T @ sub.basis, np.eye(5), atol=1e-12)
    for g in hist:
        np.testing.assert_allclose(sub.project(g), g, atol=1e-10)


def test_basis_newest_first():
    hist = [np.array([1.0, 0, 0]), np.array([0, 2.0, 0])]
    sub = build_basis(hist, m_max=1)
    np.testing.assert_allclose(sub.basis[:, 0], [0, 1, 0])


def test_basis_drops_dependent_and_zero():
    a, b = np.array([1.0, 2.0, 0.0]), np.array([0.0, 1.0, 1.0])
    sub = build_basis([a, np.zeros(3), 2 * a, b, a + b], m_max=8)
    assert sub.m == 2


def test_basis_matches_qr_span():
    rng = np.random.default_rng(4)
    G = rng.standard_normal((30, 4))
    sub = build_basis(list(G.T))
    q, _ = np.linalg.qr(G)
    np.testing.assert_allclose(sub.basis @ sub.basis.T, q @ q.T, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 20), st.integers(1, 10), st.integers(0, 1000))
def test_basis_property(d, k, seed):
    hist = list(np.random.default_rng(seed).standard_normal((k, d)))
    sub = build_basis(hist, m_max=16)
    assert sub.m == min(k, d, 16)
    np.testing.assert_allclose(sub.basis.T @ sub.basis, np.eye(sub.m), atol=1e-9)


def test_basis_empty_raises():
    with pytest.raises(GuidanceUnavailable):
        build_basis([])
    with pytest.raises(GuidanceUnavailable):
        build_basis([np.zeros(4)])
    with pytest.raises(ConfigError):
        build_basis([np.ones(2)], m_max=0)


def test_sample_guided_uses_address():
    sub = build_basis([np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0, 0])])
    addr = StreamAddress(3, 4, 5, 0, 9)
    gp = sample_guided(sub, addr)
    np.testing.assert_allclose(gp.vector, sub.basis @ gaussian_stream(addr, 2))
    assert gp.m == 2 and gp.round == 4
    np.testing.assert_allclose(gp.chunk(((0, 1), (1, 3)), 1), gp.vector[1:])
    with pytest.raises(GuidanceUnavailable):
        sample_guided(None, addr)


def test_cloud_bp_round(tiny_params, batch):
    hist = deque(maxlen=2)
    new, g = cloud_bp_round(tiny_params, batch, 0.5, hist)
    np.testing.assert_allclose(g, backprop_gradient(tiny_params, batch))
    np.testing.assert_allclose(new.values, tiny_params.values - 0.5 * g)
    assert len(hist) == 1


def test_cloud_guidance_ring_buffer(tiny_params, batch):
    cloud = CloudGuidance(tiny_params, lr=0.1, m_max=3)
    assert cloud.rebuild() is None
    for _ in range(5):
        cloud.bp_round(batch)
    assert len(cloud.history) == 3
    assert cloud.rebuild().m == 3
    assert cloud.spread() >= 0
    cloud.sync(tiny_params)
    np.testing.assert_array_equal(cloud.params.values, tiny_params.values)


def test_adaptive_alpha():
    assert adaptive_alpha(9.0, 1.0, "fixed", 0.3) == 0.3
    # lambda* = 9/10 goes to the guided term, alpha = 0.1
    assert adaptive_alpha(9.0, 1.0, "lambda_star") == pytest.approx(0.1)
    assert adaptive_alpha(5.0, 0.0, "lambda_star") == 1.0
    assert adaptive_alpha(0.0, 0.0, "lambda_star", 0.4) == 0.4
    assert adaptive_alpha(0.0, 2.0, "lambda_star") == 1.0
    with pytest.raises(ConfigError):
        adaptive_alpha(1, 1, "bogus")
    with pytest.raises(ConfigError):
        adaptive_alpha(-1, 1, "lambda_star")


def test_hand_basis():
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    sub = build_basis([e1, e1 + e2])
    assert sub.m == 2
    np.testing.assert_allclose(sub.basis.T @ sub.basis, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(sub.basis @ sub.basis.T, np.diag([1.0, 1.0, 0.0]), atol=1e-12)
    g = np.array([1.0, 2.0, 3.0])
    assert build_basis([g, g, g]).m == 1


def test_guided_vector_in_span_and_second_moment():
    rng = np.random.default_rng(1)
    sub = build_basis(list(rng.standard_normal((4, 30))))
    norms = []
    for k in range(10_000):
        v = sample_guided(sub, StreamAddress(0, k, 0, 0, 7)).vector
        if k < 50:
            assert np.linalg.norm(v - sub.project(v)) <= 1e-8 * np.linalg.norm(v)
        norms.append(v @ v)
    assert 0.94 * sub.m <= np.mean(norms) <= 1.06 * sub.m
    a = sample_guided(sub, StreamAddress(0, 1, 0, 0, 7)).vector
    assert np.array_equal(a, sample_guided(sub, StreamAddress(0, 1, 0, 0, 7)).vector)


def test_lambda_star_alpha_value():
    assert adaptive_alpha(1000.0, 10.0, "lambda_star") == pytest.approx(1 - 1000 / 1010, rel=1e-12)
    assert adaptive_alpha(1.0, 1.0, "fixed", 0.5) == 0.5


def test_history_growth_and_idempotent_rebuild(tiny_params, batch):
    cloud = CloudGuidance(tiny_params, lr=0.05, m_max=3)
    losses = [cloud.loss(batch)]
    for k in range(5):
        cloud.bp_round(batch)
        losses.append(cloud.loss(batch))
        assert len(cloud.history) == min(k + 1, 3)
    assert losses[-1] < losses[0]
    first = cloud.rebuild().basis.copy()
    np.testing.assert_array_equal(cloud.rebuild().basis, first)
