"""Marker graph, normalized Laplacian and Chebyshev filter tests."""

import numpy as np
import pytest

from stentshape.errors import DimensionMismatch, ZeroDegreeNode
from stentshape.graph import (
    EDGE_WEIGHT_CLOSE,
    EDGE_WEIGHT_NEAR,
    build_marker_graph,
    chebyshev_apply,
    normalized_laplacian,
    spectral_conv_direct,
)


@pytest.fixture(scope="module")
def graph():
    return build_marker_graph()


class TestMarkerGraph:
    def test_edge_weights(self, graph):
        assert graph.W[0, 1] == pytest.approx(0.209611, abs=1e-6)
        assert graph.W[0, 4] == pytest.approx(0.676634, abs=1e-6)
        assert EDGE_WEIGHT_NEAR == pytest.approx(np.exp(-1.5625))
        assert EDGE_WEIGHT_CLOSE == pytest.approx(np.exp(-0.390625))

    def test_non_adjacent_pairs_are_zero(self, graph):
        assert graph.W[0, 2] == 0.0
        assert graph.W[1, 3] == 0.0
        assert np.array_equal(graph.W, graph.W.T)
        assert np.all(np.diag(graph.W) == 0.0)

    def test_degree_matrix(self, graph):
        assert graph.D[0, 0] == pytest.approx(0.209611 + 0.676634, abs=1e-6)
        assert np.allclose(np.diag(graph.D), graph.W.sum(axis=1))

    def test_cached_spectral_data_consistent(self, graph):
        recon = graph.eigvecs @ np.diag(graph.eigvals) @ graph.eigvecs.T
        assert np.allclose(recon, graph.L, atol=1e-12)
        assert graph.lambda_max == pytest.approx(graph.eigvals[-1])
        assert np.allclose(
            graph.L_scaled, 2.0 * graph.L / graph.lambda_max - np.eye(5), atol=1e-14
        )


class TestNormalizedLaplacian:
    def test_k2_graph(self):
        W = np.array([[0.0, 1.0], [1.0, 0.0]])
        L = normalized_laplacian(W)
        assert np.allclose(L, [[1.0, -1.0], [-1.0, 1.0]])
        assert np.allclose(np.linalg.eigvalsh(L), [0.0, 2.0])

    def test_marker_graph_spectrum(self, graph):
        assert graph.eigvals[0] == pytest.approx(0.0, abs=1e-12)
        assert np.all(graph.eigvals >= -1e-12)
        assert np.all(graph.eigvals <= 2.0 + 1e-12)

    def test_symmetric_psd(self, graph):
        assert np.array_equal(graph.L, graph.L.T)
        assert np.linalg.eigvalsh(graph.L)[0] >= -1e-12

    def test_sqrt_degree_vector_in_kernel(self, graph):
        v = np.sqrt(np.diag(graph.D))
        assert np.linalg.norm(graph.L @ v) <= 1e-9

    def test_isolated_node_rejected(self):
        W = np.zeros((3, 3))
        W[0, 1] = W[1, 0] = 1.0
        with pytest.raises(ZeroDegreeNode):
            normalized_laplacian(W)

    def test_scaled_spectrum_in_unit_interval(self, graph):
        lam = np.linalg.eigvalsh(graph.L_scaled)
        assert np.all(lam >= -1.0 - 1e-12)
        assert np.all(lam <= 1.0 + 1e-12)


class TestChebyshevApply:
    def test_identity_filter(self, graph):
        rng = np.random.default_rng(0)
        F = rng.normal(size=(5, 3))
        assert np.allclose(chebyshev_apply(graph, [1.0, 0.0], F), F, atol=1e-14)

    def test_first_order_filter(self, graph):
        rng = np.random.default_rng(1)
        F = rng.normal(size=(5, 2))
        out = chebyshev_apply(graph, [0.0, 1.0], F)
        assert np.allclose(out, graph.L_scaled @ F, atol=1e-14)

    def test_matches_direct_oracle(self, graph):
        rng = np.random.default_rng(2)
        for _ in range(20):
            theta = rng.normal(size=3)
            F = rng.normal(size=(5, 3))
            a = chebyshev_apply(graph, theta, F)
            b = spectral_conv_direct(graph, theta, F)
            assert np.max(np.abs(a - b)) <= 1e-10

    def test_linearity_in_features_and_coefficients(self, graph):
        rng = np.random.default_rng(3)
        theta = rng.normal(size=4)
        F1 = rng.normal(size=(5, 2))
        F2 = rng.normal(size=(5, 2))
        lhs = chebyshev_apply(graph, theta, 2.0 * F1 - F2)
        rhs = 2.0 * chebyshev_apply(graph, theta, F1) - chebyshev_apply(graph, theta, F2)
        assert np.allclose(lhs, rhs, atol=1e-12)
        lhs = chebyshev_apply(graph, 3.0 * theta, F1)
        assert np.allclose(lhs, 3.0 * chebyshev_apply(graph, theta, F1), atol=1e-12)

    def test_wrong_row_count_rejected(self, graph):
        with pytest.raises(DimensionMismatch):
            chebyshev_apply(graph, [1.0], np.zeros((4, 3)))


class TestSpectralConvDirect:
    def test_identity_and_zero_filters(self, graph):
        rng = np.random.default_rng(4)
        F = rng.normal(size=(5, 3))
        assert np.allclose(spectral_conv_direct(graph, [1.0, 0.0], F), F, atol=1e-12)
        assert np.allclose(spectral_conv_direct(graph, [0.0, 0.0, 0.0], F), 0.0)

    def test_agreement_over_100_random_draws(self, graph):
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(100):
            K = int(rng.integers(1, 5))
            theta = rng.normal(size=K)
            F = rng.normal(size=(5, int(rng.integers(1, 4))))
            a = chebyshev_apply(graph, theta, F)
            b = spectral_conv_direct(graph, theta, F)
            worst = max(worst, float(np.max(np.abs(a - b))))
        assert worst <= 1e-10
