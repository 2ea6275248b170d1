import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bfs_components, dense_laplacian
from spectral_bandits.graph import (GraphError, GraphFormatError, WeightedGraph, build_laplacian,
                                    eigendecompose, generate, graph_to_text, knn_graph,
                                    lattice_shape, load_graph, parse_graph, save_graph,
                                    spectral_basis)


def _random_graph(seed):
    r = np.random.default_rng(seed)
    model = ["er", "ba", "lattice"][seed % 3]
    n = int(r.integers(5, 60))
    return generate(model, n, seed=seed, p=float(r.uniform(0.02, 0.3)))


class TestWeightedGraph:
    def test_canonical_order(self):
        g = WeightedGraph.from_edges(4, [(2, 1, 1.0), (0, 3, 2.0), (1, 0, 0.5)])
        assert g.edges() == [(0, 1, 0.5), (0, 3, 2.0), (1, 2, 1.0)]

    def test_rejects_self_loop(self):
        with pytest.raises(GraphError, match="self-loop"):
            WeightedGraph.from_edges(3, [(1, 1, 1.0)])

    def test_rejects_duplicates_either_orientation(self):
        with pytest.raises(GraphError, match="duplicate"):
            WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 0, 1.0)])

    @pytest.mark.parametrize("w", [0.0, -1.0, np.nan, np.inf])
    def test_rejects_bad_weight(self, w):
        with pytest.raises(GraphError):
            WeightedGraph.from_edges(2, [(0, 1, w)])

    def test_rejects_out_of_range(self):
        with pytest.raises(GraphError):
            WeightedGraph.from_edges(2, [(0, 2, 1.0)])

    def test_immutable(self):
        g = generate("lattice", 9)
        with pytest.raises(ValueError):
            g.w[0] = 5.0

    def test_degrees_zero_only_for_isolated(self):
        g = WeightedGraph.from_edges(4, [(0, 1, 2.0), (1, 2, 0.5)])
        np.testing.assert_allclose(g.degrees(), [2.0, 2.5, 0.5, 0.0])

    def test_components_match_bfs(self):
        for seed in range(20):
            g = _random_graph(seed)
            assert g.n_components() == bfs_components(g.n_nodes, g.edges())

    def test_hash_depends_on_edges(self):
        a = generate("er", 30, seed=1, p=0.2)
        b = generate("er", 30, seed=2, p=0.2)
        assert a.content_hash() == generate("er", 30, seed=1, p=0.2).content_hash()
        assert a.content_hash() != b.content_hash()


class TestLaplacian:
    def test_path_p2(self):
        g = WeightedGraph.from_edges(2, [(0, 1, 1.0)])
        np.testing.assert_array_equal(build_laplacian(g), [[1, -1], [-1, 1]])

    def test_empty_graph(self):
        np.testing.assert_array_equal(build_laplacian(WeightedGraph.from_edges(3, [])),
                                      np.zeros((3, 3)))

    def test_triangle(self):
        g = generate("er", 3, p=1.0)
        lap = build_laplacian(g)
        np.testing.assert_array_equal(lap, 2 * np.eye(3) - (np.ones((3, 3)) - np.eye(3)))
        np.testing.assert_allclose(np.linalg.eigvalsh(lap), [0, 3, 3], atol=1e-12)

    def test_matches_dense_oracle(self):
        for seed in range(10):
            g = _random_graph(seed)
            np.testing.assert_allclose(build_laplacian(g), dense_laplacian(g.n_nodes, g.edges()))

    def test_row_sums_and_psd(self):
        for seed in range(10):
            lap = build_laplacian(_random_graph(seed))
            assert np.max(np.abs(lap.sum(axis=1))) <= 1e-12
            assert np.linalg.eigvalsh(lap)[0] >= -1e-9


class TestEigendecompose:
    def test_p2(self):
        g = WeightedGraph.from_edges(2, [(0, 1, 1.0)])
        b = spectral_basis(g, 0.1)
        np.testing.assert_allclose(b.eigenvalues, [0, 2], atol=1e-12)
        np.testing.assert_allclose(b.reg_eigenvalues, [0.1, 2.1], atol=1e-12)
        s = 1 / np.sqrt(2)
        np.testing.assert_allclose(np.abs(b.eigenvectors), [[s, s], [s, s]], atol=1e-12)
        np.testing.assert_allclose(b.eigenvectors[:, 0] * b.eigenvectors[:, 1].sum(), 0, atol=1e-12)

    def test_sign_convention(self):
        b = spectral_basis(generate("ba", 40, seed=3), 0.01)
        for q in b.eigenvectors.T:
            k = int(np.argmax(np.abs(q)))
            assert q[k] > 0

    @pytest.mark.parametrize("K,M", [(2, 3), (5, 20), (4, 7)])
    def test_blocks_spectrum(self, K, M):
        b = spectral_basis(generate("blocks", K * M, n_blocks=K, block_size=M), 0.1)
        ev = b.eigenvalues
        assert np.sum(np.abs(ev) < 1e-8) == K
        assert np.sum(np.abs(ev - M) < 1e-8) == (M - 1) * K
        assert b.n_components == K

    def test_er_invariants_against_reference(self):
        g = generate("er", 20, seed=7, p=0.3)
        lap = build_laplacian(g)
        b = eigendecompose(lap, 0.5)
        q, ev = b.eigenvectors, b.eigenvalues
        assert np.max(np.abs(q.T @ q - np.eye(20))) <= 1e-8
        for k in range(20):
            assert np.linalg.norm(lap @ q[:, k] - ev[k] * q[:, k]) <= 1e-6 * max(1, ev[k])
        # general (non-symmetric) solver as the reference
        np.testing.assert_allclose(ev, np.sort(np.linalg.eigvals(lap).real), atol=1e-8)
        assert ev[0] <= 1e-8 * max(1, ev[-1])
        assert b.reg_eigenvalues[0] == pytest.approx(0.5)

    def test_zero_multiplicity_equals_components(self):
        for seed in range(50):
            g = _random_graph(seed)
            ev = np.linalg.eigvalsh(build_laplacian(g))
            assert np.sum(np.abs(ev) < 1e-8) == g.n_components()

    def test_truncation_keeps_smallest(self):
        g = generate("er", 50, seed=2, p=0.1)
        full = spectral_basis(g, 0.01)
        part = spectral_basis(g, 0.01, truncate_to=10)
        assert part.dim == 10 and part.truncated and not full.truncated
        np.testing.assert_allclose(part.eigenvalues, full.eigenvalues[:10])
        np.testing.assert_allclose(part.eigenvectors, full.eigenvectors[:, :10])
        np.testing.assert_allclose(full.truncate(10).eigenvectors, part.eigenvectors)

    def test_rejects_bad_lambda(self):
        with pytest.raises(ValueError):
            spectral_basis(generate("lattice", 4), 0.0)


class TestGenerators:
    def test_blocks_two_triangles(self):
        g = generate("blocks", 6, n_blocks=2, block_size=3)
        assert g.edges() == [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0),
                             (3, 4, 1.0), (3, 5, 1.0), (4, 5, 1.0)]

    def test_er_complete(self):
        g = generate("er", 4, seed=0, p=1.0)
        assert g.n_edges == 6

    @pytest.mark.parametrize("seed", range(5))
    def test_ba_m1_is_tree(self, seed):
        g = generate("ba", 5, seed=seed, m=1, k0=1)
        assert g.n_edges == 4 and g.n_components() == 1

    def test_ba_edge_count(self):
        g = generate("ba", 100, seed=0, m=2, k0=3)
        assert g.n_edges == 2 * (100 - 3)

    @pytest.mark.parametrize("model", ["er", "ba", "lattice"])
    def test_reproducible(self, model):
        a = generate(model, 80, seed=11, p=0.05)
        b = generate(model, 80, seed=11, p=0.05)
        assert a.edges() == b.edges()

    def test_lattice_shape(self):
        assert lattice_shape(10) == (3, 4)
        g = generate("lattice", 10)
        # rows of 4, 4, 2: horizontal 3 + 3 + 1, vertical 4 + 2
        assert g.n_edges == 13
        assert g.n_components() == 1

    def test_unknown_model(self):
        with pytest.raises(GraphError):
            generate("ws", 10)


class TestKnn:
    def test_collinear(self):
        g = knn_graph(np.array([[0.0], [1.0], [10.0]]), 1)
        assert [(a, b) for a, b, _ in g.edges()] == [(0, 1), (1, 2)]

    def test_complete(self):
        g = knn_graph(np.random.default_rng(0).normal(size=(6, 2)), 5)
        assert g.n_edges == 15

    def test_degrees_against_bruteforce(self):
        x = np.random.default_rng(3).normal(size=(20, 3))
        g = knn_graph(x, 5)
        dist = np.linalg.norm(x[:, None] - x[None], axis=2)
        expected = set()
        for i in range(20):
            order = sorted((dist[i, j], j) for j in range(20) if j != i)[:5]
            expected |= {(min(i, j), max(i, j)) for _, j in order}
        assert {(a, b) for a, b, _ in g.edges()} == expected
        assert np.all(g.degrees() >= 5)

    def test_bad_k(self):
        with pytest.raises(GraphError):
            knn_graph(np.zeros((3, 1)), 3)


class TestFileFormat:
    def test_roundtrip(self, tmp_path):
        for seed in range(5):
            g = _random_graph(seed)
            path = tmp_path / f"g{seed}.txt"
            save_graph(g, path)
            assert load_graph(path).edges() == g.edges()

    def test_roundtrip_weights(self, tmp_path):
        g = WeightedGraph.from_edges(3, [(0, 1, 0.1), (1, 2, 1 / 3)])
        path = tmp_path / "w.txt"
        save_graph(g, path)
        assert load_graph(path).edges() == g.edges()

    def test_parse_example(self):
        g = parse_graph("3\n0 1 1.0\n1 2 0.5\n")
        assert g.n_nodes == 3 and g.n_edges == 2

    def test_comments_and_blank_lines(self):
        g = parse_graph("# header\n3\n\n0 1 1\n# x\n")
        assert g.n_edges == 1

    def test_self_loop_line(self):
        with pytest.raises(GraphFormatError, match="line 2: self-loop"):
            parse_graph("3\n0 0 1.0\n")

    @pytest.mark.parametrize("text,line", [
        ("", None), ("x\n", 1), ("3\n0 1\n", 2), ("3\n0 5 1\n", 2),
        ("3\n0 1 -2\n", 2), ("3\n0 1 1\n1 0 1\n", 3), ("2 3\n", 1)])
    def test_malformed(self, text, line):
        with pytest.raises(GraphFormatError) as err:
            parse_graph(text)
        assert err.value.line == line

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_graph(tmp_path / "none.txt")

    def test_text_is_canonical(self):
        g = WeightedGraph.from_edges(2, [(1, 0, 2.0)])
        assert graph_to_text(g) == "2\n0 1 2.0\n"


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 25), p=st.floats(0.01, 1.0), seed=st.integers(0, 10_000))
def test_er_spectral_properties(n, p, seed):
    g = generate("er", n, seed=seed, p=p)
    b = spectral_basis(g, 0.1)
    q = b.eigenvectors
    assert np.max(np.abs(q.T @ q - np.eye(n))) <= 1e-8
    assert np.all(np.diff(b.eigenvalues) >= -1e-12)
    assert b.n_components == bfs_components(n, g.edges())
