import numpy as np
import pytest

from propembed.clustering import ClusterAssignment, EdgeClusterAssignment
from propembed.encoder import (block_width, encode_edge_aware, encode_plain,
                               init_params, load_params, save_params)
from propembed.errors import DataError
from propembed.sampler import BiasConfig, SampledGraph, sample_neighborhood
from propembed.synthetic import SyntheticSpec, generate_synthetic
from util import graph_from_edges


def act(x, kind):
    return np.maximum(x, 0.0) if kind == "relu" else x


def expanded_single_expression(g, s, params, v):
    """Straight-line nested evaluation of the plain two-hop embedding.

    Written with explicit Python loops, no batching, as the independent
    oracle for encode_plain.
    """
    w1, w2 = params.W1_set[0], params.W2_set[0]
    p = g.node_props
    kind = params.activation

    def hop1_repr(node, sample_row):
        total = np.zeros(g.property_dim)
        for w in sample_row:
            total = total + p[w]
        mean = total / len(sample_row)
        return act(w2 @ np.concatenate([p[node], mean]), kind)

    row = s.rows_for(np.array([v]))[0]
    z_self = hop1_repr(v, s.hop1[row])
    total = np.zeros(w2.shape[0])
    size = s.sample_size
    for j in range(size):
        total = total + hop1_repr(s.hop1[row, j], s.hop2[row, j])
    z = w1 @ np.concatenate([z_self, total / size])
    if params.out_W is not None:
        z = params.out_W @ act(z, kind) + params.out_b
    return z


def random_instance(seed, n=12, d_p=4, sample=5, k=2):
    rng = np.random.default_rng(seed)
    pairs = sorted({tuple(sorted(p)) for p in rng.integers(0, n, (3 * n, 2))
                    if p[0] != p[1]})
    g = graph_from_edges(n, pairs, props=rng.standard_normal((n, d_p)))
    clusters = ClusterAssignment(rng.integers(0, k, n), k, "kmeans", 0.0)
    s = sample_neighborhood(g, clusters, BiasConfig(b_s=1, b_d=4,
                                                    sample_size=sample,
                                                    seed=seed))
    return g, clusters, s


class TestPlain:
    def test_zero_weights_give_zero_embeddings(self):
        g, _, s = random_instance(0)
        params = init_params((4, 3, 2), "plain", seed=0)
        for _, arr in params.arrays():
            arr[:] = 0.0
        out = encode_plain(g, s, params, np.arange(g.n_nodes))
        assert np.all(out == 0.0)

    def test_identity_blocks_on_path_graph(self):
        # 0-1-2 path, identity activation, block-identity weights: the
        # embedding equals nested concatenations of means, by hand.
        g = graph_from_edges(3, [(0, 1), (1, 2)],
                             props=np.array([[1.0, 0.0], [0.0, 1.0],
                                             [2.0, 2.0]]))
        clusters = ClusterAssignment(np.zeros(3, dtype=int), 1, "kmeans", 0.0)
        s = sample_neighborhood(g, clusters, BiasConfig(sample_size=1, seed=0))
        params = init_params((2, 4, 8), "plain", seed=0,
                             activation="identity")
        params.W2_set[0][:] = np.eye(4)          # z1 = [p_u, mean2]
        params.W1_set[0][:] = np.eye(8)          # z  = [z1_v, mean1]
        out = encode_plain(g, s, params, np.array([1]))[0]
        nb = int(s.hop1[0, 1]) if False else int(s.hop1[s.rows_for([1])[0], 0])
        nb2 = int(s.hop2[s.rows_for([1])[0], 0, 0])
        p = g.node_props
        z1_self = np.concatenate([p[1], p[nb]])
        z1_nb = np.concatenate([p[nb], p[nb2]])
        assert np.allclose(out, np.concatenate([z1_self, z1_nb]), atol=1e-12)

    @pytest.mark.parametrize("activation", ["relu", "identity"])
    def test_two_stage_equals_expanded_expression(self, activation):
        for seed in range(6):
            g, _, s = random_instance(seed)
            params = init_params((4, 3, 2), "plain", seed=seed,
                                 activation=activation)
            batch = np.arange(g.n_nodes)
            out = encode_plain(g, s, params, batch)
            for v in batch:
                oracle = expanded_single_expression(g, s, params, v)
                assert np.allclose(out[v], oracle, atol=1e-10, rtol=0)

    def test_permutation_invariance_of_slots(self):
        g, _, s = random_instance(3)
        params = init_params((4, 3, 2), "plain", seed=1)
        out = encode_plain(g, s, params, np.array([0]))
        rng = np.random.default_rng(0)
        perm1 = rng.permutation(s.sample_size)
        shuffled = SampledGraph(
            nodes=s.nodes, hop1=s.hop1[:, perm1], eslot1=s.eslot1[:, perm1],
            hop2=s.hop2[:, perm1][..., rng.permutation(s.sample_size)],
            eslot2=s.eslot2[:, perm1][..., rng.permutation(s.sample_size)],
            seed=s.seed, sample_size=s.sample_size, n_nodes=s.n_nodes,
            n_edges=s.n_edges)
        out2 = encode_plain(g, shuffled, params, np.array([0]))
        assert np.allclose(out, out2, atol=1e-12)

    def test_locality(self):
        g, clusters, s = random_instance(4, n=14)
        params = init_params((4, 3, 2), "plain", seed=2)
        v = 0
        row = s.rows_for([v])[0]
        involved = {v} | set(s.hop1[row].tolist()) | \
            set(s.hop2[row].reshape(-1).tolist())
        outsider = next(u for u in range(g.n_nodes) if u not in involved)
        before = encode_plain(g, s, params, np.array([v]))
        props = g.node_props.copy()
        props[outsider] += 100.0
        g2 = graph_from_edges(0, [])  # placeholder replaced below
        from dataclasses import replace as dc_replace
        g2 = dc_replace(g, node_props=props)
        after = encode_plain(g2, s, params, np.array([v]))
        assert np.array_equal(before, after)

    def test_dissimilarity_leverage_is_linear(self):
        # identity activation: pushing one sampled neighbor's properties
        # farther moves the embedding by an amount proportional to the push
        g, clusters, s = random_instance(5)
        params = init_params((4, 3, 2), "plain", seed=3,
                             activation="identity")
        v = 0
        row = s.rows_for([v])[0]
        target = int(s.hop1[row, 0])
        base = encode_plain(g, s, params, np.array([v]))[0]
        deltas = []
        from dataclasses import replace as dc_replace
        for scale in (1.0, 2.0):
            props = g.node_props.copy()
            props[target] += scale * np.array([1.0, -1.0, 0.5, 2.0])
            moved = encode_plain(dc_replace(g, node_props=props), s, params,
                                 np.array([v]))[0]
            deltas.append(np.abs(moved - base).sum())
        assert deltas[0] > 0.0
        assert deltas[1] == pytest.approx(2.0 * deltas[0], rel=1e-9)


class TestEdgeAware:
    def test_tied_parameters_reduce_to_plain_rearrangement(self):
        g, clusters, s = random_instance(7, n=10)
        ec = EdgeClusterAssignment(np.zeros(g.n_edges, dtype=int), 1,
                                   g.n_edges)
        d_p, width, d_out = 4, 3, 3
        pe = init_params((d_p, 2 * width, d_out), "edge_aware", k_e=1,
                         seed=5, activation="identity")
        # plain twin: W2 = diag blocks of [W2_0; W2_1], W1 built so its
        # output equals out_W @ [W1_0 z1; W1_1 m] + out_b
        d1 = 2 * width
        w2_plain = np.zeros((d1, 2 * d_p))
        w2_plain[:width, :d_p] = pe.W2_set[0]
        w2_plain[width:, d_p:] = pe.W2_set[1]
        ow = pe.out_W
        w1_plain = np.hstack([ow[:, :width] @ pe.W1_set[0],
                              ow[:, width:] @ pe.W1_set[1]])
        pp = init_params((d_p, d1, d_out), "plain", seed=0,
                         activation="identity")
        pp.W2_set[0][:] = w2_plain
        pp.W1_set[0][:] = w1_plain
        batch = np.arange(g.n_nodes)
        out_edge = encode_edge_aware(g, s, ec, pe, batch) - pe.out_b
        out_plain = encode_plain(g, s, pp, batch)
        assert np.allclose(out_edge, out_plain, atol=1e-10)
        assert np.array_equal(out_edge.argmax(axis=1),
                              (out_plain).argmax(axis=1))

    def test_edge_clusters_differentiate_equal_neighbors(self):
        # two leaves with identical properties and identical (empty-ish)
        # neighborhoods, reached over different edge clusters
        props = np.array([[1.0, 0.0], [5.0, 5.0], [5.0, 5.0]])
        g = graph_from_edges(3, [(0, 1), (0, 2)], props=props)
        clusters = ClusterAssignment(np.zeros(3, dtype=int), 1, "kmeans", 0.0)
        s = sample_neighborhood(g, clusters, BiasConfig(sample_size=4, seed=2))
        src = g.edge_sources()
        ec_ids = np.array([0 if g.out_targets[e] in (1,) and src[e] == 0
                           else 1 for e in range(g.n_edges)])
        # force: edge 0->1 cluster 0; 0->2 cluster 1; leaf->center edges split
        ec_ids[(src == 1)] = 0
        ec_ids[(src == 2)] = 1
        ec = EdgeClusterAssignment(ec_ids, 2, g.n_edges)
        params = init_params((2, 6, 2), "edge_aware", k_e=2, seed=3)
        assert not np.allclose(params.W1_set[1], params.W1_set[2])
        out = encode_edge_aware(g, s, ec, params, np.array([0]))

        # plain mode cannot tell the two leaves apart...
        pp = init_params((2, 4, 2), "plain", seed=4)
        z_leaves = encode_plain(g, s, pp, np.array([1, 2]))
        assert np.allclose(z_leaves[0], z_leaves[1], atol=1e-12)
        # ...edge-aware blocks see different per-cluster means
        swapped = ec_ids.copy()
        mask01 = (src == 0) & (g.out_targets == 1)
        mask02 = (src == 0) & (g.out_targets == 2)
        swapped[mask01], swapped[mask02] = 1, 0
        ec_swapped = EdgeClusterAssignment(swapped, 2, g.n_edges)
        out_swapped = encode_edge_aware(g, s, ec_swapped, params,
                                        np.array([0]))
        assert not np.allclose(out, out_swapped)

    def test_empty_cluster_block_is_activation_of_zero(self):
        g = graph_from_edges(4, [(0, 1), (1, 2), (2, 3)])
        clusters = ClusterAssignment(np.zeros(4, dtype=int), 1, "kmeans", 0.0)
        s = sample_neighborhood(g, clusters, BiasConfig(sample_size=3, seed=1))
        # only the far edge 2<->3 lies in cluster 1, so every slot sampled
        # from node 0's two-hop neighborhood sits in cluster 0
        src = g.edge_sources()
        ids = np.where((np.minimum(src, g.out_targets) == 2), 1, 0)
        ec = EdgeClusterAssignment(ids, 2, g.n_edges)
        params = init_params((1, 4, 2), "edge_aware", k_e=2, seed=0,
                             out_proj=False)
        width = block_width(4, 2)
        out = encode_edge_aware(g, s, ec, params, np.array([0]))
        assert np.all(out[0, 2 * width:3 * width] == 0.0)

    def test_k_e_mismatch_rejected(self):
        g, clusters, s = random_instance(8)
        ec = EdgeClusterAssignment(np.zeros(g.n_edges, dtype=int), 1,
                                   g.n_edges)
        params = init_params((4, 6, 2), "edge_aware", k_e=2, seed=0)
        with pytest.raises(DataError):
            encode_edge_aware(g, s, ec, params, np.array([0]))


class TestInitAndSerialization:
    def test_bit_identical_per_seed(self):
        a = init_params((5, 8, 3), "edge_aware", k_e=2, seed=77)
        b = init_params((5, 8, 3), "edge_aware", k_e=2, seed=77)
        for (_, x), (_, y) in zip(a.arrays(), b.arrays()):
            assert np.array_equal(x, y)

    def test_glorot_bounds(self):
        params = init_params((6, 9, 4), "plain", seed=1)
        for name, arr in params.arrays():
            limit = np.sqrt(6.0 / (arr.shape[0] + arr.shape[1]))
            assert np.all(np.abs(arr) <= limit)

    def test_large_matrix_mean_near_zero(self):
        rng_params = init_params((512, 512, 512), "plain", seed=9)
        w = rng_params.W2_set[0]
        assert abs(w.mean()) < 0.01

    def test_out_proj_bias_zero(self):
        params = init_params((3, 6, 2), "edge_aware", k_e=2, seed=0)
        assert np.all(params.out_b == 0.0)

    def test_save_load_roundtrip(self, tmp_path):
        for mode, k_e in (("plain", 0), ("edge_aware", 3)):
            params = init_params((4, 6, 2), mode, k_e=k_e, seed=11)
            path = tmp_path / f"{mode}.bin"
            save_params(params, path)
            loaded = load_params(path)
            assert loaded.mode == params.mode
            assert loaded.dims == params.dims
            assert loaded.k_e == params.k_e
            assert loaded.activation == params.activation
            for (_, x), (_, y) in zip(params.arrays(), loaded.arrays()):
                assert np.array_equal(np.atleast_2d(x), np.atleast_2d(y))


def test_embeddings_finite_on_synthetic_graph():
    spec = SyntheticSpec(n_nodes=60, n_communities=3, intra_edge_prob=0.2,
                         inter_edge_prob=0.02, property_dim=5,
                         blob_separation=2.0)
    g = generate_synthetic(spec, 0)
    clusters = ClusterAssignment(g.node_labels.argmax(1), 3, "kmeans", 0.0)
    s = sample_neighborhood(g, clusters, BiasConfig(sample_size=6, seed=0))
    params = init_params((5, 8, 3), "plain", seed=0)
    out = encode_plain(g, s, params, np.arange(60))
    assert out.shape == (60, 3)
    assert np.all(np.isfinite(out))
