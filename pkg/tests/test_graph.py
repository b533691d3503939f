import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from propembed.errors import DataError
from propembed.graph import load_graph, neighbors, save_edges, split_nodes
from util import graph_from_edges


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def triangle_files(tmp_path):
    nodes = write(tmp_path / "nodes.tsv",
                  "a\t1.0,0.0\nb\t0.0,1.0\nc\t1.0,1.0\n")
    edges = write(tmp_path / "edges.tsv", "a\tb\nb\tc\na\tc\n")
    labels = write(tmp_path / "labels.tsv", "a\t0\nb\t1\nc\t0,1\n")
    return nodes, edges, labels


def test_load_triangle(triangle_files):
    nodes, edges, labels = triangle_files
    g = load_graph(nodes, edges, labels)
    assert g.n_nodes == 3
    assert g.n_edges == 6  # three undirected edges, both directions stored
    for v in range(3):
        assert len(g.out_row(v)) == 2
    assert g.node_ids == ["a", "b", "c"]
    assert g.node_labels.tolist() == [[1, 0], [0, 1], [1, 1]]


def test_load_empty_edge_file(tmp_path):
    nodes = write(tmp_path / "n.tsv", "x\t1.0\ny\t2.0\nz\t3.0\n")
    edges = write(tmp_path / "e.tsv", "# no edges\n")
    g = load_graph(nodes, edges)
    assert g.n_nodes == 3 and g.n_edges == 0
    assert np.all(g.out_offsets == 0)


def test_load_rejects_dangling_edge(tmp_path):
    nodes = write(tmp_path / "n.tsv", "x\t1.0\n")
    edges = write(tmp_path / "e.tsv", "x\tmissing\n")
    with pytest.raises(DataError, match="e.tsv:1"):
        load_graph(nodes, edges)


def test_load_rejects_self_loop(tmp_path):
    nodes = write(tmp_path / "n.tsv", "x\t1.0\ny\t2.0\n")
    edges = write(tmp_path / "e.tsv", "x\tx\n")
    with pytest.raises(DataError, match="self-loop"):
        load_graph(nodes, edges)


def test_load_rejects_ragged_features(tmp_path):
    nodes = write(tmp_path / "n.tsv", "x\t1.0,2.0\ny\t3.0\n")
    edges = write(tmp_path / "e.tsv", "")
    with pytest.raises(DataError, match="n.tsv:2"):
        load_graph(nodes, edges)


def test_load_rejects_malformed_line(tmp_path):
    nodes = write(tmp_path / "n.tsv", "x\t1.0\ny\tnot-a-number\n")
    edges = write(tmp_path / "e.tsv", "")
    with pytest.raises(DataError, match="n.tsv:2"):
        load_graph(nodes, edges)


def test_load_rejects_partial_labels(tmp_path):
    nodes = write(tmp_path / "n.tsv", "x\t1.0\ny\t2.0\n")
    edges = write(tmp_path / "e.tsv", "x\ty\n")
    labels = write(tmp_path / "l.tsv", "x\t0\n")
    with pytest.raises(DataError, match="without any label"):
        load_graph(nodes, edges, labels)


def test_parallel_edges_kept(tmp_path):
    nodes = write(tmp_path / "n.tsv", "x\t1.0\ny\t2.0\n")
    edges = write(tmp_path / "e.tsv", "x\ty\nx\ty\n")
    g = load_graph(nodes, edges)
    assert g.n_edges == 4
    assert list(g.out_row(0)) == [1, 1]


def test_edge_properties_roundtrip(tmp_path):
    nodes = write(tmp_path / "n.tsv", "x\t1.0\ny\t2.0\nz\t3.0\n")
    edges = write(tmp_path / "e.tsv", "x\ty\t0.5,1.5\ny\tz\t2.5,3.5\n")
    g = load_graph(nodes, edges)
    assert g.edge_props.shape == (4, 2)
    # both slots of the same undirected edge share the property row
    src = g.edge_sources()
    for e in range(g.n_edges):
        u, w = src[e], g.out_targets[e]
        mirror = next(i for i in range(g.n_edges)
                      if src[i] == w and g.out_targets[i] == u)
        assert np.array_equal(g.edge_props[e], g.edge_props[mirror])


def test_roundtrip_edge_multiset(tmp_path, triangle_files):
    nodes, edges, labels = triangle_files
    g = load_graph(nodes, edges)
    out = tmp_path / "resaved.tsv"
    save_edges(g, out)
    reloaded = sorted(tuple(line.split("\t"))
                      for line in out.read_text().splitlines())
    original = []
    for line in edges.read_text().splitlines():
        u, w = line.split("\t")
        original += [(u, w), (w, u)]
    assert reloaded == sorted(original)


def test_neighbors_isolated_and_triangle():
    g = graph_from_edges(4, [(0, 1), (1, 2), (0, 2)])
    assert list(neighbors(g, 3)) == []
    for v in range(3):
        assert sorted(neighbors(g, v)) == sorted(set(range(3)) - {v})
    with pytest.raises(DataError):
        neighbors(g, 4)


def test_neighbors_directed_chain():
    g = graph_from_edges(3, [(0, 1), (1, 2)], directed=True)
    assert list(neighbors(g, 1, "out")) == [2]
    assert list(neighbors(g, 1, "in")) == [0]
    assert list(neighbors(g, 0, "in")) == []


def test_undirected_degree_symmetry():
    rng = np.random.default_rng(7)
    edges = {tuple(sorted(p)) for p in rng.integers(0, 12, size=(30, 2))
             if p[0] != p[1]}
    g = graph_from_edges(12, sorted(edges))
    counts = np.zeros(12, dtype=int)
    for v in range(12):
        for w in g.out_row(v):
            counts[w] += 1
    assert np.array_equal(counts, g.out_degrees)


def test_split_sizes_small():
    g = graph_from_edges(10, [(0, 1)])
    s = split_nodes(g, (0.7, 0.1, 0.2), seed=5)
    assert (len(s.train), len(s.val), len(s.test)) == (7, 1, 2)


def test_split_deterministic():
    g = graph_from_edges(10, [(0, 1)])
    a = split_nodes(g, (0.7, 0.1, 0.2), seed=42)
    b = split_nodes(g, (0.7, 0.1, 0.2), seed=42)
    assert np.array_equal(a.train, b.train)
    assert np.array_equal(a.val, b.val)
    assert np.array_equal(a.test, b.test)


def test_split_sizes_pubmed_scale():
    n = 19_717
    g = graph_from_edges(n, [(0, 1)], props=np.zeros((n, 1)))
    s = split_nodes(g, (0.7, 0.1, 0.2), seed=0)
    assert (len(s.train), len(s.val), len(s.test)) == (13_803, 1_971, 3_943)


def test_split_rejects_tiny_graph():
    g = graph_from_edges(2, [(0, 1)])
    with pytest.raises(DataError):
        split_nodes(g, (0.7, 0.1, 0.2), seed=0)


def test_split_rejects_bad_ratios():
    g = graph_from_edges(5, [(0, 1)])
    with pytest.raises(DataError):
        split_nodes(g, (0.7, 0.1, 0.3), seed=0)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(3, 60), seed=st.integers(0, 2**31))
def test_split_always_partitions(n, seed):
    g = graph_from_edges(n, [(0, 1)], props=np.zeros((n, 1)))
    s = split_nodes(g, (0.7, 0.1, 0.2), seed=seed)
    merged = np.concatenate([s.train, s.val, s.test])
    assert len(merged) == n
    assert np.array_equal(np.sort(merged), np.arange(n))
