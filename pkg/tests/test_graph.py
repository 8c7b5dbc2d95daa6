import io

import numpy as np
import pytest

from paircomm.graph import (Graph, Partition, coarsen, connected_components,
                            lift, load_edge_list, modularity, read_partition,
                            reduced_modularity_features, write_partition)

from conftest import (components_oracle, modularity_bruteforce,
                      random_simple_graph, same_partition)


class TestLoadEdgeList:
    def test_basic(self):
        res = load_edge_list(io.StringIO("0 1\n1 2"))
        assert res.graph.node_count == 3
        assert res.graph.edge_count == 2
        assert res.graph.degrees.tolist() == [1, 2, 1]

    def test_self_loop_dropped_and_ids_remapped(self):
        res = load_edge_list(io.StringIO("5 5\n5 6"))
        assert res.graph.node_count == 2
        assert res.graph.edge_count == 1
        assert res.self_loops_dropped == 1
        assert res.original_ids.tolist() == [5, 6]

    def test_comments_and_blank_lines(self):
        res = load_edge_list(io.StringIO("# header\n\n0 1\n"))
        assert res.graph.edge_count == 1

    def test_duplicates_against_set_oracle(self, rng):
        lines = []
        expected = set()
        for _ in range(100):
            i, j = int(rng.integers(0, 15)), int(rng.integers(0, 15))
            lines.append(f"{i} {j}")
            if i != j:
                expected.add((min(i, j), max(i, j)))
        res = load_edge_list(io.StringIO("\n".join(lines)))
        assert res.graph.edge_count == len(expected)
        assert res.duplicates_dropped == sum(1 for l in lines
                                             if len(set(map(int, l.split()))) == 2) - len(expected)

    def test_malformed_line_reports_number(self):
        with pytest.raises(ValueError, match="line 2"):
            load_edge_list(io.StringIO("0 1\nnot numbers\n"))
        with pytest.raises(ValueError, match="line 1"):
            load_edge_list(io.StringIO("3\n"))
        with pytest.raises(ValueError, match="line 1"):
            load_edge_list(io.StringIO("-1 2\n"))

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            load_edge_list(io.StringIO("# nothing\n"))

    def test_accepts_bytes(self):
        res = load_edge_list(b"0 1\n")
        assert res.graph.edge_count == 1

    def test_adjacency_sorted_and_symmetric(self, rng):
        g = random_simple_graph(rng, 25, edge_prob=0.2)
        for i in range(g.node_count):
            nb = g.neighbors(i)
            assert np.all(np.diff(nb) > 0)
            for j in nb:
                assert i in g.neighbors(j)
        assert g.degrees.sum() == 2 * g.edge_count


class TestModularity:
    def test_all_in_one_is_zero(self, rng):
        for _ in range(10):
            g = random_simple_graph(rng, 12, edge_prob=0.3)
            if g.edge_count == 0:
                continue
            p = Partition(np.zeros(12, dtype=np.int64))
            assert abs(modularity(g, p)) <= 1e-12

    def test_two_triangles(self):
        g = Graph.from_edges(6, [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)])
        p = Partition([0, 0, 0, 1, 1, 1])
        assert modularity(g, p) == pytest.approx(0.5, abs=1e-12)
        assert modularity(g, p) == pytest.approx(modularity_bruteforce(g, p), abs=1e-12)

    def test_path_graph(self):
        g = Graph.from_edges(3, [(0, 1), (1, 2)])
        p = Partition([0, 0, 1])
        assert modularity(g, p) == pytest.approx(-0.125, abs=1e-12)
        assert modularity(g, p) == pytest.approx(modularity_bruteforce(g, p), abs=1e-12)

    def test_random_against_bruteforce(self, rng):
        for _ in range(25):
            n = int(rng.integers(4, 30))
            g = random_simple_graph(rng, n, edge_prob=0.25)
            if g.edge_count == 0:
                continue
            p = Partition(rng.integers(0, 4, size=n), densify=True)
            assert modularity(g, p) == pytest.approx(modularity_bruteforce(g, p), abs=1e-12)

    def test_edgeless_rejected(self):
        g = Graph.from_edges(3, np.empty((0, 2), dtype=np.int64))
        with pytest.raises(ValueError):
            modularity(g, Partition([0, 0, 0]))


class TestReducedFeatures:
    def test_single_edge(self):
        g = Graph.from_edges(2, [(0, 1)])
        qt = reduced_modularity_features(g)
        assert qt[0, 1] == pytest.approx(0.5, abs=1e-15)

    def test_shown_running_example_value(self):
        # 9-edge graph where the (v1, v7) endpoints both have degree 2,
        # giving the displayed feature value 1 - 4/18 = 0.78 (2 d.p.)
        edges = [(0, 6), (0, 1), (6, 7), (1, 2), (2, 3), (3, 4), (4, 5),
                 (5, 7), (1, 3)]
        g = Graph.from_edges(8, edges)
        assert g.degrees[0] == 2 and g.degrees[6] == 2 and g.edge_count == 9
        qt = reduced_modularity_features(g)
        assert round(qt[0, 6], 2) == 0.78
        assert qt[0, 6] == qt[6, 0]

    def test_matches_dense_oracle(self, rng):
        g = random_simple_graph(rng, 20, edge_prob=0.3)
        qt = reduced_modularity_features(g).toarray()
        a = g.adjacency().toarray()
        d = a.sum(axis=1)
        dense = a - np.outer(d, d) / d.sum()
        for i in range(20):
            for j in range(20):
                if a[i, j]:
                    assert qt[i, j] == pytest.approx(dense[i, j], abs=1e-12)
                else:
                    assert qt[i, j] == 0.0

    def test_edgeless_rejected(self):
        g = Graph.from_edges(2, np.empty((0, 2), dtype=np.int64))
        with pytest.raises(ValueError):
            reduced_modularity_features(g)


class TestConnectedComponents:
    def test_no_edges(self):
        p = connected_components(4, np.empty((0, 2), dtype=np.int64))
        assert p.community_count == 4

    def test_chain(self):
        p = connected_components(4, [(0, 1), (1, 2), (2, 3)])
        assert p.community_count == 1

    def test_against_union_find(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 40))
            m = int(rng.integers(0, n))
            edges = rng.integers(0, n, size=(m, 2))
            edges = edges[edges[:, 0] != edges[:, 1]]
            got = connected_components(n, edges)
            assert same_partition(got.labels, components_oracle(n, edges))

    def test_endpoint_out_of_range(self):
        with pytest.raises(ValueError):
            connected_components(3, [(0, 3)])


class TestCoarsenLift:
    def test_two_community_toy_super_edge_weight(self):
        # communities {0,1,2}, {3}, {4,5,6}; exactly two edges between the
        # first and third community
        edges = [(0, 1), (1, 2), (4, 5), (5, 6), (2, 4), (0, 6), (2, 3)]
        g = Graph.from_edges(7, edges)
        p = Partition([0, 0, 0, 1, 2, 2, 2])
        sg = coarsen(g, p)
        assert sg.node_count == 3
        adj = sg.graph.adjacency().toarray()
        assert adj[0, 2] == 2.0
        assert adj[0, 1] == 1.0
        assert sg.self_loops.tolist() == [4.0, 0.0, 4.0]

    def test_singleton_partition_is_identity(self, rng):
        g = random_simple_graph(rng, 15, edge_prob=0.25)
        sg = coarsen(g, Partition.singletons(15))
        assert sg.node_count == 15
        assert np.all(sg.self_loops == 0.0)
        assert np.array_equal(sg.graph.indices, g.indices)
        assert np.array_equal(sg.graph.indptr, g.indptr)

    def test_weight_conservation(self, rng):
        for _ in range(30):
            n = int(rng.integers(4, 30))
            g = random_simple_graph(rng, n, edge_prob=0.3)
            p = Partition(rng.integers(0, 5, size=n), densify=True)
            sg = coarsen(g, p)
            inter = sg.graph.weights.sum() / 2.0
            assert inter + sg.self_loops.sum() / 2.0 == g.edge_count

    def test_lift_round_trip(self, rng):
        g = random_simple_graph(rng, 20, edge_prob=0.2)
        p = Partition(rng.integers(0, 4, size=20), densify=True)
        sg = coarsen(g, p)
        back = lift(Partition.singletons(p.community_count), sg.node_map)
        assert np.array_equal(back.labels, p.labels)

    def test_lift_all_merged(self, rng):
        g = random_simple_graph(rng, 10, edge_prob=0.3)
        p = Partition(rng.integers(0, 3, size=10), densify=True)
        sg = coarsen(g, p)
        merged = lift(Partition(np.zeros(p.community_count, dtype=np.int64)),
                      sg.node_map)
        assert merged.community_count == 1

    def test_lift_composition_oracle(self, rng):
        labels = rng.integers(0, 5, size=30)
        p = Partition(labels, densify=True)
        sp_labels = rng.integers(0, 3, size=p.community_count)
        sp = Partition(sp_labels, densify=True)
        lifted = lift(sp, p.labels)
        manual = np.array([sp.labels[p.labels[i]] for i in range(30)])
        assert np.array_equal(lifted.labels, manual)

    def test_coarsened_modularity_matches_lifted(self, rng):
        # the self-loop convention exists precisely for this identity
        from paircomm.inference import _as_weighted_arrays
        g = random_simple_graph(rng, 24, edge_prob=0.25)
        p = Partition(rng.integers(0, 4, size=24), densify=True)
        sg = coarsen(g, p)
        n, indptr, indices, w, loops = _as_weighted_arrays(sg)
        strengths = loops.copy()
        np.add.at(strengths, np.repeat(np.arange(n), np.diff(indptr)), w)
        mass = strengths.sum()
        rows = np.repeat(np.arange(n), np.diff(indptr))
        # identity partition over super-nodes
        intra = loops.sum()
        q_super = intra / mass - ((strengths / mass) ** 2).sum()
        assert q_super == pytest.approx(modularity(g, p), abs=1e-12)


class TestPartitionIO:
    def test_round_trip(self, tmp_path, rng):
        p = Partition(rng.integers(0, 4, size=12), densify=True)
        ids = np.arange(100, 112)
        path = tmp_path / "part.txt"
        write_partition(path, p, original_ids=ids)
        back = read_partition(path, original_ids=ids)
        assert np.array_equal(back.labels, p.labels)

    def test_unknown_ids_rejected(self, tmp_path):
        path = tmp_path / "part.txt"
        path.write_text("0 0\n7 1\n")
        with pytest.raises(ValueError):
            read_partition(path, original_ids=np.array([0, 1]))

    def test_duplicate_node_lines_rejected(self, tmp_path):
        path = tmp_path / "part.txt"
        path.write_text("0 0\n0 1\n")
        with pytest.raises(ValueError, match="exactly once"):
            read_partition(path)

    def test_partition_validation(self):
        with pytest.raises(ValueError):
            Partition([0, 2])  # gap
        assert Partition([5, 9], densify=True).community_count == 2
