import numpy as np
import pytest
from hypothesis import given, strategies as st

from distinertia.errors import ConfigurationError
from distinertia.graph import (CommGraph, Mailbox, connectivity_report, incidence,
                               incidence_and_laplacian, integrated_laplacian, neighbors,
                               parse_edges)

K3 = np.array([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]], dtype=float)
PATH = np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]], dtype=float)  # edges 1-2, 1-3


@st.composite
def graphs(draw):
    n = draw(st.integers(1, 7))
    pairs = [(i, k) for i in range(1, n + 1) for k in range(i + 1, n + 1)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return n, edges


def test_reference_matrices_exact():
    g = CommGraph(3, ((0.0, ((1, 2), (1, 3), (2, 3))), (5.0, ((1, 2), (1, 3)))))
    np.testing.assert_array_equal(incidence_and_laplacian(g, 0.0).L, K3)
    np.testing.assert_array_equal(incidence_and_laplacian(g, 4.999).L, K3)
    np.testing.assert_array_equal(incidence_and_laplacian(g, 5.0).L, PATH)
    D = incidence_and_laplacian(g, 0.0).D
    np.testing.assert_array_equal(D, [[1, 1, 0], [-1, 0, 1], [0, -1, -1]])


@given(graphs())
def test_laplacian_properties(g):
    n, edges = g
    D = incidence(n, edges)
    L = D @ D.T
    np.testing.assert_array_equal(L.sum(axis=1), np.zeros(n))
    np.testing.assert_array_equal(L, L.T)
    assert np.linalg.eigvalsh(L).min() > -1e-12
    # degree on the diagonal, -1 per edge off it
    deg = np.zeros(n)
    for a, b in edges:
        deg[a - 1] += 1
        deg[b - 1] += 1
        assert L[a - 1, b - 1] == -1
    np.testing.assert_array_equal(np.diag(L), deg)


@given(graphs(), st.data())
def test_orientation_invariance(g, data):
    n, edges = g
    flips = data.draw(st.lists(st.booleans(), min_size=len(edges), max_size=len(edges)))
    D = incidence(n, edges)
    D_flipped = D * np.where(flips, -1.0, 1.0)
    np.testing.assert_array_equal(D_flipped @ D_flipped.T, D @ D.T)


def test_connectivity_reports():
    k3 = CommGraph.complete(3)
    rep = connectivity_report(k3, 0.0, 20.0)
    assert rep.lambda2_lower == pytest.approx(60.0) and rep.connected_on_average
    np.testing.assert_allclose(rep.eigenvalues, [0.0, 60.0, 60.0], atol=1e-12)
    path = CommGraph.static(3, [(1, 2), (1, 3)])
    assert connectivity_report(path, 0.0, 20.0).lambda2_lower == pytest.approx(20.0)
    cut = CommGraph.static(3, [(1, 2)])
    assert not connectivity_report(cut, 0.0, 20.0).connected_on_average
    # switching between two disconnected graphs is connected on average
    sw = CommGraph(3, ((0.0, ((1, 2),)), (1.0, ((2, 3),)), (2.0, ((1, 2),))))
    assert connectivity_report(sw, 0.0, 3.0).connected_on_average
    with pytest.raises(ValueError):
        connectivity_report(k3, -1.0, 5.0)


@given(st.floats(0.0, 10.0), st.floats(0.01, 10.0))
def test_integrated_laplacian_is_piecewise_exact(t0, T):
    g = CommGraph(3, ((0.0, ((1, 2), (1, 3), (2, 3))), (5.0, ((1, 2), (1, 3)))))
    t1 = t0 + T
    k3_time = max(0.0, min(t1, 5.0) - t0)
    expected = k3_time * K3 + (T - k3_time) * PATH
    np.testing.assert_allclose(integrated_laplacian(g, t0, t1), expected, rtol=1e-12, atol=1e-12)


def test_graph_validation_and_neighbors():
    with pytest.raises(ConfigurationError):
        CommGraph.static(3, [(1, 1)])
    with pytest.raises(ConfigurationError):
        CommGraph.static(3, [(1, 4)])
    with pytest.raises(ConfigurationError):
        CommGraph(3, ((1.0, ()), (1.0, ())))
    g = CommGraph.static(3, [(2, 1), (3, 2)])
    assert g.edges_at(0.0) == ((1, 2), (2, 3))
    assert neighbors(g, 2, 0.0) == {1, 3}
    with pytest.raises(IndexError):
        neighbors(g, 0, 0.0)
    assert parse_edges("1-2, 2-3") == ((1, 2), (2, 3)) and parse_edges("none") == ()


def test_mailbox_routes_and_delays():
    g = CommGraph(3, ((0.0, ((1, 2), (1, 3), (2, 3))), (5.0, ((1, 2), (1, 3)))))
    mb = Mailbox(g)
    mb.begin(0, 0.0)
    for j in (3, 1, 2):
        mb.post(j, np.full(2, float(j)))
    assert [k for k, _ in mb.collect(2)] == [1, 3]
    mb.begin(1, 5.0)
    for j in (1, 2, 3):
        mb.post(j, np.full(2, 10.0 + j))
    assert [k for k, _ in mb.collect(2)] == [1]
    delayed = Mailbox(g, delay=1)
    delayed.begin(0, 0.0)
    delayed.post(1, np.zeros(2))
    assert delayed.collect(2) == []
    delayed.begin(1, 0.001)
    delayed.post(1, np.ones(2))
    (k, est), = delayed.collect(2)
    assert k == 1 and est.tolist() == [0.0, 0.0]
