import numpy as np
import pytest
from hypothesis import given, strategies as st

from hivpip.mesh import (
    TimeMesh,
    cell_average,
    create_uniform,
    inner_cells,
    interpolate_node_field,
    is_nested,
    l2_norm_cells,
    refine,
    transfer_cell_field,
)


def test_uniform_fourteen_cells():
    m = create_uniform(300.0, 14)
    assert m.n_nodes == 15
    assert m.nodes[1] == pytest.approx(300 / 14)
    assert m.nodes[1] == pytest.approx(21.4286, abs=1e-4)
    assert m.nodes[-1] == 300.0


def test_uniform_nineteen_cells():
    m = create_uniform(300.0, 19)
    assert m.n_nodes == 20
    np.testing.assert_allclose(m.widths, 300 / 19)


def test_single_cell():
    m = create_uniform(1.0, 1)
    np.testing.assert_array_equal(m.nodes, [0.0, 1.0])
    assert m.widths.tolist() == [1.0]


@pytest.mark.parametrize("nodes", [[0.0], [1.0, 2.0], [0.0, 2.0, 1.0], [0.0, 1.0, 1.0]])
def test_bad_nodes_rejected(nodes):
    with pytest.raises(ValueError):
        TimeMesh(np.array(nodes))


@pytest.mark.parametrize("n", [0, -3, 2.5])
def test_bad_cell_count(n):
    with pytest.raises(ValueError):
        create_uniform(300.0, n)


def test_nodes_read_only():
    m = create_uniform(300.0, 4)
    with pytest.raises(ValueError):
        m.nodes[1] = 3.0


def test_refine_bisects_marked_cell():
    m = refine(create_uniform(300.0, 2), {0})
    np.testing.assert_array_equal(m.nodes, [0.0, 75.0, 150.0, 300.0])
    assert m.level == 1


def test_refine_nothing_keeps_nodes():
    m = create_uniform(300.0, 5)
    r = m.refine(set())
    assert r.same_nodes(m) and r.level == m.level + 1


def test_refine_all_is_uniform_halving():
    m = create_uniform(300.0, 14)
    np.testing.assert_allclose(m.refine(range(14)).nodes, create_uniform(300.0, 28).nodes)


def test_refine_with_neighbours():
    m = create_uniform(4.0, 4).refine({1}, neighbours=True)
    np.testing.assert_array_equal(m.nodes, [0, 0.5, 1, 1.5, 2, 2.5, 3, 4])


def test_refine_out_of_range():
    with pytest.raises(ValueError):
        create_uniform(300.0, 3).refine({3})


@given(st.integers(1, 30), st.sets(st.integers(0, 29)))
def test_refinement_is_nested(n, marked):
    m = create_uniform(300.0, n)
    marked = {k for k in marked if k < n}
    child = m.refine(marked)
    assert is_nested(m, child)
    assert child.n_cells == n + len(marked)
    assert np.all(child.widths > 0)


def test_transfer_injection():
    src = TimeMesh(np.array([0.0, 150.0, 300.0]))
    dst = src.refine({0})
    np.testing.assert_array_equal(transfer_cell_field(src, [0.2, 0.8], dst), [0.2, 0.2, 0.8])


def test_transfer_constant_and_identity():
    one = create_uniform(300.0, 1)
    np.testing.assert_array_equal(transfer_cell_field(one, [0.7], one.refine({0})), [0.7, 0.7])
    m = create_uniform(300.0, 6)
    v = np.linspace(0, 1, 6)
    np.testing.assert_array_equal(transfer_cell_field(m, v, m), v)


def test_transfer_requires_nesting():
    with pytest.raises(ValueError):
        transfer_cell_field(create_uniform(300.0, 3), [1, 2, 3], create_uniform(300.0, 4))


@given(st.integers(1, 20), st.sets(st.integers(0, 19)), st.integers(0, 2**31))
def test_transfer_preserves_integral(n, marked, seed):
    m = create_uniform(300.0, n)
    child = m.refine({k for k in marked if k < n})
    v = np.random.default_rng(seed).uniform(size=n)
    w = transfer_cell_field(m, v, child)
    assert np.sum(child.widths * w) == pytest.approx(np.sum(m.widths * v))


def test_interpolation():
    m = create_uniform(300.0, 1)
    assert interpolate_node_field(m, [1.0, 3.0], 150.0) == pytest.approx(2.0)
    m = create_uniform(300.0, 7)
    v = np.sin(m.nodes)
    np.testing.assert_array_equal(interpolate_node_field(m, v, m.nodes), v)


def test_interpolation_two_point_formula():
    m = TimeMesh(np.array([0.0, 1.0, 3.5, 10.0]))
    v = np.array([[1.0, -1.0], [2.0, 0.0], [7.0, 5.0], [0.0, 1.0]])
    t = 2.2
    w = (t - 1.0) / 2.5
    np.testing.assert_allclose(interpolate_node_field(m, v, t), (1 - w) * v[1] + w * v[2])


def test_interpolation_outside_range():
    with pytest.raises(ValueError):
        interpolate_node_field(create_uniform(1.0, 2), [0, 1, 2], 1.5)


def test_cell_index_and_mesh_function():
    m = TimeMesh(np.array([0.0, 1.0, 3.0]))
    np.testing.assert_array_equal(m.cell_index([0.0, 0.5, 1.0, 1.5, 3.0]), [0, 0, 0, 1, 1])
    np.testing.assert_array_equal(m.mesh_function([0.5, 2.0]), [1.0, 2.0])


def test_norms():
    m = create_uniform(300.0, 10)
    assert l2_norm_cells(m, np.zeros(10)) == 0
    assert l2_norm_cells(m, np.ones(10)) == pytest.approx(np.sqrt(300))
    assert l2_norm_cells(create_uniform(4.0, 1), [3.0]) == pytest.approx(6.0)
    assert inner_cells(m, np.ones(10), 2 * np.ones(10)) == pytest.approx(600)
    np.testing.assert_array_equal(cell_average([0.0, 2.0, 4.0]), [1.0, 3.0])


def test_length_checks():
    m = create_uniform(300.0, 3)
    with pytest.raises(ValueError):
        m.check_cells(np.ones(4))
    with pytest.raises(ValueError):
        m.check_nodes(np.ones(3))


def test_text_roundtrip():
    m = create_uniform(300.0, 7).refine({2, 5})
    assert TimeMesh.from_text(m.to_text()).same_nodes(m)
