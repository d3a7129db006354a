import numpy as np
import pytest

from pqss.errors import InvalidResolutionError, InvalidStripError
from pqss.fem import integrate
from pqss.mesh import (boundary_strip, build_disk_mesh, build_interval_mesh, build_mesh,
                       build_square_mesh, read_mesh, write_mesh)


def test_interval_n2_nodes_and_boundary():
    m = build_interval_mesh(2)
    assert np.allclose(m.nodes[:, 0], [0.0, 0.5, 1.0])
    assert list(m.boundary_nodes) == [0, 2]


def test_interval_n4_measures():
    m = build_interval_mesh(4)
    assert np.allclose(m.element_measures, 0.25)
    assert m.measure == pytest.approx(1.0)


def test_interval_n256_counts():
    m = build_interval_mesh(256)
    assert m.num_nodes == 257
    assert abs(m.measure - 1.0) < 1e-12


@pytest.mark.parametrize("builder", [build_interval_mesh, build_square_mesh])
@pytest.mark.parametrize("n", [0, 1, 1.5])
def test_invalid_resolution(builder, n):
    with pytest.raises(InvalidResolutionError):
        builder(n)


def test_square_n2_counts_and_area():
    m = build_square_mesh(2)
    assert (m.num_nodes, m.num_elements, len(m.boundary_nodes)) == (9, 8, 8)
    assert m.measure == 1.0


def test_square_n32():
    m = build_square_mesh(32)
    assert m.num_elements == 2048
    assert abs(m.measure - 1.0) < 1e-12


@pytest.mark.parametrize("mesh", [build_interval_mesh(16), build_square_mesh(8),
                                  build_disk_mesh(6, 24)])
def test_mesh_invariants(mesh):
    assert np.all(mesh.element_measures > 0)
    assert abs(mesh.measure - mesh.domain.measure) <= 1e-10 * mesh.domain.measure
    assert integrate(mesh, np.ones(mesh.num_nodes)) == pytest.approx(mesh.measure, rel=1e-10)
    x = mesh.nodes[mesh.boundary_nodes]
    if mesh.domain.name == "interval":
        assert np.all(np.minimum(np.abs(x), np.abs(1 - x)) < 1e-12)
    elif mesh.domain.name == "square":
        assert np.all(np.min(np.minimum(np.abs(x), np.abs(1 - x)), axis=1) < 1e-12)
    else:
        assert np.all(np.abs(np.hypot(x[:, 0], x[:, 1]) - 1.0) < 1e-12)


def test_strip_interval_example():
    m = build_interval_mesh(4)
    ns = boundary_strip(m, 0.3)
    assert np.allclose(m.nodes[ns.indices, 0], [0.0, 0.25, 0.75, 1.0])
    assert sorted(np.concatenate([ns.indices, ns.complement_indices])) == list(range(5))


def test_strip_exceeding_inradius():
    with pytest.raises(InvalidStripError):
        boundary_strip(build_interval_mesh(4), 0.6)


def test_strip_square_complement():
    m = build_square_mesh(4)
    c = m.nodes[boundary_strip(m, 0.3).complement_indices]
    assert np.all((c >= 0.3) & (c <= 0.7))


def test_strip_complement_shrinks():
    m = build_square_mesh(16)
    sizes = [boundary_strip(m, d).complement_indices.size
             for d in np.linspace(0.01, 0.49, 20)]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))


def test_refinement_preserves_geometry():
    a, b = build_square_mesh(8), build_square_mesh(16)
    assert a.measure == pytest.approx(b.measure, abs=1e-12)
    assert len(b.boundary_nodes) == 2 * len(a.boundary_nodes)


@pytest.mark.parametrize("kind", ["interval", "square", "disk"])
def test_mesh_round_trip(tmp_path, kind):
    m = build_mesh(kind, 4, 12)
    write_mesh(m, tmp_path / "m.txt")
    r = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(r.nodes, m.nodes)
    assert np.array_equal(r.elements, m.elements)
    assert np.array_equal(r.boundary_nodes, m.boundary_nodes)
    assert r.domain.name == kind
