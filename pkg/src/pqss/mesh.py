"""Simplicial meshes of the unit interval, unit square and unit disk.

Meshes are immutable.  Boundary distance is always measured against the
analytic boundary of the domain, so the boundary strip is independent of the
triangulation.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidResolutionError, InvalidStripError, PqssError

__all__ = [
    "Domain", "Interval", "UnitSquare", "UnitDisk", "Mesh", "NodeSet",
    "build_interval_mesh", "build_square_mesh", "build_disk_mesh",
    "build_mesh", "boundary_strip", "write_mesh", "read_mesh",
]


class Domain:
    name = ""
    dimension = 0
    inradius = 0.0

    def distance(self, x):
        """Distance of the points ``x`` (shape (N, d)) to the boundary."""
        raise NotImplementedError

    def bump(self, x):
        """Positive interior function vanishing on the boundary."""
        raise NotImplementedError


class Interval(Domain):
    name = "interval"
    dimension = 1
    inradius = 0.5
    measure = 1.0

    def distance(self, x):
        x = np.asarray(x, dtype=float)[:, 0]
        return np.minimum(x, 1.0 - x)

    def bump(self, x):
        x = np.asarray(x, dtype=float)[:, 0]
        return x * (1.0 - x)


class UnitSquare(Domain):
    name = "square"
    dimension = 2
    inradius = 0.5
    measure = 1.0

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.min(np.concatenate([x, 1.0 - x], axis=1), axis=1)

    def bump(self, x):
        x = np.asarray(x, dtype=float)
        return np.prod(x * (1.0 - x), axis=1)


class UnitDisk(Domain):
    """Unit disk; the mesh boundary is an inscribed regular polygon."""

    name = "disk"
    dimension = 2
    inradius = 1.0

    def __init__(self, vertices=64):
        self.vertices = int(vertices)
        # area of the inscribed polygon actually covered by the mesh
        self.measure = 0.5 * self.vertices * np.sin(2.0 * np.pi / self.vertices)

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.maximum(1.0 - np.hypot(x[:, 0], x[:, 1]), 0.0)

    def bump(self, x):
        x = np.asarray(x, dtype=float)
        return np.maximum(1.0 - x[:, 0] ** 2 - x[:, 1] ** 2, 0.0)


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """P1 simplicial mesh.

    ``grad_basis[e, k]`` is the (constant) gradient of the hat function of
    local node ``k`` on element ``e``.
    """

    domain: Domain
    nodes: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray
    element_measures: np.ndarray = field(init=False)
    grad_basis: np.ndarray = field(init=False, repr=False)
    interior_nodes: np.ndarray = field(init=False, repr=False)
    resolution: int = 0
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        elements = np.asarray(self.elements, dtype=np.int64)
        boundary = np.unique(np.asarray(self.boundary_nodes, dtype=np.int64))
        measures, grads = _element_geometry(nodes, elements)
        if np.any(measures <= 0.0):
            raise PqssError("mesh has degenerate or inverted elements")
        interior = np.setdiff1d(np.arange(len(nodes)), boundary)
        object.__setattr__(self, "nodes", _frozen(nodes, float))
        object.__setattr__(self, "elements", _frozen(elements, np.int64))
        object.__setattr__(self, "boundary_nodes", _frozen(boundary, np.int64))
        object.__setattr__(self, "element_measures", _frozen(measures, float))
        object.__setattr__(self, "grad_basis", _frozen(grads, float))
        object.__setattr__(self, "interior_nodes", _frozen(interior, np.int64))

    @property
    def dimension(self):
        return self.nodes.shape[1]

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_elements(self):
        return self.elements.shape[0]

    @property
    def measure(self):
        return float(np.sum(self.element_measures))

    def boundary_distance(self):
        if "distance" not in self._cache:
            d = self.domain.distance(self.nodes)
            d[self.boundary_nodes] = 0.0
            self._cache["distance"] = _frozen(d, float)
        return self._cache["distance"]

    def boundary_mask(self):
        mask = np.zeros(self.num_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask


def _element_geometry(nodes, elements):
    verts = nodes[elements]                     # (E, d+1, d)
    d = nodes.shape[1]
    edges = verts[:, 1:, :] - verts[:, :1, :]   # (E, d, d), rows are edges
    det = np.linalg.det(edges) if d > 1 else edges[:, 0, 0]
    measures = np.abs(det) / (1.0 if d == 1 else 2.0)
    # gradients of barycentric coordinates: rows of inv(edges)^T
    inv = np.linalg.inv(edges) if d > 1 else 1.0 / edges
    g_rest = np.transpose(inv, (0, 2, 1))       # (E, d, d)
    g0 = -np.sum(g_rest, axis=1, keepdims=True)
    grads = np.concatenate([g0, g_rest], axis=1)
    return measures, grads


@dataclass(frozen=True)
class NodeSet:
    indices: np.ndarray
    complement_indices: np.ndarray


def _check_resolution(n):
    if int(n) != n or n < 2:
        raise InvalidResolutionError(f"resolution must be an integer >= 2, got {n}",
                                     stage="mesh")
    return int(n)


def build_interval_mesh(n):
    """Uniform mesh of (0, 1) with ``n`` elements."""
    n = _check_resolution(n)
    x = np.linspace(0.0, 1.0, n + 1)
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(Interval(), x[:, None], elements, [0, n], resolution=n)


def build_square_mesh(n):
    """Structured triangulation of (0, 1)^2: ``n`` squares per side, each cut
    along its lower-left to upper-right diagonal."""
    n = _check_resolution(n)
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)                # node index j*(n+1) + i
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    a = j * (n + 1) + i
    b, c, d = a + 1, a + n + 2, a + n + 1
    elements = np.concatenate([np.column_stack([a, b, c]),
                               np.column_stack([a, c, d])])
    on_bdry = np.any((nodes == 0.0) | (nodes == 1.0), axis=1)
    return Mesh(UnitSquare(), nodes, elements, np.flatnonzero(on_bdry), resolution=n)


def _ring_counts(n, vertices):
    counts = [max(6, int(np.ceil(vertices * k / n))) for k in range(1, n + 1)]
    counts[-1] = vertices
    return counts


def build_disk_mesh(n, vertices=64):
    """Ring mesh of the unit disk with ``n`` concentric rings; the outer ring is
    the regular ``vertices``-gon inscribed in the unit circle."""
    n = _check_resolution(n)
    if vertices < 6:
        raise InvalidResolutionError("disk needs at least 6 boundary vertices",
                                     stage="mesh")
    counts = _ring_counts(n, vertices)
    nodes = [np.zeros((1, 2))]
    angles = []
    offset = [1]
    for k, m in enumerate(counts, start=1):
        th = 2.0 * np.pi * np.arange(m) / m
        angles.append(th)
        nodes.append(np.column_stack([np.cos(th), np.sin(th)]) * (k / n))
        offset.append(offset[-1] + m)
    nodes = np.concatenate(nodes)

    tris = []
    m1 = counts[0]
    for j in range(m1):
        tris.append((0, 1 + j, 1 + (j + 1) % m1))
    for k in range(n - 1):
        tris.extend(_zip_rings(offset[k], angles[k], offset[k + 1], angles[k + 1]))
    boundary = np.arange(offset[-2], offset[-1])
    mesh = Mesh(UnitDisk(vertices), nodes, np.array(tris), boundary, resolution=n)
    return mesh


def _zip_rings(off_in, th_in, off_out, th_out):
    """Triangulate the annulus between two rings by merging their angles."""
    mi, mo = len(th_in), len(th_out)
    tris = []
    i = j = 0
    while i < mi or j < mo:
        a_in = th_in[i + 1] if i + 1 < mi else 2.0 * np.pi
        a_out = th_out[j + 1] if j + 1 < mo else 2.0 * np.pi
        p_in, p_out = off_in + i % mi, off_out + j % mo
        if j < mo and (i >= mi or a_out <= a_in):
            tris.append((p_in, p_out, off_out + (j + 1) % mo))
            j += 1
        else:
            tris.append((p_in, p_out, off_in + (i + 1) % mi))
            i += 1
    return tris


def build_mesh(kind, n, vertices=64):
    if kind == "interval":
        return build_interval_mesh(n)
    if kind == "square":
        return build_square_mesh(n)
    if kind == "disk":
        return build_disk_mesh(n, vertices)
    raise InvalidResolutionError(f"unknown domain kind {kind!r}", stage="mesh")


def boundary_strip(mesh, delta):
    """Nodes within analytic distance ``delta`` of the boundary."""
    inradius = mesh.domain.inradius
    if not (0.0 < delta < inradius):
        raise InvalidStripError(
            f"strip width {delta} must lie in (0, {inradius})", stage="mesh")
    d = mesh.boundary_distance()
    inside = d <= delta + 1e-12
    return NodeSet(np.flatnonzero(inside), np.flatnonzero(~inside))


def write_mesh(mesh, path):
    """Plain-text dump: header, one node per line, one element per line,
    boundary node list."""
    lines = [
        "# pqss mesh",
        f"domain {mesh.domain.name}"
        + (f" {mesh.domain.vertices}" if mesh.domain.name == "disk" else ""),
        f"resolution {mesh.resolution}",
        f"nodes {mesh.num_nodes} {mesh.dimension}",
    ]
    lines += [" ".join(repr(float(c)) for c in row) for row in mesh.nodes]
    lines.append(f"elements {mesh.num_elements} {mesh.elements.shape[1]}")
    lines += [" ".join(str(int(k)) for k in row) for row in mesh.elements]
    lines.append(f"boundary {len(mesh.boundary_nodes)}")
    lines += [str(int(k)) for k in mesh.boundary_nodes]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    it = iter(rows)
    head = next(it)
    if head[1] == "disk":
        domain = UnitDisk(int(head[2]))
    else:
        domain = {"interval": Interval, "square": UnitSquare}[head[1]]()
    resolution = int(next(it)[1])
    nn = int(next(it)[1])
    nodes = np.array([[float(c) for c in next(it)] for _ in range(nn)])
    ne = int(next(it)[1])
    elements = np.array([[int(c) for c in next(it)] for _ in range(ne)])
    nb = int(next(it)[1])
    boundary = [int(next(it)[0]) for _ in range(nb)]
    return Mesh(domain, nodes, elements, boundary, resolution=resolution)
