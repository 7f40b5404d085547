"""Panel-based hexahedral meshing for segmented plate structures.

A structure is described as a union of axis-aligned box panels, each
discretized into a regular grid of 8-node hexahedra.  Coincident nodes on
shared panel faces are merged, fixed nodes are selected by half-space
predicates, and every element is assigned to exactly one segment region
(the unit of parametric uncertainty downstream).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError


@dataclass(frozen=True)
class Panel:
    """Axis-aligned box panel with a regular hexahedral grid.

    Parameters
    ----------
    origin : tuple of float
        Minimum corner (x, y, z).
    extents : tuple of float
        Edge lengths along x, y, z.  All positive.
    divisions : tuple of int
        Element counts along x, y, z.  All positive.
    """

    origin: tuple
    extents: tuple
    divisions: tuple

    def validate(self):
        if len(self.origin) != 3 or len(self.extents) != 3 or len(self.divisions) != 3:
            raise GeometryError("panel origin/extents/divisions must have length 3")
        if any(e <= 0.0 for e in self.extents):
            raise GeometryError(f"panel extents must be positive, got {self.extents}")
        if any(int(d) != d or d < 1 for d in self.divisions):
            raise GeometryError(f"panel divisions must be positive integers, got {self.divisions}")


@dataclass(frozen=True)
class HalfSpace:
    """Predicate ``coord[axis] <= value`` or ``coord[axis] >= value``."""

    axis: int
    op: str
    value: float
    tol: float = 1e-9

    def contains(self, points):
        points = np.asarray(points, dtype=float)
        c = points[..., self.axis]
        if self.op == "<=":
            return c <= self.value + self.tol
        if self.op == ">=":
            return c >= self.value - self.tol
        raise GeometryError(f"half-space op must be '<=' or '>=', got {self.op!r}")


@dataclass(frozen=True)
class BoxRegion:
    """Half-open axis-aligned box ``lo <= p < hi`` used to tag elements."""

    lo: tuple
    hi: tuple

    def contains(self, points):
        points = np.asarray(points, dtype=float)
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return np.all((points >= lo) & (points < hi), axis=-1)


@dataclass
class GeometryConfig:
    """Full geometric description of the model.

    ``segment_regions`` must cover every element centroid exactly once;
    elements are tagged by the first (and only) region containing their
    centroid.  ``fixed_node_selectors`` remove all three translations of
    any node matched by at least one selector.
    """

    panels: list
    segment_regions: list
    fixed_node_selectors: list = field(default_factory=list)
    merge_tolerance: float = 1e-9

    def validate(self):
        if not self.panels:
            raise GeometryError("geometry needs at least one panel")
        for p in self.panels:
            p.validate()
        if not self.segment_regions:
            raise GeometryError("geometry needs at least one segment region")
        if self.merge_tolerance <= 0.0:
            raise GeometryError("merge tolerance must be positive")


@dataclass
class MeshModel:
    """Merged mesh with DOF numbering.

    Attributes
    ----------
    nodes : ndarray, shape (n_nodes, 3)
    elements : ndarray, shape (n_elements, 8)
        Hexahedron connectivity, standard corner ordering (bottom face
        counter-clockwise, then top face).
    segment_ids : ndarray, shape (n_elements,)
        Segment index per element.
    n_segments : int
    fixed_nodes : ndarray of bool, shape (n_nodes,)
    dof_of_node : ndarray, shape (n_nodes, 3)
        Global free-DOF index per node and direction, -1 where fixed.
    n_dofs : int
        Number of free DOFs (3 per free node).
    """

    nodes: np.ndarray
    elements: np.ndarray
    segment_ids: np.ndarray
    n_segments: int
    fixed_nodes: np.ndarray
    dof_of_node: np.ndarray
    n_dofs: int

    def node_dof(self, node, direction):
        """Free-DOF index of (node, direction); raises if the DOF is fixed."""
        d = int(self.dof_of_node[node, direction])
        if d < 0:
            raise GeometryError(f"node {node} direction {direction} is fixed")
        return d

    def nearest_node(self, point):
        """Index of the mesh node closest to ``point`` (ties by lowest index)."""
        d2 = np.sum((self.nodes - np.asarray(point, dtype=float)) ** 2, axis=1)
        return int(np.argmin(d2))


def _panel_grid(panel):
    """Nodes and hex connectivity of one panel in local numbering."""
    nx, ny, nz = (int(d) for d in panel.divisions)
    ox, oy, oz = (float(v) for v in panel.origin)
    ex, ey, ez = (float(v) for v in panel.extents)
    xs = ox + ex * np.arange(nx + 1) / nx
    ys = oy + ey * np.arange(ny + 1) / ny
    zs = oz + ez * np.arange(nz + 1) / nz
    # node id = i*(ny+1)*(nz+1) + j*(nz+1) + k
    nodes = np.array([(x, y, z) for x in xs for y in ys for z in zs], dtype=float)

    def nid(i, j, k):
        return i * (ny + 1) * (nz + 1) + j * (nz + 1) + k

    elems = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                elems.append(
                    (
                        nid(i, j, k),
                        nid(i + 1, j, k),
                        nid(i + 1, j + 1, k),
                        nid(i, j + 1, k),
                        nid(i, j, k + 1),
                        nid(i + 1, j, k + 1),
                        nid(i + 1, j + 1, k + 1),
                        nid(i, j + 1, k + 1),
                    )
                )
    return nodes, np.array(elems, dtype=np.int64)


def _merge_nodes(nodes, tol):
    """Map every node to a representative within ``tol`` (union-find)."""
    tree = cKDTree(nodes)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(nodes))

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(len(nodes))])
    uniq, new_ids = np.unique(roots, return_inverse=True)
    return nodes[uniq], new_ids


def _check_connected(n_nodes, elements):
    parent = np.arange(n_nodes)

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for conn in elements:
        r0 = find(conn[0])
        for n in conn[1:]:
            rn = find(n)
            if rn != r0:
                parent[rn] = r0
    roots = {find(i) for i in range(n_nodes)}
    if len(roots) != 1:
        raise GeometryError(f"mesh is disconnected ({len(roots)} components)")


def build_mesh(config, allow_free_free=False):
    """Build the merged mesh for ``config``.

    Parameters
    ----------
    config : GeometryConfig
    allow_free_free : bool
        Permit an empty fixed-node set (rigid-body modes present).

    Returns
    -------
    MeshModel

    Raises
    ------
    GeometryError
        Empty geometry, disconnected panels, duplicate nodes surviving the
        merge, an element centroid matched by zero or multiple segment
        regions, or no fixed nodes without ``allow_free_free``.
    """
    config.validate()

    all_nodes = []
    all_elems = []
    offset = 0
    for panel in config.panels:
        nodes, elems = _panel_grid(panel)
        all_nodes.append(nodes)
        all_elems.append(elems + offset)
        offset += len(nodes)
    raw_nodes = np.vstack(all_nodes)
    raw_elems = np.vstack(all_elems)

    nodes, remap = _merge_nodes(raw_nodes, config.merge_tolerance)
    elements = remap[raw_elems]

    # the merge must leave no coincident pair behind
    if len(cKDTree(nodes).query_pairs(config.merge_tolerance)) > 0:
        raise GeometryError("duplicate nodes remain after merge")
    _check_connected(len(nodes), elements)

    centroids = nodes[elements].mean(axis=1)
    segment_ids = np.full(len(elements), -1, dtype=np.int64)
    for s, region in enumerate(config.segment_regions):
        inside = region.contains(centroids)
        clash = inside & (segment_ids >= 0)
        if np.any(clash):
            e = int(np.flatnonzero(clash)[0])
            raise GeometryError(
                f"element {e} centroid {centroids[e]} matched by regions "
                f"{segment_ids[e]} and {s}"
            )
        segment_ids[inside] = s
    if np.any(segment_ids < 0):
        e = int(np.flatnonzero(segment_ids < 0)[0])
        raise GeometryError(f"element {e} centroid {centroids[e]} matched by no segment region")

    fixed = np.zeros(len(nodes), dtype=bool)
    for sel in config.fixed_node_selectors:
        fixed |= sel.contains(nodes)
    if not np.any(fixed) and not allow_free_free:
        raise GeometryError("no fixed nodes; pass allow_free_free=True for a free-free model")
    if np.all(fixed):
        raise GeometryError("all nodes are fixed")

    dof_of_node = np.full((len(nodes), 3), -1, dtype=np.int64)
    free = np.flatnonzero(~fixed)
    dof_of_node[free] = np.arange(3 * len(free)).reshape(-1, 3)

    return MeshModel(
        nodes=nodes,
        elements=elements,
        segment_ids=segment_ids,
        n_segments=len(config.segment_regions),
        fixed_nodes=fixed,
        dof_of_node=dof_of_node,
        n_dofs=3 * len(free),
    )
