"""Triangular meshes of polygonal domains, skeleton extraction, refinement and I/O."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    """Invalid mesh geometry or topology."""


class MeshFormatError(MeshError):
    """Malformed mesh text; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"{message}, line {line}")
        self.line = line


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (nodes[triangles[:, i]] for i in range(3))
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


class Mesh:
    """Immutable triangle mesh with derived edge (skeleton) data.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (M, 3) int array, counterclockwise
    edges : (E, 2) int array, global orientation from lower to higher node index
    edge_triangles : (E, 2) int array; column 1 is -1 on boundary edges
    boundary : (E,) bool array
    triangle_edges : (M, 3) int array; local edge j joins local vertices j and j+1
    triangle_edge_signs : (M, 3) array of +-1; +1 when the local direction
        agrees with the global orientation
    """

    def __init__(self, nodes, triangles, check: bool = True):
        nodes = np.array(nodes, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if check:
            if triangles.size and (triangles.min() < 0 or triangles.max() >= len(nodes)):
                raise MeshError("node index out of range")
            area = signed_areas(nodes, triangles)
            bad = np.flatnonzero(area <= 0.0)
            if bad.size:
                raise MeshError(f"triangle {bad[0]} has non-positive signed area {area[bad[0]]:.3e}")
        nodes.flags.writeable = False
        triangles.flags.writeable = False
        self.nodes = nodes
        self.triangles = triangles
        self._build_edges()

    def _build_edges(self) -> None:
        tri = self.triangles
        M = len(tri)
        loc_a = tri[:, [0, 1, 2]].ravel()
        loc_b = tri[:, [1, 2, 0]].ravel()
        lo = np.minimum(loc_a, loc_b)
        hi = np.maximum(loc_a, loc_b)
        keys = np.column_stack([lo, hi])
        edges, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            raise MeshError("non-manifold mesh: an edge is shared by more than two triangles")
        signs = np.where(loc_a < loc_b, 1, -1)
        owner = np.repeat(np.arange(M), 3)
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        # stable order: first incident triangle in column 0
        order = np.argsort(inverse, kind="stable")
        inv_sorted = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = inv_sorted[1:] != inv_sorted[:-1]
        edge_tris[inv_sorted[first], 0] = owner[order[first]]
        edge_tris[inv_sorted[~first], 1] = owner[order[~first]]
        self.edges = edges
        self.edge_triangles = edge_tris
        self.boundary = counts == 1
        self.triangle_edges = inverse.reshape(M, 3)
        self.triangle_edge_signs = signs.reshape(M, 3)
        for arr in (self.edges, self.edge_triangles, self.boundary, self.triangle_edges, self.triangle_edge_signs):
            arr.flags.writeable = False

    # -- sizes ---------------------------------------------------------------
    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def __repr__(self) -> str:
        return f"Mesh({self.num_nodes} nodes, {self.num_triangles} triangles, {self.num_edges} edges)"

    # -- geometry ------------------------------------------------------------
    @cached_property
    def areas(self) -> np.ndarray:
        return signed_areas(self.nodes, self.triangles)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def diameters(self) -> np.ndarray:
        return self.edge_lengths[self.triangle_edges].max(axis=1)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def jacobians(self) -> np.ndarray:
        """(M, 2, 2) affine map Jacobians from the reference triangle, columns v1-v0, v2-v0."""
        p = self.nodes[self.triangles]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    def to_physical(self, ref_pts: np.ndarray, tris: np.ndarray | slice = slice(None)) -> np.ndarray:
        """Map reference points (Q, 2) to physical points (M, Q, 2)."""
        origin = self.nodes[self.triangles[tris, 0]]
        return origin[:, None, :] + np.einsum("tij,qj->tqi", self.jacobians[tris], ref_pts)

    @cached_property
    def local_normals(self) -> np.ndarray:
        """(M, 3, 2) outward unit normals of the local edges."""
        p = self.nodes[self.triangles]
        d = p[:, [1, 2, 0]] - p
        n = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary])


@dataclass(frozen=True)
class MeshQualityReport:
    diameters: np.ndarray
    inradii: np.ndarray
    ratios: np.ndarray
    gamma_c: float
    h: float


def quality_report(mesh: Mesh) -> MeshQualityReport:
    """Per-triangle diameter, inradius and chunkiness ratio."""
    area = mesh.areas
    bad = np.flatnonzero(area <= 0.0)
    if bad.size:
        raise MeshError(f"degenerate triangle {bad[0]} (area {area[bad[0]]:.3e})")
    sides = mesh.edge_lengths[mesh.triangle_edges]
    diam = sides.max(axis=1)
    rho = 2.0 * area / sides.sum(axis=1)
    ratio = diam / rho
    return MeshQualityReport(diameters=diam, inradii=rho, ratios=ratio, gamma_c=float(ratio.max()), h=float(diam.max()))


def generate_unit_square(n: int, perturb: float = 0.0, seed: int | None = 0, rng=None) -> Mesh:
    """Criss-cross triangulation of the unit square with optional interior jitter.

    Each of the ``n * n`` cells is split along a diagonal whose direction
    alternates in a checkerboard pattern. Interior nodes move by at most
    ``perturb / n`` in each coordinate.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= perturb < 0.3:
        raise ValueError("perturb must lie in [0, 0.3)")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    tris = np.array(tris, dtype=np.int64)
    if perturb == 0.0:
        return Mesh(nodes, tris)

    rng = rng if rng is not None else np.random.default_rng(seed)
    interior = np.flatnonzero((X.ravel() > 0) & (X.ravel() < 1) & (Y.ravel() > 0) & (Y.ravel() < 1))
    for _ in range(100):
        jittered = nodes.copy()
        jittered[interior] += rng.uniform(-perturb / n, perturb / n, size=(len(interior), 2))
        if np.all(signed_areas(jittered, tris) > 0.0):
            return Mesh(jittered, tris)
    raise MeshError("could not draw a valid perturbation after 100 attempts")


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: split every triangle into four through its edge midpoints."""
    N = mesh.num_nodes
    mid = 0.5 * (mesh.nodes[mesh.edges[:, 0]] + mesh.nodes[mesh.edges[:, 1]])
    nodes = np.vstack([mesh.nodes, mid])
    v = mesh.triangles
    m = N + mesh.triangle_edges  # m[:, j] is the midpoint of local edge (j, j+1)
    children = np.stack(
        [
            np.column_stack([v[:, 0], m[:, 0], m[:, 2]]),
            np.column_stack([m[:, 0], v[:, 1], m[:, 1]]),
            np.column_stack([m[:, 2], m[:, 1], v[:, 2]]),
            np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return Mesh(nodes, children)


def write_mesh(mesh: Mesh) -> str:
    lines = [f"{mesh.num_nodes} {mesh.num_triangles}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    return "\n".join(lines) + "\n"


def read_mesh(text: str) -> Mesh:
    """Parse the ``N M`` / nodes / triangles text format."""
    rows = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())]
    rows = [(no, toks) for no, toks in rows if toks]
    if not rows:
        raise MeshFormatError("empty mesh file", 1)
    no, toks = rows[0]
    try:
        if len(toks) != 2:
            raise ValueError
        N, M = int(toks[0]), int(toks[1])
        if N < 0 or M < 0:
            raise ValueError
    except ValueError:
        raise MeshFormatError("header must be 'N M' with non-negative integer counts", no) from None
    if len(rows) - 1 < N + M:
        last = rows[-1][0]
        raise MeshFormatError(f"expected {N} nodes and {M} triangles, found {len(rows) - 1} data lines", last)
    if len(rows) - 1 > N + M:
        raise MeshFormatError("trailing data after triangle list", rows[N + M + 1][0])

    nodes = np.empty((N, 2))
    for r, (no, toks) in enumerate(rows[1 : N + 1]):
        try:
            if len(toks) != 2:
                raise ValueError
            nodes[r] = float(toks[0]), float(toks[1])
        except ValueError:
            raise MeshFormatError("node line must hold two floats", no) from None

    tris = np.empty((M, 3), dtype=np.int64)
    for r, (no, toks) in enumerate(rows[N + 1 :]):
        try:
            if len(toks) != 3:
                raise ValueError
            tri = [int(t) for t in toks]
        except ValueError:
            raise MeshFormatError("triangle line must hold three integers", no) from None
        if min(tri) < 0 or max(tri) >= N:
            raise MeshFormatError("node index out of range", no)
        tris[r] = tri
        if signed_areas(nodes, tris[r : r + 1])[0] <= 0.0:
            raise MeshFormatError("inverted or degenerate triangle (must be counterclockwise)", no)
    return Mesh(nodes, tris)
