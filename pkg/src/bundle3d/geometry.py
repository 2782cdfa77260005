"""Triangle-mesh data type and the mesh operations the rest of the package builds on."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class MeshError(Exception):
    pass


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned bounding box with componentwise min <= max."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min", np.asarray(self.min, dtype=np.float64))
        object.__setattr__(self, "max", np.asarray(self.max, dtype=np.float64))
        if np.any(self.min > self.max):
            raise MeshError("Aabb min must be <= max componentwise")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))


class TriMesh:
    """Indexed triangle mesh: positions, faces, optional unit vertex normals and RGB colors.

    Faces wind counter-clockwise seen from outside; normals, when present, are
    unit length; colors are per-vertex RGB in [0, 1].
    """

    def __init__(self, positions, faces, normals=None, colors=None):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(faces, dtype=np.int32).reshape(-1, 3)
        self.normals = None if normals is None else np.ascontiguousarray(normals, dtype=np.float64).reshape(-1, 3)
        self.colors = None if colors is None else np.ascontiguousarray(colors, dtype=np.float64).reshape(-1, 3)
        if len(self.faces) and self.faces.max(initial=-1) >= len(self.positions):
            raise MeshError("face index out of range")
        if len(self.faces) and self.faces.min(initial=0) < 0:
            raise MeshError("negative face index")

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> "TriMesh":
        return TriMesh(
            self.positions.copy(),
            self.faces.copy(),
            None if self.normals is None else self.normals.copy(),
            None if self.colors is None else self.colors.copy(),
        )

    def bounds(self) -> Aabb:
        if not len(self.positions):
            raise MeshError("empty mesh has no bounds")
        return Aabb(self.positions.min(axis=0), self.positions.max(axis=0))

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (E, 2) int array with e[:, 0] < e[:, 1]."""
        if not len(self.faces):
            return np.zeros((0, 2), dtype=np.int64)
        raw = self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2).astype(np.int64)
        raw.sort(axis=1)
        return np.unique(raw, axis=0)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_faces

    def n_components(self) -> int:
        adj = _vertex_adjacency_matrix(self)
        return int(connected_components(adj, directed=False, return_labels=False))

    def validate(self, normal_tol: float = 1e-4):
        """Raise MeshError if a structural invariant is broken."""
        if len(self.faces):
            if self.faces.max() >= self.n_vertices:
                raise MeshError("face index out of range")
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise MeshError("degenerate face with repeated vertex index")
        if self.normals is not None:
            if self.normals.shape != self.positions.shape:
                raise MeshError("normals shape mismatch")
            lens = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(lens - 1.0) > normal_tol):
                raise MeshError("non-unit vertex normal")
        if self.colors is not None:
            if self.colors.shape != self.positions.shape:
                raise MeshError("colors shape mismatch")
            if np.any(self.colors < 0) or np.any(self.colors > 1):
                raise MeshError("vertex color outside [0, 1]")


# Icosahedron vertex/face tables (golden-ratio construction).
_PHI = (1.0 + 5.0 ** 0.5) / 2.0
_ICO_VERTS = np.array(
    [
        (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
        (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
        (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int32,
)

MAX_ICOSPHERE_SUBDIVISIONS = 7


def make_icosphere(subdivisions: int, radius: float) -> TriMesh:
    """Build a unit-ish sphere by midpoint-subdividing an icosahedron.

    Args:
        subdivisions: number of 1-to-4 subdivision passes, 0..7.
        radius: target vertex distance from the origin, > 0.

    Returns:
        Watertight sphere mesh with V = 10*4^s + 2 vertices, CCW-outward
        winding, and vertex normals set to the radial directions.
    """
    if subdivisions < 0 or subdivisions > MAX_ICOSPHERE_SUBDIVISIONS:
        raise MeshError(f"subdivisions must be in [0, {MAX_ICOSPHERE_SUBDIVISIONS}]")
    if radius <= 0:
        raise MeshError("radius must be positive")

    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(subdivisions):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = midpoint_cache.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                verts.append(m)
                idx = len(verts) - 1
                midpoint_cache[key] = idx
            return idx

        next_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            next_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = next_faces

    positions = np.asarray(verts, dtype=np.float64) * radius
    faces_arr = np.asarray(faces, dtype=np.int32)

    # Enforce CCW-outward regardless of the base table's handedness.
    p0, p1, p2 = (positions[faces_arr[:, k]] for k in range(3))
    outward = np.einsum("ij,ij->i", np.cross(p1 - p0, p2 - p0), (p0 + p1 + p2) / 3.0)
    flip = outward < 0
    faces_arr[flip] = faces_arr[flip][:, ::-1]

    normals = positions / np.linalg.norm(positions, axis=1, keepdims=True)
    return TriMesh(positions, faces_arr, normals=normals)


def compute_vertex_normals(mesh: TriMesh) -> TriMesh:
    """Return a copy with area-weighted vertex normals (isolated vertices get +Z)."""
    if not mesh.n_faces:
        raise MeshError("cannot compute normals of an empty mesh")
    p = mesh.positions
    f = mesh.faces
    # cross(b-a, c-a) has magnitude 2*area and points along the face normal,
    # so plain accumulation is the area-weighted average.
    fn = np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])
    acc = np.zeros_like(p)
    for k in range(3):
        np.add.at(acc, f[:, k], fn)
    lens = np.linalg.norm(acc, axis=1)
    degenerate = lens < 1e-20
    acc[degenerate] = (0.0, 0.0, 1.0)
    lens[degenerate] = 1.0
    out = mesh.copy()
    out.normals = acc / lens[:, None]
    return out


def normalize_to_cube(mesh: TriMesh) -> tuple[TriMesh, tuple[float, np.ndarray]]:
    """Center the mesh and scale it uniformly so the longest bbox axis spans [-1, 1].

    Returns:
        (normalized mesh, (scale, translation)) with
        new_positions = (old_positions + translation) * scale.
    """
    if not mesh.n_vertices:
        raise MeshError("cannot normalize an empty mesh")
    box = mesh.bounds()
    half = float(box.extent.max()) / 2.0
    if half <= 0:
        raise MeshError("degenerate mesh: zero extent along every axis")
    translation = -box.center
    scale = 1.0 / half
    out = mesh.copy()
    out.positions = (out.positions + translation) * scale
    return out, (scale, translation)


def _vertex_adjacency_matrix(mesh: TriMesh):
    e = mesh.edges()
    n = mesh.n_vertices
    data = np.ones(len(e), dtype=np.int8)
    return coo_matrix((data, (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()


def _one_ring(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """CSR-style one-ring: (neighbor_starts, neighbor_indices, degree)."""
    e = mesh.edges()
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    degree = np.bincount(src, minlength=mesh.n_vertices)
    starts = np.concatenate([[0], np.cumsum(degree)])
    return starts, dst, degree


def laplacian_smooth(mesh: TriMesh, weight: float, iterations: int) -> TriMesh:
    """Move each vertex toward the uniform average of its one-ring.

    Args:
        weight: blend factor in [0, 1]; 0 is the identity.
        iterations: number of synchronous passes, >= 1.
    """
    if not 0.0 <= weight <= 1.0:
        raise MeshError("weight must be in [0, 1]")
    if iterations < 1:
        raise MeshError("iterations must be >= 1")
    _, dst, degree = _one_ring(mesh)
    if np.any(degree == 0):
        raise MeshError("isolated vertex: every vertex needs at least one neighbor")
    out = mesh.copy()
    if weight == 0.0:
        return out
    src = np.repeat(np.arange(mesh.n_vertices), degree)
    pos = out.positions
    for _ in range(iterations):
        acc = np.zeros_like(pos)
        np.add.at(acc, src, pos[dst])
        avg = acc / degree[:, None]
        pos = pos + weight * (avg - pos)
    out.positions = pos
    return out


def median_edge_length(mesh: TriMesh) -> float:
    e = mesh.edges()
    if not len(e):
        raise MeshError("mesh has no edges")
    lengths = np.linalg.norm(mesh.positions[e[:, 0]] - mesh.positions[e[:, 1]], axis=1)
    return float(np.median(lengths))


def _edge_face_incidence(faces: list[tuple[int, int, int]]) -> dict[tuple[int, int], list[int]]:
    inc: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            inc.setdefault(key, []).append(fi)
    return inc


def _split_pass(verts: list[np.ndarray], faces: list[tuple[int, int, int]], max_len: float):
    """Split every edge longer than max_len at its midpoint, retriangulating faces in place."""
    pos = np.asarray(verts)
    mid_index: dict[tuple[int, int], int] = {}
    inc = _edge_face_incidence(faces)
    for key in sorted(inc.keys()):
        a, b = key
        if np.linalg.norm(pos[a] - pos[b]) > max_len:
            verts.append(0.5 * (pos[a] + pos[b]))
            mid_index[key] = len(verts) - 1
    if not mid_index:
        return False

    def mid(u, v):
        return mid_index.get((u, v) if u < v else (v, u))

    new_faces = []
    for a, b, c in faces:
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        marked = (mab is not None, mbc is not None, mca is not None)
        n_marked = sum(marked)
        if n_marked == 0:
            new_faces.append((a, b, c))
        elif n_marked == 3:
            new_faces += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]
        elif n_marked == 1:
            # Rotate so the split edge is (a, b).
            while mab is None:
                a, b, c = b, c, a
                mab, mbc, mca = mbc, mca, mab
            new_faces += [(a, mab, c), (mab, b, c)]
        else:
            # Rotate so the unsplit edge is (c, a).
            while mca is not None:
                a, b, c = b, c, a
                mab, mbc, mca = mbc, mca, mab
            new_faces += [(a, mab, c), (mab, b, mbc), (mab, mbc, c)]
    faces[:] = new_faces
    return True


def _collapse_pass(verts: list[np.ndarray], faces: list[tuple[int, int, int]], min_len: float):
    """Collapse edges shorter than min_len to their midpoint where topology-safe."""
    pos = np.asarray(verts, dtype=np.float64)
    neighbors: dict[int, set[int]] = {}
    inc = _edge_face_incidence(faces)
    for (a, b) in inc.keys():
        neighbors.setdefault(a, set()).add(b)
        neighbors.setdefault(b, set()).add(a)

    face_alive = [True] * len(faces)
    vert_inc: dict[int, set[int]] = {}
    for fi, tri in enumerate(faces):
        for v in tri:
            vert_inc.setdefault(v, set()).add(fi)

    touched: set[int] = set()
    changed = False
    for key in sorted(inc.keys()):
        a, b = key
        if a in touched or b in touched:
            continue
        if np.linalg.norm(pos[a] - pos[b]) >= min_len:
            continue
        shared = [fi for fi in vert_inc.get(a, ()) & vert_inc.get(b, ()) if face_alive[fi]]
        if len(shared) != 2:
            continue  # boundary or non-manifold edge
        # Link condition on a closed manifold: exactly the two opposite vertices.
        common = neighbors[a] & neighbors[b]
        if len(common) != 2:
            continue
        midpoint = 0.5 * (pos[a] + pos[b])
        # Reject collapses that flip any surviving incident face.
        ok = True
        affected = [fi for fi in (vert_inc.get(a, set()) | vert_inc.get(b, set())) if face_alive[fi] and fi not in shared]
        for fi in affected:
            tri = faces[fi]
            old = np.cross(pos[tri[1]] - pos[tri[0]], pos[tri[2]] - pos[tri[0]])
            q = [midpoint if v in (a, b) else pos[v] for v in tri]
            new = np.cross(q[1] - q[0], q[2] - q[0])
            if np.dot(old, new) <= 0:
                ok = False
                break
        if not ok:
            continue

        pos[a] = midpoint
        verts[a] = midpoint
        for fi in shared:
            face_alive[fi] = False
        for fi in affected:
            tri = tuple(a if v == b else v for v in faces[fi])
            faces[fi] = tri
            vert_inc.setdefault(a, set()).add(fi)
        neighbors[a] = (neighbors[a] | neighbors[b]) - {a, b}
        for v in neighbors[b]:
            neighbors[v].discard(b)
            if v != a:
                neighbors[v].add(a)
                neighbors[a].add(v)
        touched |= {a, b} | neighbors[a]
        changed = True

    if changed:
        faces[:] = [f for fi, f in enumerate(faces) if face_alive[fi]]
    return changed


def _tangential_relax(mesh: TriMesh, strength: float = 0.5) -> TriMesh:
    relaxed = compute_vertex_normals(mesh)
    starts, dst, degree = _one_ring(relaxed)
    src = np.repeat(np.arange(relaxed.n_vertices), degree)
    acc = np.zeros_like(relaxed.positions)
    np.add.at(acc, src, relaxed.positions[dst])
    centroid = acc / np.maximum(degree, 1)[:, None]
    delta = centroid - relaxed.positions
    n = relaxed.normals
    delta -= np.einsum("ij,ij->i", delta, n)[:, None] * n
    relaxed.positions = relaxed.positions + strength * delta
    return relaxed


def _drop_unreferenced(verts: list[np.ndarray], faces: list[tuple[int, int, int]]):
    used = sorted({v for tri in faces for v in tri})
    remap = {old: new for new, old in enumerate(used)}
    positions = np.asarray([verts[i] for i in used], dtype=np.float64)
    faces_arr = np.asarray([[remap[v] for v in tri] for tri in faces], dtype=np.int32)
    return positions, faces_arr


def remesh(mesh: TriMesh, target_edge_length: float, iterations: int = 3) -> TriMesh:
    """Incremental isotropic remesh: split long edges, collapse short ones, relax.

    Edges longer than 4/3 * target are split at their midpoint, edges shorter
    than 4/5 * target are collapsed to it when the link condition holds, and
    vertices are relaxed tangentially. Topology (genus, components) is
    preserved; colors are dropped, normals recomputed.

    Args:
        mesh: manifold input (every edge on at most two faces).
        target_edge_length: desired edge length, > 0.
        iterations: split/collapse/relax rounds.
    """
    if target_edge_length <= 0:
        raise MeshError("target_edge_length must be positive")
    if not mesh.n_faces:
        raise MeshError("cannot remesh an empty mesh")
    inc = _edge_face_incidence([tuple(f) for f in mesh.faces])
    if any(len(fs) > 2 for fs in inc.values()):
        raise MeshError("non-manifold input: edge shared by more than two faces")

    work = mesh.copy()
    for _ in range(iterations):
        verts = [v for v in work.positions]
        faces = [tuple(int(x) for x in f) for f in work.faces]
        split = _split_pass(verts, faces, 4.0 / 3.0 * target_edge_length)
        collapsed = _collapse_pass(verts, faces, 4.0 / 5.0 * target_edge_length)
        positions, faces_arr = _drop_unreferenced(verts, faces)
        work = TriMesh(positions, faces_arr)
        work = _tangential_relax(work)
        if not split and not collapsed:
            break
    return compute_vertex_normals(work)
