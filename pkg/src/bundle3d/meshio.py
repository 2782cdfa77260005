"""Mesh file I/O: ASCII OBJ and binary glTF 2.0 (.glb) with vertex colors."""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .geometry import MeshError, TriMesh

_GLB_MAGIC = 0x46546C67  # "glTF"
_CHUNK_JSON = 0x4E4F534A
_CHUNK_BIN = 0x004E4942

_COMPONENT_DTYPES = {
    5120: np.int8,
    5121: np.uint8,
    5122: np.int16,
    5123: np.uint16,
    5125: np.uint32,
    5126: np.float32,
}
_TYPE_COUNTS = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4}


def load_mesh(path: str) -> TriMesh:
    """Load an OBJ or GLB mesh, dispatching on the file extension."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"mesh file not found: {path}")
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        return _load_obj(path)
    if ext == ".glb":
        return _load_glb(path)
    raise MeshError(f"unsupported mesh format: {ext!r} (expected .obj or .glb)")


def save_mesh(mesh: TriMesh, path: str, fmt: str | None = None):
    """Save a mesh as OBJ or GLB; format inferred from the extension when omitted."""
    fmt = (fmt or os.path.splitext(path)[1].lstrip(".")).lower()
    if fmt == "obj":
        _save_obj(mesh, path)
    elif fmt == "glb":
        _save_glb(mesh, path)
    else:
        raise MeshError(f"unsupported mesh format: {fmt!r} (expected obj or glb)")


def _load_obj(path: str) -> TriMesh:
    positions = []
    faces = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshError(f"malformed OBJ vertex line: {line.strip()!r}")
                positions.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = []
                for token in parts[1:]:
                    vi = token.split("/")[0]
                    i = int(vi)
                    # OBJ is 1-based; negatives count from the end.
                    idx.append(i - 1 if i > 0 else len(positions) + i)
                if len(idx) < 3:
                    raise MeshError(f"malformed OBJ face line: {line.strip()!r}")
                for k in range(1, len(idx) - 1):  # fan triangulation
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not positions:
        raise MeshError(f"OBJ contains no vertices: {path}")
    return TriMesh(np.asarray(positions, dtype=np.float64), np.asarray(faces, dtype=np.int32))


def _save_obj(mesh: TriMesh, path: str):
    lines = []
    for p in mesh.positions:
        lines.append(f"v {p[0]:.8f} {p[1]:.8f} {p[2]:.8f}")
    if mesh.normals is not None:
        for n in mesh.normals:
            lines.append(f"vn {n[0]:.6f} {n[1]:.6f} {n[2]:.6f}")
        for f in mesh.faces:
            lines.append(f"f {f[0]+1}//{f[0]+1} {f[1]+1}//{f[1]+1} {f[2]+1}//{f[2]+1}")
    else:
        for f in mesh.faces:
            lines.append(f"f {f[0]+1} {f[1]+1} {f[2]+1}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _pad_to_4(data: bytes, pad: bytes) -> bytes:
    remainder = len(data) % 4
    return data if remainder == 0 else data + pad * (4 - remainder)


def _save_glb(mesh: TriMesh, path: str):
    blobs = []
    views = []
    accessors = []

    def add_blob(arr: np.ndarray, target: int, type_name: str, component: int, normalized=False):
        data = arr.tobytes()
        offset = sum(len(b) for b in blobs)
        blobs.append(_pad_to_4(data, b"\x00"))
        views.append({"buffer": 0, "byteOffset": offset, "byteLength": len(data), "target": target})
        acc = {
            "bufferView": len(views) - 1,
            "componentType": component,
            "count": int(arr.shape[0]),
            "type": type_name,
        }
        if normalized:
            acc["normalized"] = True
        accessors.append(acc)
        return len(accessors) - 1

    indices = np.ascontiguousarray(mesh.faces.reshape(-1), dtype=np.uint32)
    idx_acc = add_blob(indices.reshape(-1, 1), 34963, "SCALAR", 5125)

    pos32 = np.ascontiguousarray(mesh.positions, dtype=np.float32)
    pos_acc = add_blob(pos32, 34962, "VEC3", 5126)
    accessors[pos_acc]["min"] = [float(x) for x in pos32.min(axis=0)]
    accessors[pos_acc]["max"] = [float(x) for x in pos32.max(axis=0)]

    attributes = {"POSITION": pos_acc}
    if mesh.normals is not None:
        attributes["NORMAL"] = add_blob(np.ascontiguousarray(mesh.normals, dtype=np.float32), 34962, "VEC3", 5126)
    if mesh.colors is not None:
        attributes["COLOR_0"] = add_blob(np.ascontiguousarray(mesh.colors, dtype=np.float32), 34962, "VEC3", 5126)

    gltf = {
        "asset": {"version": "2.0", "generator": "bundle3d"},
        "buffers": [{"byteLength": sum(len(b) for b in blobs)}],
        "bufferViews": views,
        "accessors": accessors,
        "meshes": [{"primitives": [{"attributes": attributes, "indices": idx_acc, "mode": 4}]}],
        "nodes": [{"mesh": 0}],
        "scenes": [{"nodes": [0]}],
        "scene": 0,
    }

    json_chunk = _pad_to_4(json.dumps(gltf, separators=(",", ":"), sort_keys=True).encode("utf-8"), b" ")
    bin_chunk = b"".join(blobs)
    total = 12 + 8 + len(json_chunk) + 8 + len(bin_chunk)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<III", _GLB_MAGIC, 2, total))
        fh.write(struct.pack("<II", len(json_chunk), _CHUNK_JSON))
        fh.write(json_chunk)
        fh.write(struct.pack("<II", len(bin_chunk), _CHUNK_BIN))
        fh.write(bin_chunk)


def _read_accessor(gltf: dict, binary: bytes, index: int) -> np.ndarray:
    acc = gltf["accessors"][index]
    view = gltf["bufferViews"][acc["bufferView"]]
    if view.get("byteStride") not in (None, 0):
        stride = view["byteStride"]
        dtype = _COMPONENT_DTYPES[acc["componentType"]]
        ncomp = _TYPE_COUNTS[acc["type"]]
        if stride != np.dtype(dtype).itemsize * ncomp:
            raise MeshError("interleaved glTF buffer views are not supported")
    dtype = _COMPONENT_DTYPES.get(acc["componentType"])
    if dtype is None:
        raise MeshError(f"unsupported glTF component type {acc['componentType']}")
    ncomp = _TYPE_COUNTS.get(acc["type"])
    if ncomp is None:
        raise MeshError(f"unsupported glTF accessor type {acc['type']}")
    start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    count = acc["count"] * ncomp
    arr = np.frombuffer(binary, dtype=dtype, count=count, offset=start)
    out = arr.reshape(acc["count"], ncomp) if ncomp > 1 else arr.copy()
    if acc.get("normalized") and dtype in (np.uint8, np.uint16):
        out = out.astype(np.float64) / np.iinfo(dtype).max
    return out


def _load_glb(path: str) -> TriMesh:
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12:
            raise MeshError(f"truncated GLB header: {path}")
        magic, version, _length = struct.unpack("<III", header)
        if magic != _GLB_MAGIC:
            raise MeshError(f"not a GLB file (bad magic): {path}")
        if version != 2:
            raise MeshError(f"unsupported GLB version {version}")
        gltf = None
        binary = b""
        while True:
            chunk_header = fh.read(8)
            if len(chunk_header) < 8:
                break
            size, kind = struct.unpack("<II", chunk_header)
            payload = fh.read(size)
            if len(payload) < size:
                raise MeshError(f"truncated GLB chunk: {path}")
            if kind == _CHUNK_JSON:
                gltf = json.loads(payload.decode("utf-8"))
            elif kind == _CHUNK_BIN:
                binary = payload
    if gltf is None:
        raise MeshError(f"GLB has no JSON chunk: {path}")
    meshes = gltf.get("meshes") or []
    if not meshes:
        raise MeshError("GLB contains no meshes")
    prim = meshes[0]["primitives"][0]
    if prim.get("mode", 4) != 4:
        raise MeshError("unsupported glTF primitive mode (triangles only)")

    positions = _read_accessor(gltf, binary, prim["attributes"]["POSITION"]).astype(np.float64)
    if "indices" in prim:
        indices = _read_accessor(gltf, binary, prim["indices"]).astype(np.int64).reshape(-1)
    else:
        indices = np.arange(len(positions), dtype=np.int64)
    if len(indices) % 3:
        raise MeshError("glTF index count is not a multiple of 3")
    faces = indices.reshape(-1, 3)

    normals = None
    if "NORMAL" in prim["attributes"]:
        normals = _read_accessor(gltf, binary, prim["attributes"]["NORMAL"]).astype(np.float64)
        lens = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = normals / np.maximum(lens, 1e-12)
    colors = None
    if "COLOR_0" in prim["attributes"]:
        colors = np.asarray(_read_accessor(gltf, binary, prim["attributes"]["COLOR_0"]), dtype=np.float64)
        if colors.shape[1] == 4:
            colors = colors[:, :3]
        colors = np.clip(colors, 0.0, 1.0)
    return TriMesh(positions, faces, normals=normals, colors=colors)
