"""Deterministic software rasterizer: G-buffers, normal/color tiles, visibility.

Two interchangeable kernels back the per-pixel loop: a Cython extension
(`bundle3d._raster_cy`) and a pure numpy fallback (`bundle3d._raster_py`).
The compiled one is picked at import when available; set
BUNDLE3D_RASTER_BACKEND=python|compiled to force a choice. Both produce
bitwise-identical buffers.
"""

from __future__ import annotations

import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import _raster_py
from .camera import Camera
from .geometry import MeshError, TriMesh

try:
    from . import _raster_cy
except ImportError:
    _raster_cy = None

HAVE_COMPILED = _raster_cy is not None

_BACKENDS = {"python": _raster_py}
if HAVE_COMPILED:
    _BACKENDS["compiled"] = _raster_cy

DEFAULT_GRAY = 0.8


def _select_backend():
    forced = os.environ.get("BUNDLE3D_RASTER_BACKEND")
    if forced:
        if forced not in _BACKENDS:
            raise ImportError(
                f"BUNDLE3D_RASTER_BACKEND={forced!r} unavailable (have: {sorted(_BACKENDS)})"
            )
        return _BACKENDS[forced]
    return _BACKENDS["compiled"] if HAVE_COMPILED else _BACKENDS["python"]


_ACTIVE = _select_backend()


def active_backend() -> str:
    """Name of the kernel in use: "compiled" or "python"."""
    return _ACTIVE.BACKEND_NAME


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


@dataclass
class GBuffer:
    """Per-pixel rasterization record.

    mask true <=> face_id >= 0 <=> depth finite; barycentrics of covered
    pixels are perspective-correct and sum to 1.
    """

    width: int
    height: int
    depth: np.ndarray       # (H, W) float64, +inf where empty
    face_id: np.ndarray     # (H, W) int32, -1 where empty
    barycentrics: np.ndarray  # (H, W, 3) float64
    mask: np.ndarray        # (H, W) bool


@dataclass
class ImagePlane:
    """Row-major 8-bit image with 3 or 4 channels."""

    width: int
    height: int
    channels: int
    data: np.ndarray  # (H, W, C) uint8

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if self.data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"image data shape {self.data.shape} != {(self.height, self.width, self.channels)}"
            )
        if self.channels not in (3, 4):
            raise ValueError("channels must be 3 or 4")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImagePlane":
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr)

    def to_png_bytes(self) -> bytes:
        mode = "RGBA" if self.channels == 4 else "RGB"
        buf = io.BytesIO()
        Image.fromarray(self.data, mode=mode).save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "ImagePlane":
        img = Image.open(io.BytesIO(data))
        if img.mode not in ("RGB", "RGBA"):
            img = img.convert("RGBA" if "A" in img.mode or "transparency" in img.info else "RGB")
        return cls.from_array(np.asarray(img))

    def save(self, path: str):
        with open(path, "wb") as fh:
            fh.write(self.to_png_bytes())

    @classmethod
    def load(cls, path: str) -> "ImagePlane":
        with open(path, "rb") as fh:
            return cls.from_png_bytes(fh.read())


def encode_normal_u8(normals: np.ndarray) -> np.ndarray:
    """u8 = round(255*(n+1)/2), rounding half away from zero."""
    n = np.clip(np.asarray(normals, dtype=np.float64), -1.0, 1.0)
    return np.floor(255.0 * (n + 1.0) / 2.0 + 0.5).astype(np.uint8)


def decode_normal_u8(u8: np.ndarray, renormalize: bool = True) -> np.ndarray:
    """n = 2*u/255 - 1, re-normalized to unit length unless disabled."""
    raw = 2.0 * np.asarray(u8, dtype=np.float64) / 255.0 - 1.0
    if not renormalize:
        return raw
    lens = np.linalg.norm(raw, axis=-1, keepdims=True)
    return raw / np.maximum(lens, 1e-12)


def _zeroed_invalid_depth(depth: np.ndarray, valid: np.ndarray) -> np.ndarray:
    out = depth.copy()
    out[~valid] = 0.0  # kernel skips faces touching these
    return out


def rasterize(mesh: TriMesh, camera: Camera, size: int, threads: int = 1,
              backend=None) -> GBuffer:
    """Nearest-surface G-buffer with back-face culling and top-left tie rule.

    Results are bitwise-identical for any `threads` value: rows are
    partitioned into bands and every band sees the full face list.
    """
    if not mesh.n_faces:
        raise MeshError("cannot rasterize an empty mesh")
    kernel = _ACTIVE if backend is None else _BACKENDS[backend]

    xy, d, valid = camera.project_points(mesh.positions)
    xs = np.ascontiguousarray(np.nan_to_num(xy[:, 0], nan=0.0))
    ys = np.ascontiguousarray(np.nan_to_num(xy[:, 1], nan=0.0))
    ds = np.ascontiguousarray(_zeroed_invalid_depth(d, valid))
    faces = np.ascontiguousarray(mesh.faces, dtype=np.int32)

    depth = np.full((size, size), np.inf, dtype=np.float64)
    face_id = np.full((size, size), -1, dtype=np.int32)
    bary = np.zeros((size, size, 3), dtype=np.float64)

    threads = max(1, int(threads))
    if threads == 1 or size < 2 * threads:
        kernel.rasterize_into(xs, ys, ds, faces, size, 0, size, depth, face_id, bary)
    else:
        bounds = np.linspace(0, size, threads + 1).astype(int)
        def run(band):
            y0, y1 = bounds[band], bounds[band + 1]
            kernel.rasterize_into(xs, ys, ds, faces, size, int(y0), int(y1), depth, face_id, bary)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(threads)))

    return GBuffer(width=size, height=size, depth=depth, face_id=face_id,
                   barycentrics=bary, mask=face_id >= 0)


def _interpolate_vertex_attribute(gbuffer: GBuffer, faces: np.ndarray,
                                  attribute: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric-interpolate a per-vertex attribute at covered pixels."""
    mask = gbuffer.mask
    fid = gbuffer.face_id[mask]
    tri = attribute[faces[fid]]              # (K, 3, C)
    b = gbuffer.barycentrics[mask]           # (K, 3)
    return np.einsum("kj,kjc->kc", b, tri), mask


def render_normal_tile(mesh: TriMesh, camera: Camera, size: int, threads: int = 1) -> ImagePlane:
    """Camera-space normal map: RGBA, u8-encoded normals, alpha 0 background."""
    if mesh.normals is None:
        raise MeshError("mesh has no normals; run compute_vertex_normals first")
    gbuffer = rasterize(mesh, camera, size, threads=threads)
    cam_normals = mesh.normals @ camera.rotation.T
    interp, mask = _interpolate_vertex_attribute(gbuffer, mesh.faces, cam_normals)
    lens = np.linalg.norm(interp, axis=1, keepdims=True)
    small = lens[:, 0] < 1e-12
    interp[small] = (0.0, 0.0, 1.0)
    lens[small] = 1.0
    interp /= lens

    out = np.zeros((size, size, 4), dtype=np.uint8)
    out[mask, :3] = encode_normal_u8(interp)
    out[mask, 3] = 255
    return ImagePlane.from_array(out)


def render_color_tile(mesh: TriMesh, camera: Camera, size: int, threads: int = 1) -> ImagePlane:
    """Vertex-color render (flat 0.8 gray when the mesh is colorless); RGBA."""
    gbuffer = rasterize(mesh, camera, size, threads=threads)
    out = np.zeros((size, size, 4), dtype=np.uint8)
    if mesh.colors is None:
        gray = np.floor(255.0 * DEFAULT_GRAY + 0.5).astype(np.uint8)
        out[gbuffer.mask, :3] = gray
    else:
        interp, mask = _interpolate_vertex_attribute(gbuffer, mesh.faces, mesh.colors)
        interp = np.clip(interp, 0.0, 1.0)
        out[mask, :3] = np.floor(255.0 * interp + 0.5).astype(np.uint8)
    out[gbuffer.mask, 3] = 255
    return ImagePlane.from_array(out)


def vertex_visibility(mesh: TriMesh, camera: Camera, gbuffer: GBuffer) -> tuple[np.ndarray, np.ndarray]:
    """Which vertices the camera actually sees, given its own G-buffer.

    A vertex is visible when its projected pixel is covered, its depth is
    within epsilon of the buffer depth (epsilon = 1e-3 * bbox diagonal), and
    it is front-facing. Returns (visible, depth_margin); the margin is
    buffer_depth + eps - vertex_depth, -inf where the pixel test failed.
    """
    if camera.image_size and (gbuffer.width != camera.image_size or gbuffer.height != camera.image_size):
        raise MeshError("G-buffer size does not match the camera image size")
    if mesh.normals is None:
        raise MeshError("mesh has no normals; run compute_vertex_normals first")
    xy, d, valid = camera.project_points(mesh.positions)
    ix = np.floor(np.nan_to_num(xy[:, 0], nan=-1.0)).astype(np.int64)
    iy = np.floor(np.nan_to_num(xy[:, 1], nan=-1.0)).astype(np.int64)
    inframe = valid & (ix >= 0) & (ix < gbuffer.width) & (iy >= 0) & (iy < gbuffer.height)

    eps = 1e-3 * mesh.bounds().diagonal
    margin = np.full(mesh.n_vertices, -np.inf)
    covered = np.zeros(mesh.n_vertices, dtype=bool)
    sel = np.where(inframe)[0]
    buf_depth = gbuffer.depth[iy[sel], ix[sel]]
    covered[sel] = gbuffer.mask[iy[sel], ix[sel]]
    margin[sel] = np.where(np.isfinite(buf_depth), buf_depth + eps - d[sel], -np.inf)

    view_dir = mesh.positions - camera.position
    view_dir /= np.maximum(np.linalg.norm(view_dir, axis=1, keepdims=True), 1e-12)
    front = np.einsum("ij,ij->i", mesh.normals, view_dir) < 0.0

    visible = covered & (margin >= 0.0) & front
    return visible, margin
