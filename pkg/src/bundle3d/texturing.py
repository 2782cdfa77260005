"""Visibility-aware projection of bundle RGB views onto a mesh as vertex colors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import raster
from .bundle import BundleImage
from .camera import CameraRigSpec, build_rig
from .geometry import TriMesh, _one_ring, compute_vertex_normals, median_edge_length, remesh
from .meshio import save_mesh


class TexturingError(Exception):
    pass


@dataclass(frozen=True)
class TextureConfig:
    cosine_power: float = 4.0
    min_weight: float = 1e-3
    fallback_color: tuple[float, float, float] = (0.8, 0.8, 0.8)
    pre_subdivide_to_edge_length: float | None = 0.01
    diffusion_passes: int = 10

    def __post_init__(self):
        if self.cosine_power <= 0:
            raise TexturingError("cosine_power must be positive")
        if self.min_weight < 0:
            raise TexturingError("min_weight must be non-negative")


def _bilinear(tile: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear sample at continuous pixel coords, clamped at the borders."""
    h, w = tile.shape[:2]
    fx = np.clip(x - 0.5, 0.0, w - 1.0)
    fy = np.clip(y - 0.5, 0.0, h - 1.0)
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = (fx - x0)[..., None] if tile.ndim == 3 else fx - x0
    ty = (fy - y0)[..., None] if tile.ndim == 3 else fy - y0
    top = tile[y0, x0] * (1.0 - tx) + tile[y0, x1] * tx
    bot = tile[y1, x0] * (1.0 - tx) + tile[y1, x1] * tx
    return top * (1.0 - ty) + bot * ty


def project_colors(mesh: TriMesh, bundle: BundleImage, rig: CameraRigSpec,
                   config: TextureConfig | None = None, threads: int = 1) -> TriMesh:
    """Blend the bundle's RGB views into per-vertex colors.

    Per vertex: c = sum_k w_k * rgb_k / sum_k w_k with
    w_k = visible_k * max(0, -n . view_dir_k)^p, scaled by the mask's bilinear
    coverage so background never bleeds in. Views are accumulated in azimuth
    order regardless of how the rig lists them. Vertices below min_weight get
    the fallback color, then adopt neighbor averages over up to
    `diffusion_passes` rounds.
    """
    config = config or TextureConfig()
    if bundle.n_views != rig.n_views:
        raise TexturingError(
            f"bundle has {bundle.n_views} views but rig has {rig.n_views}"
        )
    work = mesh
    if config.pre_subdivide_to_edge_length is not None:
        if median_edge_length(work) > config.pre_subdivide_to_edge_length:
            work = remesh(work, config.pre_subdivide_to_edge_length)
    if work.normals is None:
        work = compute_vertex_normals(work)

    cameras = build_rig(rig)
    size = bundle.tile_size
    positions = work.positions
    normals = work.normals
    n_verts = work.n_vertices

    color_acc = np.zeros((n_verts, 3))
    weight_acc = np.zeros(n_verts)

    # Fixed summation order: sort views by azimuth.
    order = sorted(range(rig.n_views), key=lambda k: rig.azimuths_deg[k])
    for k in order:
        cam = cameras[k]
        gbuffer = raster.rasterize(work, cam, size, threads=threads)
        visible, _ = raster.vertex_visibility(work, cam, gbuffer)
        if not visible.any():
            continue
        idx = np.where(visible)[0]
        xy, _, _ = cam.project_points(positions[idx])

        view_dir = positions[idx] - cam.position
        view_dir /= np.maximum(np.linalg.norm(view_dir, axis=1, keepdims=True), 1e-12)
        cosine = np.maximum(0.0, -np.einsum("ij,ij->i", normals[idx], view_dir))
        w = cosine ** config.cosine_power

        tile = bundle.rgb_tiles[k].data[..., :3].astype(np.float64) / 255.0
        mask = bundle.masks[k].astype(np.float64)
        coverage = _bilinear(mask, xy[:, 0], xy[:, 1])
        premult = _bilinear(tile * mask[..., None], xy[:, 0], xy[:, 1])
        safe = coverage > 1e-9
        rgb = np.zeros_like(premult)
        rgb[safe] = premult[safe] / coverage[safe, None]
        w = w * coverage

        color_acc[idx] += w[:, None] * rgb
        weight_acc[idx] += w

    colors = np.tile(np.asarray(config.fallback_color, dtype=np.float64), (n_verts, 1))
    colored = weight_acc >= config.min_weight
    colors[colored] = color_acc[colored] / weight_acc[colored, None]

    # Pull fallback vertices toward their colored neighborhood.
    if not colored.all() and colored.any():
        _, dst, degree = _one_ring(work)
        src = np.repeat(np.arange(n_verts), degree)
        state = colored.copy()
        for _ in range(config.diffusion_passes):
            todo = ~state
            if not todo.any():
                break
            neighbor_colored = state[dst]
            acc = np.zeros((n_verts, 3))
            cnt = np.zeros(n_verts)
            sel = neighbor_colored & todo[src]
            np.add.at(acc, src[sel], colors[dst[sel]])
            np.add.at(cnt, src[sel], 1.0)
            fill = todo & (cnt > 0)
            colors[fill] = acc[fill] / cnt[fill, None]
            state = state | fill

    out = work.copy()
    out.colors = np.clip(colors, 0.0, 1.0)
    return out


def bake_and_export(mesh: TriMesh, path: str):
    """GLB export with COLOR_0; requires vertex colors."""
    if mesh.colors is None:
        raise TexturingError("mesh has no vertex colors to bake")
    save_mesh(mesh, path, fmt="glb")
