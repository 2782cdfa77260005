"""Mesh reconstruction from a bundle: sphere/coarse init + normal-guided refinement.

Each refinement step pulls visible vertices toward the bundle's normal maps
(displacement along the current normal, proportional to the disagreement's
normal component), applies shrink/grow silhouette forces where rendered and
target masks disagree, then smooths and recomputes normals. The mesh is
remeshed every `remesh_interval` steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_dilation

from . import raster
from .bundle import BundleImage
from .camera import Camera, build_rig
from .geometry import (
    TriMesh,
    compute_vertex_normals,
    laplacian_smooth,
    make_icosphere,
    normalize_to_cube,
    remesh,
)
from .meshio import load_mesh

SPHERE_INIT_RADIUS = 0.85
TRACE_INTERVAL = 10
_GROW_BAND_PX = 2   # how far outside the render silhouette target pixels count
_GROW_NEAR_PX = 1   # how close a vertex pixel must be to the gap to be "boundary-adjacent"


class ReconError(Exception):
    pass


@dataclass(frozen=True)
class ReconConfig:
    steps: int = 50
    normal_step_size: float = 0.05
    silhouette_step_size: float = 0.02
    laplacian_weight: float = 0.3
    remesh_interval: int = 10
    target_edge_length: float = 0.02
    init: str = "sphere"  # "sphere" or "coarse"
    sphere_subdivisions: int = 4
    coarse_path: str | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ReconError("steps must be >= 1")
        # Zero is allowed so a force can be switched off in isolation.
        if self.normal_step_size < 0 or self.silhouette_step_size < 0:
            raise ReconError("step sizes must be non-negative")
        if not 0.0 <= self.laplacian_weight <= 1.0:
            raise ReconError("laplacian_weight must be in [0, 1]")
        if self.remesh_interval < 1:
            raise ReconError("remesh_interval must be >= 1")
        if self.target_edge_length <= 0:
            raise ReconError("target_edge_length must be positive")
        if self.init not in ("sphere", "coarse"):
            raise ReconError("init must be 'sphere' or 'coarse'")
        if self.init == "coarse" and not self.coarse_path:
            raise ReconError("coarse init requires coarse_path")


@dataclass
class TraceRecord:
    step: int
    mean_normal_residual_deg: float
    silhouette_iou: list[float]
    vertex_count: int

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "mean_normal_residual_deg": self.mean_normal_residual_deg,
            "silhouette_iou": self.silhouette_iou,
            "vertex_count": self.vertex_count,
        }


@dataclass
class RefineTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord):
        if self.records and record.step <= self.records[-1].step:
            raise ReconError("trace checkpoint steps must be strictly increasing")
        self.records.append(record)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def load(cls, path: str) -> "RefineTrace":
        trace = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                trace.append(TraceRecord(
                    step=int(d["step"]),
                    mean_normal_residual_deg=float(d["mean_normal_residual_deg"]),
                    silhouette_iou=[float(x) for x in d["silhouette_iou"]],
                    vertex_count=int(d["vertex_count"]),
                ))
        return trace


def init_mesh(config: ReconConfig, bundle: BundleImage) -> TriMesh:
    """Sphere of radius 0.85, or an imported coarse mesh normalized and remeshed."""
    if config.init == "sphere":
        return make_icosphere(config.sphere_subdivisions, SPHERE_INIT_RADIUS)
    coarse = load_mesh(config.coarse_path)
    coarse, _ = normalize_to_cube(coarse)
    coarse = remesh(coarse, config.target_edge_length)
    return compute_vertex_normals(coarse)


def _decoded_target_normals(bundle: BundleImage, view: int) -> np.ndarray:
    """Camera-space unit normals per pixel of one view (garbage where unmasked)."""
    return raster.decode_normal_u8(bundle.normal_tiles[view].data[..., :3])


def _sample_pixels(camera: Camera, positions: np.ndarray, size: int):
    xy, depth, valid = camera.project_points(positions)
    ix = np.floor(np.nan_to_num(xy[:, 0], nan=-1.0)).astype(np.int64)
    iy = np.floor(np.nan_to_num(xy[:, 1], nan=-1.0)).astype(np.int64)
    inframe = valid & (ix >= 0) & (ix < size) & (iy >= 0) & (iy < size)
    return ix, iy, inframe, depth


def refine_step(mesh: TriMesh, bundle: BundleImage, cameras: list[Camera],
                config: ReconConfig, threads: int = 1) -> TriMesh:
    """One refinement pass; deterministic, returns a new mesh."""
    if mesh.normals is None:
        raise ReconError("mesh must carry vertex normals")
    size = bundle.tile_size
    positions = mesh.positions
    normals = mesh.normals
    n_verts = mesh.n_vertices

    target_acc = np.zeros((n_verts, 3))
    weight_acc = np.zeros(n_verts)
    shrink = np.zeros(n_verts, dtype=bool)
    grow = np.zeros(n_verts, dtype=bool)
    any_visible = False

    for k, cam in enumerate(cameras):
        gbuffer = raster.rasterize(mesh, cam, size, threads=threads)
        visible, _ = raster.vertex_visibility(mesh, cam, gbuffer)
        if visible.any():
            any_visible = True

        ix, iy, inframe, _ = _sample_pixels(cam, positions, size)
        target_mask = bundle.masks[k]

        view_dir = positions - cam.position
        view_dir /= np.maximum(np.linalg.norm(view_dir, axis=1, keepdims=True), 1e-12)
        cosine = np.maximum(0.0, -np.einsum("ij,ij->i", normals, view_dir))

        sample_ok = visible & inframe
        idx = np.where(sample_ok)[0]
        if len(idx):
            px, py = ix[idx], iy[idx]
            on_target = target_mask[py, px]
            hit = idx[on_target]
            if len(hit):
                cam_normals = _decoded_target_normals(bundle, k)[py[on_target], px[on_target]]
                world_normals = cam_normals @ cam.rotation  # R^T applied row-wise
                w = cosine[hit]
                target_acc[hit] += w[:, None] * world_normals
                weight_acc[hit] += w
            # Visible vertex projecting onto background: silhouette shrink.
            shrink[idx[~on_target]] = True

        # Grow where the target mask extends past the render within a 2-px band.
        render_mask = gbuffer.mask
        missing = target_mask & ~render_mask
        band = missing & binary_dilation(render_mask, iterations=_GROW_BAND_PX)
        if band.any() and len(idx):
            near_band = binary_dilation(band, iterations=_GROW_NEAR_PX)
            grow[idx[near_band[py, px]]] = True

    if not any_visible:
        raise ReconError("no vertex visible in any view: rig/bundle mismatch")

    new_positions = positions.copy()
    has_target = weight_acc > 0.0
    if has_target.any():
        t = target_acc[has_target]
        t /= np.maximum(np.linalg.norm(t, axis=1, keepdims=True), 1e-12)
        n = normals[has_target]
        along = np.einsum("ij,ij->i", t - n, n)
        new_positions[has_target] += config.normal_step_size * along[:, None] * n

    sil = grow.astype(np.float64) - shrink.astype(np.float64)
    new_positions += config.silhouette_step_size * sil[:, None] * normals

    out = TriMesh(new_positions, mesh.faces.copy(), normals=mesh.normals.copy(),
                  colors=None if mesh.colors is None else mesh.colors.copy())
    out = laplacian_smooth(out, config.laplacian_weight, 1)
    return compute_vertex_normals(out)


def normal_residual_deg(mesh: TriMesh, bundle: BundleImage, cameras: list[Camera],
                        threads: int = 1) -> tuple[float, list[float]]:
    """Mean angular disagreement (degrees) between rendered and target normals
    over pixels covered in both, plus per-view silhouette IoU."""
    size = bundle.tile_size
    angles_sum = 0.0
    angles_n = 0
    ious = []
    for k, cam in enumerate(cameras):
        gbuffer = raster.rasterize(mesh, cam, size, threads=threads)
        cam_normals = mesh.normals @ cam.rotation.T
        interp, mask = raster._interpolate_vertex_attribute(gbuffer, mesh.faces, cam_normals)
        lens = np.linalg.norm(interp, axis=1, keepdims=True)
        interp = interp / np.maximum(lens, 1e-12)

        target_mask = bundle.masks[k]
        both = mask & target_mask
        sel = target_mask[mask]
        if sel.any():
            target = _decoded_target_normals(bundle, k)[both]
            dots = np.clip(np.einsum("ij,ij->i", interp[sel], target), -1.0, 1.0)
            angles_sum += float(np.degrees(np.arccos(dots)).sum())
            angles_n += int(sel.sum())
        union = (mask | target_mask).sum()
        inter = both.sum()
        ious.append(float(inter / union) if union else 0.0)
    mean = angles_sum / angles_n if angles_n else 180.0
    return mean, ious


def reconstruct(bundle: BundleImage, config: ReconConfig,
                threads: int = 1) -> tuple[TriMesh, RefineTrace]:
    """Run init + `config.steps` refinement steps with periodic remeshing.

    The trace records step 0 and every TRACE_INTERVAL steps (plus the final
    step). Deterministic for a fixed bundle/config, independent of `threads`.
    """
    if not all(m.any() for m in bundle.masks):
        raise ReconError("bundle has a view with no foreground pixel")
    cameras = build_rig(bundle.meta.rig)
    mesh = init_mesh(config, bundle)
    trace = RefineTrace()

    def checkpoint(step: int, current: TriMesh):
        residual, ious = normal_residual_deg(current, bundle, cameras, threads=threads)
        trace.append(TraceRecord(step=step, mean_normal_residual_deg=residual,
                                 silhouette_iou=ious, vertex_count=current.n_vertices))

    checkpoint(0, mesh)
    for step in range(1, config.steps + 1):
        mesh = refine_step(mesh, bundle, cameras, config, threads=threads)
        if step % config.remesh_interval == 0:
            mesh = remesh(mesh, config.target_edge_length, iterations=1)
        if step % TRACE_INTERVAL == 0 or step == config.steps:
            checkpoint(step, mesh)
    return mesh, trace
