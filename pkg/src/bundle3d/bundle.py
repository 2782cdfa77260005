"""The tiled bundle-image format: N RGB views over their N normal maps.

Layout (version 1): a 2-row grid, one column per azimuth in rig order; row 0
holds the RGB views, row 1 the matching camera-space normal maps. On disk the
composed grid is an RGBA PNG with a ".meta.json" sidecar.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import raster
from .camera import CameraRigSpec, build_rig
from .geometry import TriMesh
from .raster import ImagePlane

LAYOUT_VERSION = 1
NORMAL_FRAMES = ("camera", "world")

# Foreground test for bundles without an alpha channel: raw decoded normal
# magnitude within 0.5 of unit length. Saturated backgrounds (black or white)
# decode to magnitude sqrt(3) and fall outside the band.
MASK_BAND = (0.5, 1.5)


class BundleError(Exception):
    pass


@dataclass(frozen=True)
class BundleMeta:
    caption: str = ""
    seed: int = 0
    rig: CameraRigSpec = field(default_factory=CameraRigSpec)
    normal_frame: str = "camera"
    layout_version: int = LAYOUT_VERSION

    def __post_init__(self):
        if self.normal_frame not in NORMAL_FRAMES:
            raise BundleError(f"normal_frame must be one of {NORMAL_FRAMES}")
        if self.layout_version != LAYOUT_VERSION:
            raise BundleError(f"unsupported layout_version {self.layout_version}")

    def to_dict(self) -> dict:
        return {
            "layout_version": self.layout_version,
            "caption": self.caption,
            "seed": self.seed,
            "rig": self.rig.to_dict(),
            "normal_frame": self.normal_frame,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BundleMeta":
        return cls(
            caption=str(d.get("caption", "")),
            seed=int(d.get("seed", 0)),
            rig=CameraRigSpec.from_dict(d.get("rig", {})),
            normal_frame=str(d.get("normal_frame", "camera")),
            layout_version=int(d.get("layout_version", LAYOUT_VERSION)),
        )


@dataclass
class BundleImage:
    rgb_tiles: list[ImagePlane]
    normal_tiles: list[ImagePlane]
    masks: list[np.ndarray]  # (S, S) bool per view
    meta: BundleMeta
    sidecar_missing: bool = False

    def __post_init__(self):
        n = len(self.rgb_tiles)
        if not (n == len(self.normal_tiles) == len(self.masks)):
            raise BundleError("tile/mask list lengths differ")
        sizes = {t.width for t in self.rgb_tiles} | {t.height for t in self.rgb_tiles} \
            | {t.width for t in self.normal_tiles} | {t.height for t in self.normal_tiles}
        if len(sizes) > 1:
            raise BundleError("tiles must all be square and equal-sized")
        self.masks = [np.asarray(m, dtype=bool) for m in self.masks]

    @property
    def n_views(self) -> int:
        return len(self.rgb_tiles)

    @property
    def tile_size(self) -> int:
        return self.rgb_tiles[0].width

    def copy(self) -> "BundleImage":
        return BundleImage(
            [ImagePlane.from_array(t.data.copy()) for t in self.rgb_tiles],
            [ImagePlane.from_array(t.data.copy()) for t in self.normal_tiles],
            [m.copy() for m in self.masks],
            self.meta,
            self.sidecar_missing,
        )


def _as_rgba(tile: ImagePlane, mask: np.ndarray) -> np.ndarray:
    out = np.zeros((tile.height, tile.width, 4), dtype=np.uint8)
    out[..., :3] = tile.data[..., :3]
    out[..., 3] = np.where(mask, 255, 0)
    return out


def compose(bundle: BundleImage) -> ImagePlane:
    """Flatten to the on-disk grid: RGB row on top, normal row below, RGBA."""
    s = bundle.tile_size
    n = bundle.n_views
    grid = np.zeros((2 * s, n * s, 4), dtype=np.uint8)
    for k in range(n):
        grid[0:s, k * s:(k + 1) * s] = _as_rgba(bundle.rgb_tiles[k], bundle.masks[k])
        grid[s:2 * s, k * s:(k + 1) * s] = _as_rgba(bundle.normal_tiles[k], bundle.masks[k])
    return ImagePlane.from_array(grid)


def _masks_from_normal_magnitude(normal_rgb: np.ndarray) -> np.ndarray:
    raw = raster.decode_normal_u8(normal_rgb[..., :3], renormalize=False)
    mag = np.linalg.norm(raw, axis=-1)
    return (mag >= MASK_BAND[0]) & (mag <= MASK_BAND[1])


def decompose(flat: ImagePlane, meta: BundleMeta) -> BundleImage:
    """Split a composed grid back into per-view tiles and masks.

    Masks come from the alpha channel when present, otherwise from the
    normal-magnitude band rule (MASK_BAND), applied before re-normalization.
    """
    n = meta.rig.n_views
    if flat.height % 2 or flat.width % n:
        raise BundleError(
            f"bad bundle aspect: {flat.width}x{flat.height} does not split into 2 rows x {n} columns"
        )
    s = flat.height // 2
    if flat.width != n * s:
        raise BundleError(
            f"bad bundle aspect: width {flat.width} != views {n} x tile {s}"
        )
    if meta.rig.image_size != s:
        meta = replace(meta, rig=replace(meta.rig, image_size=s))

    has_alpha = flat.channels == 4
    rgb_tiles, normal_tiles, masks = [], [], []
    for k in range(n):
        rgb = flat.data[0:s, k * s:(k + 1) * s]
        nrm = flat.data[s:2 * s, k * s:(k + 1) * s]
        if has_alpha:
            mask = nrm[..., 3] >= 128
        else:
            mask = _masks_from_normal_magnitude(nrm)
        rgb_tiles.append(ImagePlane.from_array(_as_rgba(ImagePlane.from_array(rgb[..., :3]), mask)))
        normal_tiles.append(ImagePlane.from_array(_as_rgba(ImagePlane.from_array(nrm[..., :3]), mask)))
        masks.append(mask)
    if not any(m.any() for m in masks):
        raise BundleError("all-background bundle: no foreground pixel in any view")
    return BundleImage(rgb_tiles, normal_tiles, masks, meta)


def render_bundle(mesh: TriMesh, spec: CameraRigSpec, threads: int = 1) -> BundleImage:
    """Render one color and one normal tile per rig camera.

    The mesh must already live in the normalized cube (bbox within
    [-1.01, 1.01]^3) and carry vertex normals.
    """
    box = mesh.bounds()
    if box.min.min() < -1.01 or box.max.max() > 1.01:
        raise BundleError(
            f"mesh is not normalized to the unit cube (bbox {box.min.tolist()}..{box.max.tolist()}); "
            "run normalize_to_cube first"
        )
    cameras = build_rig(spec)
    rgb_tiles, normal_tiles, masks = [], [], []
    for cam in cameras:
        normal = raster.render_normal_tile(mesh, cam, spec.image_size, threads=threads)
        color = raster.render_color_tile(mesh, cam, spec.image_size, threads=threads)
        rgb_tiles.append(color)
        normal_tiles.append(normal)
        masks.append(normal.data[..., 3] >= 128)
    return BundleImage(rgb_tiles, normal_tiles, masks, BundleMeta(rig=spec))


def fit_to_tile(image: ImagePlane, tile_size: int) -> ImagePlane:
    """Aspect-preserving nearest-neighbor resize to the tile, padded with white."""
    scale = tile_size / max(image.width, image.height)
    new_w = max(1, int(round(image.width * scale)))
    new_h = max(1, int(round(image.height * scale)))
    src_x = np.minimum((np.arange(new_w) + 0.5) * (image.width / new_w), image.width - 1).astype(int)
    src_y = np.minimum((np.arange(new_h) + 0.5) * (image.height / new_h), image.height - 1).astype(int)
    resized = image.data[src_y[:, None], src_x[None, :]]

    out = np.full((tile_size, tile_size, 4), 255, dtype=np.uint8)
    y0 = (tile_size - new_h) // 2
    x0 = (tile_size - new_w) // 2
    if image.channels == 4:
        out[y0:y0 + new_h, x0:x0 + new_w] = resized
    else:
        out[y0:y0 + new_h, x0:x0 + new_w, :3] = resized
    return ImagePlane.from_array(out)


def replace_front_rgb(bundle: BundleImage, image: ImagePlane) -> BundleImage:
    """Swap the azimuth-0 RGB view for a user image; everything else untouched."""
    out = bundle.copy()
    if image.width == bundle.tile_size and image.height == bundle.tile_size:
        fitted = image if image.channels == 4 else ImagePlane.from_array(
            np.concatenate([image.data, np.full((image.height, image.width, 1), 255, np.uint8)], axis=2)
        )
    else:
        fitted = fit_to_tile(image, bundle.tile_size)
    out.rgb_tiles[0] = ImagePlane.from_array(fitted.data.copy())
    return out


def flatten_over_white(flat: ImagePlane) -> ImagePlane:
    """Composite an RGBA image over white, dropping alpha (the wire format)."""
    if flat.channels == 3:
        return ImagePlane.from_array(flat.data.copy())
    alpha = flat.data[..., 3:4].astype(np.uint16)
    rgb = flat.data[..., :3].astype(np.uint16)
    out = (rgb * alpha + 255 * (255 - alpha) + 127) // 255
    return ImagePlane.from_array(out.astype(np.uint8))


def sidecar_path(path: str) -> str:
    return os.path.splitext(path)[0] + ".meta.json"


def write_bundle(bundle: BundleImage, path: str):
    """Composed RGBA PNG plus the JSON metadata sidecar."""
    compose(bundle).save(path)
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(bundle.meta.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_bundle(path: str) -> BundleImage:
    """Inverse of write_bundle; a missing sidecar yields defaults and a flag."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"bundle not found: {path}")
    flat = ImagePlane.load(path)
    meta_file = sidecar_path(path)
    sidecar_missing = not os.path.exists(meta_file)
    if sidecar_missing:
        meta = BundleMeta()
    else:
        with open(meta_file, "r", encoding="utf-8") as fh:
            meta = BundleMeta.from_dict(json.load(fh))
    out = decompose(flat, meta)
    out.sidecar_missing = sidecar_missing
    return out
