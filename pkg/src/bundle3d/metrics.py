"""Geometry and image evaluation: surface sampling, CD, F-Score, PSNR, SSIM.

Chamfer distance is the sum of the two directed mean nearest-neighbor
Euclidean distances (unsquared); the variant tag is echoed in every report.
Meshes are aligned by independent normalization into [-1, 1]^3 only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d
from scipy.spatial import cKDTree

from .camera import Camera
from .geometry import MeshError, TriMesh, normalize_to_cube
from .raster import ImagePlane, render_color_tile

CD_VARIANT = "sum-of-means-L2"


@dataclass(frozen=True)
class MetricsConfig:
    sample_count: int = 16384
    fs_threshold: float = 0.1
    sampling_seed: int = 0
    psnr_cap: float = 99.0

    def __post_init__(self):
        if self.sample_count <= 0:
            raise ValueError("sample_count must be positive")
        if self.fs_threshold <= 0:
            raise ValueError("fs_threshold must be positive")

    def to_dict(self) -> dict:
        return {
            "sample_count": self.sample_count,
            "fs_threshold": self.fs_threshold,
            "sampling_seed": self.sampling_seed,
            "psnr_cap": self.psnr_cap,
        }


@dataclass
class MetricsReport:
    cd: float
    fs: float
    psnr_mean: float | None
    ssim_mean: float | None
    psnr_per_view: list[float] = field(default_factory=list)
    ssim_per_view: list[float] = field(default_factory=list)
    config: MetricsConfig = field(default_factory=MetricsConfig)
    generated_id: str = ""
    gt_id: str = ""

    def to_dict(self) -> dict:
        return {
            "cd": self.cd,
            "fs": self.fs,
            "psnr": {"mean": self.psnr_mean, "per_view": self.psnr_per_view},
            "ssim": {"mean": self.ssim_mean, "per_view": self.ssim_per_view},
            "config": self.config.to_dict(),
            "variant": CD_VARIANT,
            "generated": self.generated_id,
            "gt": self.gt_id,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def sample_surface(mesh: TriMesh, n: int, seed: int) -> np.ndarray:
    """Area-weighted uniform surface samples, deterministic per seed."""
    if n <= 0:
        raise ValueError("sample count must be positive")
    p = mesh.positions
    f = mesh.faces
    if not len(f):
        raise MeshError("cannot sample an empty mesh")
    cross = np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    total = areas.sum()
    if total <= 0:
        raise MeshError("cannot sample a zero-area mesh")
    rng = np.random.default_rng(seed)
    tri = rng.choice(len(f), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    a, b, c = p[f[tri, 0]], p[f[tri, 1]], p[f[tri, 2]]
    return a + u[:, None] * (b - a) + v[:, None] * (c - a)


def _nearest_distances(queries: np.ndarray, targets: np.ndarray, workers: int) -> np.ndarray:
    dists, _ = cKDTree(targets).query(queries, k=1, workers=workers)
    return dists


def chamfer(a: np.ndarray, b: np.ndarray, workers: int = 1) -> float:
    """Sum of the two directed mean nearest-neighbor distances."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if not len(a) or not len(b):
        raise ValueError("point sets must be non-empty")
    return float(_nearest_distances(a, b, workers).mean() + _nearest_distances(b, a, workers).mean())


def fscore(a: np.ndarray, b: np.ndarray, threshold: float, workers: int = 1) -> float:
    """Harmonic mean of precision/recall at the distance threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if not len(a) or not len(b):
        raise ValueError("point sets must be non-empty")
    precision = float((_nearest_distances(a, b, workers) <= threshold).mean())
    recall = float((_nearest_distances(b, a, workers) <= threshold).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _to_unit_float(img: ImagePlane | np.ndarray) -> np.ndarray:
    data = img.data if isinstance(img, ImagePlane) else np.asarray(img)
    return data[..., :3].astype(np.float64) / 255.0


def psnr(img_a, img_b, cap: float = 99.0) -> float:
    """Peak signal-to-noise ratio in dB on the [0, 1] scale, capped for identical images."""
    a = _to_unit_float(img_a)
    b = _to_unit_float(img_b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float(cap)
    return float(min(cap, -10.0 * np.log10(mse)))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(img_a, img_b, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5) on Rec.601 luma."""
    a = _to_unit_float(img_a)
    b = _to_unit_float(img_b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    luma = np.array([0.299, 0.587, 0.114])
    x = a @ luma
    y = b @ luma
    if min(x.shape) < 11:
        raise ValueError("images must be at least 11x11 for SSIM")
    w = _gaussian_window()
    mu_x = convolve2d(x, w, mode="valid")
    mu_y = convolve2d(y, w, mode="valid")
    sxx = convolve2d(x * x, w, mode="valid") - mu_x ** 2
    syy = convolve2d(y * y, w, mode="valid") - mu_y ** 2
    sxy = convolve2d(x * y, w, mode="valid") - mu_x * mu_y
    c1 = k1 ** 2
    c2 = k2 ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def _composite_white(img: ImagePlane) -> np.ndarray:
    if img.channels == 3:
        return img.data.copy()
    alpha = img.data[..., 3:4].astype(np.uint16)
    rgb = img.data[..., :3].astype(np.uint16)
    return ((rgb * alpha + 255 * (255 - alpha) + 127) // 255).astype(np.uint8)


def evaluate_pair(generated: TriMesh, gt: TriMesh,
                  gt_views: tuple[list[ImagePlane], list[Camera]] | None = None,
                  config: MetricsConfig | None = None,
                  workers: int = 1,
                  generated_id: str = "", gt_id: str = "") -> MetricsReport:
    """Full protocol: normalize both meshes, CD/FS on sampled surfaces, and
    optionally PSNR/SSIM of the generated mesh rendered from the ground-truth
    view cameras (white background on both sides)."""
    config = config or MetricsConfig()
    gen_norm, _ = normalize_to_cube(generated)
    gt_norm, _ = normalize_to_cube(gt)
    samples_gen = sample_surface(gen_norm, config.sample_count, config.sampling_seed)
    samples_gt = sample_surface(gt_norm, config.sample_count, config.sampling_seed)
    cd = chamfer(samples_gen, samples_gt, workers=workers)
    fs = fscore(samples_gen, samples_gt, config.fs_threshold, workers=workers)

    psnr_per_view: list[float] = []
    ssim_per_view: list[float] = []
    psnr_mean = ssim_mean = None
    if gt_views is not None:
        images, cameras = gt_views
        if len(images) != len(cameras):
            raise ValueError("gt_views images and cameras must pair up")
        for img, cam in zip(images, cameras):
            rendered = render_color_tile(gen_norm, cam, img.height, threads=workers)
            a = _composite_white(rendered)
            b = _composite_white(img)
            psnr_per_view.append(psnr(a, b, cap=config.psnr_cap))
            ssim_per_view.append(ssim(a, b))
        psnr_mean = float(np.mean(psnr_per_view))
        ssim_mean = float(np.mean(ssim_per_view))

    return MetricsReport(cd=cd, fs=fs, psnr_mean=psnr_mean, ssim_mean=ssim_mean,
                         psnr_per_view=psnr_per_view, ssim_per_view=ssim_per_view,
                         config=config, generated_id=generated_id, gt_id=gt_id)
