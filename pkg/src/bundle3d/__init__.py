"""Tiled multi-view RGB+normal bundle images and the 3D pipeline around them:
rendering, normal-guided mesh reconstruction, texture projection, evaluation,
and a client for an external bundle-image diffusion backend.
"""

from .bundle import (
    BundleError,
    BundleImage,
    BundleMeta,
    compose,
    decompose,
    read_bundle,
    render_bundle,
    replace_front_rgb,
    write_bundle,
)
from .camera import Camera, CameraError, CameraRigSpec, build_rig, project, to_camera_normal
from .client import (
    BackendError,
    ControlSchedule,
    GenerationRequest,
    active_steps,
    combine_features,
    request_generation,
)
from .geometry import (
    Aabb,
    MeshError,
    TriMesh,
    compute_vertex_normals,
    laplacian_smooth,
    make_icosphere,
    normalize_to_cube,
    remesh,
)
from .meshio import load_mesh, save_mesh
from .metrics import (
    MetricsConfig,
    MetricsReport,
    chamfer,
    evaluate_pair,
    fscore,
    psnr,
    sample_surface,
    ssim,
)
from .raster import (
    GBuffer,
    ImagePlane,
    active_backend,
    available_backends,
    decode_normal_u8,
    encode_normal_u8,
    rasterize,
    render_color_tile,
    render_normal_tile,
    vertex_visibility,
)
from .recon import ReconConfig, ReconError, RefineTrace, init_mesh, reconstruct, refine_step
from .stub_server import StubServer
from .texturing import TextureConfig, bake_and_export, project_colors

__version__ = "0.1.0"

__all__ = [
    "Aabb", "BackendError", "BundleError", "BundleImage", "BundleMeta",
    "Camera", "CameraError", "CameraRigSpec", "ControlSchedule", "GBuffer",
    "GenerationRequest", "ImagePlane", "MeshError", "MetricsConfig",
    "MetricsReport", "ReconConfig", "ReconError", "RefineTrace", "StubServer",
    "TextureConfig", "TriMesh", "active_backend", "active_steps",
    "available_backends", "bake_and_export", "build_rig", "chamfer",
    "combine_features", "compose", "compute_vertex_normals", "decode_normal_u8",
    "decompose", "encode_normal_u8", "evaluate_pair", "fscore", "init_mesh",
    "laplacian_smooth", "load_mesh", "make_icosphere", "normalize_to_cube",
    "project", "project_colors", "psnr", "rasterize", "read_bundle",
    "reconstruct", "refine_step", "remesh", "render_bundle",
    "render_color_tile", "render_normal_tile", "replace_front_rgb",
    "request_generation", "sample_surface", "save_mesh", "ssim",
    "to_camera_normal", "vertex_visibility", "write_bundle",
]
