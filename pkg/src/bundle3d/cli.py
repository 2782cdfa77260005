"""Command-line surface: render-bundle, reconstruct, evaluate, pipeline, enhance.

Exit codes: 0 success, 2 bad arguments, 3 I/O error, 4 backend error,
5 reconstruction precondition failure. All file outputs are written via a
temp file + rename so failures never leave truncated artifacts.
"""

from __future__ import annotations

import functools
import glob
import json
import os
import sys

import click

from .bundle import (
    BundleError,
    BundleImage,
    BundleMeta,
    compose,
    decompose,
    flatten_over_white,
    read_bundle,
    render_bundle,
    replace_front_rgb,
    sidecar_path,
    write_bundle,
)
from .camera import CameraError, CameraRigSpec, build_rig
from .client import (
    BackendError,
    ControlSchedule,
    ENHANCE_DEFAULTS,
    GenerationRequest,
    default_endpoint,
    request_generation,
)
from .geometry import MeshError, compute_vertex_normals, normalize_to_cube
from .meshio import load_mesh, save_mesh
from .metrics import MetricsConfig, evaluate_pair
from .raster import ImagePlane
from .recon import ReconConfig, ReconError, reconstruct
from .texturing import TextureConfig, TexturingError, project_colors

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_BACKEND = 4
EXIT_RECON = 5

DEFAULT_CONTROL_STEPS = 30


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except BackendError as exc:
            _fail(EXIT_BACKEND, str(exc))
        except (ReconError, BundleError, TexturingError) as exc:
            _fail(EXIT_RECON, str(exc))
        except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
            _fail(EXIT_IO, str(exc))
        except (MeshError, CameraError, OSError, json.JSONDecodeError) as exc:
            _fail(EXIT_IO, str(exc))
        except ValueError as exc:
            _fail(EXIT_USAGE, str(exc))
    return wrapper


def _atomic_bytes(path: str, data: bytes):
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _atomic_text(path: str, text: str):
    _atomic_bytes(path, text.encode("utf-8"))


def _atomic_glb(mesh, path: str):
    tmp = path + ".tmp"
    save_mesh(mesh, tmp, fmt="glb")
    os.replace(tmp, path)


def _atomic_bundle(bundle: BundleImage, path: str):
    tmp = path + ".tmp"
    write_bundle(bundle, tmp)
    os.replace(tmp, path)
    os.replace(sidecar_path(tmp), sidecar_path(path))


def _parse_rig(rig_json: str | None) -> CameraRigSpec:
    if not rig_json:
        return CameraRigSpec()
    return CameraRigSpec.from_dict(json.loads(rig_json))


def _parse_control(value: str) -> ControlSchedule:
    parts = value.split(":")
    if len(parts) != 3:
        raise click.BadParameter(f"control must be type:lambda1:lambda2, got {value!r}")
    ctype, l1, l2 = parts
    try:
        return ControlSchedule(lambda1=float(l1), lambda2=float(l2),
                               total_steps=DEFAULT_CONTROL_STEPS, control_type=ctype)
    except ValueError as exc:
        raise click.BadParameter(str(exc))


def _parse_init(value: str):
    if value == "sphere":
        return "sphere", None
    if value.startswith("coarse:"):
        path = value.split(":", 1)[1]
        if not path:
            raise click.BadParameter("coarse init needs a path: --init coarse:PATH")
        return "coarse", path
    raise click.BadParameter(f"--init must be 'sphere' or 'coarse:PATH', got {value!r}")


def _load_normalized_mesh(path: str):
    mesh = load_mesh(path)
    mesh, _ = normalize_to_cube(mesh)
    return compute_vertex_normals(mesh)


def _reconstruct_textured(bundle: BundleImage, config: ReconConfig,
                          texture_edge: float | None, threads: int):
    mesh, trace = reconstruct(bundle, config, threads=threads)
    tex_cfg = TextureConfig(pre_subdivide_to_edge_length=texture_edge)
    mesh = project_colors(mesh, bundle, bundle.meta.rig, tex_cfg, threads=threads)
    return mesh, trace


@click.group()
@click.version_option(package_name="bundle3d")
def main():
    """Tiled multi-view bundle images and the mesh pipeline built on them."""


@main.command("render-bundle")
@click.option("--mesh", "mesh_path", required=True, help="Input mesh (.obj or .glb).")
@click.option("--out", "out_path", required=True, help="Output bundle PNG path.")
@click.option("--rig", "rig_json", default=None, help="Camera rig spec as inline JSON.")
@click.option("--threads", default=1, show_default=True, help="Worker threads.")
@_exit_codes
def cmd_render_bundle(mesh_path, out_path, rig_json, threads):
    """Normalize a mesh and render it into a bundle image with sidecar metadata."""
    spec = _parse_rig(rig_json)
    mesh = _load_normalized_mesh(mesh_path)
    bundle = render_bundle(mesh, spec, threads=threads)
    _atomic_bundle(bundle, out_path)
    click.echo(f"wrote {out_path} ({spec.n_views} views, tile {spec.image_size})")


@main.command("reconstruct")
@click.option("--bundle", "bundle_path", required=True, help="Input bundle PNG.")
@click.option("--out", "out_path", required=True, help="Output textured mesh (.glb).")
@click.option("--steps", default=50, show_default=True, help="Refinement steps.")
@click.option("--init", "init_spec", default="sphere", show_default=True,
              help="Mesh init: 'sphere' or 'coarse:PATH'.")
@click.option("--trace", "trace_path", default=None, help="Write checkpoint trace JSONL here.")
@click.option("--edge-length", default=0.02, show_default=True, help="Remesh target edge length.")
@click.option("--texture-edge-length", default=None, type=float,
              help="Pre-subdivision edge length for texturing (default: same as --edge-length).")
@click.option("--threads", default=1, show_default=True)
@_exit_codes
def cmd_reconstruct(bundle_path, out_path, steps, init_spec, trace_path,
                    edge_length, texture_edge_length, threads):
    """Reconstruct a textured mesh from a bundle image."""
    init, coarse_path = _parse_init(init_spec)
    bundle = read_bundle(bundle_path)
    config = ReconConfig(steps=steps, init=init, coarse_path=coarse_path,
                         target_edge_length=edge_length)
    texture_edge = texture_edge_length if texture_edge_length is not None else edge_length
    mesh, trace = _reconstruct_textured(bundle, config, texture_edge, threads)
    _atomic_glb(mesh, out_path)
    if trace_path:
        _atomic_text(trace_path, trace.to_jsonl())
    final = trace.records[-1]
    click.echo(
        f"wrote {out_path}: {mesh.n_vertices} vertices, "
        f"residual {final.mean_normal_residual_deg:.2f} deg after {final.step} steps"
    )


@main.command("evaluate")
@click.option("--gen", "gen_path", required=True, help="Generated mesh (.obj/.glb).")
@click.option("--gt", "gt_path", required=True, help="Ground-truth mesh (.obj/.glb).")
@click.option("--views", "views_dir", default=None,
              help="Directory with rig.json and view_*.png ground-truth renders.")
@click.option("--report", "report_path", required=True, help="Output JSON report path.")
@click.option("--samples", default=16384, show_default=True, help="Surface sample count.")
@click.option("--seed", default=0, show_default=True, help="Sampling seed.")
@click.option("--threads", default=1, show_default=True)
@_exit_codes
def cmd_evaluate(gen_path, gt_path, views_dir, report_path, samples, seed, threads):
    """Compare meshes with the CD/FS (and optional PSNR/SSIM) protocol."""
    gen = load_mesh(gen_path)
    gt = load_mesh(gt_path)
    gt_views = None
    if views_dir:
        rig_file = os.path.join(views_dir, "rig.json")
        with open(rig_file, "r", encoding="utf-8") as fh:
            spec = CameraRigSpec.from_dict(json.load(fh))
        image_paths = sorted(glob.glob(os.path.join(views_dir, "view_*.png")))
        if not image_paths:
            raise FileNotFoundError(f"no view_*.png files in {views_dir}")
        images = [ImagePlane.load(p) for p in image_paths]
        cameras = build_rig(spec)
        if len(images) != len(cameras):
            raise ValueError(
                f"{len(images)} view images but rig has {len(cameras)} cameras"
            )
        gt_views = (images, cameras)
    config = MetricsConfig(sample_count=samples, sampling_seed=seed)
    report = evaluate_pair(gen, gt, gt_views=gt_views, config=config, workers=threads,
                           generated_id=os.path.basename(gen_path),
                           gt_id=os.path.basename(gt_path))
    _atomic_text(report_path, report.to_json() + "\n")
    psnr_s = "n/a" if report.psnr_mean is None else f"{report.psnr_mean:.3f}"
    ssim_s = "n/a" if report.ssim_mean is None else f"{report.ssim_mean:.4f}"
    click.echo(f"cd={report.cd:.6f} fs={report.fs:.4f} psnr={psnr_s} ssim={ssim_s}")


def _bundle_png_for_service(bundle: BundleImage) -> bytes:
    return flatten_over_white(compose(bundle)).to_png_bytes()


@main.command("pipeline")
@click.option("--prompt", default=None, help="Text prompt (text-to-3D mode).")
@click.option("--image", "image_path", default=None, help="Input image (image-to-3D mode).")
@click.option("--endpoint", default=None, help="Backend URL (default: $BUNDLE_BACKEND_URL).")
@click.option("--out", "out_path", required=True, help="Output textured mesh (.glb).")
@click.option("--seed", default=0, show_default=True)
@click.option("--control", "controls", multiple=True,
              help="ControlNet schedule type:lambda1:lambda2 (repeatable).")
@click.option("--coarse-mesh", "coarse_path", default=None,
              help="Coarse mesh stand-in, required in image mode.")
@click.option("--caption", default="", help="Caption override for image mode.")
@click.option("--rig", "rig_json", default=None, help="Rig spec JSON for image mode rendering.")
@click.option("--steps", default=50, show_default=True, help="Reconstruction steps.")
@click.option("--edge-length", default=0.02, show_default=True)
@click.option("--timeout", default=60.0, show_default=True, help="Backend timeout (s).")
@click.option("--threads", default=1, show_default=True)
@_exit_codes
def cmd_pipeline(prompt, image_path, endpoint, out_path, seed, controls, coarse_path,
                 caption, rig_json, steps, edge_length, timeout, threads):
    """Full generation: backend bundle image -> reconstruction -> textured .glb."""
    if (prompt is None) == (image_path is None):
        raise click.UsageError("exactly one of --prompt or --image is required")
    endpoint = endpoint or default_endpoint()
    if not endpoint:
        raise click.UsageError("no endpoint: pass --endpoint or set BUNDLE_BACKEND_URL")
    schedules = [_parse_control(c) for c in controls]

    if prompt is not None:
        req = GenerationRequest(mode="generate", caption=prompt, seed=seed,
                                controls=schedules)
        png = request_generation(endpoint, req, timeout=timeout)
        bundle = decompose(ImagePlane.from_png_bytes(png),
                           BundleMeta(caption=prompt, seed=seed))
        config = ReconConfig(steps=steps, init="sphere", target_edge_length=edge_length)
    else:
        if not coarse_path:
            raise click.UsageError("--image mode requires --coarse-mesh PATH")
        if not schedules:
            schedules = [ControlSchedule(*ENHANCE_DEFAULTS, DEFAULT_CONTROL_STEPS, "tile")]
        spec = _parse_rig(rig_json)
        coarse = _load_normalized_mesh(coarse_path)
        rendered = render_bundle(coarse, spec, threads=threads)
        rendered = replace_front_rgb(rendered, ImagePlane.load(image_path))
        req = GenerationRequest(mode="enhance", caption=caption, seed=seed,
                                bundle_png=_bundle_png_for_service(rendered),
                                controls=schedules)
        png = request_generation(endpoint, req, timeout=timeout)
        bundle = decompose(ImagePlane.from_png_bytes(png),
                           BundleMeta(caption=caption, seed=seed, rig=spec))
        config = ReconConfig(steps=steps, init="coarse", coarse_path=coarse_path,
                             target_edge_length=edge_length)

    mesh, _ = _reconstruct_textured(bundle, config, edge_length, threads)
    _atomic_glb(mesh, out_path)
    click.echo(f"wrote {out_path}: {mesh.n_vertices} vertices")


@main.command("enhance")
@click.option("--mesh", "mesh_path", required=True, help="Input mesh to enhance.")
@click.option("--caption", required=True, help="Caption describing the object.")
@click.option("--endpoint", default=None, help="Backend URL (default: $BUNDLE_BACKEND_URL).")
@click.option("--out", "out_path", required=True, help="Output textured mesh (.glb).")
@click.option("--control", "controls", multiple=True,
              help="ControlNet schedule type:lambda1:lambda2 (repeatable).")
@click.option("--seed", default=0, show_default=True)
@click.option("--rig", "rig_json", default=None, help="Rig spec JSON.")
@click.option("--steps", default=50, show_default=True)
@click.option("--edge-length", default=0.02, show_default=True)
@click.option("--timeout", default=60.0, show_default=True)
@click.option("--threads", default=1, show_default=True)
@_exit_codes
def cmd_enhance(mesh_path, caption, endpoint, out_path, controls, seed, rig_json,
                steps, edge_length, timeout, threads):
    """Round-trip an existing mesh through the backend's enhance endpoint."""
    endpoint = endpoint or default_endpoint()
    if not endpoint:
        raise click.UsageError("no endpoint: pass --endpoint or set BUNDLE_BACKEND_URL")
    schedules = [_parse_control(c) for c in controls]
    if not schedules:
        schedules = [ControlSchedule(*ENHANCE_DEFAULTS, DEFAULT_CONTROL_STEPS, "tile")]
    spec = _parse_rig(rig_json)
    mesh = _load_normalized_mesh(mesh_path)
    rendered = render_bundle(mesh, spec, threads=threads)
    req = GenerationRequest(mode="enhance", caption=caption, seed=seed,
                            bundle_png=_bundle_png_for_service(rendered),
                            controls=schedules)
    png = request_generation(endpoint, req, timeout=timeout)
    bundle = decompose(ImagePlane.from_png_bytes(png),
                       BundleMeta(caption=caption, seed=seed, rig=spec))
    config = ReconConfig(steps=steps, init="coarse", coarse_path=mesh_path,
                         target_edge_length=edge_length)
    out_mesh, _ = _reconstruct_textured(bundle, config, edge_length, threads)
    _atomic_glb(out_mesh, out_path)
    click.echo(f"wrote {out_path}: {out_mesh.n_vertices} vertices")


if __name__ == "__main__":
    main()
