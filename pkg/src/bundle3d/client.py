"""HTTP/JSON client for an external bundle-image diffusion backend.

Wire protocol: POST /generate or /enhance with a JSON body
{mode, caption, seed, bundle_png? (base64), controls: [{type, lambda1,
lambda2, total_steps}]}; the response is an image/png bundle. The default
endpoint comes from the BUNDLE_BACKEND_URL environment variable.
"""

from __future__ import annotations

import base64
import math
import os
from dataclasses import dataclass, field

import numpy as np
import requests

from .bundle import BundleError, BundleMeta, decompose
from .raster import ImagePlane

CONTROL_TYPES = ("tile", "normal", "canny")

# Schedule defaults per task (strength, active fraction).
ENHANCE_DEFAULTS = (0.6, 0.3)
EDIT_DEFAULTS = (0.3, 0.5)

# Ranges that empirically behave well; documented, not enforced.
RECOMMENDED_LAMBDA1 = (0.05, 0.8)
RECOMMENDED_LAMBDA2 = (0.1, 0.7)

ENV_ENDPOINT = "BUNDLE_BACKEND_URL"

_FLOOR_GUARD = 1e-9


class BackendError(Exception):
    """Backend unreachable, timed out, non-200, or returned an undecodable bundle."""

    def __init__(self, message: str, status: int | None = None, body_excerpt: str = ""):
        super().__init__(message)
        self.status = status
        self.body_excerpt = body_excerpt


@dataclass(frozen=True)
class ControlSchedule:
    lambda1: float
    lambda2: float
    total_steps: int
    control_type: str = "tile"

    def __post_init__(self):
        if not 0.0 <= self.lambda1 <= 1.0:
            raise ValueError("lambda1 must be in [0, 1]")
        if not 0.0 <= self.lambda2 <= 1.0:
            raise ValueError("lambda2 must be in [0, 1]")
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        if self.control_type not in CONTROL_TYPES:
            raise ValueError(f"control_type must be one of {CONTROL_TYPES}")

    def to_dict(self) -> dict:
        return {
            "type": self.control_type,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "total_steps": self.total_steps,
        }


@dataclass
class GenerationRequest:
    mode: str  # "generate" or "enhance"
    caption: str = ""
    seed: int = 0
    bundle_png: bytes | None = None
    controls: list[ControlSchedule] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("generate", "enhance"):
            raise ValueError("mode must be 'generate' or 'enhance'")
        if self.mode == "enhance" and not self.bundle_png:
            raise ValueError("enhance mode requires bundle_png")

    def to_json_dict(self) -> dict:
        body = {
            "mode": self.mode,
            "caption": self.caption,
            "seed": self.seed,
            "controls": [c.to_dict() for c in self.controls],
        }
        if self.bundle_png is not None:
            body["bundle_png"] = base64.b64encode(self.bundle_png).decode("ascii")
        return body


def active_steps(schedule: ControlSchedule) -> set[int]:
    """Diffusion steps at which the control branch is applied: {0..floor(l2*T)}.

    lambda2 = 0 means "never" (an off switch) rather than the literal step 0.
    """
    if schedule.lambda2 == 0.0:
        return set()
    last = int(math.floor(schedule.lambda2 * schedule.total_steps + _FLOOR_GUARD))
    return set(range(0, last + 1))


def combine_features(base: np.ndarray, control: np.ndarray, lambda1: float) -> np.ndarray:
    """y = base + lambda1 * control, elementwise."""
    base = np.asarray(base)
    control = np.asarray(control)
    if base.shape != control.shape:
        raise ValueError(f"shape mismatch: {base.shape} vs {control.shape}")
    if lambda1 == 0.0:
        return base.copy()
    return base + lambda1 * control


def default_endpoint() -> str | None:
    return os.environ.get(ENV_ENDPOINT)


def request_generation(endpoint: str, req: GenerationRequest, timeout: float = 60.0,
                       meta: BundleMeta | None = None) -> bytes:
    """POST the request and return validated bundle PNG bytes.

    The response must decode as a PNG and decompose under the given (or
    default) metadata; anything else raises BackendError.
    """
    url = endpoint.rstrip("/") + "/" + req.mode
    try:
        resp = requests.post(url, json=req.to_json_dict(), timeout=timeout)
    except requests.exceptions.Timeout as exc:
        raise BackendError(f"backend timed out after {timeout}s: {url}") from exc
    except requests.exceptions.RequestException as exc:
        raise BackendError(f"backend unreachable: {url}: {exc}") from exc
    if resp.status_code != 200:
        excerpt = resp.text[:200]
        raise BackendError(
            f"backend returned HTTP {resp.status_code} for {url}: {excerpt}",
            status=resp.status_code, body_excerpt=excerpt,
        )
    payload = resp.content
    try:
        flat = ImagePlane.from_png_bytes(payload)
        decompose(flat, meta or BundleMeta())
    except Exception as exc:
        raise BackendError(f"backend returned an undecodable bundle: {exc}") from exc
    return payload
