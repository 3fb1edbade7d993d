"""G-buffer data model, pinhole camera math, and depth-derived normals.

View space is right-handed with +z into the screen and y down (matching
image rows). Surface normals are unit length and face the camera:
n . ray < 0 for the unprojected pixel ray.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import BehindCameraError, InvariantError, PreconditionError
from .sampling import normalize


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: focal lengths, principal point, image size, clip range."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    z_near: float
    z_far: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise PreconditionError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise PreconditionError("principal point must lie inside the image")
        if not (self.z_near > 0 and self.z_far > self.z_near):
            raise PreconditionError("require 0 < z_near < z_far")

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float = 60.0,
                 z_near: float = 0.1, z_far: float = 10.0) -> "CameraIntrinsics":
        """Square-pixel intrinsics from a horizontal field of view."""
        f = 0.5 * width / np.tan(0.5 * np.radians(fov_deg))
        return cls(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0,
                   width=width, height=height, z_near=z_near, z_far=z_far)


@dataclass(frozen=True)
class ViewPose:
    """Rigid view-from-world transform: p_view = rotation @ p_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-6 or np.linalg.det(r) < 0:
            raise PreconditionError("rotation must be orthonormal with det +1")

    @classmethod
    def identity(cls) -> "ViewPose":
        return cls(np.eye(3), np.zeros(3))

    @property
    def camera_center(self) -> np.ndarray:
        """World-space camera position."""
        return -self.rotation.T @ self.translation

    def to_world(self, p_view: np.ndarray) -> np.ndarray:
        return (np.asarray(p_view) - self.translation) @ self.rotation

    def to_view(self, p_world: np.ndarray) -> np.ndarray:
        return np.asarray(p_world) @ self.rotation.T + self.translation


def unproject(u, v, z, intr: CameraIntrinsics, validate: bool = True) -> np.ndarray:
    """Pixel (u, v) at view-space depth z -> view-space point.

    (x, y, z) = (z (u - cx) / fx, z (v - cy) / fy, z).
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if validate:
        if np.any(z <= intr.z_near) or np.any(z >= intr.z_far):
            raise PreconditionError("depth outside (z_near, z_far)")
        if np.any(u < 0) or np.any(u >= intr.width) or np.any(v < 0) or np.any(v >= intr.height):
            raise PreconditionError("pixel outside the image")
    x = z * (u - intr.cx) / intr.fx
    y = z * (v - intr.cy) / intr.fy
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def project(p, intr: CameraIntrinsics, validate: bool = True):
    """View-space point -> (u, v, z). May land outside the image; caller checks."""
    p = np.asarray(p, dtype=np.float64)
    z = p[..., 2]
    if validate and np.any(z <= 0):
        raise BehindCameraError("point has non-positive view-space depth")
    u = intr.fx * p[..., 0] / z + intr.cx
    v = intr.fy * p[..., 1] / z + intr.cy
    return u, v, z


def pixel_rays(intr: CameraIntrinsics) -> np.ndarray:
    """Unit view-space directions through every pixel center, shape (H, W, 3)."""
    u, v = np.meshgrid(np.arange(intr.width, dtype=np.float64),
                       np.arange(intr.height, dtype=np.float64), indexing="xy")
    d = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)
    return normalize(d)


@dataclass
class GBuffer:
    """Per-pixel geometry and material maps plus the camera that produced them."""

    depth: np.ndarray      # (H, W) view-space z
    normal: np.ndarray     # (H, W, 3) unit, view space, facing the camera
    albedo: np.ndarray     # (H, W, 3) in [0, 1]
    roughness: np.ndarray  # (H, W) in [0, 1]
    metallic: np.ndarray   # (H, W) in [0, 1]
    mask: np.ndarray       # (H, W) bool coverage
    intrinsics: CameraIntrinsics

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    def validate(self) -> None:
        h, w = self.intrinsics.height, self.intrinsics.width
        maps = [self.depth, self.normal[..., 0], self.albedo[..., 0],
                self.roughness, self.metallic, self.mask]
        if any(m.shape != (h, w) for m in maps):
            raise InvariantError("map dimensions do not match the intrinsics")
        m = self.mask
        if m.any():
            d = self.depth[m]
            if np.any(d <= self.intrinsics.z_near) or np.any(d >= self.intrinsics.z_far):
                raise InvariantError("masked depth outside (z_near, z_far)")
            nn = np.linalg.norm(self.normal[m], axis=-1)
            if np.any(np.abs(nn - 1.0) > 1e-5):
                raise InvariantError("masked normals are not unit length")
        for name, ch in (("albedo", self.albedo), ("roughness", self.roughness),
                         ("metallic", self.metallic)):
            vals = ch[m] if m.any() else ch[:0]
            if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
                raise InvariantError(f"{name} outside [0, 1]")

    def with_materials(self, albedo=None, roughness=None, metallic=None) -> "GBuffer":
        return replace(
            self,
            albedo=self.albedo if albedo is None else np.asarray(albedo, dtype=np.float64),
            roughness=self.roughness if roughness is None else np.asarray(roughness, dtype=np.float64),
            metallic=self.metallic if metallic is None else np.asarray(metallic, dtype=np.float64),
        )

    def view_positions(self) -> np.ndarray:
        """(H, W, 3) view-space surface points (garbage outside the mask)."""
        intr = self.intrinsics
        u, v = np.meshgrid(np.arange(intr.width, dtype=np.float64),
                           np.arange(intr.height, dtype=np.float64), indexing="xy")
        z = np.where(self.mask, self.depth, 1.0)
        return unproject(u, v, z, intr, validate=False)


# Circular order of the 8 window neighbours as (du, dv) with v down.
_NEIGHBOR_OFFSETS = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def pseudo_normal(depth: np.ndarray, intr: CameraIntrinsics,
                  mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Derive normals from a depth map via its local 3x3 windows.

    Each interior pixel unprojects its 3x3 depth window, forms the 8
    tangent vectors from the center to the neighbours, averages the cross
    products of consecutive tangent pairs, and orients the result toward
    the camera. Border and mask-adjacent pixels copy the nearest interior
    normal. Returns (normals (H, W, 3), degenerate (H, W) bool); degenerate
    windows (all 9 points collinear) emit (0, 0, -1) and set the flag.
    """
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    mask = np.asarray(mask, dtype=bool)

    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64),
                       indexing="xy")
    z = np.where(mask & np.isfinite(depth), depth, 1.0)
    pts = unproject(u, v, z, intr, validate=False)

    def shifted(arr, du, dv):
        return arr[1 + dv:h - 1 + dv, 1 + du:w - 1 + du]

    center = pts[1:-1, 1:-1]
    tangents = [shifted(pts, du, dv) - center for du, dv in _NEIGHBOR_OFFSETS]

    nsum = np.zeros_like(center)
    mag_sum = np.zeros(center.shape[:2])
    scale_sum = np.zeros(center.shape[:2])
    for k in range(8):
        ta, tb = tangents[k], tangents[(k + 1) % 8]
        c = np.cross(ta, tb)
        nsum += c
        mag_sum += np.linalg.norm(c, axis=-1)
        scale_sum += np.linalg.norm(ta, axis=-1) * np.linalg.norm(tb, axis=-1)

    degenerate_int = mag_sum <= 1e-9 * np.maximum(scale_sum, 1e-300)

    with np.errstate(invalid="ignore", divide="ignore"):
        n_int = nsum / np.maximum(np.linalg.norm(nsum, axis=-1, keepdims=True), 1e-300)
    # orient toward the camera: n . ray < 0
    ray = normalize(unproject(u, v, np.ones_like(z), intr, validate=False))[1:-1, 1:-1]
    flip = np.sum(n_int * ray, axis=-1) > 0
    n_int = np.where(flip[..., None], -n_int, n_int)
    n_int[degenerate_int] = (0.0, 0.0, -1.0)

    # interior = masked pixel whose full 3x3 window is masked and in-bounds
    win_ok = mask[1:-1, 1:-1].copy()
    for du, dv in _NEIGHBOR_OFFSETS:
        win_ok &= shifted(mask, du, dv)

    normals = np.zeros((h, w, 3))
    normals[..., 2] = -1.0
    degenerate = np.zeros((h, w), dtype=bool)
    interior = np.zeros((h, w), dtype=bool)
    interior[1:-1, 1:-1] = win_ok
    normals[1:-1, 1:-1][win_ok] = n_int[win_ok]
    degenerate[1:-1, 1:-1] = win_ok & degenerate_int

    if interior.any():
        # copy the nearest interior normal into every non-interior pixel
        _, idx = ndimage.distance_transform_edt(~interior, return_indices=True)
        fill = ~interior
        normals[fill] = normals[idx[0][fill], idx[1][fill]]
    else:
        degenerate |= mask
    return normals, degenerate
