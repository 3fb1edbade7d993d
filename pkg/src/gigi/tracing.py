"""Screen-space adaptive ray marching against the depth buffer: visibility,
ambient occlusion, and one-bounce indirect light gathered from a
previously rendered direct-lighting image.

Occlusion uses the self-normalized estimator O = 1 - sum(V w) / sum(w)
over a deterministic hemisphere sample set; the indirect gather reuses the
same directions, hits and weights in a single marching pass.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, PreconditionError
from .gbuffer import CameraIntrinsics, GBuffer, unproject
from .sampling import fibonacci_hemisphere, normalize, orthonormal_basis, stratified_hemisphere

SELF_HIT_OFFSET = 1e-3  # along the surface normal, in scene units


@dataclass(frozen=True)
class TracingConfig:
    """Ray-marching parameters: base step, step count, surface thickness,
    and the hemisphere sampler."""

    t0: float
    delta: float
    max_steps: int = 32
    sampler: str = "fibonacci"  # "fibonacci" | "stratified"
    ns: int = 64
    n1: int | None = None
    n2: int | None = None

    def __post_init__(self):
        if self.t0 <= 0 or self.delta <= 0 or self.max_steps < 1:
            raise ConfigurationError("require t0 > 0, delta > 0, max_steps >= 1")
        if self.sampler not in ("fibonacci", "stratified"):
            raise ConfigurationError(f"unknown sampler {self.sampler!r}")
        if self.sampler == "stratified":
            n1, n2 = self.n1, self.n2
            if n1 is None or n2 is None:
                # phi spans 2 pi versus pi/2 for theta: keep strata square-ish
                n2 = max(1, int(round(np.sqrt(self.ns / 4))))
                n1 = self.ns // n2
                object.__setattr__(self, "n1", n1)
                object.__setattr__(self, "n2", n2)
            if self.n1 * self.n2 != self.ns:
                raise ConfigurationError("stratified sampler requires ns == n1 * n2")

    @classmethod
    def defaults(cls, intr: CameraIntrinsics, ns: int = 64,
                 sampler: str = "fibonacci", **kw) -> "TracingConfig":
        t0 = 0.02 * (intr.z_far - intr.z_near)
        return cls(t0=t0, delta=4.0 * t0, ns=ns, sampler=sampler, **kw)

    def local_samples(self) -> tuple[np.ndarray, np.ndarray]:
        """Hemisphere directions around +z and their quadrature weights."""
        if self.sampler == "fibonacci":
            return fibonacci_hemisphere(self.ns)
        return stratified_hemisphere(self.n1, self.n2)


@dataclass(frozen=True)
class RayHit:
    hit: bool
    pixel: tuple[int, int] | None = None  # (u, v)
    steps_taken: int = 0
    face: int | None = None  # cubemap face for world-space marching


def hemisphere_samples(normal: np.ndarray, cfg: TracingConfig
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Sample directions in the hemisphere around `normal` plus weights.

    normal may be (3,) or a batch (..., 3); directions come back as
    (..., ns, 3). Weights are shared across the batch.
    """
    n = np.asarray(normal, dtype=np.float64)
    if np.any(np.abs(np.linalg.norm(n, axis=-1) - 1.0) > 1e-4):
        raise PreconditionError("normals must be unit length")
    local, weights = cfg.local_samples()
    basis = orthonormal_basis(n)
    dirs = np.einsum("...ij,kj->...ki", basis, local)
    return dirs, weights


def adaptive_step(z0, t0: float, intr: CameraIntrinsics):
    """Step length grows quadratically with the ray origin's depth:
    t = t0 (1 + z0 / (z_far - z_near))^2."""
    z0 = np.asarray(z0, dtype=np.float64)
    return t0 * (1.0 + z0 / (intr.z_far - intr.z_near)) ** 2


def march_ray(x0: np.ndarray, omega: np.ndarray, depth: np.ndarray,
              intr: CameraIntrinsics, cfg: TracingConfig,
              normal: np.ndarray | None = None) -> RayHit:
    """March one ray through the depth buffer; reference scalar implementation.

    Samples x0 + omega * k * t for k = 1..max_steps with t fixed from the
    origin depth; a sample hits when z_d < z < z_d + delta at its nearest
    texel. The march ends without a hit when the sample leaves the image,
    leaves (z_near, z_far), or runs out of steps. If `normal` is given the
    origin is nudged by SELF_HIT_OFFSET along it first.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if abs(np.linalg.norm(omega) - 1.0) > 1e-4:
        raise PreconditionError("ray direction must be unit length")
    u0 = intr.fx * x0[0] / x0[2] + intr.cx
    v0 = intr.fy * x0[1] / x0[2] + intr.cy
    if not (x0[2] > 0 and -0.5 <= u0 < intr.width - 0.5 and -0.5 <= v0 < intr.height - 0.5):
        raise PreconditionError("ray origin does not project inside the image")
    t = float(adaptive_step(x0[2], cfg.t0, intr))
    origin = x0 if normal is None else x0 + SELF_HIT_OFFSET * np.asarray(normal, dtype=np.float64)
    for k in range(1, cfg.max_steps + 1):
        p = origin + omega * (k * t)
        z = p[2]
        if z <= intr.z_near or z >= intr.z_far:
            return RayHit(False, steps_taken=k)
        u = intr.fx * p[0] / z + intr.cx
        v = intr.fy * p[1] / z + intr.cy
        iu = int(np.rint(u))
        iv = int(np.rint(v))
        if not (0 <= iu < intr.width and 0 <= iv < intr.height):
            return RayHit(False, steps_taken=k)
        zd = depth[iv, iu]
        if zd < z < zd + cfg.delta:
            return RayHit(True, pixel=(iu, iv), steps_taken=k)
    return RayHit(False, steps_taken=cfg.max_steps)


@dataclass
class TraceResult:
    """Occlusion plus everything else one marching pass produces."""

    occlusion: np.ndarray            # (H, W) in [0, 1]
    gathered: np.ndarray | None      # (H, W, 3) sum(V fetch w) / sum(w)
    hit_counts: np.ndarray           # (H, W) int32, rays that hit per pixel


def _trace_rows(gb: GBuffer, cfg: TracingConfig, depth_eff: np.ndarray,
                local_dirs: np.ndarray, weights: np.ndarray,
                fetch: np.ndarray | None, force_visibility: bool,
                row0: int, row1: int):
    intr = gb.intrinsics
    h, w = gb.shape
    mask = gb.mask[row0:row1].reshape(-1)
    npix = mask.size
    s = local_dirs.shape[0]
    wsum = weights.sum()

    occ = np.ones(npix)
    hits_count = np.zeros(npix, dtype=np.int32)
    gathered = np.zeros((npix, 3)) if fetch is not None else None
    if not mask.any():
        return (occ.reshape(row1 - row0, w),
                None if gathered is None else gathered.reshape(row1 - row0, w, 3),
                hits_count.reshape(row1 - row0, w))

    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(row0, row1, dtype=np.float64), indexing="xy")
    z0 = gb.depth[row0:row1]
    pts = unproject(uu, vv, np.where(gb.mask[row0:row1], z0, 1.0), intr,
                    validate=False).reshape(-1, 3)[mask]
    normals = gb.normal[row0:row1].reshape(-1, 3)[mask]
    np_m = pts.shape[0]

    if force_visibility:
        v_any = np.ones((np_m, s), dtype=bool)
        occ[mask] = 1.0 - (v_any * weights).sum(axis=1) / wsum
        hits_count[mask] = s
        if gathered is not None and fetch is not None:
            pass  # forced-visibility hook is an occlusion-only test aid
        return (occ.reshape(row1 - row0, w),
                None if gathered is None else gathered.reshape(row1 - row0, w, 3),
                hits_count.reshape(row1 - row0, w))

    basis = orthonormal_basis(normals)
    dirs = np.einsum("pij,kj->pki", basis, local_dirs)       # (P, S, 3)
    origins = (pts + SELF_HIT_OFFSET * normals)[:, None, :]   # (P, 1, 3)
    t = adaptive_step(pts[:, 2], cfg.t0, intr)[:, None]       # (P, 1)

    alive = np.ones((np_m, s), dtype=bool)
    v_hit = np.zeros((np_m, s), dtype=bool)
    hit_iu = np.zeros((np_m, s), dtype=np.int64)
    hit_iv = np.zeros((np_m, s), dtype=np.int64)

    for k in range(1, cfg.max_steps + 1):
        pos = origins + dirs * (k * t)[..., None]
        z = pos[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            pu = intr.fx * pos[..., 0] / z + intr.cx
            pv = intr.fy * pos[..., 1] / z + intr.cy
        in_depth = (z > intr.z_near) & (z < intr.z_far)
        iu = np.rint(np.where(in_depth, pu, -1.0)).astype(np.int64)
        iv = np.rint(np.where(in_depth, pv, -1.0)).astype(np.int64)
        in_img = (iu >= 0) & (iu < w) & (iv >= 0) & (iv < h)
        alive &= in_depth & in_img
        if not alive.any():
            break
        zd = depth_eff[np.clip(iv, 0, h - 1), np.clip(iu, 0, w - 1)]
        new_hit = alive & (zd < z) & (z < zd + cfg.delta)
        if new_hit.any():
            v_hit |= new_hit
            hit_iu[new_hit] = iu[new_hit]
            hit_iv[new_hit] = iv[new_hit]
            alive &= ~new_hit
            if not alive.any():
                break

    occ[mask] = 1.0 - (v_hit * weights).sum(axis=1) / wsum
    hits_count[mask] = v_hit.sum(axis=1).astype(np.int32)
    if gathered is not None and fetch is not None:
        vals = np.where(v_hit[..., None], fetch[hit_iv, hit_iu], 0.0)
        gathered[mask] = np.einsum("psc,s->pc", vals, weights) / wsum
    return (occ.reshape(row1 - row0, w),
            None if gathered is None else gathered.reshape(row1 - row0, w, 3),
            hits_count.reshape(row1 - row0, w))


def trace_pass(gb: GBuffer, cfg: TracingConfig, fetch: np.ndarray | None = None,
               force_visibility: bool = False, threads: int = 1,
               block_rows: int = 16) -> TraceResult:
    """Single shared marching pass over all masked pixels.

    Returns occlusion, the weighted mean of `fetch` over hitting rays
    (when a fetch image is given), and per-pixel hit counts. Pixels outside
    the mask get occlusion 1 and zero gather. `force_visibility=True` is a
    test hook that declares every ray a hit.
    """
    if fetch is not None and fetch.shape[:2] != gb.shape:
        raise ConfigurationError("fetch image does not match the G-buffer size")
    h, w = gb.shape
    depth_eff = np.where(gb.mask, gb.depth, np.inf)
    local_dirs, weights = cfg.local_samples()

    blocks = [(r, min(r + block_rows, h)) for r in range(0, h, block_rows)]

    def run(block):
        return _trace_rows(gb, cfg, depth_eff, local_dirs, weights, fetch,
                           force_visibility, block[0], block[1])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(b) for b in blocks]

    occlusion = np.concatenate([r[0] for r in results], axis=0)
    gathered = None if fetch is None else np.concatenate([r[1] for r in results], axis=0)
    hit_counts = np.concatenate([r[2] for r in results], axis=0)
    return TraceResult(occlusion=occlusion, gathered=gathered, hit_counts=hit_counts)


def occlusion_map(gb: GBuffer, cfg: TracingConfig, force_visibility: bool = False,
                  threads: int = 1) -> np.ndarray:
    """Hemisphere occlusion per masked pixel; 1 outside the mask."""
    return trace_pass(gb, cfg, force_visibility=force_visibility,
                      threads=threads).occlusion


def indirect_from_gather(gb: GBuffer, gathered: np.ndarray) -> np.ndarray:
    """Material-weighted indirect radiance from a trace gather:
    (1 - m) a/pi * gathered * pi  (the pi's cancel against the estimator)."""
    out = (1.0 - gb.metallic)[..., None] * gb.albedo / np.pi * gathered * np.pi
    out[~gb.mask] = 0.0
    return out


def indirect_map(gb: GBuffer, direct_image: np.ndarray, cfg: TracingConfig,
                 threads: int = 1) -> np.ndarray:
    """One-bounce diffuse indirect light sourced from `direct_image`."""
    result = trace_pass(gb, cfg, fetch=np.asarray(direct_image, dtype=np.float64),
                        threads=threads)
    return indirect_from_gather(gb, result.gathered)


def composite(direct: np.ndarray, indirect: np.ndarray) -> np.ndarray:
    """Final radiance: direct + indirect, linear HDR, no clamping."""
    direct = np.asarray(direct)
    indirect = np.asarray(indirect)
    if direct.shape != indirect.shape:
        raise ConfigurationError(
            f"image dimensions differ: {direct.shape} vs {indirect.shape}")
    return direct + indirect
