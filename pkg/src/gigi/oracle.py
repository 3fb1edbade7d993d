"""Analytic scene primitives and brute-force reference integrators.

These give exact ray intersections and deterministic Monte Carlo
ground truth for occlusion and one-bounce indirect light, which the
screen-space estimators are validated against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .brdf import Material, f0_from
from .errors import SceneError
from .gbuffer import CameraIntrinsics, GBuffer, ViewPose, pixel_rays
from .ibl import EnvironmentSet, lookup_brdf_lut, lookup_specular_chain, sample_env
from .sampling import cosine_hemisphere_grid, normalize, orthonormal_basis, vdot

T_MIN = 1e-6


@dataclass(frozen=True)
class Plane:
    point: np.ndarray
    normal: np.ndarray
    material: Material = field(default_factory=Material)

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=np.float64).reshape(3))
        n = normalize(np.asarray(self.normal, dtype=np.float64).reshape(3))
        object.__setattr__(self, "normal", n)


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    material: Material = field(default_factory=Material)

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        if self.radius <= 0:
            raise SceneError("sphere radius must be positive")


@dataclass(frozen=True)
class Box:
    bmin: np.ndarray
    bmax: np.ndarray
    material: Material = field(default_factory=Material)

    def __post_init__(self):
        bmin = np.asarray(self.bmin, dtype=np.float64).reshape(3)
        bmax = np.asarray(self.bmax, dtype=np.float64).reshape(3)
        object.__setattr__(self, "bmin", bmin)
        object.__setattr__(self, "bmax", bmax)
        if not np.all(bmin < bmax):
            raise SceneError("box min must be componentwise below max")


Primitive = Plane | Sphere | Box


@dataclass
class Hit:
    t: float
    point: np.ndarray
    normal: np.ndarray
    material: Material
    prim_index: int


def _intersect_plane(prim: Plane, o: np.ndarray, d: np.ndarray):
    denom = d @ prim.normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((prim.point - o) @ prim.normal) / denom
    t = np.where(np.abs(denom) > 1e-12, t, np.inf)
    t = np.where(t > T_MIN, t, np.inf)
    n = np.broadcast_to(prim.normal, d.shape)
    return t, n


def _intersect_sphere(prim: Sphere, o: np.ndarray, d: np.ndarray):
    oc = o - prim.center
    b = vdot(oc, d)
    c = vdot(oc, oc) - prim.radius**2
    disc = b * b - c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t1 = -b - sq
    t2 = -b + sq
    t = np.where(t1 > T_MIN, t1, np.where(t2 > T_MIN, t2, np.inf))
    t = np.where(disc >= 0.0, t, np.inf)
    p = o + d * t[..., None]
    n = normalize(p - prim.center, eps=1e-300)
    return t, n


def _intersect_box(prim: Box, o: np.ndarray, d: np.ndarray):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
    lo = (prim.bmin - o) * inv
    hi = (prim.bmax - o) * inv
    t_small = np.minimum(lo, hi)
    t_big = np.maximum(lo, hi)
    t_enter = t_small.max(axis=-1)
    t_exit = t_big.min(axis=-1)
    enter_ok = (t_exit >= t_enter) & (t_enter > T_MIN)
    exit_ok = (t_exit >= np.maximum(t_enter, 0.0)) & (t_exit > T_MIN)
    t = np.where(enter_ok, t_enter, np.where(exit_ok, t_exit, np.inf))
    # outward normal of the slab that bounds the chosen t
    axis_enter = t_small.argmax(axis=-1)
    axis_exit = t_big.argmin(axis=-1)
    axis = np.where(enter_ok, axis_enter, axis_exit)
    sign = np.where(enter_ok, -np.sign(d), np.sign(d))
    n = np.zeros(d.shape)
    idx = np.indices(axis.shape)
    n[(*idx, axis)] = sign[(*idx, axis)]
    return t, n


@dataclass
class SceneOracle:
    """Collection of analytic primitives with an optional background env map."""

    primitives: list[Primitive]
    background: np.ndarray | None = None

    def intersect_batch(self, origins: np.ndarray, dirs: np.ndarray
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nearest hits for ray batches: (t, normal, prim_index); misses
        have t = inf and prim_index = -1."""
        o = np.asarray(origins, dtype=np.float64)
        d = np.asarray(dirs, dtype=np.float64)
        best_t = np.full(d.shape[:-1], np.inf)
        best_n = np.zeros(d.shape)
        best_i = np.full(d.shape[:-1], -1, dtype=np.int32)
        for i, prim in enumerate(self.primitives):
            if isinstance(prim, Plane):
                t, n = _intersect_plane(prim, o, d)
            elif isinstance(prim, Sphere):
                t, n = _intersect_sphere(prim, o, d)
            else:
                t, n = _intersect_box(prim, o, d)
            closer = t < best_t
            best_t = np.where(closer, t, best_t)
            best_n = np.where(closer[..., None], n, best_n)
            best_i = np.where(closer, i, best_i)
        return best_t, best_n, best_i

    def intersect(self, origin, direction) -> Hit | None:
        """Nearest intersection of a single ray, or None."""
        o = np.asarray(origin, dtype=np.float64).reshape(1, 3)
        d = np.asarray(direction, dtype=np.float64).reshape(1, 3)
        t, n, i = self.intersect_batch(o, d)
        if not np.isfinite(t[0]):
            return None
        return Hit(t=float(t[0]), point=(o[0] + d[0] * t[0]), normal=n[0],
                   material=self.primitives[int(i[0])].material, prim_index=int(i[0]))

    def occupied(self, point) -> bool:
        """True if the point lies strictly inside a solid primitive."""
        p = np.asarray(point, dtype=np.float64)
        for prim in self.primitives:
            if isinstance(prim, Sphere) and np.linalg.norm(p - prim.center) < prim.radius:
                return True
            if isinstance(prim, Box) and np.all(p > prim.bmin) and np.all(p < prim.bmax):
                return True
        return False

    def materials_at(self, prim_index: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Albedo/roughness/metallic gathered per primitive index (index -1 -> zeros)."""
        albedos = np.array([p.material.albedo for p in self.primitives] + [(0.0, 0.0, 0.0)])
        roughs = np.array([p.material.roughness for p in self.primitives] + [0.0])
        metals = np.array([p.material.metallic for p in self.primitives] + [0.0])
        return albedos[prim_index], roughs[prim_index], metals[prim_index]


def synth_gbuffer(scene: SceneOracle, pose: ViewPose, intr: CameraIntrinsics,
                  materials: list[Material] | None = None) -> GBuffer:
    """Render an exact G-buffer: per-pixel nearest intersection depth,
    analytic view-space normals oriented toward the camera, and material
    channels. Pixels without a hit inside (z_near, z_far) are unmasked.

    `materials` optionally overrides the primitives' materials by index.
    """
    if materials is not None:
        prims = [_with_material(p, m) for p, m in zip(scene.primitives, materials)]
        scene = SceneOracle(primitives=prims, background=scene.background)
    if scene.occupied(pose.camera_center):
        raise SceneError("camera center lies inside solid geometry")
    d_view = pixel_rays(intr)                       # (H, W, 3) unit
    r = pose.rotation
    d_world = d_view @ r                            # R^T applied to rows
    o_world = np.broadcast_to(pose.camera_center, d_world.shape)
    t, n_world, prim_idx = scene.intersect_batch(o_world, d_world)

    depth = t * d_view[..., 2]
    mask = np.isfinite(t) & (depth > intr.z_near) & (depth < intr.z_far)
    n_view = n_world @ r.T
    flip = vdot(n_view, d_view) > 0
    n_view = np.where(flip[..., None], -n_view, n_view)

    albedo, rough, metal = scene.materials_at(prim_idx)
    depth = np.where(mask, depth, np.inf)
    n_view = np.where(mask[..., None], n_view, np.array([0.0, 0.0, -1.0]))
    albedo = np.where(mask[..., None], albedo, 0.0)
    rough = np.where(mask, rough, 0.0)
    metal = np.where(mask, metal, 0.0)
    return GBuffer(depth=depth, normal=n_view, albedo=albedo, roughness=rough,
                   metallic=metal, mask=mask, intrinsics=intr)


def _with_material(prim: Primitive, mat: Material) -> Primitive:
    if isinstance(prim, Plane):
        return Plane(prim.point, prim.normal, mat)
    if isinstance(prim, Sphere):
        return Sphere(prim.center, prim.radius, mat)
    return Box(prim.bmin, prim.bmax, mat)


def _occlusion_batch(scene: SceneOracle, points: np.ndarray, normals: np.ndarray,
                     n_rays: int, t_max: np.ndarray) -> np.ndarray:
    """Cosine-importance visibility estimate for a batch of surface points."""
    local = cosine_hemisphere_grid(n_rays)          # (S, 3)
    bases = orthonormal_basis(normals)              # (P, 3, 3)
    dirs = np.einsum("pij,kj->pki", bases, local)   # (P, S, 3)
    origins = np.broadcast_to(points[:, None, :], dirs.shape)
    t, _, _ = scene.intersect_batch(origins, dirs)
    v = t <= t_max[:, None]
    return 1.0 - v.mean(axis=1)


def mc_occlusion(scene: SceneOracle, point, normal, n_rays: int,
                 t_max: float = np.inf) -> float:
    """Reference occlusion at one surface point.

    Deterministic stratified cosine-weighted directions (at least n_rays of
    them); rays count as blocked only when they hit within t_max, matching
    the marching horizon of the screen-space tracer.
    """
    p = np.asarray(point, dtype=np.float64).reshape(1, 3)
    n = np.asarray(normal, dtype=np.float64).reshape(1, 3)
    return float(_occlusion_batch(scene, p, n, n_rays, np.array([t_max]))[0])


def _shade_hit_points(scene: SceneOracle, env_set: EnvironmentSet,
                      points: np.ndarray, normals: np.ndarray,
                      prim_idx: np.ndarray, omega_o: np.ndarray) -> np.ndarray:
    """Direct-model radiance of hit points with unit visibility (the
    first-pass convention: occlusion is not re-evaluated at the bounce)."""
    albedo, rough, metal = scene.materials_at(prim_idx)
    n = np.where(vdot(normals, omega_o, keepdims=True) < 0, -normals, normals)
    cos_v = np.clip(vdot(n, omega_o), 0.0, 1.0)
    refl = normalize(2.0 * vdot(n, omega_o, keepdims=True) * n - omega_o, eps=1e-12)
    i_dir = sample_env(env_set.irradiance, n, validate=False)
    a_term, b_term = lookup_brdf_lut(env_set.lut, cos_v, rough)
    i_s = lookup_specular_chain(env_set.mips, refl, rough)
    f0 = f0_from(albedo, metal)
    diffuse = (1.0 - metal)[..., None] * albedo / np.pi * i_dir
    return diffuse + (a_term[..., None] * f0 + b_term[..., None]) * i_s


def _one_bounce_batch(scene: SceneOracle, env_set: EnvironmentSet,
                      points: np.ndarray, normals: np.ndarray,
                      albedo: np.ndarray, metallic: np.ndarray,
                      n_rays: int, t_max: np.ndarray) -> np.ndarray:
    local = cosine_hemisphere_grid(n_rays)
    count = local.shape[0]
    bases = orthonormal_basis(normals)
    dirs = np.einsum("pij,kj->pki", bases, local)
    origins = np.broadcast_to(points[:, None, :], dirs.shape)
    t, n_hit, prim_idx = scene.intersect_batch(origins, dirs)
    hit = np.isfinite(t) & (t <= t_max[:, None])

    radiance = np.zeros(dirs.shape)
    if hit.any():
        hp = origins[hit] + dirs[hit] * t[hit][:, None]
        radiance[hit] = _shade_hit_points(scene, env_set, hp, n_hit[hit],
                                          prim_idx[hit], -dirs[hit])
    mean_incoming = radiance.sum(axis=1) * (np.pi / count)
    return (1.0 - metallic)[:, None] * albedo / np.pi * mean_incoming


def mc_one_bounce(scene: SceneOracle, point, normal, material: Material,
                  env_set: EnvironmentSet, n_rays: int,
                  t_max: float = np.inf) -> np.ndarray:
    """Reference diffuse one-bounce radiance at one surface point."""
    p = np.asarray(point, dtype=np.float64).reshape(1, 3)
    n = np.asarray(normal, dtype=np.float64).reshape(1, 3)
    a = np.asarray(material.albedo, dtype=np.float64).reshape(1, 3)
    m = np.asarray([material.metallic], dtype=np.float64)
    return _one_bounce_batch(scene, env_set, p, n, a, m, n_rays,
                             np.array([t_max]))[0]


def _subgrid_pixels(gb: GBuffer, stride: int, margin: int) -> tuple[np.ndarray, np.ndarray]:
    h, w = gb.shape
    vs, us = np.meshgrid(np.arange(margin, h - margin, stride),
                         np.arange(margin, w - margin, stride), indexing="ij")
    vs, us = vs.reshape(-1), us.reshape(-1)
    keep = gb.mask[vs, us]
    return us[keep], vs[keep]


def _world_points(gb: GBuffer, pose: ViewPose, us: np.ndarray, vs: np.ndarray):
    from .gbuffer import unproject

    pts_view = unproject(us.astype(np.float64), vs.astype(np.float64),
                         gb.depth[vs, us], gb.intrinsics, validate=False)
    pts_world = pose.to_world(pts_view)
    n_world = gb.normal[vs, us] @ pose.rotation
    return pts_world, n_world


def oracle_occlusion_grid(scene: SceneOracle, gb: GBuffer, pose: ViewPose,
                          n_rays: int, t_max_per_point: np.ndarray | None = None,
                          stride: int = 4, margin: int = 5,
                          cfg=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reference occlusion on a uniform pixel subgrid; returns (u, v, O)."""
    from .tracing import adaptive_step

    us, vs = _subgrid_pixels(gb, stride, margin)
    pts, nrm = _world_points(gb, pose, us, vs)
    if t_max_per_point is None:
        t = adaptive_step(gb.depth[vs, us], cfg.t0, gb.intrinsics)
        t_max_per_point = cfg.max_steps * t
    occ = np.empty(us.shape[0])
    chunk = max(1, (1 << 23) // max(n_rays, 1))
    for s in range(0, us.shape[0], chunk):
        occ[s:s + chunk] = _occlusion_batch(scene, pts[s:s + chunk], nrm[s:s + chunk],
                                            n_rays, t_max_per_point[s:s + chunk])
    return us, vs, occ


def oracle_one_bounce_grid(scene: SceneOracle, gb: GBuffer, pose: ViewPose,
                           env_set: EnvironmentSet, n_rays: int,
                           stride: int = 16, margin: int = 5,
                           cfg=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reference one-bounce radiance on a pixel subgrid; returns (u, v, L)."""
    from .tracing import adaptive_step

    us, vs = _subgrid_pixels(gb, stride, margin)
    pts, nrm = _world_points(gb, pose, us, vs)
    t = adaptive_step(gb.depth[vs, us], cfg.t0, gb.intrinsics)
    t_max = cfg.max_steps * t
    albedo = gb.albedo[vs, us]
    metal = gb.metallic[vs, us]
    out = np.empty((us.shape[0], 3))
    chunk = max(1, (1 << 22) // max(n_rays, 1))
    for s in range(0, us.shape[0], chunk):
        out[s:s + chunk] = _one_bounce_batch(scene, env_set, pts[s:s + chunk],
                                             nrm[s:s + chunk], albedo[s:s + chunk],
                                             metal[s:s + chunk], n_rays,
                                             t_max[s:s + chunk])
    return us, vs, out
