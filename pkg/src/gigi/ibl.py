"""Image-based lighting: equirectangular environment maps, diffuse and
GGX-prefiltered radiance maps, the split-sum BRDF lookup table, and the
per-pixel direct-lighting shader.

Equirectangular convention: u in [0,1) maps to azimuth phi = 2 pi u,
v in [0,1] maps to polar angle theta = pi v measured from +z, so the top
row of the map is the +z pole. Maps are (H, W, 3) with W = 2 H.

All prefiltering uses deterministic sample sets, so outputs are
byte-identical across runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .brdf import ALPHA_MIN, f0_from, geometry_smith
from .errors import ConfigurationError, FormatError, PreconditionError
from .gbuffer import GBuffer
from .sampling import ggx_half_vectors, normalize, orthonormal_basis, vdot

DEFAULT_MIPS = 5
DEFAULT_LUT_SIZE = 64
DEFAULT_IRRADIANCE_SHAPE = (32, 64)
_DIFFUSE_MIN_SAMPLES = 4096
_SPECULAR_SAMPLES = 1024
_LUT_SAMPLES = 1024


def validate_envmap(env: np.ndarray) -> np.ndarray:
    env = np.asarray(env, dtype=np.float64)
    if env.ndim != 3 or env.shape[2] != 3 or env.shape[1] != 2 * env.shape[0]:
        raise ConfigurationError(f"environment map must be (H, 2H, 3), got {env.shape}")
    if not np.all(np.isfinite(env)) or env.min() < 0.0:
        raise ConfigurationError("environment radiance must be finite and non-negative")
    return env


def direction_to_uv(dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(dirs, dtype=np.float64)
    phi = np.arctan2(d[..., 1], d[..., 0]) % (2.0 * np.pi)
    theta = np.arccos(np.clip(d[..., 2], -1.0, 1.0))
    return phi / (2.0 * np.pi), theta / np.pi


def uv_to_direction(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    phi = 2.0 * np.pi * np.asarray(u, dtype=np.float64)
    theta = np.pi * np.asarray(v, dtype=np.float64)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def texel_directions(h: int, w: int) -> np.ndarray:
    """(h, w, 3) directions at texel centers."""
    v = (np.arange(h) + 0.5) / h
    u = (np.arange(w) + 0.5) / w
    uu, vv = np.meshgrid(u, v, indexing="xy")
    return uv_to_direction(uu, vv)


def texel_solid_angles(h: int, w: int) -> np.ndarray:
    """(h, w) exact solid angle of each texel."""
    theta_top = np.arange(h) / h * np.pi
    theta_bot = (np.arange(h) + 1) / h * np.pi
    band = (2.0 * np.pi / w) * (np.cos(theta_top) - np.cos(theta_bot))
    return np.repeat(band[:, None], w, axis=1)


def _bilinear_periodic(tex: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear fetch with azimuthal wrap in x and clamped rows in y."""
    h, w = tex.shape[:2]
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0w = x0 % w
    x1w = (x0 + 1) % w
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    t00 = tex[y0c, x0w]
    t10 = tex[y0c, x1w]
    t01 = tex[y1c, x0w]
    t11 = tex[y1c, x1w]
    top = t00 * (1.0 - fx) + t10 * fx
    bot = t01 * (1.0 - fx) + t11 * fx
    return top * (1.0 - fy) + bot * fy


def sample_env(env: np.ndarray, dirs: np.ndarray, validate: bool = True) -> np.ndarray:
    """Bilinear lookup of an equirectangular map in unit direction(s)."""
    env = np.asarray(env, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64)
    if validate:
        norms = np.linalg.norm(d, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-4):
            raise PreconditionError("sample directions must be unit length")
    h, w = env.shape[:2]
    u, v = direction_to_uv(d)
    return _bilinear_periodic(env, u * w - 0.5, v * h - 0.5)


def prefilter_diffuse(env: np.ndarray, out_shape: tuple[int, int] = DEFAULT_IRRADIANCE_SHAPE,
                      ) -> np.ndarray:
    """Cosine-weighted irradiance map: texel at n holds int L (w . n)+ dw.

    Deterministic quadrature over the (subdivided) source grid; a constant
    map L therefore integrates to pi L at every texel.
    """
    env = validate_envmap(env)
    he, we = env.shape[:2]
    # subdivide until the quadrature grid is fine enough for the 0.1% bound
    sub = max(1, int(np.ceil(np.sqrt(_DIFFUSE_MIN_SAMPLES / (he * we)))), int(np.ceil(64 / he)))
    hs, ws = he * sub, we * sub
    d = texel_directions(hs, ws).reshape(-1, 3)
    dom = texel_solid_angles(hs, ws).reshape(-1)
    radiance = np.repeat(np.repeat(env, sub, axis=0), sub, axis=1).reshape(-1, 3)
    weighted = radiance * dom[:, None]

    ho, wo = out_shape
    out_dirs = texel_directions(ho, wo).reshape(-1, 3)
    out = np.empty((ho * wo, 3))
    chunk = max(1, (1 << 22) // d.shape[0])
    for s in range(0, out_dirs.shape[0], chunk):
        cosg = out_dirs[s:s + chunk] @ d.T
        np.clip(cosg, 0.0, None, out=cosg)
        out[s:s + chunk] = cosg @ weighted
    return out.reshape(ho, wo, 3)


def prefilter_specular(env: np.ndarray, mip_count: int = DEFAULT_MIPS) -> list[np.ndarray]:
    """Roughness-indexed radiance chain via GGX importance sampling.

    Mip l is prefiltered at roughness l / (mip_count - 1); mip 0 is the
    source map itself (the zero-roughness delta-lobe limit).
    """
    env = validate_envmap(env)
    if mip_count < 2:
        raise PreconditionError("mip_count must be at least 2")
    he, we = env.shape[:2]
    bases = orthonormal_basis(texel_directions(he, we))  # (he, we, 3, 3)
    mips = [env.copy()]
    for level in range(1, mip_count):
        rho = level / (mip_count - 1)
        h_local = ggx_half_vectors(_SPECULAR_SAMPLES, rho)
        # reflect the view (= +z = n) about each half vector
        w_local = 2.0 * h_local[:, 2:3] * h_local - np.array([0.0, 0.0, 1.0])
        weights = np.clip(w_local[:, 2], 0.0, None)
        keep = weights > 0
        w_local, weights = w_local[keep], weights[keep]
        wsum = weights.sum()
        out = np.empty_like(env)
        for row in range(he):
            dirs = np.einsum("wij,kj->wki", bases[row], w_local)
            radiance = sample_env(env, dirs, validate=False)
            out[row] = np.einsum("wkc,k->wc", radiance, weights) / wsum
        mips.append(out)
    return mips


def compute_brdf_lut(size: int = DEFAULT_LUT_SIZE) -> np.ndarray:
    """Split-sum scale/bias table over (cos theta, roughness), shape (N, N, 2).

    Row i is cos theta = (i + 1/2) / N, column j is roughness = (j + 1/2) / N;
    the specular integral is approximately A * f0 + B.
    """
    if size < 16:
        raise PreconditionError("LUT size must be at least 16")
    n = np.array([0.0, 0.0, 1.0])
    cosv = (np.arange(size) + 0.5) / size
    sinv = np.sqrt(1.0 - cosv**2)
    view = np.stack([sinv, np.zeros(size), cosv], axis=-1)  # (size, 3)
    lut = np.empty((size, size, 2))
    for j in range(size):
        rho = (j + 0.5) / size
        h = ggx_half_vectors(_LUT_SAMPLES, rho)  # (K, 3)
        vh = view @ h.T                           # (size, K)
        l = 2.0 * vh[..., None] * h[None] - view[:, None, :]
        nl = l[..., 2]
        nh = np.clip(h[:, 2], 1e-12, 1.0)[None]
        valid = nl > 0
        g = geometry_smith(cosv[:, None], np.clip(nl, 0.0, 1.0), rho)
        g_vis = g * np.clip(vh, 0.0, 1.0) / (nh * cosv[:, None])
        fc = (1.0 - np.clip(vh, 0.0, 1.0)) ** 5
        a = np.where(valid, (1.0 - fc) * g_vis, 0.0).sum(axis=1) / _LUT_SAMPLES
        b = np.where(valid, fc * g_vis, 0.0).sum(axis=1) / _LUT_SAMPLES
        lut[:, j, 0] = a
        lut[:, j, 1] = b
    return lut


def _bilinear_clamped(tex: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear fetch with clamped cells; x indexes columns, y rows."""
    h, w = tex.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 2) if w > 1 else np.zeros_like(x, np.int64)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 2) if h > 1 else np.zeros_like(y, np.int64)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    t00 = tex[y0, x0]
    t10 = tex[y0, np.minimum(x0 + 1, w - 1)]
    t01 = tex[np.minimum(y0 + 1, h - 1), x0]
    t11 = tex[np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)]
    top = t00 * (1.0 - fx) + t10 * fx
    bot = t01 * (1.0 - fx) + t11 * fx
    return top * (1.0 - fy) + bot * fy


def lookup_brdf_lut(lut: np.ndarray, cos_theta: np.ndarray, roughness: np.ndarray,
                    with_grad: bool = False):
    """Bilinear (A, B) lookup; optionally also d(A,B)/d rho (one-sided at cell edges)."""
    size = lut.shape[0]
    x = np.asarray(roughness, dtype=np.float64) * size - 0.5
    y = np.asarray(cos_theta, dtype=np.float64) * size - 0.5
    val = _bilinear_clamped(lut, x, y)
    if not with_grad:
        return val[..., 0], val[..., 1]
    xc = np.clip(x, 0.0, size - 1.0)
    inside = (x > 0.0) & (x < size - 1.0)
    x0 = np.minimum(np.floor(xc).astype(np.int64), size - 2)
    lo = _bilinear_clamped(lut[:, :, :], np.asarray(x0, dtype=np.float64), y)
    hi = _bilinear_clamped(lut[:, :, :], np.asarray(x0 + 1, dtype=np.float64), y)
    slope = (hi - lo) * size  # d/d rho of the bilinear cell
    slope = np.where(inside[..., None], slope, 0.0)
    return val[..., 0], val[..., 1], slope[..., 0], slope[..., 1]


def lookup_specular_chain(mips: list[np.ndarray], dirs: np.ndarray, roughness: np.ndarray,
                          with_grad: bool = False):
    """Trilinear radiance fetch: bilinear in each mip, linear across mips
    at mip coordinate rho * (M - 1)."""
    m = len(mips)
    c = np.clip(np.asarray(roughness, dtype=np.float64), 0.0, 1.0) * (m - 1)
    l0 = np.minimum(np.floor(c).astype(np.int64), m - 2)
    f = (c - l0)[..., None]
    stack = np.stack(mips, axis=0)  # (M, H, W, 3)
    h, w = stack.shape[1:3]
    u, v = direction_to_uv(dirs)
    x, y = u * w - 0.5, v * h - 0.5

    def fetch(level):
        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        fx = (x - x0)[..., None]
        fy = (y - y0)[..., None]
        x0w, x1w = x0 % w, (x0 + 1) % w
        y0c, y1c = np.clip(y0, 0, h - 1), np.clip(y0 + 1, 0, h - 1)
        t00 = stack[level, y0c, x0w]
        t10 = stack[level, y0c, x1w]
        t01 = stack[level, y1c, x0w]
        t11 = stack[level, y1c, x1w]
        top = t00 * (1.0 - fx) + t10 * fx
        bot = t01 * (1.0 - fx) + t11 * fx
        return top * (1.0 - fy) + bot * fy

    lo = fetch(l0)
    hi = fetch(l0 + 1)
    val = lo * (1.0 - f) + hi * f
    if not with_grad:
        return val
    return val, (hi - lo) * (m - 1)


@dataclass
class EnvironmentSet:
    """Radiance map plus everything the direct shader needs."""

    radiance: np.ndarray
    irradiance: np.ndarray
    mips: list[np.ndarray]
    lut: np.ndarray

    def validate(self) -> None:
        if self.radiance is None or self.irradiance is None or not self.mips \
                or self.lut is None:
            raise ConfigurationError("environment set is incomplete")

    @property
    def mip_count(self) -> int:
        return len(self.mips)


def prefilter_environment(env: np.ndarray, mip_count: int = DEFAULT_MIPS,
                          lut_size: int = DEFAULT_LUT_SIZE,
                          irradiance_shape: tuple[int, int] = DEFAULT_IRRADIANCE_SHAPE,
                          ) -> EnvironmentSet:
    env = validate_envmap(env)
    return EnvironmentSet(
        radiance=env,
        irradiance=prefilter_diffuse(env, irradiance_shape),
        mips=prefilter_specular(env, mip_count),
        lut=compute_brdf_lut(lut_size),
    )


def shade_direct_parts(gb: GBuffer, env_set: EnvironmentSet
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Unoccluded diffuse term and specular term of the direct shader.

    The full direct image is diffuse * O + specular with O the occlusion
    map applied to the diffuse term only.
    """
    env_set.validate()
    mask = gb.mask
    n = gb.normal
    p = gb.view_positions()
    omega_o = -normalize(p, eps=1e-12)
    cos_v = np.clip(vdot(n, omega_o), 0.0, 1.0)
    refl = normalize(2.0 * vdot(n, omega_o, keepdims=True) * n - omega_o, eps=1e-12)

    i_dir = sample_env(env_set.irradiance, n, validate=False)
    a_term, b_term = lookup_brdf_lut(env_set.lut, cos_v, gb.roughness)
    i_s = lookup_specular_chain(env_set.mips, refl, gb.roughness)
    f0 = f0_from(gb.albedo, gb.metallic)

    diffuse = (1.0 - gb.metallic)[..., None] * gb.albedo / np.pi * i_dir
    specular = (a_term[..., None] * f0 + b_term[..., None]) * i_s
    diffuse[~mask] = 0.0
    specular[~mask] = 0.0
    return diffuse, specular


def shade_direct(gb: GBuffer, env_set: EnvironmentSet, occlusion: np.ndarray
                 ) -> np.ndarray:
    """Direct-lighting image: (1-m) a/pi O I_dir + (A f0 + B) I_s."""
    occlusion = np.asarray(occlusion, dtype=np.float64)
    if occlusion.shape != gb.shape:
        raise ConfigurationError("occlusion map does not match the G-buffer")
    if occlusion.size and (occlusion.min() < 0.0 or occlusion.max() > 1.0):
        raise PreconditionError("occlusion values must lie in [0, 1]")
    diffuse, specular = shade_direct_parts(gb, env_set)
    return diffuse * occlusion[..., None] + specular


ENV_MANIFEST = "manifest.json"


def source_hash(env: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(env, dtype="<f8").tobytes()).hexdigest()


def store_environment_set(env_set: EnvironmentSet, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fileio.store_tensor(env_set.radiance, out_dir / "radiance.gigt")
    fileio.store_tensor(env_set.irradiance, out_dir / "irradiance.gigt")
    for i, mip in enumerate(env_set.mips):
        fileio.store_tensor(mip, out_dir / f"specular_{i}.gigt")
    fileio.store_tensor(env_set.lut, out_dir / "brdf_lut.gigt")
    manifest = {
        "mip_count": env_set.mip_count,
        "lut_size": int(env_set.lut.shape[0]),
        "source_hash": source_hash(env_set.radiance),
    }
    (out_dir / ENV_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out_dir


def load_environment_set(path) -> EnvironmentSet:
    path = Path(path)
    manifest_file = path / ENV_MANIFEST
    if not manifest_file.exists():
        raise FormatError(f"missing {manifest_file}", offset=0)
    manifest = json.loads(manifest_file.read_text())
    mips = [fileio.load_tensor(path / f"specular_{i}.gigt").astype(np.float64)
            for i in range(manifest["mip_count"])]
    return EnvironmentSet(
        radiance=fileio.load_tensor(path / "radiance.gigt").astype(np.float64),
        irradiance=fileio.load_tensor(path / "irradiance.gigt").astype(np.float64),
        mips=mips,
        lut=fileio.load_tensor(path / "brdf_lut.gigt").astype(np.float64),
    )
