"""Cook-Torrance BRDF kernels: GGX distribution, Schlick Fresnel, Smith
geometry with the image-based-lighting k = alpha/2 parameterization, and
the combined diffuse + microfacet evaluation.

All functions are pointwise and broadcast over leading array dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sampling import normalize, vdot

DIELECTRIC_F0 = 0.04
ALPHA_MIN = 1e-4
SPECULAR_EPS = 1e-6


@dataclass(frozen=True)
class Material:
    albedo: tuple[float, float, float] = (0.5, 0.5, 0.5)
    metallic: float = 0.0
    roughness: float = 0.5

    def __post_init__(self):
        a = np.asarray(self.albedo, dtype=np.float64).reshape(3)
        object.__setattr__(self, "albedo", tuple(a))
        vals = np.array([*a, self.metallic, self.roughness])
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("material channels must lie in [0, 1]")


@dataclass(frozen=True)
class ShadingFrame:
    """Unit shading directions: normal, view (to camera), light, half vector."""

    n: np.ndarray
    omega_o: np.ndarray
    omega_i: np.ndarray
    h: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.h is None:
            s = np.asarray(self.omega_i, dtype=np.float64) + np.asarray(self.omega_o)
            object.__setattr__(self, "h", normalize(s, eps=1e-12))

    @classmethod
    def from_directions(cls, n, omega_o, omega_i) -> "ShadingFrame":
        return cls(np.asarray(n, dtype=np.float64),
                   np.asarray(omega_o, dtype=np.float64),
                   np.asarray(omega_i, dtype=np.float64))


def ndf_ggx(n_dot_h, roughness):
    """GGX/Trowbridge-Reitz normal distribution, alpha = roughness^2."""
    nh = np.clip(np.asarray(n_dot_h, dtype=np.float64), 0.0, 1.0)
    alpha = np.maximum(np.clip(np.asarray(roughness, dtype=np.float64), 0.0, 1.0) ** 2,
                       ALPHA_MIN)
    a2 = alpha * alpha
    d = nh * nh * (a2 - 1.0) + 1.0
    return a2 / (np.pi * d * d)


def fresnel_schlick(v_dot_h, f0):
    """Schlick approximation F = f0 + (1 - f0)(1 - v.h)^5."""
    vh = np.clip(np.asarray(v_dot_h, dtype=np.float64), 0.0, 1.0)
    f0 = np.asarray(f0, dtype=np.float64)
    return f0 + (1.0 - f0) * (1.0 - vh) ** 5


def geometry_smith(n_dot_v, n_dot_l, roughness):
    """Smith separable shadowing-masking with Schlick-GGX, k = alpha / 2."""
    alpha = np.maximum(np.clip(np.asarray(roughness, dtype=np.float64), 0.0, 1.0) ** 2,
                       ALPHA_MIN)
    k = alpha / 2.0

    def g1(x):
        x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
        return x / (x * (1.0 - k) + k)

    return g1(n_dot_v) * g1(n_dot_l)


def f0_from(albedo, metallic):
    """Base reflectivity: 0.04 for dielectrics, albedo for metals."""
    albedo = np.asarray(albedo, dtype=np.float64)
    m = np.asarray(metallic, dtype=np.float64)[..., None] if np.ndim(metallic) else metallic
    return DIELECTRIC_F0 * (1.0 - m) + albedo * m


def brdf_eval(frame: ShadingFrame, mat: Material) -> np.ndarray:
    """Full BRDF value, (..., 3). Below-horizon directions return 0."""
    n = np.asarray(frame.n, dtype=np.float64)
    wi = np.asarray(frame.omega_i, dtype=np.float64)
    wo = np.asarray(frame.omega_o, dtype=np.float64)
    h = np.asarray(frame.h, dtype=np.float64)

    nl = vdot(n, wi)
    nv = vdot(n, wo)
    above = (nl > 0.0) & (nv > 0.0)

    albedo = np.asarray(mat.albedo, dtype=np.float64)
    d = ndf_ggx(vdot(n, h), mat.roughness)
    f = fresnel_schlick(np.clip(vdot(wo, h), 0.0, 1.0)[..., None],
                        f0_from(albedo, mat.metallic))
    g = geometry_smith(nv, nl, mat.roughness)
    spec = d[..., None] * f * g[..., None] / (
        4.0 * np.clip(nl, 0.0, 1.0) * np.clip(nv, 0.0, 1.0) + SPECULAR_EPS)[..., None]
    diffuse = (1.0 - mat.metallic) * albedo / np.pi
    out = diffuse + spec
    return np.where(above[..., None], out, 0.0)
