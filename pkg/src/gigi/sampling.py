"""Deterministic direction sampling and small vector helpers.

Everything here is RNG-free: low-discrepancy (Hammersley), lattice
(Fibonacci) or stratified-grid point sets, so repeated runs are
bit-identical.
"""

from __future__ import annotations

import numpy as np

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def normalize(v: np.ndarray, eps: float = 0.0) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if eps:
        n = np.maximum(n, eps)
    return v / n


def vdot(a: np.ndarray, b: np.ndarray, keepdims: bool = False) -> np.ndarray:
    return np.sum(a * b, axis=-1, keepdims=keepdims)


def reflect(v: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Mirror direction of v about n (v points away from the surface)."""
    return 2.0 * vdot(v, n, keepdims=True) * n - v


def radical_inverse_base2(i: np.ndarray) -> np.ndarray:
    """Van der Corput sequence in base 2 for 32-bit indices."""
    b = np.asarray(i, dtype=np.uint32)
    b = ((b << np.uint32(16)) | (b >> np.uint32(16))) & np.uint32(0xFFFFFFFF)
    b = ((b & np.uint32(0x55555555)) << np.uint32(1)) | ((b & np.uint32(0xAAAAAAAA)) >> np.uint32(1))
    b = ((b & np.uint32(0x33333333)) << np.uint32(2)) | ((b & np.uint32(0xCCCCCCCC)) >> np.uint32(2))
    b = ((b & np.uint32(0x0F0F0F0F)) << np.uint32(4)) | ((b & np.uint32(0xF0F0F0F0)) >> np.uint32(4))
    b = ((b & np.uint32(0x00FF00FF)) << np.uint32(8)) | ((b & np.uint32(0xFF00FF00)) >> np.uint32(8))
    return b.astype(np.float64) * 2.3283064365386963e-10  # / 2^32


def hammersley(count: int) -> np.ndarray:
    """(count, 2) low-discrepancy points in [0, 1)^2."""
    k = np.arange(count, dtype=np.uint32)
    return np.stack([k.astype(np.float64) / count, radical_inverse_base2(k)], axis=-1)


def orthonormal_basis(n: np.ndarray) -> np.ndarray:
    """(..., 3, 3) matrix whose columns (t, b, n) form a right-handed frame.

    The helper axis choice is branch-deterministic so identical normals
    always produce identical frames.
    """
    n = np.asarray(n, dtype=np.float64)
    helper = np.where(
        (np.abs(n[..., 2:3]) < 0.9), np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])
    )
    t = normalize(np.cross(helper, n))
    b = np.cross(n, t)
    return np.stack([t, b, n], axis=-1)


def fibonacci_hemisphere(count: int) -> tuple[np.ndarray, np.ndarray]:
    """Fibonacci lattice on the +z hemisphere, uniform in area.

    Returns (directions (count, 3), weights (count,)) with weights
    cos(theta), the importance factor for cosine-weighted integrands.
    """
    k = np.arange(count, dtype=np.float64)
    z = 1.0 - (k + 0.5) / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = k * GOLDEN_ANGLE
    dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    return dirs, z.copy()


def stratified_hemisphere(n_phi: int, n_theta: int) -> tuple[np.ndarray, np.ndarray]:
    """Spherical-grid midpoints over the +z hemisphere.

    phi_i = 2 pi (i + 1/2) / n_phi, theta_j = (pi/2) (j + 1/2) / n_theta.
    Weights are cos(theta_j) sin(theta_j), the quadrature factor of the
    hemisphere integral written in spherical coordinates.
    """
    phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    theta = 0.5 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    ph, th = np.meshgrid(phi, theta, indexing="ij")
    st, ct = np.sin(th), np.cos(th)
    dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
    w = (ct * st).reshape(-1)
    return dirs, w


def cosine_hemisphere_grid(count: int) -> np.ndarray:
    """Stratified cosine-weighted directions on the +z hemisphere.

    A (n_phi x n_u) grid warped through the cosine map; realizes at least
    `count` directions. The mean of f(dir) over these directions estimates
    (1/pi) * integral of f * cos(theta) over the hemisphere.
    """
    n_u = max(1, int(np.ceil(np.sqrt(count / 2.0))))
    n_phi = int(np.ceil(count / n_u))
    phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    xi = (np.arange(n_u) + 0.5) / n_u
    ph, x = np.meshgrid(phi, xi, indexing="ij")
    ct = np.sqrt(1.0 - x)
    st = np.sqrt(x)
    return np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)


def ggx_half_vectors(count: int, roughness: float, alpha_min: float = 1e-4) -> np.ndarray:
    """GGX-importance-sampled half vectors around +z (Hammersley sequence)."""
    alpha = max(float(roughness) * float(roughness), alpha_min)
    xi = hammersley(count)
    phi = 2.0 * np.pi * xi[:, 0]
    ct = np.sqrt((1.0 - xi[:, 1]) / (1.0 + (alpha * alpha - 1.0) * xi[:, 1]))
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    return np.stack([st * np.cos(phi), st * np.sin(phi), ct], axis=-1)
