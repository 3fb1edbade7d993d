"""Bit-exact tensor files (GIGT v1), PFM import, and PNG export.

GIGT v1 layout: 4 magic bytes "GIGT", three little-endian uint32
(height, width, channels), then height*width*channels IEEE-754 32-bit
little-endian floats, row-major and channel-interleaved. An optional
JSON sidecar `<name>.json` next to the tensor carries the camera
intrinsics and the semantic role of the map.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .gbuffer import CameraIntrinsics, GBuffer

MAGIC = b"GIGT"
_HEADER = struct.Struct("<III")
_MAX_ELEMENTS = 2**31  # refuse absurd headers before allocating


def store_tensor(arr: np.ndarray, path, meta: dict | None = None) -> Path:
    """Write a (H, W) or (H, W, C) float map; returns the tensor path."""
    path = Path(path)
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise ValueError(f"expected a HxW or HxWxC map, got shape {arr.shape}")
    h, w, c = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(h, w, c))
        f.write(payload)
    if meta is not None:
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def load_tensor(path) -> np.ndarray:
    """Read a GIGT tensor; (H, W) for single-channel maps, else (H, W, C)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", offset=0)
    if len(raw) < 16:
        raise FormatError("truncated header", offset=len(raw))
    h, w, c = _HEADER.unpack_from(raw, 4)
    n = h * w * c
    if n > _MAX_ELEMENTS:
        raise FormatError(f"dimension overflow: {h}x{w}x{c}", offset=4)
    expected = 16 + 4 * n
    if len(raw) < expected:
        raise FormatError(f"truncated payload: {len(raw)} of {expected} bytes",
                          offset=len(raw))
    arr = np.frombuffer(raw, dtype="<f4", count=n, offset=16).reshape(h, w, c)
    arr = np.ascontiguousarray(arr)
    return arr[..., 0] if c == 1 else arr


def sidecar_path(tensor_path) -> Path:
    return Path(tensor_path).with_suffix(".json")


def read_sidecar(tensor_path) -> dict | None:
    p = sidecar_path(tensor_path)
    return json.loads(p.read_text()) if p.exists() else None


def intrinsics_meta(role: str, intr: CameraIntrinsics) -> dict:
    return {
        "role": role,
        "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
        "width": intr.width, "height": intr.height,
        "z_near": intr.z_near, "z_far": intr.z_far,
    }


def intrinsics_from_meta(meta: dict) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=meta["fx"], fy=meta["fy"], cx=meta["cx"], cy=meta["cy"],
        width=meta["width"], height=meta["height"],
        z_near=meta["z_near"], z_far=meta["z_far"],
    )


_GBUFFER_FILES = ("depth", "normal", "albedo", "roughness", "metallic")


def store_gbuffer(gb: GBuffer, out_dir) -> Path:
    """Write the five G-buffer maps. Coverage is encoded as depth == 0."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    depth = np.where(gb.mask, gb.depth, 0.0)
    maps = {"depth": depth, "normal": gb.normal, "albedo": gb.albedo,
            "roughness": gb.roughness, "metallic": gb.metallic}
    for role in _GBUFFER_FILES:
        store_tensor(maps[role], out_dir / f"{role}.gigt",
                     meta=intrinsics_meta(role, gb.intrinsics))
    return out_dir


def load_gbuffer(path) -> GBuffer:
    path = Path(path)
    maps = {role: load_tensor(path / f"{role}.gigt") for role in _GBUFFER_FILES}
    meta = read_sidecar(path / "depth.gigt")
    if meta is None:
        raise FormatError(f"missing sidecar for {path / 'depth.gigt'}", offset=0)
    intr = intrinsics_from_meta(meta)
    depth = maps["depth"].astype(np.float64)
    mask = depth > 0
    depth[~mask] = np.inf
    return GBuffer(
        depth=depth,
        normal=maps["normal"].astype(np.float64),
        albedo=maps["albedo"].astype(np.float64),
        roughness=maps["roughness"].astype(np.float64),
        metallic=maps["metallic"].astype(np.float64),
        mask=mask,
        intrinsics=intr,
    )


def load_pfm(path) -> np.ndarray:
    """Read a PFM image ("PF" color / "Pf" gray); rows are stored bottom-first."""
    raw = Path(path).read_bytes()

    def token(start):
        while start < len(raw) and raw[start:start + 1].isspace():
            start += 1
        end = start
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        return raw[start:end], end + 1

    kind, pos = token(0)
    if kind not in (b"PF", b"Pf"):
        raise FormatError(f"not a PFM file (header {kind!r})", offset=0)
    wtok, pos = token(pos)
    htok, pos = token(pos)
    stok, pos = token(pos)
    w, h, scale = int(wtok), int(htok), float(stok)
    channels = 3 if kind == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    n = w * h * channels
    if len(raw) - pos < 4 * n:
        raise FormatError("truncated PFM payload", offset=len(raw))
    data = np.frombuffer(raw, dtype=dtype, count=n, offset=pos)
    img = data.reshape(h, w, channels).astype(np.float32)
    img = np.flipud(img)  # PFM stores the bottom row first
    return np.ascontiguousarray(img[..., 0] if channels == 1 else img)


def store_pfm(img: np.ndarray, path) -> Path:
    path = Path(path)
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        kind, data = b"Pf", img
    else:
        kind, data = b"PF", img
    with open(path, "wb") as f:
        f.write(kind + b"\n")
        f.write(f"{data.shape[1]} {data.shape[0]}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.flipud(data).astype("<f4").tobytes())
    return path


def export_png(img: np.ndarray, path, tonemap: str = "gamma22") -> Path:
    """Quantize a linear map to 8-bit PNG with the selected tone curve."""
    from PIL import Image

    x = np.asarray(img, dtype=np.float64)
    if tonemap == "reinhard":
        x = x / (1.0 + np.maximum(x, 0.0))
        x = np.clip(x, 0.0, 1.0) ** (1.0 / 2.2)
    elif tonemap == "gamma22":
        x = np.clip(x, 0.0, 1.0) ** (1.0 / 2.2)
    elif tonemap == "none":
        x = np.clip(x, 0.0, 1.0)
    else:
        raise ValueError(f"unknown tonemap {tonemap!r}")
    q = np.rint(x * 255.0).astype(np.uint8)
    mode = "L" if q.ndim == 2 else "RGB"
    Image.fromarray(q, mode=mode).save(Path(path))
    return Path(path)
