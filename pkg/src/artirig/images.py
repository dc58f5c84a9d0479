"""Image file IO: binary PPM previews and raw float32 channel dumps.

PPM (P6, 8-bit) holds display copies of color and silhouette renders.  Any
float-valued channels (flow, features, and the lossless copies of color and
silhouette used for numeric checks) are stored as raw little-endian f32,
row-major and channel-interleaved, beside a JSON sidecar
{width, height, channels, dtype: "f32le"}.
"""

from __future__ import annotations

import json
import pathlib

import numpy as np


class ImageFormatError(ValueError):
    pass


def write_ppm(path, img: np.ndarray):
    """img: (H, W, 3) floats in [0,1] or (H, W) grayscale, quantized to 8 bit."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageFormatError(f"expected (H, W, 3), got {img.shape}")
    h, w = img.shape[:2]
    b = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(b.tobytes())


def read_ppm(path) -> np.ndarray:
    """Returns (H, W, 3) floats in [0,1]."""
    data = pathlib.Path(path).read_bytes()
    fields: list[bytes] = []
    i = 0
    while len(fields) < 4:
        # header tokens may be separated by whitespace or comment lines
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        fields.append(data[i:j])
        i = j
    if fields[0] != b"P6":
        raise ImageFormatError(f"not a P6 PPM: magic {fields[0]!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval}")
    i += 1  # single whitespace byte after maxval
    pix = np.frombuffer(data[i : i + w * h * 3], dtype=np.uint8)
    if pix.size != w * h * 3:
        raise ImageFormatError("truncated pixel data")
    return pix.reshape(h, w, 3).astype(np.float64) / 255.0


def write_f32(path, arr: np.ndarray):
    """Raw little-endian float32 with JSON sidecar at <path>.json."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise ImageFormatError(f"expected (H, W[, C]), got {arr.shape}")
    h, w, c = arr.shape
    with open(path, "wb") as f:
        f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    sidecar = {"width": w, "height": h, "channels": c, "dtype": "f32le"}
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f)


def read_f32(path) -> np.ndarray:
    """Returns (H, W, C) float64 view of the stored f32 data."""
    try:
        with open(str(path) + ".json") as f:
            meta = json.load(f)
    except FileNotFoundError as e:
        raise ImageFormatError(f"missing sidecar for {path}") from e
    if meta.get("dtype") != "f32le":
        raise ImageFormatError(f"unsupported dtype {meta.get('dtype')!r}")
    w, h, c = meta["width"], meta["height"], meta["channels"]
    raw = pathlib.Path(path).read_bytes()
    arr = np.frombuffer(raw, dtype="<f4")
    if arr.size != w * h * c:
        raise ImageFormatError(
            f"size mismatch: sidecar says {h}x{w}x{c}, file has {arr.size} values")
    return arr.reshape(h, w, c).astype(np.float64)
