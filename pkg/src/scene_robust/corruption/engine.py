"""The 15 corruption transforms at 5 severity levels.

Every transform is a pure function of (pixels, parameters, seed): randomness
comes exclusively from a Philox generator keyed by the caller-supplied seed,
so corruption of a benchmark can be mapped over any number of workers without
affecting the output bytes.  Weather layers (snow, frost, fog) are generated
procedurally from the seeded RNG rather than from bundled texture assets, and
motion blur is an in-process angled line-kernel convolution; acceptance for
these is statistical, not golden-image.  All resampling is bilinear.
"""

from __future__ import annotations

import io
import math

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter, map_coordinates
from scipy.signal import fftconvolve

from ..errors import ContractError
from ..images import ImageBuffer
from ..seeds import rng_from
from .severity import CORRUPTION_KINDS, SeverityTable, load_severity_table

_DEFAULT_TABLE: SeverityTable | None = None


def default_severity_table() -> SeverityTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = load_severity_table()
    return _DEFAULT_TABLE


# ---------------------------------------------------------------------------
# shared image math
# ---------------------------------------------------------------------------


def _to_float(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float64) / 255.0


def _to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.clip(x, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Area-aligned bilinear resize for (H, W) or (H, W, C) arrays."""
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    h, w = img.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    out = (
        img[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
        + img[np.ix_(y0, x1)] * (1 - wy) * wx
        + img[np.ix_(y1, x0)] * wy * (1 - wx)
        + img[np.ix_(y1, x1)] * wy * wx
    )
    return out[..., 0] if squeeze else out


def _clipped_zoom(img: np.ndarray, factor: float) -> np.ndarray:
    """Zoom into the center by ``factor`` while keeping the original extent."""
    h, w = img.shape[:2]
    ch = max(1, int(math.ceil(h / factor)))
    cw = max(1, int(math.ceil(w / factor)))
    top = (h - ch) // 2
    left = (w - cw) // 2
    return _resize_bilinear(img[top : top + ch, left : left + cw], h, w)


def _convolve2d(channel: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    ph, pw = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(channel, ((ph, ph), (pw, pw)), mode="reflect")
    return fftconvolve(padded, kernel, mode="valid")


def _convolve_rgb(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return np.stack([_convolve2d(x[..., c], kernel) for c in range(3)], axis=-1)


def _rgb_to_gray(x: np.ndarray) -> np.ndarray:
    return x[..., 0] * 0.299 + x[..., 1] * 0.587 + x[..., 2] * 0.114


def _rgb_to_hsv(x: np.ndarray) -> np.ndarray:
    r, g, b = x[..., 0], x[..., 1], x[..., 2]
    maxc = x.max(axis=-1)
    minc = x.min(axis=-1)
    v = maxc
    span = maxc - minc
    s = np.where(maxc > 0, span / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(span > 0, span, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(span > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    choices = [
        (v, t, p),
        (q, v, p),
        (p, v, t),
        (p, q, v),
        (t, p, v),
        (v, p, q),
    ]
    r = np.select([i == k for k in range(6)], [c[0] for c in choices])
    g = np.select([i == k for k in range(6)], [c[1] for c in choices])
    b = np.select([i == k for k in range(6)], [c[2] for c in choices])
    return np.stack([r, g, b], axis=-1)


def _disk_kernel(radius: float, alias_blur: float) -> np.ndarray:
    if radius <= 8:
        coords = np.arange(-8, 9)
    else:
        r = int(radius)
        coords = np.arange(-r, r + 1)
    xx, yy = np.meshgrid(coords, coords)
    disk = ((xx**2 + yy**2) <= radius**2).astype(np.float64)
    disk /= disk.sum()
    if alias_blur > 0:
        disk = gaussian_filter(disk, sigma=alias_blur)
        disk /= disk.sum()
    return disk


def _line_kernel(radius: int, sigma: float, angle_deg: float) -> np.ndarray:
    """Gaussian-weighted line through the kernel center, bilinearly splatted."""
    size = 2 * radius + 1
    kernel = np.zeros((size, size))
    theta = math.radians(angle_deg)
    dy, dx = math.sin(theta), math.cos(theta)
    ts = np.arange(-radius, radius + 1e-9, 0.25)
    weights = np.exp(-(ts**2) / (2.0 * sigma**2))
    ys = radius + ts * dy
    xs = radius + ts * dx
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = ys - y0
    fx = xs - x0
    for oy, wy in ((0, 1 - fy), (1, fy)):
        for ox, wx in ((0, 1 - fx), (1, fx)):
            np.add.at(
                kernel,
                (np.clip(y0 + oy, 0, size - 1), np.clip(x0 + ox, 0, size - 1)),
                weights * wy * wx,
            )
    return kernel / kernel.sum()


def _plasma_fractal(rng: np.random.Generator, mapsize: int, decay: float) -> np.ndarray:
    """Diamond-square heightmap in [0, 1]; ``mapsize`` must be a power of two."""
    if mapsize & (mapsize - 1):
        raise ContractError(f"plasma map size must be a power of two, got {mapsize}")
    arr = np.zeros((mapsize, mapsize))
    stepsize = mapsize
    wibble = 100.0

    def wibbled(vals: np.ndarray) -> np.ndarray:
        return vals / 4.0 + rng.uniform(-wibble, wibble, vals.shape)

    while stepsize >= 2:
        half = stepsize // 2
        corner = arr[0:mapsize:stepsize, 0:mapsize:stepsize]
        acc = corner + np.roll(corner, -1, axis=0)
        acc = acc + np.roll(acc, -1, axis=1)
        arr[half::stepsize, half::stepsize] = wibbled(acc)

        center = arr[half::stepsize, half::stepsize]
        corner = arr[0:mapsize:stepsize, 0:mapsize:stepsize]
        left_top = center + np.roll(center, 1, axis=0) + corner + np.roll(corner, -1, axis=1)
        arr[0:mapsize:stepsize, half::stepsize] = wibbled(left_top)
        top_left = center + np.roll(center, 1, axis=1) + corner + np.roll(corner, -1, axis=0)
        arr[half::stepsize, 0:mapsize:stepsize] = wibbled(top_left)

        stepsize //= 2
        wibble /= decay

    arr -= arr.min()
    peak = arr.max()
    return arr / peak if peak > 0 else arr


def _plasma_for(rng: np.random.Generator, h: int, w: int, decay: float) -> np.ndarray:
    mapsize = 1 << max(1, math.ceil(math.log2(max(h, w))))
    return _plasma_fractal(rng, mapsize, decay)[:h, :w]


# ---------------------------------------------------------------------------
# the 15 transforms (float images in [0, 1])
# ---------------------------------------------------------------------------


def _gaussian_noise(x, rng, *, sigma):
    return x + rng.normal(0.0, sigma, size=x.shape)


def _shot_noise(x, rng, *, photons):
    return rng.poisson(x * photons).astype(np.float64) / photons


def _impulse_noise(x, rng, *, amount):
    u = rng.random(x.shape)
    out = x.copy()
    out[u < amount / 2.0] = 0.0
    out[(u >= amount / 2.0) & (u < amount)] = 1.0
    return out


def _defocus_blur(x, rng, *, radius, alias_blur):
    return _convolve_rgb(x, _disk_kernel(radius, alias_blur))


def _glass_blur(x, rng, *, sigma, max_delta, iterations):
    d = int(max_delta)
    out = gaussian_filter(x, sigma=(sigma, sigma, 0.0))
    h, w = out.shape[:2]
    for _ in range(int(iterations)):
        hs = np.arange(h - d, d, -1)
        ws = np.arange(w - d, d, -1)
        hh, ww = np.meshgrid(hs, ws, indexing="ij")
        dy = rng.integers(-d, d, size=hh.shape)
        dx = rng.integers(-d, d, size=hh.shape)
        hp, wp = hh + dy, ww + dx
        out[hh, ww], out[hp, wp] = out[hp, wp], out[hh, ww]
    return gaussian_filter(out, sigma=(sigma, sigma, 0.0))


def _motion_blur(x, rng, *, radius, sigma):
    angle = rng.uniform(-45.0, 45.0)
    return _convolve_rgb(x, _line_kernel(int(radius), sigma, angle))


def _zoom_blur(x, rng, *, max_zoom, step):
    factors = np.arange(1.0, max_zoom + 1e-9, step)
    out = np.zeros_like(x)
    for factor in factors:
        out += _clipped_zoom(x, factor)
    return (x + out) / (len(factors) + 1.0)


def _snow(x, rng, *, loc, scale, zoom, thresh, mb_radius, mb_sigma, retain):
    h, w = x.shape[:2]
    layer = rng.normal(loc, scale, size=(h, w))
    layer = _clipped_zoom(layer, zoom)
    layer[layer < thresh] = 0.0
    layer = np.clip(layer, 0.0, 1.0)
    angle = rng.uniform(-135.0, -45.0)
    layer = _convolve2d(layer, _line_kernel(int(mb_radius), mb_sigma, angle))
    gray = _rgb_to_gray(x)
    whitened = np.maximum(x, (gray * 1.5 + 0.5)[..., None])
    base = retain * x + (1.0 - retain) * whitened
    return base + layer[..., None] + np.rot90(layer, 2)[..., None]


def _frost(x, rng, *, retain, strength):
    h, w = x.shape[:2]
    coarse = _plasma_for(rng, h, w, decay=2.5)
    fine = _plasma_for(rng, h, w, decay=1.2)
    layer = np.clip(0.55 * coarse + 0.8 * fine**2, 0.0, 1.0)
    tint = np.array([0.9, 0.95, 1.0])
    return retain * x + strength * layer[..., None] * tint


def _fog(x, rng, *, strength, decay):
    h, w = x.shape[:2]
    plasma = _plasma_for(rng, h, w, decay)
    max_val = x.max()
    out = x + strength * plasma[..., None]
    return out * max_val / (max_val + strength)


def _brightness(x, rng, *, delta):
    hsv = _rgb_to_hsv(np.clip(x, 0.0, 1.0))
    hsv[..., 2] = np.clip(hsv[..., 2] + delta, 0.0, 1.0)
    return _hsv_to_rgb(hsv)


def _contrast(x, rng, *, factor):
    means = x.mean(axis=(0, 1), keepdims=True)
    return (x - means) * factor + means


def _elastic(x, rng, *, alpha_frac, sigma_frac, affine_frac):
    h, w = x.shape[:2]
    side = min(h, w)
    alpha = alpha_frac * side
    sigma = sigma_frac * side
    jitter = affine_frac * side

    # small random affine solved from three jittered control points
    center = np.array([h, w], dtype=np.float64) / 2.0
    square = side / 3.0
    pts_src = np.array(
        [center + square, [center[0] + square, center[1] - square], center - square]
    )
    pts_dst = pts_src + rng.uniform(-jitter, jitter, size=pts_src.shape)
    A = np.hstack([pts_dst, np.ones((3, 1))])  # solve pts_dst -> pts_src (inverse map)
    coef = np.linalg.solve(A, pts_src)  # (3, 2)

    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    src_r = rows * coef[0, 0] + cols * coef[1, 0] + coef[2, 0]
    src_c = rows * coef[0, 1] + cols * coef[1, 1] + coef[2, 1]
    warped = np.stack(
        [
            map_coordinates(x[..., c], [src_r, src_c], order=1, mode="mirror")
            for c in range(3)
        ],
        axis=-1,
    )

    dr = gaussian_filter(rng.uniform(-1, 1, size=(h, w)), sigma, mode="reflect", truncate=3) * alpha
    dc = gaussian_filter(rng.uniform(-1, 1, size=(h, w)), sigma, mode="reflect", truncate=3) * alpha
    return np.stack(
        [
            map_coordinates(warped[..., c], [rows + dr, cols + dc], order=1, mode="mirror")
            for c in range(3)
        ],
        axis=-1,
    )


def _pixelate(x, rng, *, factor):
    h, w = x.shape[:2]
    dh = max(1, int(h * factor))
    dw = max(1, int(w * factor))
    return _resize_bilinear(_resize_bilinear(x, dh, dw), h, w)


_FLOAT_KERNELS = {
    "gaussian_noise": _gaussian_noise,
    "shot_noise": _shot_noise,
    "impulse_noise": _impulse_noise,
    "defocus_blur": _defocus_blur,
    "glass_blur": _glass_blur,
    "motion_blur": _motion_blur,
    "zoom_blur": _zoom_blur,
    "snow": _snow,
    "frost": _frost,
    "fog": _fog,
    "brightness": _brightness,
    "contrast": _contrast,
    "elastic": _elastic,
    "pixelate": _pixelate,
}

assert set(_FLOAT_KERNELS) | {"jpeg"} == set(CORRUPTION_KINDS)


def _jpeg_roundtrip(pixels: np.ndarray, quality: int) -> np.ndarray:
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="JPEG", quality=quality)
    buf.seek(0)
    with Image.open(buf) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def apply_corruption(
    image: ImageBuffer,
    kind: str,
    level: int,
    seed: int,
    table: SeverityTable | None = None,
) -> ImageBuffer:
    """Corrupt one image; pure in (pixels, kind, level, seed).

    The output keeps the input's id and dimensions.  Kinds without inherent
    randomness never draw from the generator.
    """
    if table is None:
        table = default_severity_table()
    params = table.params(kind, level)
    rng = rng_from(seed)
    if kind == "jpeg":
        out = _jpeg_roundtrip(image.pixels, int(params["quality"]))
    else:
        out = _to_uint8(_FLOAT_KERNELS[kind](_to_float(image.pixels), rng, **params))
    return image.with_pixels(out)
