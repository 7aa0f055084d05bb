"""Color images as pure quaternion matrices, corruption models and metrics.

A pixel ``(R, G, B)`` is stored as ``R i + G j + B k``; the real part is
unused. Channel values live in ``[0, 1]`` and metrics use peak 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quaternion import QuatMatrix

SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class ColorImage:
    """``h x w`` RGB image with float channels in ``[0, 1]``.

    Parameters
    ----------
    rgb : array_like
        Array of shape ``(h, w, 3)``. Values outside ``[0, 1]`` are clamped.
    """

    __slots__ = ("_rgb",)

    def __init__(self, rgb):
        arr = np.array(rgb, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected an (h, w, 3) array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image dimensions must be positive")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        np.clip(arr, 0.0, 1.0, out=arr)
        arr.flags.writeable = False
        self._rgb = arr

    @classmethod
    def from_channels(cls, r, g, b) -> ColorImage:
        return cls(np.stack([r, g, b], axis=-1))

    @property
    def rgb(self) -> np.ndarray:
        return self._rgb

    @property
    def height(self) -> int:
        return self._rgb.shape[0]

    @property
    def width(self) -> int:
        return self._rgb.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._rgb.shape[0], self._rgb.shape[1]

    @property
    def R(self) -> np.ndarray:
        return self._rgb[..., 0]

    @property
    def G(self) -> np.ndarray:
        return self._rgb[..., 1]

    @property
    def B(self) -> np.ndarray:
        return self._rgb[..., 2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ColorImage):
            return NotImplemented
        return bool(np.array_equal(self._rgb, other._rgb))

    __hash__ = None

    def __repr__(self) -> str:
        return f"ColorImage({self.height}x{self.width})"


def image_to_quat(img: ColorImage) -> QuatMatrix:
    """``0 + R i + G j + B k``."""
    return QuatMatrix.from_components(np.zeros(img.shape), img.R, img.G, img.B)


def quat_to_image(q: QuatMatrix) -> ColorImage:
    """Inverse of :func:`image_to_quat`; drops the real part and clamps."""
    return ColorImage(np.stack([q.x, q.y, q.z], axis=-1))


def _as_rgb(u) -> np.ndarray:
    if isinstance(u, ColorImage):
        return u.rgb
    if isinstance(u, QuatMatrix):
        return np.stack([u.x, u.y, u.z], axis=-1)
    arr = np.asarray(u, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise ValueError(f"expected an image array, got shape {arr.shape}")
    return arr


def _pair(u, v):
    a, b = _as_rgb(u), _as_rgb(v)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(u, uhat) -> float:
    a, b = _pair(u, uhat)
    return float(np.mean((a - b) ** 2))


def psnr(u, uhat, peak: float = 1.0) -> float:
    """``10 log10(peak**2 / MSE)`` over all pixels and channels.

    Returns ``math.inf`` for identical inputs.
    """
    err = mse(u, uhat)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def ssim(u, uhat, peak: float = 1.0, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all ``window x window`` patches (unit stride) and channels.

    Uses the stabilisers ``c1 = (0.01 peak)**2`` and ``c2 = (0.03 peak)**2``
    and population statistics within each window. Images smaller than the
    window are treated as a single window.
    """
    a, b = _pair(u, uhat)
    h, w, _ = a.shape
    wh, ww = min(window, h), min(window, w)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    view = np.lib.stride_tricks.sliding_window_view
    pa = view(a, (wh, ww), axis=(0, 1))
    pb = view(b, (wh, ww), axis=(0, 1))
    mu_a = pa.mean(axis=(-2, -1))
    mu_b = pb.mean(axis=(-2, -1))
    da = pa - mu_a[..., None, None]
    db = pb - mu_b[..., None, None]
    var_a = (da * da).mean(axis=(-2, -1))
    var_b = (db * db).mean(axis=(-2, -1))
    cov = (da * db).mean(axis=(-2, -1))
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class CorruptionSpec:
    """Missing-pixel and impulse-noise rates for :func:`corrupt_image`.

    ``impulse`` selects the noise values: ``"random"`` draws each channel
    uniformly from ``[0, 1]``, ``"salt-pepper"`` picks each channel from
    ``{0, 1}``.
    """

    miss_rate: float = 0.0
    impulse_rate: float = 0.0
    seed: int = 0
    impulse: str = "random"

    def __post_init__(self):
        for name in ("miss_rate", "impulse_rate"):
            val = getattr(self, name)
            if not 0.0 <= val < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {val}")
        if self.impulse not in ("random", "salt-pepper"):
            raise ValueError(f"unknown impulse model {self.impulse!r}")


def corrupt_image(img: ColorImage, spec: CorruptionSpec, mask=None):
    """Hide pixels and add impulse noise.

    Exactly ``round(miss_rate * h * w)`` pixels are dropped (all channels),
    then ``round(impulse_rate * h * w)`` of the remaining pixels get impulse
    values on all channels. A user ``mask`` (True = observed) replaces the
    random missing pattern.

    Returns
    -------
    observed : QuatMatrix
        Corrupted image, zero at missing pixels.
    mask : ndarray of bool
        Observation mask.
    truth : QuatMatrix
        Clean image.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = img.shape
    size = h * w
    if mask is None:
        n_miss = round(spec.miss_rate * size)
        keep = np.ones(size, dtype=bool)
        keep[rng.choice(size, n_miss, replace=False)] = False
    else:
        keep = np.asarray(mask, dtype=bool)
        if keep.shape != (h, w):
            raise ValueError(f"dimension mismatch: mask {keep.shape} vs image {(h, w)}")
        keep = keep.ravel().copy()
    observed = np.flatnonzero(keep)
    if observed.size == 0:
        raise ValueError("corruption leaves no observed pixels")
    n_imp = round(spec.impulse_rate * size)
    if n_imp > observed.size:
        raise ValueError("impulse count exceeds the number of observed pixels")
    hit = rng.choice(observed, n_imp, replace=False)
    rgb = img.rgb.reshape(size, 3).copy()
    if spec.impulse == "random":
        rgb[hit] = rng.uniform(0.0, 1.0, size=(n_imp, 3))
    else:
        rgb[hit] = rng.integers(0, 2, size=(n_imp, 3)).astype(float)
    rgb[~keep] = 0.0
    truth = image_to_quat(img)
    obs = QuatMatrix.from_components(np.zeros((h, w)), *(rgb[:, c].reshape(h, w) for c in range(3)))
    return obs, keep.reshape(h, w), truth


def synthetic_lowrank_image(size: int = 64, rank: int = 4, seed=0) -> ColorImage:
    """Smooth color image whose quaternion matrix has rank at most ``rank + 1``.

    All channels share the same smooth nonnegative row and column factors,
    so ``R i + G j + B k = U (Cr i + Cg j + Cb k) V^T`` with ``r x r`` blocks.
    """
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, size)

    def factors():
        centers = rng.uniform(0.0, 1.0, rank)
        widths = rng.uniform(0.15, 0.5, rank)
        return np.exp(-((grid[:, None] - centers) ** 2) / (2 * widths**2))

    u, v = factors(), factors()
    chans = []
    for _ in range(3):
        coef = rng.uniform(0.0, 1.0, (rank, rank))
        chans.append(u @ coef @ v.T)
    rgb = np.stack(chans, axis=-1)
    rgb = 0.05 + 0.9 * rgb / rgb.max()
    # the offset adds one rank-one term
    return ColorImage(rgb)


def read_png(path) -> ColorImage:
    """8-bit RGB(A) PNG -> image scaled by 1/255; alpha is ignored."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return ColorImage(arr / 255.0)


def write_png(img: ColorImage, path) -> None:
    """Round to nearest 8-bit level and save as RGB PNG."""
    from PIL import Image

    arr = np.rint(img.rgb * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_mask(path, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Mask PNG where white (>= 128 on the gray scale) marks observed pixels."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    mask = arr >= 128
    if shape is not None and mask.shape != tuple(shape):
        raise ValueError(f"dimension mismatch: mask {mask.shape} vs image {tuple(shape)}")
    return mask
