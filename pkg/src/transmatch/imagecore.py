"""Images, running sums, window statistics and the correlation coefficient.

Images are 2-D float64 numpy arrays indexed ``[row, col]`` with the origin
at the top-left. A template of shape (m, n) placed with its top-left corner
at (x, y) of a (p, q) image is valid for ``0 <= x <= p - m`` and
``0 <= y <= q - n``; that (p - m + 1) x (q - n + 1) set is the search
extent. No padding is ever used when matching.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError
from scipy.ndimage import maximum_filter, minimum_filter

from . import _kernels


class ImageFormatError(ValueError):
    """Raised for unreadable, malformed or unsupported image files."""


def as_image(a) -> np.ndarray:
    """Return ``a`` as a C-contiguous 2-D float64 array, validating shape."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must have at least one row and one column")
    return arr


def load_image(path) -> np.ndarray:
    """Read an 8-bit grayscale PGM (P5) or PNG file as a float64 array.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ImageFormatError
        For truncated or otherwise malformed files, colour images, and bit
        depths other than 8.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        with PILImage.open(path) as im:
            if im.format not in ("PPM", "PNG"):
                raise ImageFormatError(f"unsupported image format {im.format!r}: {path}")
            if im.mode != "L":
                raise ImageFormatError(
                    f"expected 8-bit grayscale, got mode {im.mode!r}: {path}")
            im.load()
            arr = np.asarray(im, dtype=np.float64)
    except ImageFormatError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"malformed image {path}: {exc}") from exc
    if arr.ndim != 2 or arr.size == 0:
        raise ImageFormatError(f"malformed image {path}: zero-dimension image")
    return np.ascontiguousarray(arr)


def save_image(path, img) -> None:
    """Write ``img`` as 8-bit grayscale; format from the suffix (.pgm/.png).

    Values are rounded and clipped to 0..255.
    """
    path = Path(path)
    arr = np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        fmt = "PPM"
    elif suffix == ".png":
        fmt = "PNG"
    else:
        raise ImageFormatError(f"unsupported output suffix {path.suffix!r}")
    PILImage.fromarray(arr, mode="L").save(path, format=fmt)


def _check_window(shape, m: int, n: int) -> None:
    if m < 1 or n < 1:
        raise ValueError(f"window size must be positive, got {m}x{n}")
    if m > shape[0] or n > shape[1]:
        raise ValueError(
            f"window {m}x{n} is larger than source {shape[0]}x{shape[1]}")


def running_sum(src, m: int, n: int) -> np.ndarray:
    """Sum of every m x n window of ``src``.

    Entry (x, y) of the (p - m + 1, q - n + 1) result is the sum of the
    window whose top-left corner is (x, y). A prefix table with a leading
    zero row and column is built once; each window then costs four reads.

    >>> running_sum(np.ones((4, 4)), 2, 2)
    array([[4., 4., 4.],
           [4., 4., 4.],
           [4., 4., 4.]])
    """
    src = np.asarray(src, dtype=np.float64)
    if src.ndim != 2:
        raise ValueError("running_sum expects a 2-D array")
    _check_window(src.shape, m, n)
    table = np.zeros((src.shape[0] + 1, src.shape[1] + 1))
    np.cumsum(src, axis=0, out=table[1:, 1:])
    np.cumsum(table[1:, 1:], axis=1, out=table[1:, 1:])
    return table[m:, n:] - table[:-m, n:] - table[m:, :-n] + table[:-m, :-n]


@dataclass(frozen=True)
class WindowStats:
    """Per-window mean and zero-mean norm over the search extent.

    ``sigma[x, y]`` is sqrt(sum((v - mean)**2)) over the window at (x, y);
    it is exactly 0 for constant windows and only for those.
    """

    mean: np.ndarray
    sigma: np.ndarray
    m: int
    n: int
    # integer shift subtracted before summing; keeps the sums small
    offset: float = 0.0
    sums: np.ndarray = field(default=None, repr=False)

    @property
    def flat(self) -> np.ndarray:
        return self.sigma == 0.0


def _centering_offset(img: np.ndarray) -> float:
    # An integer shift keeps integer-valued images exactly representable.
    return float(np.rint(img.mean()))


def constant_windows(img, m: int, n: int) -> np.ndarray:
    """Boolean map of the windows whose pixels are all equal."""
    img = as_image(img)
    _check_window(img.shape, m, n)
    # filters are centred; shift the origin so output (x, y) covers the
    # window starting at (x, y)
    origin = (-(m // 2), -(n // 2))
    hi = maximum_filter(img, size=(m, n), origin=origin, mode="nearest")
    lo = minimum_filter(img, size=(m, n), origin=origin, mode="nearest")
    pe, qe = img.shape[0] - m + 1, img.shape[1] - n + 1
    return (hi == lo)[:pe, :qe]


def window_stats(img, m: int, n: int) -> WindowStats:
    """Means and zero-mean norms of every m x n window of ``img``.

    The norm is sqrt(max(0, Q - S**2 / mn)) with S, Q the running sums of
    the (shifted) intensities and their squares. Constant windows are
    detected exactly and get a norm of 0.
    """
    img = as_image(img)
    _check_window(img.shape, m, n)
    offset = _centering_offset(img)
    v = img - offset
    s = running_sum(v, m, n)
    qsum = running_sum(v * v, m, n)
    mn = float(m * n)
    var = np.maximum(qsum - s * s / mn, 0.0)
    sigma = np.sqrt(var)
    sigma[constant_windows(img, m, n)] = 0.0
    return WindowStats(mean=s / mn + offset, sigma=sigma, m=m, n=n,
                       offset=offset, sums=s)


def zncc(a, b) -> float:
    """Correlation coefficient of two equally shaped windows.

    Flat (constant) inputs give 0. The result is clamped to [-1, 1].

    >>> t = np.arange(12.0).reshape(3, 4) ** 1.5
    >>> round(zncc(t, 3 * t + 7), 12)
    1.0
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty windows")
    if np.all(a == a.flat[0]) or np.all(b == b.flat[0]):
        return 0.0
    az = a - a.mean()
    bz = b - b.mean()
    num = np.sum(az * bz)
    den = np.sqrt(np.sum(az * az)) * np.sqrt(np.sum(bz * bz))
    if den == 0.0:
        return 0.0
    return float(min(1.0, max(-1.0, num / den)))


@dataclass(frozen=True)
class PreparedTemplate:
    """Zero-mean template and its norm, ready for repeated evaluation."""

    zero_mean: np.ndarray
    sigma: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.zero_mean.shape


def prepare_template(t) -> PreparedTemplate:
    """A flat template correlates to 0 everywhere, like a flat window: its
    norm is stored as inf so every kernel division yields exactly 0."""
    t = as_image(t)
    if np.all(t == t.flat[0]):
        return PreparedTemplate(zero_mean=np.zeros(t.shape), sigma=math.inf)
    tz = np.ascontiguousarray(t - t.mean())
    return PreparedTemplate(zero_mean=tz, sigma=float(np.sqrt(np.sum(tz * tz))))


def best_location(values, flat=None, evaluated=None):
    """Positional argmax of a correlation surface.

    Ties go to the smallest row, then column. Flat locations only win when
    every considered location is flat. ``evaluated`` restricts the search
    to a subset. Returns ((row, col), value).
    """
    values = np.asarray(values)
    consider = np.ones(values.shape, bool) if evaluated is None else np.asarray(evaluated, bool)
    if not consider.any():
        raise ValueError("no evaluated locations")
    pool = consider if flat is None else consider & ~flat
    if not pool.any():
        pool = consider
    masked = np.where(pool, values, -np.inf)
    idx = int(np.argmax(masked))  # argmax returns the first maximum in C order
    loc = np.unravel_index(idx, values.shape)
    return (int(loc[0]), int(loc[1])), float(values[loc])


@dataclass
class MatchStats:
    centers: int
    eliminated: int
    retained: int
    extent: int
    ops: int
    ms: float = 0.0

    @property
    def elim_pct(self) -> float:
        return 100.0 * self.eliminated / self.extent if self.extent else 0.0

    def to_dict(self) -> dict:
        return {"centers": self.centers, "eliminated": self.eliminated,
                "retained": self.retained, "elim_pct": self.elim_pct,
                "ops": self.ops, "ms": self.ms}


@dataclass
class MatchResult:
    """Outcome of a search.

    ``location``/``rho`` is the best location in the searched image;
    ``refined``/``refined_rho`` is the final answer after the localisation
    stage (equal to the best location in modes without that stage).
    """

    mode: str
    location: tuple[int, int]
    rho: float
    stats: MatchStats
    refined: tuple[int, int] | None = None
    refined_rho: float | None = None
    rho_tb: float | None = None
    threshold: float | None = None
    group_size: tuple[int, int] | None = None
    kappa: int | None = None
    surface: np.ndarray | None = field(default=None, repr=False)
    evaluated: np.ndarray | None = field(default=None, repr=False)
    eliminated: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.refined is None:
            self.refined = self.location
            self.refined_rho = self.rho

    @property
    def below_threshold(self) -> bool:
        return self.threshold is not None and self.refined_rho < self.threshold

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "best": {"row": self.location[0], "col": self.location[1], "rho": self.rho},
            "refined": {"row": self.refined[0], "col": self.refined[1],
                        "rho": self.refined_rho},
            "stats": self.stats.to_dict(),
            "below_threshold": self.below_threshold,
        }
        if self.rho_tb is not None:
            out["rho_tb"] = self.rho_tb
        if self.threshold is not None:
            out["threshold"] = self.threshold
        if self.group_size is not None:
            out["group_size"] = list(self.group_size)
        if self.kappa is not None:
            out["kappa"] = self.kappa
        return out


def _check_fits(t_shape, i_shape) -> None:
    if t_shape[0] > i_shape[0] or t_shape[1] > i_shape[1]:
        raise ValueError(
            f"template {t_shape[0]}x{t_shape[1]} does not fit in search image "
            f"{i_shape[0]}x{i_shape[1]}")


def correlation_surface(t, img, stats: WindowStats | None = None) -> np.ndarray:
    """Correlation coefficient at every location of the search extent."""
    img = as_image(img)
    t = as_image(t)
    _check_fits(t.shape, img.shape)
    pt = prepare_template(t)
    if stats is None:
        stats = window_stats(img, *t.shape)
    return _kernels.corr_surface(pt.zero_mean, pt.sigma, img, stats.sigma)


def brute_force_match(t, img, stats: WindowStats | None = None,
                      keep_surface: bool = False) -> MatchResult:
    """Exhaustive search: evaluate every location and take the argmax."""
    start = time.perf_counter()
    img = as_image(img)
    t = as_image(t)
    _check_fits(t.shape, img.shape)
    if stats is None:
        stats = window_stats(img, *t.shape)
    surface = correlation_surface(t, img, stats)
    loc, rho = best_location(surface, stats.flat)
    extent = surface.size
    ms = 1e3 * (time.perf_counter() - start)
    result = MatchResult(
        mode="brute", location=loc, rho=rho, rho_tb=rho,
        stats=MatchStats(centers=extent, eliminated=0, retained=0,
                         extent=extent, ops=extent, ms=ms),
        group_size=(1, 1))
    if keep_surface:
        result.surface = surface
    return result
