"""Controlled non-uniform blurring of the search image.

The search image is blurred repeatedly. After every pass each window is
compared with the same window of the original image; wherever that
fidelity drops below a quality bound the original block is copied back.
The efficient group size search is rerun on the repaired image and the
process continues while the estimated matching cost keeps dropping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate, correlate1d

from .autocorr import AutoCorrMap
from .egs import EGSResult, efficient_group_size
from .imagecore import WindowStats, as_image, running_sum, window_stats

DEFAULT_PROFILE = (0.05, 0.20, 0.50, 0.20, 0.05)


@dataclass(frozen=True)
class BlurKernel:
    """Normalised blur weights on a (2d + 1) x (2d + 1) support.

    When ``profile`` is set the kernel is separable: ``weights`` is the
    outer product of the profile with itself and blurring runs the profile
    along rows and then columns.
    """

    weights: np.ndarray
    radius: int
    profile: np.ndarray | None = None

    @property
    def is_identity(self) -> bool:
        c = self.radius
        return self.weights[c, c] == 1.0


def _normalised(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if np.any(a < 0) or not np.all(np.isfinite(a)) or a.sum() <= 0:
        raise ValueError("blur weights must be finite, non-negative and not all zero")
    return a / a.sum()


def profile_kernel(profile=DEFAULT_PROFILE) -> BlurKernel:
    """Separable kernel from an odd-length 1-D profile."""
    prof = _normalised(profile)
    if prof.ndim != 1 or prof.size % 2 == 0:
        raise ValueError("profile must be 1-D with odd length")
    return BlurKernel(weights=np.outer(prof, prof), radius=prof.size // 2, profile=prof)


def delta_kernel() -> BlurKernel:
    return profile_kernel((1.0,))


def gaussian_kernel(sigma_g: float, t_g: float, radius: int | None = None) -> BlurKernel:
    """Gaussian weights exp(-(i**2 + j**2) / (2 sigma_g**2)), normalised.

    The support radius defaults to ceil(sqrt(-2 sigma_g ln t_g)), where
    ``t_g`` is the smallest non-zero weight wanted; pass ``radius`` to set
    it directly.
    """
    if not sigma_g > 0:
        raise ValueError(f"sigma_g must be positive, got {sigma_g}")
    if not 0.0 < t_g < 1.0:
        raise ValueError(f"t_g must lie in (0, 1), got {t_g}")
    if radius is None:
        # round first so exact squares are not pushed up by fp noise
        d = math.ceil(round(math.sqrt(-2.0 * sigma_g * math.log(t_g)), 12))
    else:
        d = int(radius)
    d = max(d, 0)
    k = np.arange(-d, d + 1, dtype=np.float64)
    prof = np.exp(-(k * k) / (2.0 * sigma_g * sigma_g))
    prof = prof / prof.sum()
    return BlurKernel(weights=np.outer(prof, prof), radius=d, profile=prof)


def parse_kernel(text: str | None) -> BlurKernel:
    """``w:a,b,c`` (separable profile), ``gauss:sigma,t_g[,radius]`` or ``delta``."""
    if not text:
        return profile_kernel()
    kind, _, args = text.partition(":")
    kind = kind.strip().lower()
    try:
        values = [float(v) for v in args.split(",") if v.strip()]
    except ValueError as exc:
        raise ValueError(f"bad kernel spec {text!r}") from exc
    if kind == "delta":
        return delta_kernel()
    if kind == "w" and values:
        return profile_kernel(values)
    if kind == "gauss" and len(values) in (2, 3):
        radius = int(values[2]) if len(values) == 3 else None
        return gaussian_kernel(values[0], values[1], radius)
    raise ValueError(f"bad kernel spec {text!r}")


def blur(img, kernel: BlurKernel) -> np.ndarray:
    """Weighted neighbourhood average; borders replicate the edge pixels."""
    img = as_image(img)
    if kernel.radius == 0:
        return img.copy()
    if kernel.profile is not None:
        out = correlate1d(img, kernel.profile, axis=0, mode="nearest")
        return correlate1d(out, kernel.profile, axis=1, mode="nearest")
    return correlate(img, kernel.weights, mode="nearest")


def quality_threshold(rho_th: float, rho_max: float) -> float:
    """Minimum original-to-blurred window correlation that keeps a peak of
    height ``rho_max`` above the detection threshold ``rho_th``."""
    if not (0.0 <= rho_th <= 1.0 and 0.0 <= rho_max <= 1.0):
        raise ValueError("rho_th and rho_max must lie in [0, 1]")
    if rho_max < rho_th:
        raise ValueError(f"rho_max ({rho_max}) must not be below rho_th ({rho_th})")
    rad = 1.0 + rho_th * rho_th * rho_max * rho_max - (rho_th * rho_th + rho_max * rho_max)
    return rho_th * rho_max + math.sqrt(max(0.0, rad))


def blur_fidelity_map(img, blurred, m: int, n: int,
                      stats: WindowStats | None = None) -> np.ndarray:
    """Correlation between every window of ``img`` and the same window of
    ``blurred``, from running sums of the pointwise product. Flat windows
    on either side give 0."""
    img = as_image(img)
    blurred = as_image(blurred)
    if img.shape != blurred.shape:
        raise ValueError(f"shape mismatch: {img.shape} vs {blurred.shape}")
    if stats is None:
        stats = window_stats(img, m, n)
    bstats = window_stats(blurred, m, n)
    v = img - stats.offset
    b = blurred - bstats.offset
    soo = running_sum(v * b, m, n)
    den = stats.sigma * bstats.sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        fid = (soo - stats.sums * bstats.sums / float(m * n)) / den
    fid = np.where(den > 0.0, fid, 0.0)
    return np.clip(fid, -1.0, 1.0)


def block_cover(mask, m: int, n: int) -> np.ndarray:
    """Pixel mask of the union of the m x n blocks anchored at ``mask``."""
    mask = np.asarray(mask, dtype=np.float64)
    padded = np.pad(mask, ((m - 1, m - 1), (n - 1, n - 1)))
    return running_sum(padded, m, n) > 0.5


def unblur_violations(blurred, img, fid, lam: float):
    """Copy original m x n blocks back at every location with fidelity
    below ``lam``. All copies come from ``img`` and the mask is complete
    before anything is written, so overlapping blocks are harmless.

    Returns (repaired image, number of violating locations).
    """
    blurred = as_image(blurred)
    img = as_image(img)
    fid = np.asarray(fid)
    if img.shape != blurred.shape:
        raise ValueError("image shapes differ")
    m = img.shape[0] - fid.shape[0] + 1
    n = img.shape[1] - fid.shape[1] + 1
    if m < 1 or n < 1:
        raise ValueError("fidelity map larger than the image")
    viol = fid < lam
    return _restore_blocks(blurred, img, viol, m, n), int(np.count_nonzero(viol))


def _restore_blocks(blurred, img, viol, m, n):
    out = blurred.copy()
    if viol.any():
        cover = block_cover(viol, m, n)
        out[cover] = img[cover]
    return out


def changed_windows(img, other, m: int, n: int) -> np.ndarray:
    """Locations whose window differs anywhere between the two images."""
    diff = (np.asarray(img) != np.asarray(other)).astype(np.float64)
    return running_sum(diff, m, n) > 0.5


def repair(img, blurred, m: int, n: int, lam: float,
           stats: WindowStats | None = None, max_passes: int = 100):
    """Unblur until every window that differs from the original has
    fidelity >= lam.

    A single pass can lower the fidelity of a neighbour whose window now
    mixes blurred and restored pixels, so passes repeat until none is
    left. Returns (image, restored-location count over all passes).
    """
    if stats is None:
        stats = window_stats(img, m, n)
    total = 0
    out = blurred
    for _ in range(max_passes):
        fid = blur_fidelity_map(img, out, m, n, stats)
        viol = (fid < lam) & changed_windows(img, out, m, n)
        if not viol.any():
            return out, total
        out = _restore_blocks(out, img, viol, m, n)
        total += int(np.count_nonzero(viol))
    raise RuntimeError("fidelity repair did not converge")


@dataclass
class OptAIteration:
    cost: float
    h: int
    w: int
    restored: int
    accepted: bool

    def to_dict(self) -> dict:
        return {"cost": self.cost, "h": self.h, "w": self.w,
                "restored": self.restored, "accepted": self.accepted}


@dataclass
class OptAResult:
    image: np.ndarray = field(repr=False)
    h: int
    w: int
    autocorr: AutoCorrMap = field(repr=False)
    egs: EGSResult = field(repr=False)
    cost: float
    lam: float
    # blur passes baked into ``image``
    blur_passes: int
    kernel: BlurKernel = field(repr=False)
    trace: list[OptAIteration] = field(default_factory=list)
    first_egs: EGSResult | None = field(default=None, repr=False)

    @property
    def kappa(self) -> int:
        """Iterations run, including the initial group-size search."""
        return len(self.trace)

    @property
    def support_radius(self) -> int:
        """Radius of the combined support of all accepted blur passes."""
        return self.kernel.radius * self.blur_passes

    def to_dict(self) -> dict:
        return {"h_e": self.h, "w_e": self.w, "cost": self.cost,
                "kappa": self.kappa, "lambda": self.lam,
                "blur_passes": self.blur_passes,
                "restored_counts": [it.restored for it in self.trace],
                "trace": [it.to_dict() for it in self.trace]}


def optimize_autocorrelation(img, m: int, n: int, rho_th: float = 0.8,
                             rho_max: float = 0.95, kernel: BlurKernel | None = None,
                             h0: int = 3, w0: int = 3, xi_fraction: float = 0.005,
                             stop_fraction: float = 0.005, max_iter: int = 50,
                             stats: WindowStats | None = None,
                             max_size: int | None = None) -> OptAResult:
    """Blur, repair and re-estimate the group size until the estimated cost
    stops improving by at least ``stop_fraction`` of the new cost.

    Fidelity is always measured against the original ``img``. Each
    group-size search starts from the previously accepted size.
    """
    img = as_image(img)
    kernel = profile_kernel() if kernel is None else kernel
    lam = quality_threshold(rho_th, rho_max)
    if stats is None:
        stats = window_stats(img, m, n)

    egs = efficient_group_size(img, m, n, h0, w0, rho_th, xi_fraction, stats, max_size)
    state = OptAResult(image=img, h=egs.h, w=egs.w, autocorr=egs.autocorr, egs=egs,
                       cost=egs.cost.total, lam=lam, blur_passes=0, kernel=kernel,
                       trace=[OptAIteration(egs.cost.total, egs.h, egs.w, 0, True)],
                       first_egs=egs)
    current = img
    for _ in range(max_iter):
        candidate, restored = repair(img, blur(current, kernel), m, n, lam, stats)
        nxt = efficient_group_size(candidate, m, n, state.h, state.w, rho_th,
                                   xi_fraction, None, max_size)
        cost = nxt.cost.total
        gain = state.cost - cost
        accepted = gain > 0 and gain >= stop_fraction * cost
        state.trace.append(OptAIteration(cost, nxt.h, nxt.w, restored, accepted))
        if not accepted:
            break
        current = candidate
        state.image, state.h, state.w = candidate, nxt.h, nxt.w
        state.autocorr, state.egs, state.cost = nxt.autocorr, nxt, cost
        state.blur_passes += 1
    return state
