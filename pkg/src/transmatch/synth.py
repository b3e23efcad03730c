"""Synthetic search images and planted templates.

Search images are white noise smoothed with a Gaussian, optionally mixed
with a finer-grained field whose strength varies slowly across the image,
so that some regions are smooth and others detailed. Values are scaled to
0..255 and rounded, like an 8-bit sensor image.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .imagecore import save_image


@dataclass
class SynthSpec:
    count: int = 4
    height: int = 512
    width: int = 512
    # Gaussian sigma of the base field; a (lo, hi) pair draws one per image
    smoothness: float | tuple[float, float] = (1.5, 3.5)
    detail: float = 0.5
    template_sizes: tuple[int, ...] = (21, 41, 61)
    per_size: int = 5
    gain: float = 1.0
    offset: float = 0.0
    seed: int = 0
    fmt: str = "pgm"


@dataclass
class Planting:
    image: int
    size: int
    row: int
    col: int
    gain: float = 1.0
    offset: float = 0.0
    path: str | None = None


@dataclass
class Corpus:
    images: list[np.ndarray]
    plantings: list[Planting]
    templates: list[np.ndarray]
    sigmas: list[float] = field(default_factory=list)


def _unit(a: np.ndarray) -> np.ndarray:
    a = a - a.mean()
    sd = a.std()
    return a / sd if sd > 0 else a


def smooth_noise_image(shape, smoothness: float, rng: np.random.Generator,
                       detail: float = 0.0) -> np.ndarray:
    """One 8-bit valued search image (float64 array with integer values)."""
    base = _unit(gaussian_filter(rng.standard_normal(shape), smoothness, mode="wrap"))
    if detail > 0:
        fine = _unit(gaussian_filter(rng.standard_normal(shape),
                                     max(0.6, smoothness / 3.0), mode="wrap"))
        mask = _unit(gaussian_filter(rng.standard_normal(shape),
                                     max(shape) / 16.0, mode="wrap"))
        mask = 1.0 / (1.0 + np.exp(-3.0 * mask))
        base = base + detail * mask * fine
    lo, hi = base.min(), base.max()
    return np.rint(255.0 * (base - lo) / (hi - lo))


def perturb(template: np.ndarray, gain: float = 1.0, offset: float = 0.0) -> np.ndarray:
    """Apply gain/offset and requantise to 0..255.

    If the result would leave 0..255 it is squeezed back with one more
    affine map, so up to rounding the output stays an affine function of
    the input.
    """
    out = gain * np.asarray(template, dtype=np.float64) + offset
    lo, hi = out.min(), out.max()
    if lo < 0 or hi > 255:
        scale = min(1.0, 255.0 / (hi - lo)) if hi > lo else 1.0
        out = (out - lo) * scale
        out += max(0.0, min(-out.min(), 255.0 - out.max()))
    return np.clip(np.rint(out), 0, 255)


def make_corpus(spec: SynthSpec) -> Corpus:
    """Generate images and plantings in memory; deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    images, sigmas = [], []
    for _ in range(spec.count):
        if isinstance(spec.smoothness, (tuple, list)):
            sigma = float(rng.uniform(*spec.smoothness))
        else:
            sigma = float(spec.smoothness)
        sigmas.append(sigma)
        images.append(smooth_noise_image((spec.height, spec.width), sigma, rng, spec.detail))
    plantings, templates = [], []
    for k, img in enumerate(images):
        for size in spec.template_sizes:
            if size > min(img.shape):
                raise ValueError(f"template size {size} does not fit image {img.shape}")
            for _ in range(spec.per_size):
                r = int(rng.integers(0, img.shape[0] - size + 1))
                c = int(rng.integers(0, img.shape[1] - size + 1))
                t = img[r:r + size, c:c + size]
                if spec.gain != 1.0 or spec.offset != 0.0:
                    t = perturb(t, spec.gain, spec.offset)
                plantings.append(Planting(image=k, size=size, row=r, col=c,
                                          gain=spec.gain, offset=spec.offset))
                templates.append(np.array(t, dtype=np.float64))
    return Corpus(images=images, plantings=plantings, templates=templates, sigmas=sigmas)


def write_corpus(spec: SynthSpec, out_dir) -> dict:
    """Write images, templates and ``manifest.json`` under ``out_dir``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "templates").mkdir(parents=True, exist_ok=True)
    corpus = make_corpus(spec)
    ext = "." + spec.fmt.lower().lstrip(".")
    image_paths = []
    for k, img in enumerate(corpus.images):
        rel = f"images/img_{k:03d}{ext}"
        save_image(out / rel, img)
        image_paths.append(rel)
    counters: dict[tuple[int, int], int] = {}
    for p, t in zip(corpus.plantings, corpus.templates):
        idx = counters.get((p.image, p.size), 0)
        counters[(p.image, p.size)] = idx + 1
        p.path = f"templates/img_{p.image:03d}_m{p.size}_{idx:02d}{ext}"
        save_image(out / p.path, t)
    spec_dict = asdict(spec)
    spec_dict["template_sizes"] = list(spec.template_sizes)
    if isinstance(spec.smoothness, (tuple, list)):
        spec_dict["smoothness"] = list(spec.smoothness)
    manifest = {"spec": spec_dict, "images": image_paths, "sigmas": corpus.sigmas,
                "templates": [asdict(p) for p in corpus.plantings]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
