"""Benchmark sweeps over search images, template sizes and modes.

Templates are cut from the search images at seeded random locations; the
cut location is the ground truth every mode is scored against. A match
counts as correct when it lies within +/-4 pixels of the ground truth in
both coordinates.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .blur import parse_kernel
from .imagecore import load_image
from .matcher import MODES, MatchParams, match, prepare
from .synth import perturb

log = logging.getLogger(__name__)

TOLERANCE = 4
CSV_COLUMNS = ("size", "mode", "time_ms", "elim_pct", "accuracy_pct", "ops")


@dataclass
class BenchConfig:
    images: list[str] = field(default_factory=list)
    sizes: list[int] = field(default_factory=lambda: [21, 41])
    per_size: int = 5
    modes: list[str] = field(default_factory=lambda: ["brute", "egs", "opta"])
    rho_th: float = 0.8
    rho_max: float = 0.95
    kernel: str = "w:0.05,0.20,0.50,0.20,0.05"
    xi_fraction: float = 0.005
    threshold: float | None = None
    gain: float = 1.0
    offset: float = 0.0
    seed: int = 0
    csv_path: str | None = None
    json_path: str | None = None


def _validate(cfg: BenchConfig, images: list[np.ndarray]) -> None:
    if not cfg.sizes:
        raise ValueError("template size list is empty")
    if cfg.per_size < 1:
        raise ValueError("per_size must be at least 1")
    bad = [m for m in cfg.modes if m not in MODES]
    if bad or not cfg.modes:
        raise ValueError(f"unknown or missing modes {bad}; expected some of {MODES}")
    if not images:
        raise ValueError("no search images")
    smallest = min(min(img.shape) for img in images)
    too_big = [m for m in cfg.sizes if m > smallest]
    if too_big:
        raise ValueError(f"template sizes {too_big} do not fit the smallest image ({smallest})")


def load_images(paths) -> list[np.ndarray]:
    paths = [Path(p) for p in paths]
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise FileNotFoundError(f"corpus missing: {', '.join(missing)}")
    return [load_image(p) for p in paths]


def run_bench(cfg: BenchConfig, images: list[np.ndarray] | None = None) -> dict:
    """Run the sweep and return ``{"rows": [...], "runs": [...]}``.

    ``images`` overrides loading ``cfg.images`` from disk.
    """
    if images is None:
        images = load_images(cfg.images)
    _validate(cfg, images)
    params = MatchParams(rho_th=cfg.rho_th, rho_max=cfg.rho_max,
                         kernel=parse_kernel(cfg.kernel), xi_fraction=cfg.xi_fraction,
                         rho_tb_init=cfg.threshold)
    rng = np.random.default_rng(cfg.seed)
    runs = []
    for k, img in enumerate(images):
        for m in cfg.sizes:
            truths = [(int(rng.integers(0, img.shape[0] - m + 1)),
                       int(rng.integers(0, img.shape[1] - m + 1)))
                      for _ in range(cfg.per_size)]
            templates = [perturb(img[r:r + m, c:c + m], cfg.gain, cfg.offset)
                         if (cfg.gain, cfg.offset) != (1.0, 0.0) else img[r:r + m, c:c + m]
                         for r, c in truths]
            for mode in cfg.modes:
                prep = prepare(img, m, m, mode, params)
                for (r, c), t in zip(truths, templates):
                    res = match(t, img, mode, params, prepared=prep)
                    rr, rc = res.refined
                    runs.append({
                        "image": k, "size": m, "mode": mode, "truth": [r, c],
                        "found": [rr, rc], "rho": res.refined_rho,
                        "correct": abs(rr - r) <= TOLERANCE and abs(rc - c) <= TOLERANCE,
                        "elim_pct": res.stats.elim_pct, "ops": res.stats.ops,
                        "time_ms": res.stats.ms + prep.prep_ms / len(truths),
                        "group_size": list(res.group_size) if res.group_size else None,
                    })
                log.info("image %d size %d mode %s done", k, m, mode)
    return {"config": asdict(cfg), "rows": summarize(runs, cfg), "runs": runs}


def summarize(runs: list[dict], cfg: BenchConfig) -> list[dict]:
    rows = []
    for m in cfg.sizes:
        for mode in cfg.modes:
            sel = [r for r in runs if r["size"] == m and r["mode"] == mode]
            if not sel:
                continue
            rows.append({
                "size": m, "mode": mode,
                "time_ms": float(np.mean([r["time_ms"] for r in sel])),
                "elim_pct": float(np.mean([r["elim_pct"] for r in sel])),
                "accuracy_pct": 100.0 * sum(r["correct"] for r in sel) / len(sel),
                "ops": float(np.mean([r["ops"] for r in sel])),
            })
    return rows


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in CSV_COLUMNS})


def write_json(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
