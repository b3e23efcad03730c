"""Cost model of the grouped search and the efficient group size search.

Costs are expressed in full correlation evaluations (one evaluation of
the template at one location = 1), so exhaustive search costs the
extent size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autocorr import AutoCorrMap, GroupGrid, build_group_grid, local_autocorrelation
from .bounds import expected_elimination_threshold
from .imagecore import WindowStats, as_image, window_stats


@dataclass(frozen=True)
class CostEstimate:
    central: float
    retained: float
    n_retained: int
    amortized: float
    total: float


@dataclass
class TraceEntry:
    h: int
    w: int
    cost: float
    accepted: bool

    def to_dict(self) -> dict:
        return {"h": self.h, "w": self.w, "cost": self.cost, "accepted": self.accepted}


@dataclass
class EGSResult:
    h: int
    w: int
    autocorr: AutoCorrMap
    grid: GroupGrid
    cost: CostEstimate
    trace: list[TraceEntry] = field(default_factory=list)

    @property
    def size(self) -> tuple[int, int]:
        return self.h, self.w

    def to_dict(self) -> dict:
        return {"h_e": self.h, "w_e": self.w, "cost": self.cost.total,
                "n_retained": self.cost.n_retained,
                "trace": [e.to_dict() for e in self.trace]}


def retained_count(acm: AutoCorrMap | np.ndarray, rho_tb: float,
                   centers: np.ndarray | None = None) -> int:
    """Number of non-centre locations whose auto-correlation is below
    sqrt(1 - rho_tb**2), i.e. that are expected to survive elimination.

    ``centers`` is a boolean mask of group centres; when omitted, entries
    equal to exactly 1 at centres are excluded through the strict test
    anyway, since 1 is never below the threshold.
    """
    if not 0.0 <= rho_tb <= 1.0:
        raise ValueError(f"rho_tb must lie in [0, 1], got {rho_tb}")
    values = acm.values if isinstance(acm, AutoCorrMap) else np.asarray(acm)
    below = values < expected_elimination_threshold(rho_tb)
    if centers is not None:
        below &= ~centers
    return int(np.count_nonzero(below))


def _n_tiles(extent: int, size: int) -> int:
    return -(-extent // size)


def total_cost(extent: tuple[int, int] | int, h: int, w: int, n_retained: int,
               amortized: float | None = None) -> CostEstimate:
    """Estimated search cost for group size h x w.

    ``extent`` is (rows, cols) of the search extent; a bare integer is read
    as a square extent side. The central cost is the real number of tiles.
    """
    if h < 1 or w < 1:
        raise ValueError("group size must be positive")
    rows, cols = (extent, extent) if isinstance(extent, int) else extent
    central = float(_n_tiles(rows, h) * _n_tiles(cols, w))
    extra = float(amortized) if amortized else 0.0
    return CostEstimate(central=central, retained=float(n_retained),
                        n_retained=int(n_retained), amortized=extra,
                        total=central + n_retained + extra)


def amortized_autocorr_cost(extent: tuple[int, int], m: int, n: int, h: int, w: int,
                            n_templates: int) -> float:
    """Auto-correlation cost per template, in correlation evaluations.

    Each location costs one multiply-accumulate per non-zero offset; a full
    correlation costs m*n of them.
    """
    rows, cols = extent
    return (h * w - 1) * rows * cols / (m * n * n_templates)


def evaluate_group_size(img, m: int, n: int, h: int, w: int, rho_tb: float,
                        stats: WindowStats | None = None,
                        n_templates: int | None = None):
    """AutoCorrMap, grid and cost for one group size."""
    img = as_image(img)
    grid = build_group_grid(img.shape[0], img.shape[1], m, n, h, w)
    acm = local_autocorrelation(img, m, n, grid, stats)
    n_r = retained_count(acm, rho_tb, grid.center_mask())
    amort = None
    if n_templates:
        amort = amortized_autocorr_cost(grid.extent, m, n, h, w, n_templates)
    return grid, acm, total_cost(grid.extent, h, w, n_r, amort)


def efficient_group_size(img, m: int, n: int, h0: int = 3, w0: int = 3,
                         rho_tb: float = 0.8, xi_fraction: float = 0.005,
                         stats: WindowStats | None = None,
                         max_size: int | None = None,
                         n_templates: int | None = None) -> EGSResult:
    """Grow the group size from (h0, w0) in steps of 2 while the estimated
    cost keeps dropping by more than ``xi_fraction`` of the previous cost.

    The first size is always evaluated and accepted. Growth stops at the
    first size whose improvement does not exceed the margin, or when the
    group would no longer fit in the extent (or exceed ``max_size``). Pass
    ``xi_fraction=math.inf`` to evaluate the initial size only.
    """
    if h0 < 1 or w0 < 1 or h0 % 2 == 0 or w0 % 2 == 0:
        raise ValueError(f"initial group size must be odd and positive, got {h0}x{w0}")
    if not 0.0 < rho_tb < 1.0:
        raise ValueError(f"rho_tb must lie in (0, 1), got {rho_tb}")
    if xi_fraction < 0:
        raise ValueError("xi_fraction must be non-negative")
    img = as_image(img)
    if stats is None:
        stats = window_stats(img, m, n)
    rows, cols = img.shape[0] - m + 1, img.shape[1] - n + 1
    limit_h = rows if max_size is None else min(rows, max_size)
    limit_w = cols if max_size is None else min(cols, max_size)

    h, w = h0, w0
    grid, acm, cost = evaluate_group_size(img, m, n, h, w, rho_tb, stats, n_templates)
    best = EGSResult(h=h, w=w, autocorr=acm, grid=grid, cost=cost,
                     trace=[TraceEntry(h, w, cost.total, True)])
    while math.isfinite(xi_fraction):
        h, w = h + 2, w + 2
        if h > limit_h or w > limit_w:
            break
        grid, acm, cost = evaluate_group_size(img, m, n, h, w, rho_tb, stats, n_templates)
        prev = best.cost.total
        accepted = prev - cost.total > xi_fraction * prev
        best.trace.append(TraceEntry(h, w, cost.total, accepted))
        if not accepted:
            break
        best.h, best.w, best.autocorr, best.grid, best.cost = h, w, acm, grid, cost
    return best
