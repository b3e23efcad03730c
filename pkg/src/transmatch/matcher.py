"""Two-scan transitive search and the mode dispatcher.

Scan 1 correlates the template with every group centre and takes the best
value as the elimination threshold. Scan 2 visits the remaining locations
in row-major order; a location is skipped when the threshold already
reaches its transitive upper bound, otherwise it is evaluated and may
raise the threshold.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .autocorr import AutoCorrMap, GroupGrid
from .blur import BlurKernel, OptAResult, optimize_autocorrelation, profile_kernel
from .bounds import upper_bound
from .egs import EGSResult, efficient_group_size
from .imagecore import (MatchResult, MatchStats, WindowStats, _check_fits, as_image,
                        best_location, brute_force_match, prepare_template, window_stats)

MODES = ("brute", "egs", "opta")


def center_scan(t, img, grid: GroupGrid, stats: WindowStats | None = None):
    """Correlate the template with every group centre.

    Returns (values over the centre lattice, best value, best location).
    Flat centres score 0 and only win if every centre is flat.
    """
    img = as_image(img)
    pt = prepare_template(t)
    _check_fits(pt.shape, img.shape)
    if stats is None:
        stats = window_stats(img, *pt.shape)
    rr, cc = np.meshgrid(grid.center_rows, grid.center_cols, indexing="ij")
    vals = _kernels.corr_points(pt.zero_mean, pt.sigma, img, stats.sigma,
                                rr.ravel(), cc.ravel()).reshape(rr.shape)
    flat = stats.flat[np.ix_(grid.center_rows, grid.center_cols)]
    (a, b), best = best_location(vals, flat)
    return vals, best, (int(grid.center_rows[a]), int(grid.center_cols[b]))


def _member_bounds(center_vals, grid: GroupGrid, acm: AutoCorrMap, flat: np.ndarray):
    # centre value broadcast to every location of its group
    ra = np.searchsorted(grid.center_rows, grid.row_center_of)
    ca = np.searchsorted(grid.center_cols, grid.col_center_of)
    rho_tc = center_vals[np.ix_(ra, ca)]
    upper = upper_bound(rho_tc, acm.values)
    upper[flat] = np.inf
    return upper


def transitive_search(t, img, acm: AutoCorrMap, grid: GroupGrid,
                      rho_tb_init: float | None = None,
                      stats: WindowStats | None = None, record: bool = False,
                      workers: int = 1) -> MatchResult:
    """Best correlation-coefficient match using transitive elimination.

    ``rho_tb_init`` is a user threshold combined with the best centre value
    by max(). With ``workers > 1`` the threshold is frozen after scan 1
    and the members are evaluated in parallel chunks; more locations get
    evaluated but the reported location is the same.
    """
    start = time.perf_counter()
    img = as_image(img)
    pt = prepare_template(t)
    m, n = pt.shape
    _check_fits(pt.shape, img.shape)
    extent = (img.shape[0] - m + 1, img.shape[1] - n + 1)
    if grid.extent != extent or acm.extent != extent:
        raise ValueError(
            f"grid {grid.extent} / auto-correlation map {acm.extent} do not match "
            f"the search extent {extent}")
    if (acm.h, acm.w) != (grid.h, grid.w) or (acm.m, acm.n) != (m, n):
        raise ValueError("auto-correlation map was built for another grid or template size")
    if stats is None:
        stats = window_stats(img, m, n)
    if rho_tb_init is not None and not -1.0 <= rho_tb_init <= 1.0:
        raise ValueError("rho_tb_init must lie in [-1, 1]")

    center_vals, center_best, _ = center_scan(t, img, grid, stats)
    centers = grid.center_mask()
    flat = stats.flat
    if (~flat[centers]).any():
        rho_tb = center_best
    else:
        rho_tb = -1.0
    if rho_tb_init is not None:
        rho_tb = max(rho_tb, rho_tb_init)
    rho_tb0 = rho_tb

    upper = _member_bounds(center_vals, grid, acm, flat)
    candidates = ~centers & (upper > rho_tb0)
    rows, cols = np.nonzero(candidates)  # row-major order
    ub = upper[rows, cols]

    values = np.full(extent, np.nan)
    values[np.ix_(grid.center_rows, grid.center_cols)] = center_vals
    if workers > 1 and rows.size:
        chunks = np.array_split(np.arange(rows.size), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda ix: _kernels.corr_points(pt.zero_mean, pt.sigma, img, stats.sigma,
                                                rows[ix], cols[ix]), chunks))
        vals = np.concatenate(parts)
        evaluated = np.ones(rows.size, bool)
        nonflat = ~flat[rows, cols]
        if nonflat.any():
            rho_tb = max(rho_tb, float(vals[nonflat].max()))
    else:
        evaluated, vals, rho_tb = _kernels.tightening_scan(
            pt.zero_mean, pt.sigma, img, stats.sigma, rows, cols, ub, rho_tb)
    values[rows[evaluated], cols[evaluated]] = vals[evaluated]

    evaluated_mask = ~np.isnan(values)
    loc, rho = best_location(values, flat, evaluated_mask)
    n_centers = grid.n_groups
    n_retained = int(np.count_nonzero(evaluated))
    n_extent = extent[0] * extent[1]
    stats_out = MatchStats(centers=n_centers, eliminated=n_extent - n_centers - n_retained,
                           retained=n_retained, extent=n_extent,
                           ops=n_centers + n_retained,
                           ms=1e3 * (time.perf_counter() - start))
    result = MatchResult(mode="transitive", location=loc, rho=rho, stats=stats_out,
                         rho_tb=float(rho_tb), threshold=rho_tb_init,
                         group_size=(grid.h, grid.w))
    if record:
        result.surface = values
        result.evaluated = evaluated_mask
        result.eliminated = ~evaluated_mask
    return result


def refine_localization(t, img, loc: tuple[int, int], d: int,
                        stats: WindowStats | None = None):
    """Exhaustive search of the (2d + 1) x (2d + 1) neighbourhood of ``loc``
    in ``img``, clipped to the search extent.

    Returns (location, value, number of evaluated locations).
    """
    img = as_image(img)
    pt = prepare_template(t)
    m, n = pt.shape
    _check_fits(pt.shape, img.shape)
    if stats is None:
        stats = window_stats(img, m, n)
    rows, cols = stats.sigma.shape
    x, y = loc
    if not (0 <= x < rows and 0 <= y < cols):
        raise ValueError(f"location {loc} outside the search extent {rows}x{cols}")
    d = max(int(d), 0)
    r0, r1 = max(0, x - d), min(rows, x + d + 1)
    c0, c1 = max(0, y - d), min(cols, y + d + 1)
    rr, cc = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1), indexing="ij")
    vals = _kernels.corr_points(pt.zero_mean, pt.sigma, img, stats.sigma,
                                rr.ravel(), cc.ravel()).reshape(rr.shape)
    (a, b), rho = best_location(vals, stats.flat[r0:r1, c0:c1])
    return (r0 + a, c0 + b), rho, int(vals.size)


@dataclass
class MatchParams:
    h0: int = 3
    w0: int = 3
    rho_th: float = 0.8
    rho_max: float = 0.95
    kernel: BlurKernel = field(default_factory=profile_kernel)
    xi_fraction: float = 0.005
    stop_fraction: float = 0.005
    rho_tb_init: float | None = None
    refine_radius: int | None = None
    workers: int = 1
    record: bool = False


@dataclass
class PreparedSearch:
    """Template-independent state for one (image, template size, mode).

    Build once with :func:`prepare` and reuse for many templates of the
    same size.
    """

    mode: str
    image: np.ndarray = field(repr=False)
    original: np.ndarray = field(repr=False)
    m: int
    n: int
    stats: WindowStats | None = field(default=None, repr=False)
    original_stats: WindowStats | None = field(default=None, repr=False)
    egs: EGSResult | None = field(default=None, repr=False)
    opta: OptAResult | None = field(default=None, repr=False)
    refine_radius: int = 0
    prep_ms: float = 0.0


def prepare(img, m: int, n: int, mode: str, params: MatchParams | None = None) -> PreparedSearch:
    params = params or MatchParams()
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    start = time.perf_counter()
    img = as_image(img)
    stats = window_stats(img, m, n)
    prep = PreparedSearch(mode=mode, image=img, original=img, m=m, n=n, stats=stats,
                          original_stats=stats)
    if mode == "egs":
        prep.egs = efficient_group_size(img, m, n, params.h0, params.w0, params.rho_th,
                                        params.xi_fraction, stats)
    elif mode == "opta":
        res = optimize_autocorrelation(img, m, n, params.rho_th, params.rho_max,
                                       params.kernel, params.h0, params.w0,
                                       params.xi_fraction, params.stop_fraction,
                                       stats=stats)
        prep.opta = res
        prep.egs = res.egs
        prep.image = res.image
        prep.stats = window_stats(res.image, m, n) if res.blur_passes else stats
        prep.refine_radius = (res.support_radius if params.refine_radius is None
                              else params.refine_radius)
    prep.prep_ms = 1e3 * (time.perf_counter() - start)
    return prep


def match(t, img, mode: str = "egs", params: MatchParams | None = None,
          prepared: PreparedSearch | None = None) -> MatchResult:
    """Find the best match of ``t`` in ``img``.

    brute: exhaustive evaluation. egs: group size optimisation, then the
    transitive search. opta: controlled blur plus group size optimisation,
    transitive search on the blurred image, then exhaustive refinement in
    the original image around the blurred-image peak.
    """
    params = params or MatchParams()
    t = as_image(t)
    img = as_image(img)
    m, n = t.shape
    _check_fits(t.shape, img.shape)
    if prepared is None:
        prepared = prepare(img, m, n, mode, params)
    elif prepared.mode != mode or (prepared.m, prepared.n) != (m, n):
        raise ValueError("prepared search does not match the requested mode/template size")

    if mode == "brute":
        res = brute_force_match(t, img, prepared.stats, keep_surface=params.record)
        res.threshold = params.rho_tb_init
        return res

    egs = prepared.egs
    res = transitive_search(t, prepared.image, egs.autocorr, egs.grid, params.rho_tb_init,
                            prepared.stats, record=params.record, workers=params.workers)
    res.mode = mode
    if mode == "opta":
        start = time.perf_counter()
        loc, rho, evals = refine_localization(t, prepared.original, res.location,
                                              prepared.refine_radius,
                                              prepared.original_stats)
        res.refined, res.refined_rho = loc, rho
        res.stats.ops += evals
        res.stats.ms += 1e3 * (time.perf_counter() - start)
        res.kappa = prepared.opta.kappa
    else:
        res.refined, res.refined_rho = res.location, res.rho
    return res
