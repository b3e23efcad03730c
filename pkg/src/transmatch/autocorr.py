"""Group tiling of the search extent and local auto-correlation.

The extent is cut into h x w tiles anchored at the top-left. Every tile has
one centre, its central cell (clipped tiles at the bottom/right use the
central cell of the clipped part). The auto-correlation map holds, for
each location, the correlation coefficient between its window and the
window at its group centre.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .imagecore import WindowStats, as_image, window_stats

# values within this distance of +/-1 are treated as exactly +/-1; only
# windows related by an exact affine map get there
UNIT_SNAP = 1e-12


def _tile_centers(extent: int, size: int):
    starts = np.arange(0, extent, size)
    lengths = np.minimum(starts + size, extent) - starts
    centers = starts + (lengths - 1) // 2
    center_of = np.repeat(centers, lengths)
    return centers.astype(np.int64), center_of.astype(np.int64)


@dataclass(frozen=True)
class GroupGrid:
    """Tiling of a (rows x cols) search extent into h x w groups."""

    h: int
    w: int
    rows: int
    cols: int
    center_rows: np.ndarray
    center_cols: np.ndarray
    # per extent row/col: row/col of the centre of the group containing it
    row_center_of: np.ndarray
    col_center_of: np.ndarray

    @property
    def extent(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def n_groups(self) -> int:
        return len(self.center_rows) * len(self.center_cols)

    @property
    def n_locations(self) -> int:
        return self.rows * self.cols

    def center_mask(self) -> np.ndarray:
        mask = np.zeros(self.extent, dtype=bool)
        mask[np.ix_(self.center_rows, self.center_cols)] = True
        return mask

    def row_offsets(self) -> np.ndarray:
        return np.arange(self.rows) - self.row_center_of

    def col_offsets(self) -> np.ndarray:
        return np.arange(self.cols) - self.col_center_of

    def groups(self):
        """Yield ((center_row, center_col), (row_slice, col_slice)) per group."""
        for a, r0 in enumerate(range(0, self.rows, self.h)):
            rs = slice(r0, min(r0 + self.h, self.rows))
            for b, c0 in enumerate(range(0, self.cols, self.w)):
                cs = slice(c0, min(c0 + self.w, self.cols))
                yield (int(self.center_rows[a]), int(self.center_cols[b])), (rs, cs)


def build_group_grid(p: int, q: int, m: int, n: int, h: int, w: int) -> GroupGrid:
    """Tile the search extent of an m x n template in a p x q image."""
    if h < 1 or w < 1 or h % 2 == 0 or w % 2 == 0:
        raise ValueError(f"group size must be odd and positive, got {h}x{w}")
    rows, cols = p - m + 1, q - n + 1
    if rows < 1 or cols < 1:
        raise ValueError(f"empty search extent for template {m}x{n} in image {p}x{q}")
    cr, rco = _tile_centers(rows, h)
    cc, cco = _tile_centers(cols, w)
    return GroupGrid(h=h, w=w, rows=rows, cols=cols, center_rows=cr,
                     center_cols=cc, row_center_of=rco, col_center_of=cco)


@dataclass
class AutoCorrMap:
    """Correlation of each location's window with its group centre's window.

    Centres hold exactly 1. ``n_sum_tables`` counts the shifted-product
    running-sum passes used to build the map.
    """

    values: np.ndarray
    h: int
    w: int
    m: int
    n: int
    n_sum_tables: int = 0

    @property
    def extent(self) -> tuple[int, int]:
        return self.values.shape


def local_autocorrelation(img, m: int, n: int, grid: GroupGrid,
                          stats: WindowStats | None = None) -> AutoCorrMap:
    """Build the auto-correlation map of ``img`` for ``grid``.

    For every non-zero offset (i, j) inside the group the image is
    multiplied with its (i, j)-shifted copy, the product's m x n running
    sums are formed, and the correlation at each member c + (i, j) is

        (S_oo(c) - S(c) S(c + (i, j)) / mn) / (Omega(c) Omega(c + (i, j)))

    with S and Omega the window sums and norms. Flat windows give 0.
    """
    img = as_image(img)
    p, q = img.shape
    if (grid.rows, grid.cols) != (p - m + 1, q - n + 1):
        raise ValueError(
            f"grid extent {grid.extent} does not match {m}x{n} windows of a "
            f"{p}x{q} image")
    if stats is None:
        stats = window_stats(img, m, n)
    elif (stats.m, stats.n) != (m, n):
        raise ValueError("window statistics were computed for another window size")
    v = np.ascontiguousarray(img - stats.offset)
    s = stats.sums
    sigma = stats.sigma
    mn = float(m * n)

    values = np.ones(grid.extent)
    roff = grid.row_offsets()
    coff = grid.col_offsets()
    hh, hw = grid.h // 2, grid.w // 2
    row_sets = {i: np.flatnonzero(roff == i) for i in range(-hh, hh + 1)}
    col_sets = {j: np.flatnonzero(coff == j) for j in range(-hw, hw + 1)}
    passes = 0
    for i in range(-hh, hh + 1):
        mrows = row_sets[i]
        if mrows.size == 0:
            continue
        crows = mrows - i
        for j in range(-hw, hw + 1):
            if i == 0 and j == 0:
                continue
            mcols = col_sets[j]
            if mcols.size == 0:
                continue
            ccols = mcols - j
            soo = _kernels.shifted_product_sums(v, i, j, m, n, crows, ccols)
            passes += 1
            sc = s[np.ix_(crows, ccols)]
            so = s[np.ix_(mrows, mcols)]
            den = sigma[np.ix_(crows, ccols)] * sigma[np.ix_(mrows, mcols)]
            with np.errstate(divide="ignore", invalid="ignore"):
                rho = (soo - sc * so / mn) / den
            rho = np.where(den > 0.0, rho, 0.0)
            np.clip(rho, -1.0, 1.0, out=rho)
            rho[rho > 1.0 - UNIT_SNAP] = 1.0
            rho[rho < -1.0 + UNIT_SNAP] = -1.0
            values[np.ix_(mrows, mcols)] = rho
    return AutoCorrMap(values=values, h=grid.h, w=grid.w, m=m, n=n, n_sum_tables=passes)


# --- on-disk cache -------------------------------------------------------

_MAGIC = b"TMRC"
_HEADER = struct.Struct("<4sIqqqqqq32s")


def cache_key(img, m: int, n: int, h: int, w: int) -> bytes:
    """SHA-256 over the image content and the window/group sizes."""
    img = as_image(img)
    hsh = hashlib.sha256()
    hsh.update(struct.pack("<qq", *img.shape))
    hsh.update(img.tobytes())
    hsh.update(struct.pack("<qqqq", m, n, h, w))
    return hsh.digest()


def save_autocorr(path, acm: AutoCorrMap, key: bytes) -> None:
    """Write the map as a fixed header followed by little-endian doubles."""
    rows, cols = acm.extent
    header = _HEADER.pack(_MAGIC, 1, rows, cols, acm.h, acm.w, acm.m, acm.n, key)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(acm.values, dtype="<f8").tobytes())


def load_autocorr(path, key: bytes | None = None) -> AutoCorrMap:
    """Read a cached map; ``key`` (if given) must match the stored key."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"truncated auto-correlation cache {path}")
    magic, version, rows, cols, h, w, m, n, stored = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"not an auto-correlation cache file: {path}")
    if key is not None and key != stored:
        raise KeyError(f"cache key mismatch for {path}")
    payload = data[_HEADER.size:]
    if len(payload) != 8 * rows * cols:
        raise ValueError(f"truncated auto-correlation cache {path}")
    values = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)
    return AutoCorrMap(values=values, h=h, w=w, m=m, n=n)


def cached_local_autocorrelation(img, m: int, n: int, grid: GroupGrid,
                                 cache_dir, stats: WindowStats | None = None) -> AutoCorrMap:
    """local_autocorrelation with a file cache keyed on content and sizes."""
    key = cache_key(img, m, n, grid.h, grid.w)
    path = Path(cache_dir) / f"rco_{key.hex()[:24]}.bin"
    if path.is_file():
        try:
            return load_autocorr(path, key)
        except (KeyError, ValueError):
            pass
    acm = local_autocorrelation(img, m, n, grid, stats)
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    save_autocorr(path, acm, key)
    return acm
