"""Transitive bounds on correlation coefficients.

Given the correlation ``rho_tc`` of a template with a group centre and the
correlation ``rho_co`` of that centre with another location, the unknown
template-to-location correlation lies in

    rho_tc * rho_co -/+ sqrt((1 - rho_tc**2) * (1 - rho_co**2)).

All functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

RANGE_TOL = 1e-9


def _check_rho(*values, names=()):
    out = []
    for k, v in enumerate(values):
        a = np.asarray(v, dtype=np.float64)
        if np.any(np.isnan(a)) or np.any(np.abs(a) > 1.0 + RANGE_TOL):
            name = names[k] if k < len(names) else f"argument {k}"
            raise ValueError(f"{name} must lie in [-1, 1], got {v!r}")
        out.append(np.clip(a, -1.0, 1.0))
    return out


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a


def _radical(a, b):
    return np.sqrt(np.maximum(0.0, (1.0 - a * a) * (1.0 - b * b)))


class BoundPair(NamedTuple):
    lower: float
    upper: float

    @property
    def gap(self):
        return self.upper - self.lower


def transitive_bounds(rho_tc, rho_co) -> BoundPair:
    """Lower and upper bound on the third correlation, clamped to [-1, 1].

    >>> b = transitive_bounds(0.61, 0.81)
    >>> round(b.lower, 4), round(b.upper, 4)
    (0.0294, 0.9588)
    """
    a, b = _check_rho(rho_tc, rho_co, names=("rho_tc", "rho_co"))
    prod = a * b
    rad = _radical(a, b)
    lower = np.clip(prod - rad, -1.0, 1.0)
    upper = np.clip(prod + rad, -1.0, 1.0)
    return BoundPair(_scalar(lower), _scalar(upper))


def upper_bound(rho_tc, rho_co):
    """Upper transitive bound without range validation (hot path)."""
    return np.minimum(rho_tc * rho_co + _radical(rho_tc, rho_co), 1.0)


def transitive_gap(rho_tc, rho_co):
    """Width of the bound interval, 2 sqrt(1 - rho_tc**2) sqrt(1 - rho_co**2)."""
    a, b = _check_rho(rho_tc, rho_co, names=("rho_tc", "rho_co"))
    return _scalar(2.0 * np.sqrt(np.maximum(0.0, 1.0 - a * a))
                   * np.sqrt(np.maximum(0.0, 1.0 - b * b)))


def sec_holds(rho_tb, rho_tc, rho_co):
    """True when an achieved correlation ``rho_tb`` already meets the upper
    bound, so the bounded location cannot do better."""
    tb, a, b = _check_rho(rho_tb, rho_tc, rho_co, names=("rho_tb", "rho_tc", "rho_co"))
    res = tb >= upper_bound(a, b)
    return bool(res) if np.ndim(res) == 0 else res


def elimination_autocorr_threshold(rho_tb, rho_tc):
    """Smallest centre-to-location correlation that guarantees elimination.

    This is the upper root of the quadratic in ``rho_co`` obtained from the
    elimination condition. It is valid whenever ``rho_tc <= rho_tb``,
    which the search guarantees because the threshold is at least the best
    centre value. The lower root is ignored.
    """
    tb, a = _check_rho(rho_tb, rho_tc, names=("rho_tb", "rho_tc"))
    return _scalar(tb * a + _radical(a, tb))


def expected_elimination_threshold(rho_tb):
    """sqrt(1 - rho_tb**2): the local auto-correlation above which a
    location is expected to be eliminated when the template is uncorrelated
    with the centre."""
    (tb,) = _check_rho(rho_tb, names=("rho_tb",))
    return _scalar(np.sqrt(np.maximum(0.0, 1.0 - tb * tb)))
