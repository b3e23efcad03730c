"""Exhaustive-accuracy template matching with transitive elimination.

The search image is tiled into groups; the template is correlated with
the group centres only, and every other location is skipped when the
best correlation found so far already reaches its transitive upper bound.
The group size is chosen by minimising an estimated cost, and the search
image can be blurred where blurring is provably harmless to raise the
local auto-correlation and so the amount of elimination.
"""
from .autocorr import AutoCorrMap, GroupGrid, build_group_grid, local_autocorrelation
from .blur import (BlurKernel, OptAResult, blur, blur_fidelity_map, delta_kernel,
                   gaussian_kernel, optimize_autocorrelation, profile_kernel,
                   quality_threshold, unblur_violations)
from .bounds import (BoundPair, elimination_autocorr_threshold,
                     expected_elimination_threshold, sec_holds, transitive_bounds,
                     transitive_gap)
from .egs import CostEstimate, EGSResult, efficient_group_size, retained_count, total_cost
from .imagecore import (ImageFormatError, MatchResult, WindowStats, brute_force_match,
                        load_image, running_sum, save_image, window_stats, zncc)
from .matcher import (MatchParams, center_scan, match, prepare, refine_localization,
                      transitive_search)

__version__ = "0.1.0"
