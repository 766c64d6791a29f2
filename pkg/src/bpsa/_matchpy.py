"""Pure-numpy matching kernels.

Fallback twin of the compiled ``_matchcore`` extension.  Both backends
implement exactly the same algorithm, consume pre-generated uniforms in
the same order, and must produce bit-identical outputs (enforced by the
parity tests).

Inputs shared by both kernels:

* ``lp_sorted`` control linear predictors, sorted ascending with ties in
  original-index order (stable sort done by the caller);
* ``lp_treated`` treated linear predictors in original-index order;
* ``lo``/``hi`` per-treated candidate windows ``[lo, hi)`` into the
  sorted control array (controls within the caliper);
* ``ratio`` controls matched per treated unit.

Outputs: per-sorted-control match counts and a per-treated pruned flag
(treated units with fewer than ``ratio`` in-caliper candidates).
"""

from __future__ import annotations

import numpy as np


def nn_match_counts(lp_sorted, lp_treated, lo, hi, ratio):
    """Nearest-neighbour matching with replacement.

    Per treated unit the ``ratio`` nearest in-window controls are chosen;
    equal distances resolve to the lower sorted position (smaller
    propensity, then smaller original index).
    """
    nc = lp_sorted.shape[0]
    nt = lp_treated.shape[0]
    counts = np.zeros(nc, dtype=np.int64)
    pruned = (hi - lo) < ratio

    if ratio == 1:
        keep = ~pruned
        if not keep.any():
            return counts, pruned
        lp_t = lp_treated[keep]
        m = np.searchsorted(lp_sorted, lp_t, side="left")
        left = m - 1
        right = m
        left_ok = left >= lo[keep]
        right_ok = right < hi[keep]
        dl = np.where(left_ok, lp_t - lp_sorted[np.maximum(left, 0)], np.inf)
        dr = np.where(right_ok, lp_sorted[np.minimum(right, nc - 1)] - lp_t, np.inf)
        pick = np.where(dl <= dr, left, right)
        np.add.at(counts, pick, 1)
        return counts, pruned

    for j in range(nt):
        if pruned[j]:
            continue
        window_lo = int(lo[j])
        window_hi = int(hi[j])
        lp_t = lp_treated[j]
        m = int(np.searchsorted(lp_sorted, lp_t, side="left"))
        left = m - 1
        right = m
        for _ in range(ratio):
            if left < window_lo:
                counts[right] += 1
                right += 1
            elif right >= window_hi:
                counts[left] += 1
                left -= 1
            else:
                dl = lp_t - lp_sorted[left]
                dr = lp_sorted[right] - lp_t
                if dl <= dr:
                    counts[left] += 1
                    left -= 1
                else:
                    counts[right] += 1
                    right += 1
    return counts, pruned


def random_match_counts(nc, lo, hi, ratio, uniforms):
    """Random in-caliper matching with replacement.

    Per treated unit, ``ratio`` distinct controls are drawn uniformly from
    the candidate window via a sparse partial Fisher-Yates shuffle driven
    by ``uniforms[j, s]``; exactly ``ratio`` uniforms are consumed per
    unpruned treated unit.
    """
    nt = lo.shape[0]
    counts = np.zeros(nc, dtype=np.int64)
    pruned = (hi - lo) < ratio

    for j in range(nt):
        if pruned[j]:
            continue
        window_lo = int(lo[j])
        m = int(hi[j]) - window_lo
        override: dict[int, int] = {}
        for s in range(ratio):
            span = m - s
            idx = int(uniforms[j, s] * span)
            if idx >= span:  # u == 1.0 guard
                idx = span - 1
            value = override.get(idx, idx)
            override[idx] = override.get(span - 1, span - 1)
            counts[window_lo + value] += 1
    return counts, pruned
