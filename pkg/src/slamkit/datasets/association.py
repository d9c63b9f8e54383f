"""Timestamp association for multi-file datasets (color/depth/ground truth)."""

from __future__ import annotations

from typing import List, Sequence, Tuple

from slamkit.errors import DatasetError

DEFAULT_MAX_DT = 0.02  # seconds


def match_timestamps(a: Sequence[float], b: Sequence[float],
                     max_dt: float = DEFAULT_MAX_DT) -> List[Tuple[int, int]]:
    """Greedy mutual-nearest pairing of two sorted timestamp lists.

    Candidate pairs within max_dt are taken smallest-offset first; each entry
    is used at most once. Returns (index_a, index_b) pairs sorted by a's
    timestamps.
    """
    candidates = []
    j0 = 0
    for i, ta in enumerate(a):
        while j0 < len(b) and b[j0] < ta - max_dt:
            j0 += 1
        j = j0
        while j < len(b) and b[j] <= ta + max_dt:
            candidates.append((abs(ta - b[j]), i, j))
            j += 1
    candidates.sort()
    used_a, used_b = set(), set()
    matches = []
    for _, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        matches.append((i, j))
    matches.sort()
    return matches


def associate_three(t_color, t_depth, t_gt, max_dt: float = DEFAULT_MAX_DT):
    """Associate color->depth and color->gt; returns index triples sorted by
    color timestamp. Raises when nothing associates."""
    cd = dict(match_timestamps(t_color, t_depth, max_dt))
    cg = dict(match_timestamps(t_color, t_gt, max_dt))
    triples = [(i, cd[i], cg[i]) for i in sorted(cd) if i in cg]
    if not triples:
        raise DatasetError("no associable frames within the timestamp window")
    return triples
