"""Slow, independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np

# (row, col) unit step for each GLCM angle; 45 degrees points up and to the right
ANGLE_STEP = {0: (0, 1), 45: (-1, 1), 90: (-1, 0), 135: (-1, -1)}


def glcm_bruteforce(plane, distance, angle, levels):
    """Count every ordered pixel pair at the displacement, then symmetrize and normalize."""
    h, w = len(plane), len(plane[0])
    dr, dc = ANGLE_STEP[angle]
    dr, dc = dr * distance, dc * distance
    counts = [[0] * levels for _ in range(levels)]
    for r in range(h):
        for c in range(w):
            r2, c2 = r + dr, c + dc
            if 0 <= r2 < h and 0 <= c2 < w:
                a, b = int(plane[r][c]), int(plane[r2][c2])
                counts[a][b] += 1
                counts[b][a] += 1
    total = sum(map(sum, counts))
    return np.array([[v / total for v in row] for row in counts])


def _bilinear(plane, y, x):
    y0, x0 = math.floor(y), math.floor(x)
    fy, fx = y - y0, x - x0
    total = 0.0
    for yy, wy in ((y0, 1 - fy), (y0 + 1, fy)):
        for xx, wx in ((x0, 1 - fx), (x0 + 1, fx)):
            if wy * wx:
                total += wy * wx * plane[yy][xx]
    return total


def _riu2(bits):
    transitions = sum(bits[k] != bits[(k + 1) % len(bits)] for k in range(len(bits)))
    return sum(bits) if transitions <= 2 else len(bits) + 1


def lbp_pixel(plane, r, c):
    """riu2 label of one interior pixel, neighbors sampled on the unit circle."""
    center = plane[r][c]
    bits = []
    for k in range(8):
        theta = 2 * math.pi * k / 8
        y, x = r - math.sin(theta), c + math.cos(theta)
        # snap the axis samples so they read the grid value exactly
        y, x = round(y, 12), round(x, 12)
        value = _bilinear(plane, y, x)
        bits.append(1 if value - center >= -1e-9 else 0)
    return _riu2(bits)


def lbp_bruteforce(plane):
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    return np.array([[lbp_pixel(plane, r, c) for c in range(1, w - 1)] for r in range(1, h - 1)])


# ----------------------------------------------------------------- AP

def _iou(a, b):
    ix = max(0.0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    inter = ix * iy
    return inter / (a[2] * a[3] + b[2] * b[3] - inter) if inter > 0 else 0.0


def _greedy_assignment_by_enumeration(dets, gts, thr):
    """TP flags of the greedy rule, found by enumerating all partial matchings.

    A matching is valid for the greedy rule when, walking detections in rank
    order, each detection takes the best available GT (highest IoU, lowest
    index on ties) or none if no GT clears the threshold.  Exactly one
    matching survives; it is found here by filtering every injective map.
    """
    n_det, n_gt = len(dets), len(gts)
    ious = [[_iou(d, g) for g in gts] for d in dets]
    options = [list(range(n_gt)) + [None] for _ in range(n_det)]
    survivors = []
    for choice in itertools.product(*options):
        used = [c for c in choice if c is not None]
        if len(used) != len(set(used)):
            continue
        taken = set()
        ok = True
        for i, c in enumerate(choice):
            free = [j for j in range(n_gt) if j not in taken and ious[i][j] >= thr]
            if not free:
                ok = c is None
            else:
                best = max(free, key=lambda j: (ious[i][j], -j))
                ok = c == best
            if not ok:
                break
            if c is not None:
                taken.add(c)
        if ok:
            survivors.append(choice)
    assert len(survivors) == 1
    return [c is not None for c in survivors[0]]


def ap_bruteforce(scene_dets, scene_gts, category, thr):
    """101-point AP by explicit loops.

    ``scene_dets``: {image: [(x, y, w, h, cat, score), ...]};
    ``scene_gts``: {image: [(x, y, w, h, cat), ...]}.
    """
    ranked = []
    order = 0
    for img, dets in scene_dets.items():
        for d in dets:
            if d[4] == category:
                ranked.append((-d[5], order, img, d))
                order += 1
    ranked.sort(key=lambda t: (t[0], t[1]))
    n_gt = sum(1 for g in itertools.chain.from_iterable(scene_gts.values()) if g[4] == category)
    if n_gt == 0:
        return None
    flags = [None] * len(ranked)
    for img in set(list(scene_dets) + list(scene_gts)):
        idx = [k for k, t in enumerate(ranked) if t[2] == img]
        gts = [g for g in scene_gts.get(img, []) if g[4] == category]
        tp = _greedy_assignment_by_enumeration([ranked[k][3] for k in idx], gts, thr)
        for k, f in zip(idx, tp):
            flags[k] = f
    tp = fp = 0
    points = []
    for f in flags:
        tp += f
        fp += not f
        points.append((tp / n_gt, tp / (tp + fp)))
    total = 0.0
    for k in range(101):
        r = k / 100
        precs = [p for rec, p in points if rec >= r - 1e-12]
        total += max(precs) if precs else 0.0
    return total / 101
