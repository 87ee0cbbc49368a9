"""Independent brute-force references used by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np

from hgttrack.association import Box, iou_matrix
from hgttrack.mot import MotRecord
from hgttrack.synth import ScenarioSpec, TargetScript


def brute_min_assignment(cost: np.ndarray) -> float:
    """Minimum total cost over all complete matchings of the smaller side."""
    n, m = cost.shape
    if n > m:
        cost, (n, m) = cost.T, (m, n)
    best = math.inf
    for cols in itertools.permutations(range(m), n):
        best = min(best, math.fsum(cost[i, c] for i, c in enumerate(cols)))
    return best


def brute_gated(cost: np.ndarray, gate: float) -> tuple[int, float]:
    """(max number of pairs with cost < gate, least cost among those matchings)."""
    n, m = cost.shape
    best = (0, 0.0)
    for cols in itertools.product(range(-1, m), repeat=n):
        used = [c for c in cols if c >= 0]
        if len(set(used)) != len(used):
            continue
        if any(c >= 0 and not cost[i, c] < gate for i, c in enumerate(cols)):
            continue
        k = len(used)
        total = math.fsum(cost[i, c] for i, c in enumerate(cols) if c >= 0)
        if k > best[0] or (k == best[0] and total < best[1]):
            best = (k, total)
    return best


def brute_frame_match(gts, prs, thr, carry):
    """Continuity first, then the exhaustive best completion (most pairs, then
    highest summed IoU) over what remains."""
    ious = iou_matrix([g.box for g in gts], [p.box for p in prs])
    fixed = []
    pid = {p.track_id: j for j, p in enumerate(prs)}
    for i, g in enumerate(gts):
        j = pid.get(carry.get(g.track_id))
        if j is not None and ious[i, j] > thr:
            fixed.append((i, j))
    fi = {i for i, _ in fixed}
    fj = {j for _, j in fixed}
    rg = [i for i in range(len(gts)) if i not in fi]
    rp = [j for j in range(len(prs)) if j not in fj]
    best, best_key = [], (0, 0.0)
    for cols in itertools.product([-1, *rp], repeat=len(rg)):
        used = [c for c in cols if c >= 0]
        if len(set(used)) != len(used):
            continue
        pairs = [(rg[a], c) for a, c in enumerate(cols) if c >= 0]
        if any(not ious[i, j] > thr for i, j in pairs):
            continue
        key = (len(pairs), math.fsum(1.0 - ious[i, j] for i, j in pairs))
        if key[0] > best_key[0] or (key[0] == best_key[0] and key[1] < best_key[1]):
            best, best_key = pairs, key
    return fixed + best


def brute_clearmot(gt, pred, thr, num_frames):
    fp = fn = ids = 0
    carry = {}
    for f in range(1, num_frames + 1):
        gts = [r for r in gt if r.frame == f]
        prs = [r for r in pred if r.frame == f]
        pairs = brute_frame_match(gts, prs, thr, carry)
        fn += len(gts) - len(pairs)
        fp += len(prs) - len(pairs)
        for i, j in pairs:
            g, p = gts[i].track_id, prs[j].track_id
            if g in carry and carry[g] != p:
                ids += 1
            carry[g] = p
    return fp, fn, ids


def random_micro_sequence(rng: np.random.Generator, max_targets=4, max_frames=6):
    """Ground truth plus a corrupted prediction on a small canvas."""
    T = int(rng.integers(1, max_frames + 1))
    n = int(rng.integers(1, max_targets + 1))
    gt, pred = [], []
    next_pid = 100
    for tid in range(1, n + 1):
        x, y = rng.uniform(5, 35, size=2)
        vx, vy = rng.uniform(-3, 3, size=2)
        w, h = rng.uniform(4, 10, size=2)
        pid = next_pid
        next_pid += 1
        for f in range(1, T + 1):
            if rng.random() < 0.15:
                continue
            box = Box(x + vx * f, y + vy * f, w, h)
            gt.append(MotRecord(f, tid, box))
            u = rng.random()
            if u < 0.15:
                continue  # missed
            if u < 0.25:
                pid = next_pid  # identity switch
                next_pid += 1
            jitter = rng.normal(0, 1.5, size=2)
            pred.append(MotRecord(f, pid, box.shifted(*jitter)))
    for f in range(1, T + 1):
        if rng.random() < 0.3:
            pred.append(MotRecord(f, 999 + f, Box(*rng.uniform(5, 35, size=2), 6, 6)))
    return gt, pred, T


def random_scenario(seed: int, duration: int = 30, max_targets: int = 4) -> ScenarioSpec:
    """Linear movers of random classes and lifetimes (at least three frames)."""
    rng = np.random.default_rng(seed)
    targets = []
    for _ in range(int(rng.integers(1, max_targets + 1))):
        s = int(rng.integers(1, duration - 2))
        e = int(rng.integers(s + 2, duration + 1))
        targets.append(TargetScript(
            class_id=int(rng.integers(1, 8)), spawn=s, despawn=e,
            x=float(rng.uniform(8, 56)), y=float(rng.uniform(8, 56)),
            vx=float(rng.uniform(-1.5, 1.5)), vy=float(rng.uniform(-1.5, 1.5)),
            w=float(rng.uniform(5, 10)), h=float(rng.uniform(5, 10)),
        ))
    return ScenarioSpec(seed=seed, duration=duration, targets=targets)
