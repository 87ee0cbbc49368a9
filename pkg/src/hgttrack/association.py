"""Boxes, IoU, gated linear assignment and the two matching stages used by the tracker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its center and extents, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box extents must be positive, got w={self.w} h={self.h}")

    @property
    def left(self) -> float:
        return self.x - self.w / 2

    @property
    def top(self) -> float:
        return self.y - self.h / 2

    @property
    def right(self) -> float:
        return self.x + self.w / 2

    @property
    def bottom(self) -> float:
        return self.y + self.h / 2

    @classmethod
    def from_corners(cls, x0: float, y0: float, x1: float, y1: float) -> Box:
        return cls((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)

    def shifted(self, dx: float, dy: float) -> Box:
        return Box(self.x + dx, self.y + dy, self.w, self.h)


@dataclass
class Detection:
    box: Box
    score: float
    class_id: int
    modality: str
    feature: np.ndarray | None = None
    cell: tuple[int, int] | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")


@dataclass
class Assignment:
    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_cols: list[int] = field(default_factory=list)

    def row_to_col(self) -> dict[int, int]:
        return dict(self.matches)

    def col_to_row(self) -> dict[int, int]:
        return {c: r for r, c in self.matches}


def iou(a: Box, b: Box) -> float:
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def iou_matrix(a: list[Box], b: list[Box]) -> np.ndarray:
    if not a or not b:
        return np.zeros((len(a), len(b)))
    A = np.array([[x.left, x.top, x.right, x.bottom] for x in a])
    B = np.array([[x.left, x.top, x.right, x.bottom] for x in b])
    iw = np.minimum(A[:, None, 2], B[None, :, 2]) - np.maximum(A[:, None, 0], B[None, :, 0])
    ih = np.minimum(A[:, None, 3], B[None, :, 3]) - np.maximum(A[:, None, 1], B[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (A[:, 2] - A[:, 0]) * (A[:, 3] - A[:, 1])
    area_b = (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def _solve_square_min(cost: np.ndarray) -> np.ndarray:
    """Shortest-augmenting-path Hungarian method for an n x m cost matrix, n <= m.

    Returns col_of_row. Rows are inserted in index order and ties in the
    column scan resolve to the lowest column index, so the result is
    deterministic.
    """
    n, m = cost.shape
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: row (1-based) assigned to column j
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, INF)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], INF)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def hungarian(cost, gate: float = np.inf) -> Assignment:
    """Minimum-cost assignment over the pairs whose cost is strictly below ``gate``.

    Among all matchings that use only admissible pairs, the one with the most
    pairs wins, and among those the one of least total cost. Rectangular
    inputs leave the surplus rows or columns unmatched.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {cost.shape}")
    n, m = cost.shape
    if n == 0 or m == 0:
        return Assignment([], list(range(n)), list(range(m)))
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix has non-finite entries")
    admissible = cost < gate
    if not admissible.any():
        return Assignment([], list(range(n)), list(range(m)))
    # inadmissible pairs cost more than any complete admissible matching, so
    # the solver maximises the number of admissible pairs first
    lo, hi = cost[admissible].min(), cost[admissible].max()
    big = (hi - lo + 1.0) * (min(n, m) + 1)
    work = np.where(admissible, cost - lo, big)
    transposed = n > m
    if transposed:
        work = work.T
    col_of_row = _solve_square_min(work)
    pairs = [(r, int(c)) for r, c in enumerate(col_of_row) if c >= 0]
    if transposed:
        pairs = [(c, r) for r, c in pairs]
    matches = sorted((r, c) for r, c in pairs if admissible[r, c])
    rows = {r for r, _ in matches}
    cols = {c for _, c in matches}
    return Assignment(
        matches,
        [r for r in range(n) if r not in rows],
        [c for c in range(m) if c not in cols],
    )


VIS_BOTH, VIS_V, VIS_T, VIS_NONE = "Both", "VOnly", "TOnly", "None"


def cross_modal_match(z_t: list[Detection], z_v: list[Detection]) -> tuple[Assignment, dict]:
    """Pair thermal (rows) with visible (cols) detections on cost 1 - IoU.

    Pairs must overlap (cost < 1). Returns the assignment and per-detection
    visibility labels ``{("T", i) | ("V", j): label}``.
    """
    dis = 1.0 - iou_matrix([d.box for d in z_t], [d.box for d in z_v])
    a = hungarian(dis, gate=1.0)
    labels: dict[tuple[str, int], str] = {}
    for r, c in a.matches:
        labels[("T", r)] = VIS_BOTH
        labels[("V", c)] = VIS_BOTH
    for r in a.unmatched_rows:
        labels[("T", r)] = VIS_T
    for c in a.unmatched_cols:
        labels[("V", c)] = VIS_V
    return a, labels


def associate(A, min_affinity: float = 0.5, allowed: np.ndarray | None = None) -> Assignment:
    """Detections (rows) to tracklets (cols) on cost 1 - A, gated at 1 - min_affinity.

    ``allowed`` (same shape, bool) forbids pairs outright, e.g. across classes.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        A = A.reshape(0, 0) if A.size == 0 else A
    cost = 1.0 - A
    if allowed is not None and A.size:
        cost = np.where(allowed, cost, 2.0)
    return hungarian(cost, gate=1.0 - min_affinity)
