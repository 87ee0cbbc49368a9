"""Training objectives: center focal loss, sparse L1 regression and the affinity
matching loss, plus the ground-truth heatmap render they are measured against."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LOG_CLAMP = 1e-12


@dataclass
class LossWeights:
    w_cf: float = 1.0
    w_bs: float = 0.1
    w_r: float = 1.0
    w_td: float = 1.0
    w_match: float = 1.0

    def __post_init__(self):
        vals = [self.w_cf, self.w_bs, self.w_r, self.w_td, self.w_match]
        if any(v < 0 for v in vals) or not any(v > 0 for v in vals):
            raise ValueError("loss weights must be non-negative with at least one positive")


@dataclass
class GtRender:
    heatmap: np.ndarray  # (h, w, classes)
    cells: np.ndarray  # (n, 2) integer (x, y) center cells
    sizes: np.ndarray  # (n, 2) box extents in grid units
    refine: np.ndarray  # (n, 2) sub-cell residuals in [0, 1)
    ids: list[int] = field(default_factory=list)


def gaussian_radius(height: float, width: float, min_overlap: float = 0.7) -> float:
    """Largest corner displacement keeping IoU >= min_overlap (CornerNet rule)."""
    a1 = 1
    b1 = height + width
    c1 = width * height * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 + math.sqrt(b1**2 - 4 * a1 * c1)) / 2
    a2 = 4
    b2 = 2 * (height + width)
    c2 = (1 - min_overlap) * width * height
    r2 = (b2 + math.sqrt(b2**2 - 4 * a2 * c2)) / 2
    a3 = 4 * min_overlap
    b3 = -2 * min_overlap * (height + width)
    c3 = (min_overlap - 1) * width * height
    r3 = (b3 + math.sqrt(b3**2 - 4 * a3 * c3)) / 2
    return min(r1, r2, r3)


def splat(heat: np.ndarray, cx: int, cy: int, radius: int, amplitude: float = 1.0) -> None:
    """Max-combine a Gaussian peak of height ``amplitude`` centred on cell (cx, cy)."""
    h, w = heat.shape
    sigma = (2 * radius + 1) / 6
    ys, xs = np.ogrid[-radius : radius + 1, -radius : radius + 1]
    g = np.exp(-(xs * xs + ys * ys) / (2 * sigma * sigma))
    g[radius, radius] = 1.0
    x0, x1 = max(cx - radius, 0), min(cx + radius + 1, w)
    y0, y1 = max(cy - radius, 0), min(cy + radius + 1, h)
    patch = g[y0 - cy + radius : y1 - cy + radius, x0 - cx + radius : x1 - cx + radius]
    np.maximum(heat[y0:y1, x0:x1], amplitude * patch, out=heat[y0:y1, x0:x1])


def render_targets(
    centers: np.ndarray,
    sizes: np.ndarray,
    classes: list[int],
    extent: tuple[int, int],
    num_classes: int,
    amplitudes: list[float] | None = None,
    ids: list[int] | None = None,
) -> GtRender:
    """Render a heatmap from centers and sizes given in grid units.

    ``classes`` are 0-based channel indices.
    """
    h, w = extent
    heat = np.zeros((h, w, num_classes))
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    sizes = np.asarray(sizes, dtype=np.float64).reshape(-1, 2)
    cells = np.floor(centers).astype(np.int64)
    cells[:, 0] = np.clip(cells[:, 0], 0, w - 1)
    cells[:, 1] = np.clip(cells[:, 1], 0, h - 1)
    refine = centers - cells
    for i, ((cx, cy), (bw, bh)) in enumerate(zip(cells, sizes)):
        radius = max(1, int(gaussian_radius(bh, bw)))
        amp = 1.0 if amplitudes is None else float(amplitudes[i])
        splat(heat[:, :, classes[i]], int(cx), int(cy), radius, amp)
    return GtRender(heat, cells, sizes, refine, list(ids or []))


def focal_loss(c_hat: Tensor, Y: np.ndarray, alpha: float = 2.0, beta: float = 4.0) -> Tensor:
    """Penalty-reduced pixelwise focal loss, normalised by the number of Y == 1 cells."""
    Y = np.asarray(Y, dtype=np.float64)
    if c_hat.shape != Y.shape:
        raise ad.ShapeError(f"focal_loss: prediction {c_hat.shape} vs target {Y.shape}")
    pos = Y == 1.0
    n = int(pos.sum())
    p = ad.clip(c_hat, LOG_CLAMP, 1.0 - LOG_CLAMP)
    one = Tensor(np.ones(Y.shape))
    q = ad.sub(one, p)
    # x**alpha composed as exp(alpha * log x); inputs are clamped positive
    pos_term = ad.mul(ad.exp(ad.mul_scalar(ad.log(q), alpha)), ad.log(p))
    neg_term = ad.mul(ad.exp(ad.mul_scalar(ad.log(p), alpha)), ad.log(q))
    neg_w = np.where(pos, 0.0, (1.0 - Y) ** beta)
    total = ad.add(ad.mul(pos_term, Tensor(pos.astype(np.float64))), ad.mul(neg_term, Tensor(neg_w)))
    return ad.mul_scalar(ad.sum_(total), -1.0 / max(n, 1))


def rows_l1(pred: Tensor, target) -> Tensor:
    """Mean over rows of the summed absolute error; zero rows give 0."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ad.ShapeError(f"rows_l1: prediction {pred.shape} vs target {target.shape}")
    n = pred.shape[0]
    if n == 0:
        return Tensor(0.0)
    return ad.mul_scalar(ad.sum_(ad.abs_(ad.sub(pred, Tensor(target)))), 1.0 / n)


def sparse_l1(pred_map: Tensor, positions, values) -> Tensor:
    """L1 of a (h, w, c) map read at integer (x, y) cells against per-target values."""
    h, w, c = pred_map.shape
    pos = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
    if pos.shape[0] == 0:
        return Tensor(0.0)
    if (pos[:, 0] < 0).any() or (pos[:, 0] >= w).any() or (pos[:, 1] < 0).any() or (pos[:, 1] >= h).any():
        raise ValueError(f"sparse_l1: target position outside grid {(h, w)}")
    rows = ad.gather_rows(ad.reshape(pred_map, (h * w, c)), pos[:, 1] * w + pos[:, 0])
    return rows_l1(rows, np.asarray(values, dtype=np.float64).reshape(-1, c))


def _log_softmax_rows(x: Tensor) -> Tensor:
    return ad.log(ad.clip(ad.softmax_lastdim(x), LOG_CLAMP, 1.0))


def matching_loss(A: Tensor, identity_target: bool = False, parts: bool = False):
    """Binary cross-entropy of A against the identity plus row/column
    softmax cross-entropy terms.

    The softmax terms are weighted by A itself; ``identity_target`` weights
    them by the identity instead. With ``parts`` returns (bce, ce).
    """
    if A.data.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ad.ShapeError(f"matching_loss: A must be square, got {A.shape}")
    n = A.shape[0]
    if n == 0:
        zero = Tensor(0.0)
        return (zero, zero) if parts else zero
    eye = np.eye(n)
    a = ad.clip(A, LOG_CLAMP, 1.0 - LOG_CLAMP)
    one = Tensor(np.ones((n, n)))
    bce_terms = ad.add(ad.mul(Tensor(eye), ad.log(a)), ad.mul(Tensor(1.0 - eye), ad.log(ad.sub(one, a))))
    bce = ad.mul_scalar(ad.sum_(bce_terms), -1.0 / (n * n))
    weight = Tensor(eye) if identity_target else A
    row = ad.sum_(ad.mul(weight, _log_softmax_rows(A)))
    col_w = Tensor(eye) if identity_target else ad.permute(A, (1, 0))
    col = ad.sum_(ad.mul(col_w, _log_softmax_rows(ad.permute(A, (1, 0)))))
    ce = ad.mul_scalar(ad.add(row, col), -1.0 / n)
    if parts:
        return bce, ce
    return ad.add(bce, ce)


def total_loss(components: dict[str, Tensor], w: LossWeights) -> Tensor:
    """Weighted sum over the keys cf, bs, r, td, match (missing keys count as 0)."""
    out = None
    for key, weight in (("cf", w.w_cf), ("bs", w.w_bs), ("r", w.w_r), ("td", w.w_td), ("match", w.w_match)):
        if key not in components:
            continue
        comp = components[key]
        if not np.isfinite(comp.data).all():
            raise FloatingPointError(f"loss component {key} is not finite")
        term = ad.mul_scalar(comp, weight)
        out = term if out is None else ad.add(out, term)
    return out if out is not None else Tensor(0.0)
