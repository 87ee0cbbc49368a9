"""CLEAR-MOT, identity F1 and HOTA over MOT-format records."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .association import hungarian, iou_matrix
from .mot import CLASS_NAMES, MotRecord

HOTA_ALPHAS = np.arange(1, 20) * 0.05
_EPS = np.finfo(float).eps


class AlignmentError(ValueError):
    pass


def _frames(gt, pred, num_frames):
    by_gt, by_pr = defaultdict(list), defaultdict(list)
    for r in gt:
        by_gt[r.frame].append(r)
    for r in pred:
        by_pr[r.frame].append(r)
    for name, recs in (("ground truth", by_gt), ("prediction", by_pr)):
        for f, rows in recs.items():
            if f < 1 or (num_frames is not None and f > num_frames):
                raise AlignmentError(f"{name} frame {f} outside 1..{num_frames}")
            ids = [r.track_id for r in rows]
            if len(set(ids)) != len(ids):
                raise AlignmentError(f"{name} frame {f} repeats an id")
    last = max([0, *by_gt, *by_pr]) if num_frames is None else num_frames
    return [(f, by_gt.get(f, []), by_pr.get(f, [])) for f in range(1, last + 1)]


@dataclass
class ClearMot:
    GT: int = 0
    TP: int = 0
    FP: int = 0
    FN: int = 0
    IDs: int = 0
    iou_sum: float = 0.0
    MT: int = 0
    PT: int = 0
    ML: int = 0
    num_gt_ids: int = 0

    @property
    def MOTA(self) -> float:
        if self.GT == 0:
            return 1.0 if self.FP == 0 else -float(self.FP)
        return 1.0 - (self.FN + self.FP + self.IDs) / self.GT

    @property
    def MOTP(self) -> float:
        return self.iou_sum / self.TP if self.TP else 0.0


def frame_matches(gts, prs, iou_thresh, carry: dict[int, int]) -> list[tuple[int, int, float]]:
    """Indices (gt, pred, iou) matched in one frame.

    Previous correspondences (gt id -> pred id) that still overlap enough are
    kept first, the rest is solved on 1 - IoU.
    """
    ious = iou_matrix([r.box for r in gts], [r.box for r in prs])
    pr_index = {r.track_id: j for j, r in enumerate(prs)}
    out = []
    used_g, used_p = set(), set()
    for i, g in enumerate(gts):
        j = pr_index.get(carry.get(g.track_id, None), None)
        if j is not None and ious[i, j] > iou_thresh:
            out.append((i, j, float(ious[i, j])))
            used_g.add(i)
            used_p.add(j)
    rest_g = [i for i in range(len(gts)) if i not in used_g]
    rest_p = [j for j in range(len(prs)) if j not in used_p]
    if rest_g and rest_p:
        sub = 1.0 - ious[np.ix_(rest_g, rest_p)]
        for a, b in hungarian(sub, gate=1.0 - iou_thresh).matches:
            i, j = rest_g[a], rest_p[b]
            out.append((i, j, float(ious[i, j])))
    return sorted(out)


def clearmot(gt, pred, iou_thresh: float = 0.3, num_frames: int | None = None) -> ClearMot:
    res = ClearMot()
    carry: dict[int, int] = {}  # gt id -> pred id from the last frame it was matched
    present: dict[int, int] = defaultdict(int)
    covered: dict[int, int] = defaultdict(int)
    for _, gts, prs in _frames(gt, pred, num_frames):
        matches = frame_matches(gts, prs, iou_thresh, carry)
        res.GT += len(gts)
        res.TP += len(matches)
        res.FN += len(gts) - len(matches)
        res.FP += len(prs) - len(matches)
        for g in gts:
            present[g.track_id] += 1
        for i, j, v in matches:
            gid, pid = gts[i].track_id, prs[j].track_id
            if gid in carry and carry[gid] != pid:
                res.IDs += 1
            carry[gid] = pid
            covered[gid] += 1
            res.iou_sum += v
    for gid, n in present.items():
        ratio = covered[gid] / n
        if ratio >= 0.8:
            res.MT += 1
        elif ratio <= 0.2:
            res.ML += 1
        else:
            res.PT += 1
    res.num_gt_ids = len(present)
    return res


@dataclass
class IdScores:
    IDTP: int
    IDFP: int
    IDFN: int

    @property
    def IDF1(self) -> float:
        denom = 2 * self.IDTP + self.IDFP + self.IDFN
        return 2 * self.IDTP / denom if denom else 1.0


def id_scores(gt, pred, iou_thresh: float = 0.3, num_frames: int | None = None) -> IdScores:
    frames = _frames(gt, pred, num_frames)
    gids = sorted({r.track_id for r in gt})
    pids = sorted({r.track_id for r in pred})
    gi = {g: i for i, g in enumerate(gids)}
    pi = {p: j for j, p in enumerate(pids)}
    overlap = np.zeros((len(gids), len(pids)))
    for _, gts, prs in frames:
        if not gts or not prs:
            continue
        ious = iou_matrix([r.box for r in gts], [r.box for r in prs])
        for a, b in zip(*np.nonzero(ious > iou_thresh)):
            overlap[gi[gts[a].track_id], pi[prs[b].track_id]] += 1
    idtp = 0
    if overlap.size:
        for a, b in hungarian(-overlap).matches:
            idtp += int(overlap[a, b])
    return IdScores(idtp, len(pred) - idtp, len(gt) - idtp)


def idf1(gt, pred, iou_thresh: float = 0.3, num_frames: int | None = None) -> float:
    return id_scores(gt, pred, iou_thresh, num_frames).IDF1


@dataclass
class HotaScores:
    HOTA: float
    DetA: float
    AssA: float
    LocA: float
    per_alpha: np.ndarray


def hota_scores(gt, pred, num_frames: int | None = None) -> HotaScores:
    frames = _frames(gt, pred, num_frames)
    gids = sorted({r.track_id for r in gt})
    pids = sorted({r.track_id for r in pred})
    gi = {g: i for i, g in enumerate(gids)}
    pi = {p: j for j, p in enumerate(pids)}
    ng, np_ = len(gids), len(pids)
    potential = np.zeros((ng, np_))
    gt_count = np.zeros((ng, 1))
    pr_count = np.zeros((1, np_))
    cached = []
    for _, gts, prs in frames:
        g_idx = np.array([gi[r.track_id] for r in gts], dtype=np.int64)
        p_idx = np.array([pi[r.track_id] for r in prs], dtype=np.int64)
        sim = iou_matrix([r.box for r in gts], [r.box for r in prs])
        cached.append((g_idx, p_idx, sim))
        if len(g_idx) and len(p_idx):
            denom = sim.sum(0)[None, :] + sim.sum(1)[:, None] - sim
            ratio = np.zeros_like(sim)
            ok = denom > _EPS
            ratio[ok] = sim[ok] / denom[ok]
            potential[np.ix_(g_idx, p_idx)] += ratio
        gt_count[g_idx, 0] += 1
        pr_count[0, p_idx] += 1
    with np.errstate(divide="ignore", invalid="ignore"):
        global_score = np.where(potential > 0, potential / (gt_count + pr_count - potential), 0.0)

    A = len(HOTA_ALPHAS)
    tp, fn, fp, loc = np.zeros(A), np.zeros(A), np.zeros(A), np.zeros(A)
    match_counts = np.zeros((A, ng, np_))
    for g_idx, p_idx, sim in cached:
        if len(g_idx) == 0 or len(p_idx) == 0:
            fn += len(g_idx)
            fp += len(p_idx)
            continue
        score = global_score[np.ix_(g_idx, p_idx)] * sim
        pairs = hungarian(-score).matches
        rows = np.array([r for r, _ in pairs], dtype=np.int64)
        cols = np.array([c for _, c in pairs], dtype=np.int64)
        for a, alpha in enumerate(HOTA_ALPHAS):
            keep = sim[rows, cols] >= alpha - _EPS
            r, c = rows[keep], cols[keep]
            n = len(r)
            tp[a] += n
            fn[a] += len(g_idx) - n
            fp[a] += len(p_idx) - n
            if n:
                loc[a] += sim[r, c].sum()
                np.add.at(match_counts[a], (g_idx[r], p_idx[c]), 1)
    ass = np.zeros(A)
    for a in range(A):
        mc = match_counts[a]
        ass_a = mc / np.maximum(1, gt_count + pr_count - mc)
        ass[a] = (mc * ass_a).sum() / max(1.0, tp[a])
    det = tp / np.maximum(1.0, tp + fn + fp)
    per_alpha = np.sqrt(det * ass)
    loca = np.where(tp > 0, loc / np.maximum(tp, 1), 0.0)
    return HotaScores(float(per_alpha.mean()), float(det.mean()), float(ass.mean()), float(loca.mean()), per_alpha)


def hota(gt, pred, num_frames: int | None = None) -> float:
    return hota_scores(gt, pred, num_frames).HOTA


def both_visible_count(gt_v, gt_t) -> int:
    """Number of (frame, id) pairs annotated in both modalities."""
    return len({(r.frame, r.track_id) for r in gt_v} & {(r.frame, r.track_id) for r in gt_t})


@dataclass
class MetricsReport:
    HOTA: float
    MOTA: float
    MOTP: float
    IDF1: float
    IDs: int
    FP: int
    FN: int
    MT: int
    ML: int
    GT: int
    per_class: dict[str, MetricsReport] = field(default_factory=dict)

    FIELDS = ("HOTA", "MOTA", "MOTP", "IDF1", "IDs", "FP", "FN", "MT", "ML", "GT")

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.FIELDS}

    def keyvalue(self, prefix: str = "") -> str:
        lines = []
        for k, v in self.as_dict().items():
            lines.append(f"{prefix}{k}={v:.6f}" if isinstance(v, float) else f"{prefix}{k}={v}")
        for name, sub in self.per_class.items():
            lines.append(sub.keyvalue(prefix=f"{prefix}{name}."))
        return "\n".join(lines)

    def table(self, title: str = "all") -> str:
        rows = [(title, self)] + [(f"  {n}", r) for n, r in self.per_class.items()]
        return format_table(rows)


def format_table(rows: list[tuple[str, MetricsReport]]) -> str:
    head = ["name", *MetricsReport.FIELDS]
    body = []
    for name, r in rows:
        cells = [name]
        for k in MetricsReport.FIELDS:
            v = getattr(r, k)
            cells.append(f"{100 * v:.2f}" if isinstance(v, float) else str(v))
        body.append(cells)
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))  # noqa: E731
    return "\n".join([fmt(head), fmt(["-" * w for w in widths]), *map(fmt, body)])


def _single(gt, pred, iou_thresh, num_frames) -> MetricsReport:
    cm = clearmot(gt, pred, iou_thresh, num_frames)
    return MetricsReport(
        HOTA=hota(gt, pred, num_frames), MOTA=cm.MOTA, MOTP=cm.MOTP,
        IDF1=idf1(gt, pred, iou_thresh, num_frames), IDs=cm.IDs, FP=cm.FP, FN=cm.FN,
        MT=cm.MT, ML=cm.ML, GT=cm.GT,
    )


def evaluate(gt: list[MotRecord], pred: list[MotRecord], iou_thresh: float = 0.3,
             num_frames: int | None = None, per_class: bool = True) -> MetricsReport:
    report = _single(gt, pred, iou_thresh, num_frames)
    if per_class:
        for cid in sorted({r.class_id for r in gt} | {r.class_id for r in pred}):
            name = CLASS_NAMES[cid - 1] if 1 <= cid <= len(CLASS_NAMES) else f"class{cid}"
            report.per_class[name] = _single([r for r in gt if r.class_id == cid],
                                             [r for r in pred if r.class_id == cid], iou_thresh, num_frames)
    return report
