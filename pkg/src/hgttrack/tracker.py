"""Online tracklet generation over paired visible/thermal frames.

Per frame the tracker
  1. asks a perception backend for detections, queries and tracking features,
  2. pairs thermal and visible detections (visibility state q),
  3. associates detections with tracklets per modality on the affinity head,
  4. re-detects targets that were kept in one modality only,
  5. advances every tracklet's lifecycle,
and keeps predicted centers as tracking nodes for the next frame.

Two backends are provided: :class:`ModelPerception` runs the network and
:class:`OraclePerception` replays ground truth (exact boxes, identity
affinity), which isolates the tracker logic for testing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import autodiff as ad
from .association import (
    VIS_BOTH,
    VIS_NONE,
    VIS_T,
    VIS_V,
    Box,
    Detection,
    associate,
    cross_modal_match,
    iou,
)
from .autodiff import Tensor
from .graph import MODALITIES, other
from .losses import gaussian_radius, splat
from .model import HgtTrackNet, extract_detections
from .mot import MotRecord

TENTATIVE, ACTIVE, LOST, TERMINATED = "Tentative", "Active", "Lost", "Terminated"


@dataclass
class TrackerConfig:
    det_threshold: float = 0.4
    radius_d: float = 20.0
    redet_enabled: bool = True
    redet_mode: str = "affinity"
    iou_tau: float = 0.3
    search_expand: float = 1.2
    min_affinity: float = 0.5
    max_lost: int = 20
    init_hits: int = 3
    max_detections: int = 100
    class_aware: bool = True

    def __post_init__(self):
        if not 0.0 <= self.iou_tau < 1.0:
            raise ValueError(f"iou_tau must lie in [0, 1), got {self.iou_tau}")
        if self.search_expand < 1.0:
            raise ValueError(f"search_expand must be >= 1, got {self.search_expand}")
        if self.redet_mode not in ("affinity", "heatmap"):
            raise ValueError(f"redet_mode must be 'affinity' or 'heatmap', got {self.redet_mode!r}")
        if not 0.0 < self.det_threshold < 1.0:
            raise ValueError(f"det_threshold must lie in (0, 1), got {self.det_threshold}")
        if self.radius_d <= 0 or self.max_lost < 0 or self.init_hits < 1:
            raise ValueError("radius_d must be positive, max_lost >= 0 and init_hits >= 1")


def redet_threshold(det: float, c_h: float) -> float:
    """Detection threshold relaxed by the other modality's confidence."""
    return det / (1.0 + c_h)


@dataclass
class TargetState:
    global_id: int
    boxes: dict[str, Box | None] = field(default_factory=lambda: {"V": None, "T": None})
    q: str = VIS_NONE
    class_id: int = 0  # 0-based channel
    features: dict[str, np.ndarray | None] = field(default_factory=lambda: {"V": None, "T": None})
    scores: dict[str, float] = field(default_factory=lambda: {"V": 0.0, "T": 0.0})
    consec_hits: int = 0
    lost_frames: dict[str, int] = field(default_factory=lambda: {"V": 0, "T": 0})
    ever_both: bool = False

    @property
    def box_v(self) -> Box | None:
        return self.boxes["V"]

    @property
    def box_t(self) -> Box | None:
        return self.boxes["T"]


@dataclass
class Tracklet:
    target: TargetState
    state: str = TENTATIVE
    history: dict[int, dict[str, tuple[Box, float]]] = field(default_factory=dict)
    run_start: int | None = None
    emit_from: int | None = None  # first frame reported, set on activation

    @property
    def gid(self) -> int:
        return self.target.global_id


def lifecycle(t: Tracklet, matched: dict[str, bool], cfg: TrackerConfig, frame: int,
              recovered: dict[str, bool] | None = None) -> list[str]:
    """Advance counters and state; returns event names ('activate', 'lost', 'terminate')."""
    recovered = recovered or {"V": False, "T": False}
    tg = t.target
    if t.state == TERMINATED:
        return []
    events = []
    hit = any(matched.values())
    if hit:
        if tg.consec_hits == 0:
            t.run_start = frame
        tg.consec_hits += 1
    else:
        tg.consec_hits = 0
    for m in MODALITIES:
        tg.lost_frames[m] = 0 if (matched.get(m) or recovered.get(m)) else tg.lost_frames[m] + 1
    if t.state == TENTATIVE:
        if tg.consec_hits >= cfg.init_hits:
            t.state = ACTIVE
            t.emit_from = t.run_start
            events.append("activate")
    elif hit:
        t.state = ACTIVE
    elif t.state == ACTIVE:
        t.state = LOST
        events.append("lost")
    if all(tg.lost_frames[m] > cfg.max_lost for m in MODALITIES):
        t.state = TERMINATED
        events.append("terminate")
    return events


# -- perception backends ------------------------------------------------------


@dataclass
class TrackNode:
    gid: int
    position: np.ndarray  # (2,) grid units
    feature: np.ndarray | None = None


@dataclass
class ModalityEvidence:
    heatmap: np.ndarray  # (h, w, classes)
    size: np.ndarray  # (h, w, 2) grid units
    refine: np.ndarray  # (h, w, 2)
    queries: np.ndarray  # (h*w, d) detection queries
    detections: list[Detection]
    track_feats: dict[int, np.ndarray] = field(default_factory=dict)
    hybrid_feats: dict[int, np.ndarray] = field(default_factory=dict)
    offsets: dict[int, np.ndarray] = field(default_factory=dict)  # grid units


class Perception(Protocol):
    downscale: int
    image_size: tuple[int, int]  # (H, W) pixels
    num_frames: int

    def observe(self, k: int, nodes: dict[str, list[TrackNode]]) -> dict[str, ModalityEvidence]: ...

    def affinity(self, U: np.ndarray, V: np.ndarray) -> np.ndarray: ...


class ModelPerception:
    def __init__(self, net: HgtTrackNet, frames_v: np.ndarray, frames_t: np.ndarray,
                 det_threshold: float = 0.4, max_k: int = 100, radius: float = 20.0):
        if frames_v.shape[:3] != frames_t.shape[:3]:
            raise ad.ShapeError(f"modalities disagree: {frames_v.shape} vs {frames_t.shape}")
        self.net = net
        self.frames_v, self.frames_t = frames_v, frames_t
        self.det_threshold, self.max_k, self.radius = det_threshold, max_k, radius
        self.downscale = net.cfg.downscale
        self.num_frames = int(frames_v.shape[0])
        self.image_size = (int(frames_v.shape[1]), int(frames_v.shape[2]))
        self._prev = None

    def observe(self, k, nodes):
        r = self.downscale
        with ad.no_grad():
            cur = self.net.embed(self.frames_v[k], self.frames_t[k])
            pos = {m: np.array([n.position for n in nodes[m]], dtype=np.float64).reshape(-1, 2) for m in MODALITIES}
            if self._prev is None:
                pos = {m: np.zeros((0, 2)) for m in MODALITIES}
            out = self.net.forward(cur, self._prev, pos, self.radius)
            self._prev = cur
            h, w = out.encoder.extent
            evidence = {}
            for m in MODALITIES:
                heat, size, refine = out.maps[m].numpy()
                dets = extract_detections(heat, size, refine, self.det_threshold, self.max_k, r, m)
                q = out.encoder.queries[m]
                if dets:
                    centers = np.array([[d.box.x / r, d.box.y / r] for d in dets])
                    centers[:, 0] = np.clip(centers[:, 0], 0, w - 1)
                    centers[:, 1] = np.clip(centers[:, 1], 0, h - 1)
                    feats = ad.bilinear_sample(ad.reshape(q, (h, w, q.shape[1])), Tensor(centers)).data
                    for d, f in zip(dets, feats):
                        d.feature = f
                ev = ModalityEvidence(heat, size, refine, q.data, dets)
                if pos[m].shape[0]:
                    for i, n in enumerate(nodes[m]):
                        ev.track_feats[n.gid] = out.track_feats[m].data[i]
                        ev.hybrid_feats[n.gid] = out.encoder.track_feats[m].data[i]
                        ev.offsets[n.gid] = out.offsets[m].data[i]
                evidence[m] = ev
        return evidence

    def affinity(self, U, V):
        if len(U) == 0 or len(V) == 0:
            return np.zeros((len(U), len(V)))
        with ad.no_grad():
            return self.net.affinity(Tensor(np.asarray(U)), Tensor(np.asarray(V))).data


class OraclePerception:
    """Ground-truth backend: detections are the annotated boxes whose
    visibility reaches the threshold, features carry the annotation id and
    the affinity is 0.99 for equal ids and 0.01 otherwise."""

    def __init__(self, gt: dict[str, list[MotRecord]], image_size: tuple[int, int], num_frames: int,
                 downscale: int = 4, num_classes: int = 7, det_threshold: float = 0.4):
        self.gt = {m: {} for m in MODALITIES}
        for m in MODALITIES:
            for rec in gt[m]:
                self.gt[m].setdefault(rec.frame - 1, []).append(rec)
        self.image_size = image_size
        self.num_frames = num_frames
        self.downscale = downscale
        self.num_classes = num_classes
        self.det_threshold = det_threshold

    def observe(self, k, nodes):
        H, W = self.image_size
        r = self.downscale
        h, w = H // r, W // r
        evidence = {}
        for m in MODALITIES:
            recs = sorted(self.gt[m].get(k, []), key=lambda x: (x.visibility, -x.track_id))
            heat = np.zeros((h, w, self.num_classes))
            size = np.ones((h, w, 2))
            refine = np.zeros((h, w, 2))
            ident = np.zeros((h * w, 1))
            dets = []
            for rec in recs:  # weakest first, so stronger targets own shared cells
                cx, cy = rec.box.x / r, rec.box.y / r
                gx, gy = min(int(cx), w - 1), min(int(cy), h - 1)
                rad = max(1, int(gaussian_radius(rec.box.h / r, rec.box.w / r)))
                cls = min(rec.class_id - 1, self.num_classes - 1)
                splat(heat[:, :, cls], gx, gy, rad, rec.visibility)
                size[gy, gx] = (rec.box.w / r, rec.box.h / r)
                refine[gy, gx] = (cx - gx, cy - gy)
                ident[gy * w + gx, 0] = rec.track_id
            for rec in sorted(recs, key=lambda x: x.track_id):
                if rec.visibility >= self.det_threshold:
                    cls = min(rec.class_id - 1, self.num_classes - 1)
                    dets.append(Detection(rec.box, min(rec.visibility, 1.0), cls, m,
                                          feature=np.array([float(rec.track_id)])))
            ev = ModalityEvidence(heat, size, refine, ident, dets)
            for n in nodes[m]:
                f = n.feature if n.feature is not None else np.zeros(1)
                ev.track_feats[n.gid] = f
                ev.hybrid_feats[n.gid] = f
                ev.offsets[n.gid] = np.zeros(2)
            evidence[m] = ev
        return evidence

    def affinity(self, U, V):
        U = np.asarray(U, dtype=np.float64).reshape(len(U), -1)
        V = np.asarray(V, dtype=np.float64).reshape(len(V), -1)
        if len(U) == 0 or len(V) == 0:
            return np.zeros((len(U), len(V)))
        same = (U[:, None, 0] == V[None, :, 0]) & (U[:, None, 0] > 0)
        return np.where(same, 0.99, 0.01)


# -- re-detection ---------------------------------------------------------------


def search_region(prev: Box, other_box: Box, expand: float, image_size: tuple[int, int]) -> Box | None:
    x0, y0 = min(prev.left, other_box.left), min(prev.top, other_box.top)
    x1, y1 = max(prev.right, other_box.right), max(prev.bottom, other_box.bottom)
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    hw, hh = (x1 - x0) * expand / 2, (y1 - y0) * expand / 2
    H, W = image_size
    x0, x1 = max(cx - hw, 0.0), min(cx + hw, float(W))
    y0, y1 = max(cy - hh, 0.0), min(cy + hh, float(H))
    if x1 <= x0 or y1 <= y0:
        return None
    return Box.from_corners(x0, y0, x1, y1)


def redet(target: TargetState, modality: str, ev: ModalityEvidence, perception: Perception,
          cfg: TrackerConfig, other_box: Box, other_score: float) -> Detection | None:
    """Look for ``target`` in ``modality`` near where it was and where the
    other modality sees it now; None when nothing passes the relaxed test."""
    prev = target.boxes[modality]
    if prev is None:
        return None
    sr = search_region(prev, other_box, cfg.search_expand, perception.image_size)
    if sr is None:
        return None
    r = perception.downscale
    h, w = ev.heatmap.shape[:2]
    gx0, gx1 = int(np.floor(sr.left / r)), int(np.ceil(sr.right / r))
    gy0, gy1 = int(np.floor(sr.top / r)), int(np.ceil(sr.bottom / r))
    xs = np.arange(max(gx0, 0), min(gx1, w))
    ys = np.arange(max(gy0, 0), min(gy1, h))
    if xs.size == 0 or ys.size == 0:
        return None
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    gy, gx = gy.ravel(), gx.ravel()
    score = ev.heatmap.max(axis=2)[gy, gx]
    if cfg.redet_mode == "affinity":
        hybrid = ev.hybrid_feats.get(target.global_id)
        if hybrid is None:
            hybrid = target.features[modality] if target.features[modality] is not None else target.features[other(modality)]
        if hybrid is None:
            return None
        aff = perception.affinity(ev.queries[gy * w + gx], np.asarray(hybrid)[None, :])[:, 0]
        best = int(np.argmax(aff))
        if aff[best] < cfg.min_affinity:
            return None
    else:
        best = int(np.argmax(score))
    y, x = int(gy[best]), int(gx[best])
    c = float(score[best])
    if not c > redet_threshold(cfg.det_threshold, other_score):
        return None
    sx, sy = ev.size[y, x]
    box = Box((x + ev.refine[y, x, 0]) * r, (y + ev.refine[y, x, 1]) * r, max(sx * r, 1e-6), max(sy * r, 1e-6))
    if cfg.redet_mode == "affinity" and not iou(box, prev) > cfg.iou_tau:
        return None
    return Detection(box, min(c, 1.0), int(ev.heatmap[y, x].argmax()), modality,
                     feature=ev.queries[y * w + x].copy(), cell=(x, y))


# -- the tracker ----------------------------------------------------------------


@dataclass
class StepOutput:
    frame: int
    records: dict[str, list[MotRecord]]
    events: list[str]


class Tracker:
    def __init__(self, perception: Perception, cfg: TrackerConfig | None = None):
        self.perception = perception
        self.cfg = cfg or TrackerConfig()
        self.tracks: list[Tracklet] = []
        self.next_id = 1
        self.frame = 0
        self.events: list[str] = []

    def _log(self, frame: int, kind: str, gid: int, modality: str = "-", detail: str = "") -> str:
        line = f"{frame + 1} {kind} {gid} {modality}" + (f" {detail}" if detail else "")
        self.events.append(line)
        return line

    def _nodes(self) -> dict[str, list[TrackNode]]:
        r = self.perception.downscale
        nodes = {m: [] for m in MODALITIES}
        for t in self.tracks:
            if t.state == TERMINATED:
                continue
            for m in MODALITIES:
                b = t.target.boxes[m]
                if b is not None and t.target.lost_frames[m] <= self.cfg.max_lost:
                    nodes[m].append(TrackNode(t.gid, np.array([b.x / r, b.y / r]), t.target.features[m]))
        return nodes

    def _new_track(self, frame: int) -> Tracklet:
        t = Tracklet(TargetState(self.next_id))
        self.next_id += 1
        self.tracks.append(t)
        return t

    def step(self) -> StepOutput:
        k = self.frame
        cfg = self.cfg
        start = len(self.events)
        nodes = self._nodes()
        ev = self.perception.observe(k, nodes)
        dets = {m: ev[m].detections for m in MODALITIES}
        by_gid = {t.gid: t for t in self.tracks}

        # cross-modal pairing: thermal rows, visible cols
        cross, _ = cross_modal_match(dets["T"], dets["V"])
        partner = {("T", a): ("V", b) for a, b in cross.matches}
        partner.update({("V", b): ("T", a) for a, b in cross.matches})

        # per-modality association on the affinity head
        owner: dict[tuple[str, int], int] = {}  # (modality, det index) -> gid
        matched: dict[int, dict[str, int]] = {}  # gid -> modality -> det index
        for m in MODALITIES:
            cand = nodes[m]
            if not dets[m] or not cand:
                continue
            U = np.stack([d.feature for d in dets[m]])
            V = np.stack([ev[m].track_feats[n.gid] for n in cand])
            A = self.perception.affinity(U, V)
            allowed = None
            if cfg.class_aware:
                dc = np.array([d.class_id for d in dets[m]])
                tc = np.array([by_gid[n.gid].target.class_id for n in cand])
                allowed = dc[:, None] == tc[None, :]
            for i, j in associate(A, cfg.min_affinity, allowed).matches:
                gid = cand[j].gid
                owner[(m, i)] = gid
                matched.setdefault(gid, {})[m] = i
                self._log(k, "match", gid, m, f"{A[i, j]:.4f}")

        # a detection left over in one modality follows its cross-modal partner
        for (m, i), (om, oi) in sorted(partner.items()):
            gid = owner.get((om, oi))
            if (m, i) in owner or gid is None or m in matched.get(gid, {}):
                continue
            owner[(m, i)] = gid
            matched[gid][m] = i
            self._log(k, "attach", gid, m)

        # update matched targets
        for gid, per in matched.items():
            tg = by_gid[gid].target
            for m, i in per.items():
                d = dets[m][i]
                tg.boxes[m] = d.box
                tg.features[m] = d.feature
                tg.scores[m] = d.score
                tg.class_id = d.class_id

        # spawn tracklets from unclaimed detections, pairing across modalities
        spawned: list[Tracklet] = []
        for m in ("T", "V"):
            for i, d in enumerate(dets[m]):
                if (m, i) in owner:
                    continue
                t = self._new_track(k)
                spawned.append(t)
                keys = [(m, i)]
                p = partner.get((m, i))
                if p is not None and p not in owner:
                    keys.append(p)
                for mm, ii in keys:
                    dd = dets[mm][ii]
                    owner[(mm, ii)] = t.gid
                    matched.setdefault(t.gid, {})[mm] = ii
                    t.target.boxes[mm] = dd.box
                    t.target.features[mm] = dd.feature
                    t.target.scores[mm] = dd.score
                    t.target.class_id = dd.class_id
                self._log(k, "init", t.gid, "".join(sorted(mm for mm, _ in keys)))
        by_gid.update({t.gid: t for t in spawned})

        # re-detection for targets kept in exactly one modality
        recovered: dict[int, dict[str, Detection]] = {}
        if cfg.redet_enabled:
            for t in self.tracks:
                if t.state == TERMINATED or t in spawned or not t.target.ever_both:
                    continue
                per = matched.get(t.gid, {})
                if len(per) != 1:
                    continue
                (om,) = per
                m = other(om)
                d = redet(t.target, m, ev[m], self.perception, cfg, t.target.boxes[om], t.target.scores[om])
                if d is None:
                    continue
                recovered.setdefault(t.gid, {})[m] = d
                t.target.boxes[m] = d.box
                t.target.features[m] = d.feature
                t.target.scores[m] = d.score
                self._log(k, "redet", t.gid, m, f"{d.score:.4f}")

        # lifecycle, visibility state, history and motion prediction
        r = self.perception.downscale
        for t in self.tracks:
            if t.state == TERMINATED:
                continue
            tg = t.target
            per = matched.get(t.gid, {})
            rec = recovered.get(t.gid, {})
            seen = {m: (m in per or m in rec) for m in MODALITIES}
            tg.q = {(True, True): VIS_BOTH, (True, False): VIS_V, (False, True): VIS_T}.get(
                (seen["V"], seen["T"]), VIS_NONE)
            if tg.q == VIS_BOTH:
                tg.ever_both = True
            obs = {}
            for m in MODALITIES:
                if seen[m]:
                    obs[m] = (tg.boxes[m], tg.scores[m])
            if obs:
                t.history[k] = obs
            for name in lifecycle(t, {m: m in per for m in MODALITIES}, cfg, k, {m: m in rec for m in MODALITIES}):
                self._log(k, name, t.gid)
            for m in MODALITIES:
                if not seen[m] and tg.boxes[m] is not None and t.gid in ev[m].offsets:
                    dx, dy = ev[m].offsets[t.gid]
                    tg.boxes[m] = tg.boxes[m].shifted(float(dx) * r, float(dy) * r)

        out = self._emit(k)
        self.frame += 1
        return StepOutput(k, out, self.events[start:])

    def _emit(self, k: int) -> dict[str, list[MotRecord]]:
        """Records that become reportable at frame k (including backfill on activation)."""
        out = {m: [] for m in MODALITIES}
        for t in self.tracks:
            if t.emit_from is None:
                continue
            if t.emit_from == -1:
                frames = [k] if k in t.history else []
            else:
                frames = sorted(f for f in t.history if f >= t.emit_from)
                t.emit_from = -1
            for f in frames:
                for m, (box, score) in t.history[f].items():
                    out[m].append(MotRecord(f + 1, t.gid, box, float(score), t.target.class_id + 1, 1.0))
        return out

    def run(self) -> TrackResult:
        records = {m: [] for m in MODALITIES}
        while self.frame < self.perception.num_frames:
            step = self.step()
            for m in MODALITIES:
                records[m].extend(step.records[m])
        for m in MODALITIES:
            records[m].sort(key=lambda r: (r.frame, r.track_id))
        return TrackResult(records, list(self.events), self.tracks)


@dataclass
class TrackResult:
    records: dict[str, list[MotRecord]]
    events: list[str]
    tracks: list[Tracklet]


def run_tracker(perception: Perception, cfg: TrackerConfig | None = None) -> TrackResult:
    return Tracker(perception, cfg).run()
