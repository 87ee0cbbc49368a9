"""Frame-pair training objective and a momentum gradient-descent loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import MODALITIES
from .losses import LossWeights, focal_loss, matching_loss, render_targets, rows_l1, sparse_l1, total_loss
from .model import HgtTrackNet
from .mot import MotRecord
from .synth import SynthSequence


class NumericalFailure(RuntimeError):
    """Raised when the loss stops being finite; carries the last finite parameters."""

    def __init__(self, msg: str, last_finite: dict[str, np.ndarray], step: int):
        super().__init__(msg)
        self.last_finite = last_finite
        self.step = step


@dataclass
class TrainConfig:
    steps: int = 500
    lr: float = 1e-3
    momentum: float = 0.9
    batch: int = 1
    seed: int = 0
    grad_clip: float = 0.0  # global norm; 0 disables
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.steps < 0 or self.lr < 0 or not 0.0 <= self.momentum < 1.0 or self.batch < 1:
            raise ValueError("steps and lr must be >= 0, momentum in [0, 1), batch >= 1")


@dataclass
class PairTargets:
    """Ground truth for the transition k-1 -> k, per modality, in grid units."""

    prev_pos: dict[str, np.ndarray]  # tracking nodes at k-1
    prev_ids: dict[str, list[int]]
    heat: dict[str, object]  # GtRender at k
    cur_pos: dict[str, dict[int, np.ndarray]]  # id -> continuous center at k


def _by_frame(records: list[MotRecord]) -> dict[int, list[MotRecord]]:
    out: dict[int, list[MotRecord]] = {}
    for r in records:
        out.setdefault(r.frame - 1, []).append(r)
    return out


def pair_targets(seq: SynthSequence, k: int, net: HgtTrackNet) -> PairTargets:
    cfg = net.cfg
    r = cfg.downscale
    h, w = seq.frames_v.shape[1] // r, seq.frames_v.shape[2] // r
    prev_pos, prev_ids, heat, cur_pos = {}, {}, {}, {}
    for m, gt in (("V", seq.gt_v), ("T", seq.gt_t)):
        frames = _by_frame(gt)
        before = sorted(frames.get(k - 1, []), key=lambda x: x.track_id)
        now = sorted(frames.get(k, []), key=lambda x: x.track_id)
        prev_pos[m] = np.array([[x.box.x / r, x.box.y / r] for x in before]).reshape(-1, 2)
        prev_ids[m] = [x.track_id for x in before]
        centers = np.array([[x.box.x / r, x.box.y / r] for x in now]).reshape(-1, 2)
        sizes = np.array([[x.box.w / r, x.box.h / r] for x in now]).reshape(-1, 2)
        classes = [0 if cfg.single_class else min(x.class_id - 1, cfg.num_classes - 1) for x in now]
        heat[m] = render_targets(centers, sizes, classes, (h, w), cfg.num_classes, ids=[x.track_id for x in now])
        cur_pos[m] = {x.track_id: c for x, c in zip(now, centers)}
    return PairTargets(prev_pos, prev_ids, heat, cur_pos)


def pair_loss(net: HgtTrackNet, seq: SynthSequence, k: int, weights: LossWeights,
              targets: PairTargets | None = None) -> tuple[Tensor, dict[str, float]]:
    """Total loss of the transition k-1 -> k, summed over both modalities."""
    tg = targets or pair_targets(seq, k, net)
    prev = net.embed(seq.frames_v[k - 1], seq.frames_t[k - 1])
    cur = net.embed(seq.frames_v[k], seq.frames_t[k])
    out = net.forward(cur, prev, tg.prev_pos, net.cfg.radius)
    h, w = out.encoder.extent
    parts: dict[str, list[Tensor]] = {key: [] for key in ("cf", "bs", "r", "td", "match")}
    for m in MODALITIES:
        gt = tg.heat[m]
        maps = out.maps[m]
        parts["cf"].append(focal_loss(maps.heatmap, gt.heatmap))
        parts["bs"].append(sparse_l1(maps.size, gt.cells, gt.sizes))
        parts["r"].append(sparse_l1(maps.refine, gt.cells, gt.refine))
        keep = [i for i, tid in enumerate(tg.prev_ids[m]) if tid in tg.cur_pos[m]]
        if keep:
            delta = np.array([tg.cur_pos[m][tg.prev_ids[m][i]] - out.encoder.positions[m][i] for i in keep])
            parts["td"].append(rows_l1(ad.gather_rows(out.offsets[m], keep), delta))
            centers = np.array([tg.cur_pos[m][tg.prev_ids[m][i]] for i in keep])
            centers[:, 0] = np.clip(centers[:, 0], 0, w - 1)
            centers[:, 1] = np.clip(centers[:, 1], 0, h - 1)
            q = out.encoder.queries[m]
            U = ad.bilinear_sample(ad.reshape(q, (h, w, q.shape[1])), Tensor(centers))
            V = ad.gather_rows(out.track_feats[m], keep)
            parts["match"].append(matching_loss(net.affinity(U, V)))
    comps = {}
    for key, items in parts.items():
        acc = items[0] if items else Tensor(0.0)
        for x in items[1:]:
            acc = ad.add(acc, x)
        comps[key] = acc
    total = total_loss(comps, weights)
    return total, {key: float(v.data) for key, v in comps.items()}


def mean_loss(net: HgtTrackNet, seq: SynthSequence, weights: LossWeights, cache=None) -> float:
    pairs = range(1, seq.num_frames)
    if not len(pairs):
        return 0.0
    with ad.no_grad():
        vals = [float(pair_loss(net, seq, k, weights, cache[k] if cache else None)[0].data) for k in pairs]
    return float(np.mean(vals))


@dataclass
class TrainResult:
    initial: float
    final: float
    curve: list[float]  # per-step minibatch loss
    steps_run: int


def train(net: HgtTrackNet, seq: SynthSequence, cfg: TrainConfig, log=None) -> TrainResult:
    """Momentum gradient descent on the mean frame-pair loss.

    ``initial``/``final`` are the full-sequence mean losses before the first
    and after the last update. Raises NumericalFailure on a non-finite loss
    after restoring the last finite parameters.
    """
    if seq.num_frames < 2:
        raise ValueError("training needs at least two frames")
    cache = {k: pair_targets(seq, k, net) for k in range(1, seq.num_frames)}
    initial = mean_loss(net, seq, cfg.weights, cache)
    if not math.isfinite(initial):
        raise NumericalFailure("initial loss is not finite", net.named_tensors(), 0)
    rng = np.random.default_rng(cfg.seed)
    params = net.parameters()
    velocity = [np.zeros_like(p.data) for p in params]
    curve: list[float] = []
    order: list[int] = []
    for step in range(cfg.steps):
        snapshot = {k: v.copy() for k, v in net.named_tensors().items()}
        for p in params:
            p.grad = None
        batch_loss = 0.0
        for _ in range(cfg.batch):
            if not order:
                order = list(rng.permutation(np.arange(1, seq.num_frames)))
            k = int(order.pop())
            try:
                loss, _ = pair_loss(net, seq, k, cfg.weights, cache[k])
            except (FloatingPointError, ad.SamplingError) as exc:
                net.load_tensors(snapshot)
                raise NumericalFailure(str(exc), snapshot, step) from None
            ad.backward(ad.mul_scalar(loss, 1.0 / cfg.batch), params)
            batch_loss += float(loss.data) / cfg.batch
        grads = [p.grad for p in params]
        if not math.isfinite(batch_loss) or not all(np.isfinite(g).all() for g in grads):
            net.load_tensors(snapshot)
            raise NumericalFailure(f"non-finite loss or gradient at step {step}", snapshot, step)
        if cfg.grad_clip > 0:
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
            if norm > cfg.grad_clip:
                grads = [g * (cfg.grad_clip / norm) for g in grads]
        for p, v, g in zip(params, velocity, grads):
            v *= cfg.momentum
            v += g
            p.data = p.data - cfg.lr * v
        curve.append(batch_loss)
        if log is not None:
            log(step, batch_loss)
    final = mean_loss(net, seq, cfg.weights, cache)
    if not math.isfinite(final):
        raise NumericalFailure("final loss is not finite", net.named_tensors(), cfg.steps)
    return TrainResult(initial, final, curve, cfg.steps)
