"""Heterogeneous graph transformer network for paired visible/thermal frames.

Pipeline per frame pair::

    embed      modal input projection -> shared 4-stage strided pyramid
    encode     per stage: HGT layers with detection nodes as sinks, then IDA
               merge of the stages coarse -> fine into the dense queries
    decode     HGT pass with tracking nodes as sinks, then deformable
               cross-attention into the dense queries
    heads      center heatmap / box size / refine offset maps
    track      offsets of tracking nodes from frame k-1 to k
    affinity   detection x tracklet affinity from feature differences

Feature maps are stored as row tensors of shape ``(h * w, dim)`` in row-major
cell order; positions are ``(x, y)`` in feature-grid units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .association import Box, Detection
from .autodiff import Tensor
from .graph import DET, MODALITIES, TRK, EdgeGroup, HeteroGraph, build_graph

NODE_KINDS = ("DetV", "DetT", "TrkV", "TrkT")
EDGE_TYPES = ("DT", "TT", "DH")


@dataclass
class ModelConfig:
    dim: int = 32
    heads: int = 4
    layers: int = 1
    use_hgt: bool = True
    use_dh_edges: bool = True
    single_class: bool = False
    num_classes: int = 7
    downscale: int = 4
    stages: int = 4
    in_width: int = 8
    head_width: int = 32
    track_hidden: int = 32
    affinity_hidden: int = 32
    deform_points: int = 4
    deform_max_offset: float = 2.0
    radius: float = 20.0
    heatmap_prior: float = 0.1

    def __post_init__(self):
        if self.single_class:
            self.num_classes = 1
        if self.layers not in (1, 2, 3, 4):
            raise ValueError(f"layers must be in 1..4, got {self.layers}")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if self.stages < 1 or self.downscale < 1 or self.num_classes < 1:
            raise ValueError("stages, downscale and num_classes must be positive")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    def with_overrides(self, **kw) -> ModelConfig:
        return replace(self, **kw)


Params = dict  # name -> Tensor


def _dense(rng, params, name, fan_in, fan_out, gain=1.0, zero=False):
    if zero:
        w = np.zeros((fan_in, fan_out))
    else:
        w = rng.normal(0.0, gain / math.sqrt(fan_in), size=(fan_in, fan_out))
    params[f"{name}.weight"] = Tensor(w, requires_grad=True, name=f"{name}.weight")
    params[f"{name}.bias"] = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.bias")


def _hgt_params(rng, params, prefix, cfg):
    d, h, dk = cfg.dim, cfg.heads, cfg.head_dim
    for kind in NODE_KINDS:
        for proj in ("q", "k", "v"):
            _dense(rng, params, f"{prefix}.{proj}.{kind}", d, d)
    for et in EDGE_TYPES:
        for mat in ("att", "msg"):
            w = rng.normal(0.0, 1.0 / math.sqrt(dk), size=(h, dk, dk))
            params[f"{prefix}.{mat}.{et}"] = Tensor(w, requires_grad=True, name=f"{prefix}.{mat}.{et}")


def init_params(cfg: ModelConfig, seed: int = 0) -> Params:
    rng = np.random.default_rng(seed)
    p: Params = {}
    r, c0, d = cfg.downscale, cfg.in_width, cfg.dim
    _dense(rng, p, "embed.proj_v", 3, c0)
    _dense(rng, p, "embed.proj_t", 1, c0)
    _dense(rng, p, "embed.stage0", r * r * c0, d, gain=math.sqrt(2))
    for s in range(1, cfg.stages):
        _dense(rng, p, f"embed.stage{s}", 9 * d, d, gain=math.sqrt(2))
    for s in range(cfg.stages):
        for layer in range(cfg.layers):
            _hgt_params(rng, p, f"encoder.stage{s}.layer{layer}", cfg)
    for s in range(cfg.stages - 1):
        _dense(rng, p, f"ida.merge{s}.up", d, d)
        _dense(rng, p, f"ida.merge{s}.out", d, d)
    _hgt_params(rng, p, "decoder.hgt", cfg)
    k = cfg.deform_points
    _dense(rng, p, "decoder.value", d, d)
    _dense(rng, p, "decoder.offset", d, 2 * k, zero=True)
    _dense(rng, p, "decoder.attn", d, k, zero=True)
    _dense(rng, p, "decoder.out", d, d)
    hw = cfg.head_width
    for head, width in (("heatmap", cfg.num_classes), ("size", 2), ("refine", 2)):
        _dense(rng, p, f"heads.{head}.hidden", d, hw, gain=math.sqrt(2))
        _dense(rng, p, f"heads.{head}.out", hw, width, gain=0.1)
    prior = -math.log((1 - cfg.heatmap_prior) / cfg.heatmap_prior)
    p["heads.heatmap.out.bias"].data[:] = prior
    _dense(rng, p, "track.fc1", d, cfg.track_hidden, gain=math.sqrt(2))
    _dense(rng, p, "track.fc2", cfg.track_hidden, 2, gain=0.1)
    _dense(rng, p, "affinity.conv1", d, cfg.affinity_hidden, gain=math.sqrt(2))
    _dense(rng, p, "affinity.conv2", cfg.affinity_hidden, 1)
    return p


def _lin(x: Tensor, params: Params, name: str) -> Tensor:
    return ad.linear(x, params[f"{name}.weight"], params[f"{name}.bias"])


def _conv(x: Tensor, params: Params, name: str) -> Tensor:
    return ad.conv1x1(x, params[f"{name}.weight"], params[f"{name}.bias"])


# ---------------------------------------------------------------------------
# index tables (cached per extent)


def stage_extents(h: int, w: int, cfg: ModelConfig) -> list[tuple[int, int]]:
    ext = [(h // cfg.downscale, w // cfg.downscale)]
    for _ in range(1, cfg.stages):
        ph, pw = ext[-1]
        ext.append(((ph + 1) // 2, (pw + 1) // 2))
    return ext


@lru_cache(maxsize=64)
def _patch_index(h: int, w: int, r: int) -> np.ndarray:
    ho, wo = h // r, w // r
    i, j, dy, dx = np.meshgrid(np.arange(ho), np.arange(wo), np.arange(r), np.arange(r), indexing="ij")
    return ((i * r + dy) * w + (j * r + dx)).reshape(-1)


@lru_cache(maxsize=64)
def _stride2_index(h: int, w: int) -> np.ndarray:
    ho, wo = (h + 1) // 2, (w + 1) // 2
    i, j, dy, dx = np.meshgrid(np.arange(ho), np.arange(wo), np.arange(-1, 2), np.arange(-1, 2), indexing="ij")
    y, x = 2 * i + dy, 2 * j + dx
    ok = (y >= 0) & (y < h) & (x >= 0) & (x < w)
    return np.where(ok, y * w + x, -1).reshape(-1)


@lru_cache(maxsize=64)
def _upsample_index(hc: int, wc: int, hf: int, wf: int) -> np.ndarray:
    y, x = np.divmod(np.arange(hf * wf), wf)
    return (y // 2) * wc + (x // 2)


@lru_cache(maxsize=64)
def _pad_index(h: int, w: int, pad: int) -> np.ndarray:
    y, x = np.divmod(np.arange((h + 2 * pad) * (w + 2 * pad)), w + 2 * pad)
    y, x = y - pad, x - pad
    ok = (y >= 0) & (y < h) & (x >= 0) & (x < w)
    return np.where(ok, y * w + x, -1)


# ---------------------------------------------------------------------------
# embedding


@dataclass
class Pyramid:
    """Multi-stage row features of one modality."""

    stages: list[Tensor]
    extents: list[tuple[int, int]]

    def map(self, s: int) -> Tensor:
        h, w = self.extents[s]
        return ad.reshape(self.stages[s], (h, w, -1))


def _as_image(frame, channels: int, name: str) -> Tensor:
    t = ad.as_tensor(frame)
    if t.data.ndim == 2 and channels == 1:
        t = Tensor(t.data[..., None])
    if t.data.ndim != 3 or t.shape[2] != channels:
        raise ValueError(f"{name} frame must have shape (H, W, {channels}), got {t.shape}")
    return t


def embed_one(frame: Tensor, params: Params, cfg: ModelConfig, modality: str) -> Pyramid:
    h, w, _ = frame.shape
    r = cfg.downscale
    if h % r or w % r:
        raise ValueError(f"frame extent {(h, w)} is not divisible by the downscale ratio {r}")
    x = _conv(frame, params, f"embed.proj_{modality.lower()}")
    rows = ad.reshape(x, (h * w, cfg.in_width))
    ext = stage_extents(h, w, cfg)
    patches = ad.gather_rows(rows, _patch_index(h, w, r))
    cur = ad.relu(_lin(ad.reshape(patches, (ext[0][0] * ext[0][1], r * r * cfg.in_width)), params, "embed.stage0"))
    stages = [cur]
    for s in range(1, cfg.stages):
        ph, pw = ext[s - 1]
        taps = ad.gather_rows(cur, _stride2_index(ph, pw))
        taps = ad.reshape(taps, (ext[s][0] * ext[s][1], 9 * cfg.dim))
        cur = ad.relu(_lin(taps, params, f"embed.stage{s}"))
        stages.append(cur)
    return Pyramid(stages, ext)


def embed(frame_v, frame_t, params: Params, cfg: ModelConfig) -> dict[str, Pyramid]:
    fv = _as_image(frame_v, 3, "visible")
    ft = _as_image(frame_t, 1, "thermal")
    if fv.shape[:2] != ft.shape[:2]:
        raise ValueError(f"visible {fv.shape[:2]} and thermal {ft.shape[:2]} extents differ")
    return {"V": embed_one(fv, params, cfg, "V"), "T": embed_one(ft, params, cfg, "T")}


# ---------------------------------------------------------------------------
# HGT layer


def hgt_layer(
    groups: list[EdgeGroup],
    feats: dict[str, Tensor],
    params: Params,
    prefix: str,
    heads: int,
    sinks: tuple[str, ...],
    residual: bool = False,
    return_attention: bool = False,
):
    """One heterogeneous attention + message passing step.

    For every sink node, per-head logits ``K(src) W_att[type] . Q(sink)`` of all
    incoming edges (every edge type pooled) go through one softmax; messages
    ``V(src) W_msg[type]`` are summed with those weights. Sinks without
    incoming edges keep their input row. With ``residual`` the aggregated
    message is added to the input row instead of replacing it.
    """
    dim = next(iter(feats.values())).shape[1]
    for k, f in feats.items():
        if f.data.ndim != 2 or f.shape[1] != dim:
            raise ad.ShapeError(f"hgt_layer: node features {k} have shape {f.shape}, want (n, {dim})")
    dk = dim // heads
    out: dict[str, Tensor] = {}
    attn_out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    key_cache: dict[str, Tensor] = {}
    val_cache: dict[str, Tensor] = {}

    def keys(kind):
        if kind not in key_cache:
            key_cache[kind] = _lin(feats[kind], params, f"{prefix}.k.{kind}")
            val_cache[kind] = _lin(feats[kind], params, f"{prefix}.v.{kind}")
        return key_cache[kind], val_cache[kind]

    def per_head(x: Tensor, n: int, w: Tensor) -> Tensor:
        # (n, dim) -> (heads, n, dk) @ (heads, dk, dk) -> (n, heads, dk)
        x = ad.permute(ad.reshape(x, (n, heads, dk)), (1, 0, 2))
        return ad.permute(ad.matmul(x, w), (1, 0, 2))

    for sink in sinks:
        x = feats[sink]
        n_sink = x.shape[0]
        incoming = [g for g in groups if g.dst == sink and len(g)]
        if not incoming or n_sink == 0:
            out[sink] = x
            continue
        q = ad.reshape(_lin(x, params, f"{prefix}.q.{sink}"), (n_sink, heads, dk))
        logits, msgs, dst = [], [], []
        for g in incoming:
            kk, vv = keys(g.src)
            e = len(g)
            k_e = per_head(ad.gather_rows(kk, g.src_idx), e, params[f"{prefix}.att.{g.kind}"])
            q_e = ad.gather_rows(q, g.dst_idx)
            logits.append(ad.sum_(ad.mul(k_e, q_e), axis=-1))  # (e, heads)
            msgs.append(per_head(ad.gather_rows(vv, g.src_idx), e, params[f"{prefix}.msg.{g.kind}"]))
            dst.append(g.dst_idx)
        logit = ad.stack_rows(logits) if len(logits) > 1 else logits[0]
        msg = ad.stack_rows(msgs) if len(msgs) > 1 else msgs[0]
        dst_idx = np.concatenate(dst)
        att = _segment_softmax(logit, dst_idx, n_sink)
        agg = ad.reshape(ad.scatter_weighted_sum(msg, att, dst_idx, n_sink), (n_sink, dim))
        if residual:
            out[sink] = ad.add(x, agg)
        else:
            has = np.zeros(n_sink, dtype=bool)
            has[dst_idx] = True
            keep = np.where(has, -1, np.arange(n_sink))
            out[sink] = ad.add(agg, ad.gather_rows(x, keep))
        if return_attention:
            attn_out[sink] = (dst_idx, att.data)
    if return_attention:
        return out, attn_out
    return out


def _segment_softmax(logit: Tensor, seg: np.ndarray, n_seg: int) -> Tensor:
    """Softmax of (E, heads) logits within groups of equal ``seg``; padding composes it
    from gather_rows + softmax_lastdim."""
    e, heads = logit.shape
    order = np.argsort(seg, kind="stable")
    counts = np.bincount(seg, minlength=n_seg)
    present = np.flatnonzero(counts)
    width = int(counts.max())
    rank = np.empty(e, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank[order] = np.arange(e) - starts[seg[order]]
    row_of_seg = np.full(n_seg, -1)
    row_of_seg[present] = np.arange(present.size)
    slot = row_of_seg[seg] * width + rank  # flat position of each edge in the padded block
    table = np.full(present.size * width, -1, dtype=np.int64)
    table[slot] = np.arange(e)
    padded = ad.reshape(ad.gather_rows(logit, table), (present.size, width, heads))
    padded = ad.permute(padded, (0, 2, 1))
    mask = np.where(table.reshape(present.size, 1, width) >= 0, 0.0, -1e30)
    mask = np.broadcast_to(mask, (present.size, heads, width)).copy()
    soft = ad.softmax_lastdim(ad.add(padded, Tensor(mask)))
    flat = ad.reshape(ad.permute(soft, (0, 2, 1)), (present.size * width, heads))
    return ad.gather_rows(flat, slot)


# ---------------------------------------------------------------------------
# encoder


@dataclass
class EncoderOutput:
    queries: dict[str, Tensor]  # modality -> (h0*w0, dim) aggregated detection queries
    track_feats: dict[str, Tensor]  # modality -> (n, dim) hybrid tracking features, finest stage
    graphs: list[HeteroGraph]
    extent: tuple[int, int]
    positions: dict[str, np.ndarray]


def _stage_positions(pos: np.ndarray, s: int, ext: tuple[int, int]) -> np.ndarray:
    p = pos / (2**s)
    if p.size:
        p = np.stack([np.clip(p[:, 0], 0, ext[1] - 1), np.clip(p[:, 1], 0, ext[0] - 1)], axis=1)
    return p


def sample_nodes(fmap: Tensor, pos: np.ndarray) -> Tensor:
    if pos.shape[0] == 0:
        return Tensor(np.zeros((0, fmap.shape[2])))
    return ad.bilinear_sample(fmap, Tensor(pos))


def ida(stages: list[Tensor], extents: list[tuple[int, int]], params: Params) -> Tensor:
    """Iterative aggregation coarse -> fine: x = out(up(upsample(x)) + stage_s)."""
    x = stages[-1]
    for s in range(len(stages) - 2, -1, -1):
        hc, wc = extents[s + 1]
        hf, wf = extents[s]
        up = ad.gather_rows(x, _upsample_index(hc, wc, hf, wf))
        x = _lin(ad.add(_lin(up, params, f"ida.merge{s}.up"), stages[s]), params, f"ida.merge{s}.out")
    return x


def _positions(p) -> np.ndarray:
    return np.asarray(p, dtype=np.float64).reshape(-1, 2) if len(p) else np.zeros((0, 2))


def encode(
    cur: dict[str, Pyramid],
    prev: dict[str, Pyramid] | None,
    trk_pos: dict[str, np.ndarray],
    params: Params,
    cfg: ModelConfig,
    radius: float | None = None,
) -> EncoderOutput:
    """Fuse tracking nodes sampled from the previous frame's pyramid into the
    current detection queries, stage by stage, then merge the stages."""
    radius = cfg.radius if radius is None else radius
    pos = {m: _positions(trk_pos.get(m, [])) for m in MODALITIES}
    ext = cur["V"].extents
    if prev is None:
        prev = cur
        if any(pos[m].shape[0] for m in MODALITIES):
            raise ValueError("tracking nodes given without previous-frame features")
    stage_out: dict[str, list[Tensor]] = {"V": [], "T": []}
    track_feats: dict[str, Tensor] = {}
    graphs = []
    for s in range(cfg.stages):
        sp = {m: _stage_positions(pos[m], s, ext[s]) for m in MODALITIES}
        g = build_graph(sp["V"], sp["T"], ext[s], radius / 2**s)
        if not cfg.use_dh_edges:
            g = g.select(("DT", "TT"), cross_modal_tt=False)
        graphs.append(g)
        feats = {DET[m]: cur[m].stages[s] for m in MODALITIES}
        for m in MODALITIES:
            feats[TRK[m]] = sample_nodes(prev[m].map(s), sp[m])
        if cfg.use_hgt:
            det_groups = [gr for gr in g.groups if gr.kind in ("DT", "DH")]
            tt_groups = [gr for gr in g.groups if gr.kind == "TT"]
            for layer in range(cfg.layers):
                prefix = f"encoder.stage{s}.layer{layer}"
                new = hgt_layer(det_groups, feats, params, prefix, cfg.heads, ("DetV", "DetT"), residual=True)
                new.update(hgt_layer(tt_groups, feats, params, prefix, cfg.heads, ("TrkV", "TrkT"), residual=True))
                feats = new
        for m in MODALITIES:
            stage_out[m].append(feats[DET[m]])
        if s == 0:
            track_feats = {m: feats[TRK[m]] for m in MODALITIES}
            pos0 = sp
    queries = {m: ida(stage_out[m], ext, params) for m in MODALITIES}
    return EncoderOutput(queries, track_feats, graphs, ext[0], pos0)


# ---------------------------------------------------------------------------
# decoder


def deformable_sample(value_map: Tensor, ref: np.ndarray, offsets: Tensor, weights: Tensor) -> Tensor:
    """Weighted sum of bilinear samples at ``ref + offset`` (single scale).

    value_map (h, w, c); ref (n, 2); offsets (n * K, 2); weights (n, K).
    """
    n, k = weights.shape
    if offsets.shape != (n * k, 2) or ref.shape != (n, 2):
        raise ad.ShapeError(f"deformable_sample: ref {ref.shape}, offsets {offsets.shape}, weights {weights.shape}")
    base = Tensor(np.repeat(ref, k, axis=0))
    samples = ad.bilinear_sample(value_map, ad.add(base, offsets))
    idx = np.repeat(np.arange(n), k)
    return ad.scatter_weighted_sum(samples, ad.reshape(weights, (n * k,)), idx, n)


def decode(enc: EncoderOutput, params: Params, cfg: ModelConfig) -> dict[str, Tensor]:
    """Tracking features per modality for the tracking nodes of ``enc``."""
    g = enc.graphs[0]
    groups = []
    for gr in g.groups:
        if gr.kind in ("DT", "DH"):
            groups.append(gr.reversed())
        else:
            groups.append(gr)
    feats = {DET[m]: enc.queries[m] for m in MODALITIES}
    feats.update({TRK[m]: enc.track_feats[m] for m in MODALITIES})
    if cfg.use_hgt:
        feats = hgt_layer(groups, feats, params, "decoder.hgt", cfg.heads, ("TrkV", "TrkT"), residual=True)
    h, w = enc.extent
    k = cfg.deform_points
    pad = int(math.ceil(cfg.deform_max_offset)) + 1
    out = {}
    for m in MODALITIES:
        q = feats[TRK[m]]
        n = q.shape[0]
        if n == 0:
            out[m] = Tensor(np.zeros((0, cfg.dim)))
            continue
        value = _lin(enc.queries[m], params, "decoder.value")
        padded = ad.reshape(ad.gather_rows(value, _pad_index(h, w, pad)), (h + 2 * pad, w + 2 * pad, cfg.dim))
        raw = ad.reshape(_lin(q, params, "decoder.offset"), (n * k, 2))
        unit = ad.sub(ad.mul_scalar(ad.sigmoid(raw), 2.0), Tensor(np.ones((n * k, 2))))
        offsets = ad.mul_scalar(unit, cfg.deform_max_offset)
        weights = ad.softmax_lastdim(_lin(q, params, "decoder.attn"))
        agg = deformable_sample(padded, enc.positions[m] + pad, offsets, weights)
        out[m] = ad.add(q, _lin(agg, params, "decoder.out"))
    return out


# ---------------------------------------------------------------------------
# heads


@dataclass
class HeadMaps:
    heatmap: Tensor  # (h, w, classes), sigmoid
    size: Tensor  # (h, w, 2), exp -> positive, grid units
    refine: Tensor  # (h, w, 2), sub-cell center offset

    def numpy(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.heatmap.data, self.size.data, self.refine.data


def detect_heads(queries: Tensor, extent: tuple[int, int], params: Params) -> HeadMaps:
    h, w = extent
    fmap = ad.reshape(queries, (h, w, queries.shape[1]))

    def branch(name):
        return _conv(ad.relu(_conv(fmap, params, f"heads.{name}.hidden")), params, f"heads.{name}.out")

    return HeadMaps(ad.sigmoid(branch("heatmap")), ad.exp(branch("size")), branch("refine"))


def local_peaks(score: np.ndarray) -> np.ndarray:
    """Boolean mask of cells equal to the max of their 3x3 neighbourhood."""
    h, w = score.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = score
    stack = [padded[dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3)]
    return score >= np.max(stack, axis=0)


def extract_detections(
    heatmap: np.ndarray,
    size: np.ndarray,
    refine: np.ndarray,
    det_threshold: float = 0.4,
    max_k: int = 100,
    downscale: int = 4,
    modality: str = "V",
) -> list[Detection]:
    """Thresholded 3x3 peaks of the class-max heatmap, best ``max_k`` first.

    Boxes come back in image pixels: center ``(cell + refine) * downscale``,
    extents ``size * downscale``.
    """
    if not 0.0 < det_threshold < 1.0:
        raise ValueError(f"det_threshold must lie in (0, 1), got {det_threshold}")
    score = heatmap.max(axis=2)
    cls = heatmap.argmax(axis=2)
    ys, xs = np.nonzero(local_peaks(score) & (score >= det_threshold))
    order = np.lexsort((xs, ys, -score[ys, xs]))[:max_k]
    dets = []
    for i in order:
        y, x = int(ys[i]), int(xs[i])
        cx = (x + refine[y, x, 0]) * downscale
        cy = (y + refine[y, x, 1]) * downscale
        bw = max(float(size[y, x, 0]) * downscale, 1e-6)
        bh = max(float(size[y, x, 1]) * downscale, 1e-6)
        dets.append(
            Detection(Box(float(cx), float(cy), bw, bh), float(min(score[y, x], 1.0)), int(cls[y, x]), modality, cell=(x, y))
        )
    return dets


def track_offset_branch(track_feats: Tensor, params: Params) -> Tensor:
    if track_feats.shape[0] == 0:
        return Tensor(np.zeros((0, 2)))
    return _lin(ad.relu(_lin(track_feats, params, "track.fc1")), params, "track.fc2")


def affinity(U: Tensor, V: Tensor, params: Params) -> Tensor:
    """A[i, j] = sigmoid(conv2(relu(conv1(U_i - V_j)))), computed as 1x1 convs
    over the (N, M, dim) grid of feature differences."""
    U, V = ad.as_tensor(U), ad.as_tensor(V)
    if U.data.ndim != 2 or V.data.ndim != 2 or U.shape[1] != V.shape[1]:
        raise ad.ShapeError(f"affinity: U {U.shape} and V {V.shape} widths differ")
    n, m = U.shape[0], V.shape[0]
    if n == 0 or m == 0:
        return Tensor(np.zeros((n, m)))
    d = U.shape[1]
    rows = ad.gather_rows(U, np.repeat(np.arange(n), m))
    cols = ad.gather_rows(V, np.tile(np.arange(m), n))
    edge = ad.reshape(ad.sub(rows, cols), (n, m, d))
    hid = ad.relu(_conv(edge, params, "affinity.conv1"))
    return ad.reshape(ad.sigmoid(_conv(hid, params, "affinity.conv2")), (n, m))


# ---------------------------------------------------------------------------
# wrapper


@dataclass
class FrameOutput:
    encoder: EncoderOutput
    maps: dict[str, HeadMaps]
    track_feats: dict[str, Tensor]  # decoder output per modality
    offsets: dict[str, Tensor]  # (n, 2) grid units, frame k-1 -> k


@dataclass
class HgtTrackNet:
    cfg: ModelConfig = field(default_factory=ModelConfig)
    params: Params | None = None
    seed: int = 0

    def __post_init__(self):
        if self.params is None:
            self.params = init_params(self.cfg, self.seed)

    def parameters(self) -> list[Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def named_tensors(self) -> dict[str, np.ndarray]:
        return {k: self.params[k].data for k in sorted(self.params)}

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        missing = sorted(set(self.params) - set(tensors))
        extra = sorted(set(tensors) - set(self.params))
        if missing or extra:
            raise KeyError(f"checkpoint mismatch: missing {missing}, extra {extra}")
        for k, v in tensors.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"checkpoint tensor {k} has shape {v.shape}, want {self.params[k].shape}")
        for k, v in tensors.items():
            self.params[k].data = np.array(v, dtype=np.float64)

    def embed(self, frame_v, frame_t) -> dict[str, Pyramid]:
        return embed(frame_v, frame_t, self.params, self.cfg)

    def forward(
        self,
        cur: dict[str, Pyramid],
        prev: dict[str, Pyramid] | None,
        trk_pos: dict[str, np.ndarray],
        radius: float | None = None,
    ) -> FrameOutput:
        enc = encode(cur, prev, trk_pos, self.params, self.cfg, radius)
        feats = decode(enc, self.params, self.cfg)
        maps = {m: detect_heads(enc.queries[m], enc.extent, self.params) for m in MODALITIES}
        offsets = {m: track_offset_branch(feats[m], self.params) for m in MODALITIES}
        return FrameOutput(enc, maps, feats, offsets)

    def affinity(self, U: Tensor, V: Tensor) -> Tensor:
        return affinity(U, V, self.params)

