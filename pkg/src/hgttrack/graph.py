"""Heterogeneous graph over detection and tracking nodes of both modalities.

Node kinds: dense detection nodes ``DetV``/``DetT`` (one per feature-grid
cell, row-major index ``y * W + x``) and sparse tracking nodes ``TrkV``/``TrkT``.
Edge kinds, all gated by ``distance < radius`` in grid units:

* ``DT``  tracking -> detection, same modality
* ``DH``  tracking -> detection, other modality
* ``TT``  tracking <-> tracking, any modality, stored in both directions, no self edges

Detection nodes are never linked to each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

DET = {"V": "DetV", "T": "DetT"}
TRK = {"V": "TrkV", "T": "TrkT"}
NODE_KINDS = ("DetV", "DetT", "TrkV", "TrkT")
EDGE_KINDS = ("DT", "TT", "DH")
MODALITIES = ("V", "T")


def other(modality: str) -> str:
    return "T" if modality == "V" else "V"


def modality_of(kind: str) -> str:
    return kind[-1]


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class NodeRef:
    node_kind: str
    index: int
    position: tuple[float, float]


@dataclass(frozen=True)
class EdgeGroup:
    """All edges of one edge kind between one (source kind, sink kind) pair."""

    kind: str
    src: str
    dst: str
    src_idx: np.ndarray
    dst_idx: np.ndarray
    dist: np.ndarray

    def __len__(self) -> int:
        return int(self.src_idx.size)

    def reversed(self) -> EdgeGroup:
        order = np.lexsort((self.dst_idx, self.src_idx))
        return EdgeGroup(
            self.kind, self.dst, self.src, self.dst_idx[order], self.src_idx[order], self.dist[order]
        )


@dataclass(frozen=True)
class HeteroGraph:
    grid: tuple[int, int]
    trk: dict[str, np.ndarray]
    radius: float
    groups: tuple[EdgeGroup, ...] = field(default_factory=tuple)

    def edges(self, kind: str) -> list[tuple[str, int, str, int]]:
        out = []
        for g in self.groups:
            if g.kind == kind:
                out.extend((g.src, int(s), g.dst, int(d)) for s, d in zip(g.src_idx, g.dst_idx))
        return out

    @property
    def edges_DT(self):
        return self.edges("DT")

    @property
    def edges_TT(self):
        return self.edges("TT")

    @property
    def edges_DH(self):
        return self.edges("DH")

    def num_nodes(self, kind: str) -> int:
        if kind.startswith("Det"):
            return self.grid[0] * self.grid[1]
        return int(self.trk[modality_of(kind)].shape[0])

    def position(self, kind: str, index: int) -> tuple[float, float]:
        if not 0 <= index < self.num_nodes(kind):
            raise KeyError(f"no node {kind}[{index}] in graph")
        if kind.startswith("Det"):
            return float(index % self.grid[1]), float(index // self.grid[1])
        p = self.trk[modality_of(kind)][index]
        return float(p[0]), float(p[1])

    def node(self, kind: str, index: int) -> NodeRef:
        return NodeRef(kind, index, self.position(kind, index))

    def select(self, keep_kinds: tuple[str, ...] = EDGE_KINDS, cross_modal_tt: bool = True) -> HeteroGraph:
        """Subgraph restricted to some edge kinds (and optionally same-modality TT)."""
        groups = []
        for g in self.groups:
            if g.kind not in keep_kinds:
                continue
            if g.kind == "TT" and not cross_modal_tt and modality_of(g.src) != modality_of(g.dst):
                continue
            groups.append(g)
        return HeteroGraph(self.grid, self.trk, self.radius, tuple(groups))

    def validate(self) -> None:
        h, w = self.grid
        for m in MODALITIES:
            p = self.trk[m]
            if p.size and ((p[:, 0] < 0) | (p[:, 0] > w - 1) | (p[:, 1] < 0) | (p[:, 1] > h - 1)).any():
                raise GraphError(f"tracking node of {TRK[m]} outside grid {self.grid}")
        for g in self.groups:
            if g.src.startswith("Det"):
                raise GraphError(f"{g.kind} edge with detection source {g.src}")
            if g.kind in ("DT", "DH"):
                if not g.dst.startswith("Det"):
                    raise GraphError(f"{g.kind} edge must end at a detection node, got {g.dst}")
                same = modality_of(g.src) == modality_of(g.dst)
                if (g.kind == "DT") != same:
                    raise GraphError(f"{g.kind} edge {g.src}->{g.dst} has the wrong modality pairing")
            elif g.kind == "TT":
                if not g.dst.startswith("Trk"):
                    raise GraphError("TT edge must end at a tracking node")
                if g.src == g.dst and (g.src_idx == g.dst_idx).any():
                    raise GraphError("TT self edge")
            else:
                raise GraphError(f"unknown edge kind {g.kind}")
            for s, d, dist in zip(g.src_idx, g.dst_idx, g.dist):
                ps, pd = self.position(g.src, int(s)), self.position(g.dst, int(d))
                true = float(np.hypot(ps[0] - pd[0], ps[1] - pd[1]))
                if not true < self.radius or abs(true - dist) > 1e-9:
                    raise GraphError(f"{g.kind} edge {g.src}[{s}]->{g.dst}[{d}] at distance {true}")

    def dump(self) -> str:
        """One line per edge: ``kind src_mod src_idx dst_mod dst_idx dist``."""
        lines = []
        for g in self.groups:
            for s, d, dist in zip(g.src_idx, g.dst_idx, g.dist):
                lines.append(
                    f"{g.kind} {modality_of(g.src)} {int(s)} {modality_of(g.dst)} {int(d)} {dist:.6f}"
                )
        return "\n".join(lines) + ("\n" if lines else "")

    def __iter__(self) -> Iterator[EdgeGroup]:
        return iter(self.groups)


def _as_positions(p) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64).reshape(-1, 2) if len(p) else np.zeros((0, 2))
    return arr


def _grid_edges(src: np.ndarray, grid: tuple[int, int], radius: float):
    h, w = grid
    ys, xs = np.divmod(np.arange(h * w), w)
    if src.shape[0] == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    d = np.hypot(xs[:, None] - src[None, :, 0], ys[:, None] - src[None, :, 1])
    cell, s = np.nonzero(d < radius)  # nonzero is row-major: sink, then source
    return s.astype(np.int64), cell.astype(np.int64), d[cell, s]


def build_graph(trk_v, trk_t, grid: tuple[int, int], radius_d: float) -> HeteroGraph:
    if radius_d <= 0:
        raise GraphError("radius_d must be positive")
    h, w = int(grid[0]), int(grid[1])
    trk = {"V": _as_positions(trk_v), "T": _as_positions(trk_t)}
    for m in MODALITIES:
        for i, (x, y) in enumerate(trk[m]):
            if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
                raise GraphError(f"tracking node {TRK[m]}[{i}] at ({x}, {y}) lies outside grid {(h, w)}")
    groups: list[EdgeGroup] = []
    for m in MODALITIES:
        s, d, dist = _grid_edges(trk[m], (h, w), radius_d)
        groups.append(EdgeGroup("DT", TRK[m], DET[m], s, d, dist))
    for m_dst in MODALITIES:
        for m_src in MODALITIES:
            a, b = trk[m_src], trk[m_dst]
            if a.shape[0] == 0 or b.shape[0] == 0:
                groups.append(EdgeGroup("TT", TRK[m_src], TRK[m_dst], *(np.zeros(0, np.int64),) * 2, np.zeros(0)))
                continue
            dist = np.hypot(b[:, None, 0] - a[None, :, 0], b[:, None, 1] - a[None, :, 1])
            ok = dist < radius_d
            if m_src == m_dst:
                np.fill_diagonal(ok, False)
            d_idx, s_idx = np.nonzero(ok)
            groups.append(EdgeGroup("TT", TRK[m_src], TRK[m_dst], s_idx, d_idx, dist[d_idx, s_idx]))
    for m in MODALITIES:
        s, d, dist = _grid_edges(trk[other(m)], (h, w), radius_d)
        groups.append(EdgeGroup("DH", TRK[other(m)], DET[m], s, d, dist))
    g = HeteroGraph((h, w), trk, float(radius_d), tuple(groups))
    return g


def neighbors(g: HeteroGraph, target: NodeRef, edge_kind: str) -> list[NodeRef]:
    if edge_kind not in EDGE_KINDS:
        raise KeyError(f"unknown edge kind {edge_kind}")
    g.position(target.node_kind, target.index)  # raises on unknown node
    out = []
    for grp in g.groups:
        if grp.kind != edge_kind or grp.dst != target.node_kind:
            continue
        for s in grp.src_idx[grp.dst_idx == target.index]:
            out.append(g.node(grp.src, int(s)))
    return out
