"""Synthetic paired visible/thermal sequences with scripted challenge attributes.

A scenario is a line-oriented text file::

    seed = 3
    duration = 30
    width = 64
    height = 64
    target = class:1 spawn:1 despawn:30 kind:linear x:12 y:20 vx:1.2 vy:0.4 w:8 h:8
    mm = target:0 modality:V start:10 end:14

Scalar keys take a single value; compound keys take ``name:value`` pairs and
may repeat. Frame numbers (spawn, despawn, window start/end) are 1-based
and inclusive, the same numbering the emitted MOT annotations use. Window
``target`` fields index the target list from 0.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .association import Box
from .mot import MotRecord, parse_mot, write_mot

# annotations whose effective strength falls below this are treated as invisible
MIN_VISIBLE = 0.05
ATTRIBUTES = ("MM", "OCC", "TC", "LI", "CM", "DO", "FM")


class ScenarioError(ValueError):
    pass


@dataclass
class TargetScript:
    class_id: int = 1
    spawn: int = 1  # 1-based frame numbers, like the MOT files
    despawn: int = -1  # -1 means the last frame
    kind: str = "linear"
    x: float = 32.0
    y: float = 32.0
    vx: float = 0.0
    vy: float = 0.0
    radius: float = 10.0
    omega: float = 0.2
    phase: float = 0.0
    step: float = 1.0
    w: float = 8.0
    h: float = 8.0
    contrast_v: float = 1.0
    contrast_t: float = 1.0


@dataclass
class Window:
    kind: str
    start: int
    end: int
    target: int = -1  # -1 = every target
    modality: str = "V"
    factor: float = 0.0
    speed: float = 12.0


@dataclass
class Cluster:
    x: float
    y: float
    count: int = 3
    spread: float = 6.0
    spawn: int = 1
    despawn: int = -1
    class_id: int = 2
    w: float = 6.0
    h: float = 6.0


@dataclass
class ScenarioSpec:
    seed: int = 0
    duration: int = 30
    width: int = 64
    height: int = 64
    fps: float = 15.0
    noise: float = 0.0
    blob_amplitude: float = 0.6
    drift: tuple[float, float] = (0.0, 0.0)
    targets: list[TargetScript] = field(default_factory=list)
    windows: list[Window] = field(default_factory=list)
    clusters: list[Cluster] = field(default_factory=list)

    def validate(self) -> None:
        if self.duration < 0:
            raise ScenarioError("duration: must be >= 0")
        if self.width < 8 or self.height < 8:
            raise ScenarioError("width/height: must be at least 8")
        last = self.duration
        for i, t in enumerate(self.targets):
            desp = last if t.despawn < 0 else t.despawn
            if not 1 <= t.spawn <= desp <= last:
                raise ScenarioError(f"target[{i}].spawn/despawn: outside 1..{last}")
            if t.kind not in ("linear", "circular", "random-walk"):
                raise ScenarioError(f"target[{i}].kind: unknown trajectory {t.kind!r}")
            if not 1 <= t.class_id <= 7:
                raise ScenarioError(f"target[{i}].class: class ids run 1..7")
            if t.w <= 0 or t.h <= 0 or t.w >= self.width or t.h >= self.height:
                raise ScenarioError(f"target[{i}].w/h: must be positive and smaller than the image")
        for w in self.windows:
            if not 1 <= w.start <= w.end <= last:
                raise ScenarioError(f"{w.kind.lower()}.start/end: window {w.start}..{w.end} outside 1..{last}")
            if w.target >= len(self.all_targets()):
                raise ScenarioError(f"{w.kind.lower()}.target: no target {w.target}")
            if w.modality not in ("V", "T"):
                raise ScenarioError(f"{w.kind.lower()}.modality: must be V or T")
            if w.kind == "FM" and not w.speed > 10:
                raise ScenarioError("fm.speed: fast motion requires more than 10 px per frame")
        for c in self.clusters:
            desp = last if c.despawn < 0 else c.despawn
            if not 1 <= c.spawn <= desp <= last:
                raise ScenarioError("do.spawn/despawn: outside the sequence")

    def all_targets(self) -> list[TargetScript]:
        """Scripted targets followed by the expanded members of every cluster."""
        out = list(self.targets)
        rng = np.random.default_rng([self.seed, 7])
        for c in self.clusters:
            for _ in range(c.count):
                dx, dy = rng.uniform(-c.spread, c.spread, size=2)
                out.append(TargetScript(class_id=c.class_id, spawn=c.spawn, despawn=c.despawn,
                                        x=c.x + dx, y=c.y + dy, w=c.w, h=c.h))
        return out

    def tags(self) -> list[str]:
        found = {w.kind for w in self.windows}
        if self.drift != (0.0, 0.0):
            found.add("CM")
        if self.clusters:
            found.add("DO")
        return [a for a in ATTRIBUTES if a in found]


_SCALARS = {"seed": int, "duration": int, "width": int, "height": int, "fps": float, "noise": float,
            "blob_amplitude": float}
_WINDOW_KEYS = {"mm": "MM", "occ": "OCC", "tc": "TC", "li": "LI", "fm": "FM"}


def _pairs(key: str, value: str) -> dict[str, str]:
    out = {}
    for tok in value.split():
        name, sep, val = tok.partition(":")
        if not sep or not name or not val:
            raise ScenarioError(f"{key}: expected name:value, got {tok!r}")
        out[name] = val
    return out


def _fill(obj, key: str, pairs: dict[str, str], aliases: dict[str, str] | None = None):
    aliases = aliases or {}
    kwargs = {}
    for name, raw in pairs.items():
        attr = aliases.get(name, name)
        if attr not in obj.__dataclass_fields__:
            raise ScenarioError(f"{key}.{name}: unknown field")
        current = getattr(obj, attr)
        try:
            kwargs[attr] = type(current)(raw) if not isinstance(current, str) else raw
        except ValueError:
            raise ScenarioError(f"{key}.{name}: bad value {raw!r}") from None
    return replace(obj, **kwargs)


def parse_scenario(text: str) -> ScenarioSpec:
    spec = ScenarioSpec()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ScenarioError(f"line {lineno}: expected key = value")
        if key in _SCALARS:
            try:
                setattr(spec, key, _SCALARS[key](value))
            except ValueError:
                raise ScenarioError(f"{key}: bad value {value!r}") from None
        elif key == "target":
            spec.targets.append(_fill(TargetScript(), key, _pairs(key, value), {"class": "class_id"}))
        elif key in _WINDOW_KEYS:
            kind = _WINDOW_KEYS[key]
            base = Window(kind=kind, start=0, end=0, factor=0.3 if kind in ("OCC", "LI") else 0.0)
            spec.windows.append(_fill(base, key, _pairs(key, value)))
        elif key == "cm":
            d = _pairs(key, value)
            unknown = set(d) - {"vx", "vy"}
            if unknown:
                raise ScenarioError(f"cm.{sorted(unknown)[0]}: unknown field")
            try:
                spec.drift = (float(d.get("vx", 0.0)), float(d.get("vy", 0.0)))
            except ValueError:
                raise ScenarioError("cm: bad drift value") from None
        elif key == "do":
            spec.clusters.append(_fill(Cluster(0.0, 0.0), key, _pairs(key, value), {"class": "class_id"}))
        else:
            raise ScenarioError(f"{key}: unknown key (line {lineno})")
    spec.validate()
    return spec


def load_scenario(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


@dataclass
class SynthSequence:
    frames_v: np.ndarray  # (T, H, W, 3)
    frames_t: np.ndarray  # (T, H, W, 1)
    gt_v: list[MotRecord]
    gt_t: list[MotRecord]
    tags: list[str]
    spec: ScenarioSpec

    @property
    def num_frames(self) -> int:
        return int(self.frames_v.shape[0])


def _trajectory(t: TargetScript, frames: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    rel = frames - t.spawn
    if t.kind == "linear":
        return np.stack([t.x + t.vx * rel, t.y + t.vy * rel], axis=1)
    if t.kind == "circular":
        ang = t.phase + t.omega * rel
        return np.stack([t.x + t.radius * np.cos(ang), t.y + t.radius * np.sin(ang)], axis=1)
    steps = rng.normal(0.0, t.step, size=(len(frames), 2))
    steps[0] = 0.0
    return np.array([t.x, t.y]) + np.cumsum(steps, axis=0)


def _blob(H: int, W: int, box: Box) -> np.ndarray:
    ys, xs = np.mgrid[0:H, 0:W]
    sx, sy = box.w / 4.0, box.h / 4.0
    return np.exp(-(((xs + 0.5 - box.x) / sx) ** 2 + ((ys + 0.5 - box.y) / sy) ** 2) / 2)


def synth(spec: ScenarioSpec) -> SynthSequence:
    spec.validate()
    T, H, W = spec.duration, spec.height, spec.width
    targets = spec.all_targets()
    rng = np.random.default_rng(spec.seed)
    frames = np.arange(1, T + 1)  # 1-based frame numbers
    drift = np.asarray(spec.drift, dtype=np.float64)

    tracks = []  # per target: frame -> (center, strength_v, strength_t)
    for ti, t in enumerate(targets):
        last = T if t.despawn < 0 else t.despawn
        alive = frames[(frames >= t.spawn) & (frames <= last)]
        pos = _trajectory(t, alive, rng) + drift[None, :] * alive[:, None]
        for w in spec.windows:
            if w.kind != "FM" or w.target not in (-1, ti):
                continue
            # alternate a jump of ``speed`` px toward the image centre and back
            for j, k in enumerate(alive):
                if w.start <= k <= w.end and (k - w.start) % 2 == 1:
                    sign = 1.0 if pos[j, 0] < W / 2 else -1.0
                    pos[j, 0] += sign * w.speed
        half = np.array([t.w / 2, t.h / 2])
        pos = np.clip(pos, half, np.array([W, H]) - half)
        info = {}
        for j, k in enumerate(alive):
            sv, st = t.contrast_v, t.contrast_t
            show_v = show_t = True
            for w in spec.windows:
                if not w.start <= k <= w.end or w.target not in (-1, ti):
                    continue
                if w.kind == "MM":
                    if w.modality == "V":
                        show_v = False
                    else:
                        show_t = False
                elif w.kind == "OCC":
                    if w.modality == "V":
                        sv *= w.factor
                    else:
                        st *= w.factor
                elif w.kind == "TC":
                    st = 0.0
                elif w.kind == "LI":
                    sv *= w.factor
            info[int(k)] = (pos[j].copy(), sv if show_v else 0.0, st if show_t else 0.0)
        tracks.append(info)

    base_v = np.full((T, H, W), 0.2)
    base_t = np.full((T, H, W), 0.1)
    gt_v: list[MotRecord] = []
    gt_t: list[MotRecord] = []
    for ti, (t, info) in enumerate(zip(targets, tracks)):
        for k, (c, sv, st) in info.items():
            # annotations carry the 2-decimal precision of the MOT text format
            left, top = round(float(c[0]) - t.w / 2, 2), round(float(c[1]) - t.h / 2, 2)
            wq, hq = round(t.w, 2), round(t.h, 2)
            box = Box(left + wq / 2, top + hq / 2, wq, hq)
            blob = _blob(H, W, box)
            base_v[k - 1] += spec.blob_amplitude * sv * blob
            base_t[k - 1] += spec.blob_amplitude * st * blob
            for s, out in ((sv, gt_v), (st, gt_t)):
                if s >= MIN_VISIBLE:
                    out.append(MotRecord(k, ti + 1, box, 1.0, t.class_id, float(min(s, 1.0))))
    if spec.noise > 0:
        base_v += rng.normal(0.0, spec.noise, size=base_v.shape)
        base_t += rng.normal(0.0, spec.noise, size=base_t.shape)
    frames_v = np.repeat(base_v[..., None], 3, axis=-1)
    frames_t = base_t[..., None]
    gt_v.sort(key=lambda r: (r.frame, r.track_id))
    gt_t.sort(key=lambda r: (r.frame, r.track_id))
    return SynthSequence(frames_v, frames_t, gt_v, gt_t, spec.tags(), spec)


# -- on-disk sequences -------------------------------------------------------


@dataclass
class SequenceManifest:
    name: str
    frames: int
    width: int
    height: int
    fps: float
    frames_v: str
    frames_t: str
    gt_v: str
    gt_t: str
    tags: list[str] = field(default_factory=list)
    root: str = "."

    def path(self, rel: str) -> str:
        return os.path.join(self.root, rel)


class ManifestError(ValueError):
    pass


def save_sequence(seq: SynthSequence, out_dir, name: str = "synthetic") -> SequenceManifest:
    os.makedirs(out_dir, exist_ok=True)
    man = SequenceManifest(name, seq.num_frames, seq.spec.width, seq.spec.height, seq.spec.fps,
                           "frames_v.npy", "frames_t.npy", "gt_v.txt", "gt_t.txt", list(seq.tags), str(out_dir))
    np.save(man.path(man.frames_v), seq.frames_v)
    np.save(man.path(man.frames_t), seq.frames_t)
    write_mot(seq.gt_v, man.path(man.gt_v))
    write_mot(seq.gt_t, man.path(man.gt_t))
    body = {k: v for k, v in man.__dict__.items() if k != "root"}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return man


def load_manifest(path) -> SequenceManifest:
    path = os.fspath(path)
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    try:
        with open(path, encoding="utf-8") as fh:
            body = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: {exc}") from None
    try:
        man = SequenceManifest(**body, root=os.path.dirname(os.path.abspath(path)))
    except TypeError as exc:
        raise ManifestError(f"{path}: {exc}") from None
    return man


def load_sequence(man: SequenceManifest) -> SynthSequence:
    fv = np.load(man.path(man.frames_v))
    ft = np.load(man.path(man.frames_t))
    if fv.shape[:3] != ft.shape[:3]:
        raise ManifestError(f"modalities disagree: {fv.shape[:3]} vs {ft.shape[:3]}")
    if fv.shape[0] != man.frames or fv.shape[1:3] != (man.height, man.width):
        raise ManifestError("frame archive does not match the manifest extent or frame count")
    spec = ScenarioSpec(duration=man.frames, width=man.width, height=man.height, fps=man.fps)
    return SynthSequence(fv, ft, parse_mot(man.path(man.gt_v)), parse_mot(man.path(man.gt_t)), list(man.tags), spec)


def displacement_max(records: list[MotRecord]) -> float:
    """Largest center displacement between consecutive frames of any single id."""
    last: dict[int, MotRecord] = {}
    best = 0.0
    for r in sorted(records, key=lambda r: (r.track_id, r.frame)):
        p = last.get(r.track_id)
        if p is not None and r.frame == p.frame + 1:
            best = max(best, math.hypot(r.box.x - p.box.x, r.box.y - p.box.y))
        last[r.track_id] = r
    return best
