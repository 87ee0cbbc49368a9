"""MOTChallenge text annotations.

Each line is ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,class,visibility``
with 1-based frames and top-left corners. Records keep the box center
internally; this module is the only place the two conventions meet.
"""

from __future__ import annotations

import os
from collections import defaultdict
from dataclasses import dataclass

from .association import Box

CLASS_NAMES = ("ship", "pedestrian", "cyclist", "car", "bus", "drone", "plane")


class MotFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MotRecord:
    frame: int
    track_id: int
    box: Box
    conf: float = 1.0
    class_id: int = 1
    visibility: float = 1.0

    @classmethod
    def from_tlwh(cls, frame, track_id, left, top, width, height, conf=1.0, class_id=1, visibility=1.0):
        return cls(int(frame), int(track_id), Box(left + width / 2, top + height / 2, width, height),
                   float(conf), int(class_id), float(visibility))

    def to_line(self) -> str:
        b = self.box
        return (
            f"{self.frame},{self.track_id},{b.x - b.w / 2:.2f},{b.y - b.h / 2:.2f},{b.w:.2f},{b.h:.2f},"
            f"{self.conf!r},{self.class_id},{self.visibility!r}"
        )


def parse_lines(lines, source: str = "<text>") -> list[MotRecord]:
    records = []
    seen = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 6:
            raise MotFormatError(f"{source}:{lineno}: expected at least 6 fields, got {len(parts)}")
        try:
            frame = int(float(parts[0]))
            tid = int(float(parts[1]))
            left, top, w, h = (float(p) for p in parts[2:6])
            conf = float(parts[6]) if len(parts) > 6 else 1.0
            cls = int(float(parts[7])) if len(parts) > 7 else 1
            vis = float(parts[8]) if len(parts) > 8 else 1.0
        except ValueError as exc:
            raise MotFormatError(f"{source}:{lineno}: {exc}") from None
        if frame < 1:
            raise MotFormatError(f"{source}:{lineno}: frame numbers are 1-based, got {frame}")
        try:
            rec = MotRecord.from_tlwh(frame, tid, left, top, w, h, conf, cls, vis)
        except ValueError as exc:
            raise MotFormatError(f"{source}:{lineno}: {exc}") from None
        if (frame, tid) in seen:
            raise MotFormatError(f"{source}:{lineno}: duplicate (frame={frame}, id={tid})")
        seen.add((frame, tid))
        records.append(rec)
    records.sort(key=lambda r: (r.frame, r.track_id))
    return records


def parse_mot(path) -> list[MotRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh, str(path))


def format_mot(records) -> str:
    ordered = sorted(records, key=lambda r: (r.frame, r.track_id))
    return "".join(r.to_line() + "\n" for r in ordered)


def write_mot(records, path) -> None:
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_mot(records))


def group_by_frame(records) -> dict[int, list[MotRecord]]:
    out: dict[int, list[MotRecord]] = defaultdict(list)
    for r in records:
        out[r.frame].append(r)
    return dict(out)
