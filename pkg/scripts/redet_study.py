"""Re-detection on/off and affinity vs heatmap selection, with ground-truth perception.

    python3 scripts/redet_study.py [--out runs/redet]

Uses the scenarios in scripts/scenarios: ``mismatch`` has each target fade in
one band for a stretch of frames; ``adjacent`` puts a fading target right
next to a strong one of the same class.
"""

import argparse
import os

from hgttrack.metrics import evaluate, format_table
from hgttrack.synth import load_scenario, synth
from hgttrack.tracker import OraclePerception, TrackerConfig, run_tracker

HERE = os.path.dirname(os.path.abspath(__file__))
VARIANTS = {
    "redet-affinity": TrackerConfig(),
    "redet-heatmap": TrackerConfig(redet_mode="heatmap"),
    "no-redet": TrackerConfig(redet_enabled=False),
}


def study(name):
    seq = synth(load_scenario(os.path.join(HERE, "scenarios", f"{name}.txt")))
    rows = []
    for label, cfg in VARIANTS.items():
        per = OraclePerception({"V": seq.gt_v, "T": seq.gt_t}, seq.frames_v.shape[1:3], seq.num_frames)
        res = run_tracker(per, cfg)
        for m, gt in (("V", seq.gt_v), ("T", seq.gt_t)):
            rows.append((f"{name}/{label}/{m}", evaluate(gt, res.records[m], 0.3, seq.num_frames, per_class=False)))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    rows = study("mismatch") + study("adjacent")
    table = format_table(rows)
    print(table)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "redet.txt"), "w", encoding="utf-8") as fh:
            fh.write(table + "\n")


if __name__ == "__main__":
    main()
