"""Train one checkpoint per architecture variant, then track and score each.

    python3 scripts/ablation.py --steps 500 --out runs/ablation

Variants that change only the tracker (no-redet, heatmap) reuse the full
model's checkpoint. Everything goes through the command-line entry point,
so each step can be rerun by hand from the printed commands.
"""

import argparse
import os
import sys

from hgttrack.cli import main as cli

HERE = os.path.dirname(os.path.abspath(__file__))
ARCH = {"full": [], "no-hgt": ["--no-hgt"], "hgt-s": ["--hgt-s"], "single-class": ["--single-class"]}
TRACKER_ONLY = ("no-redet", "heatmap")


def run(argv):
    print("$ hgttrack " + " ".join(argv), flush=True)
    rc = cli(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default=os.path.join(HERE, "scenarios", "mismatch.txt"))
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--lr", default="3e-3")
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()

    seq = os.path.join(args.out, "seq")
    run(["synth", args.scenario, "--out", seq])
    ckpts = []
    for name, flags in ARCH.items():
        out = os.path.join(args.out, f"train-{name}")
        run(["train", seq, "--steps", str(args.steps), "--lr", args.lr, "--grad-clip", "10", "--out", out, *flags])
        ckpts.append(f"{name}={os.path.join(out, 'model.ckpt')}")
    full = os.path.join(args.out, "train-full", "model.ckpt")
    variants = ",".join([*ARCH, *TRACKER_ONLY])
    extra = []
    for c in ckpts:
        extra += ["--checkpoint-for", c]
    run(["ablate", seq, "--variants", variants, "--checkpoint", full, *extra, "--out", os.path.join(args.out, "ablate")])


if __name__ == "__main__":
    main()
