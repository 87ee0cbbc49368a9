"""Command line: synth, train, track, eval, ablate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import checkpoint
from .graph import MODALITIES
from .metrics import AlignmentError, MetricsReport, evaluate, format_table
from .model import HgtTrackNet, ModelConfig
from .mot import MotFormatError, parse_mot, write_mot
from .synth import ManifestError, ScenarioError, load_manifest, load_scenario, load_sequence, save_sequence, synth
from .tracker import ModelPerception, OraclePerception, TrackerConfig, run_tracker
from .train import NumericalFailure, TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- configuration ------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            body = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path}: {exc}") from None
    if not isinstance(body, dict) or set(body) - {"model", "tracker", "train"}:
        raise UsageError("config must be an object with optional 'model', 'tracker' and 'train' sections")
    return body


def _build(cls, section: dict, name: str, **over):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise UsageError(f"config.{name}: unknown key {sorted(unknown)[0]!r}")
    kw = {**section, **{k: v for k, v in over.items() if v is not None}}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config.{name}: {exc}") from None


def model_config(args, cfg: dict) -> ModelConfig:
    return _build(
        ModelConfig, cfg.get("model", {}), "model",
        layers=getattr(args, "layers", None),
        use_hgt=False if getattr(args, "no_hgt", False) else None,
        use_dh_edges=False if getattr(args, "hgt_s", False) else None,
        single_class=True if getattr(args, "single_class", False) else None,
        radius=getattr(args, "radius", None),
    )


def tracker_config(args, cfg: dict) -> TrackerConfig:
    return _build(
        TrackerConfig, cfg.get("tracker", {}), "tracker",
        det_threshold=args.det_threshold, radius_d=args.radius, iou_tau=args.tau,
        redet_enabled=False if args.no_redet else None, redet_mode=args.redet_mode,
    )


@dataclass
class RunConfig:
    subcommand: str
    manifests: list[str]
    checkpoint: str | None
    tracker: TrackerConfig
    model: ModelConfig
    out: str
    seed: int
    jobs: int


def _add_common(p, model_flags=True, tracker_flags=False):
    p.add_argument("--config", help="JSON file with model/tracker/train sections")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    if model_flags:
        p.add_argument("--layers", type=int, help="HGT layers per stage (1..4)")
        p.add_argument("--no-hgt", action="store_true", help="skip graph attention entirely")
        p.add_argument("--hgt-s", action="store_true", help="single-modality graph: no DH or cross-modal TT edges")
        p.add_argument("--single-class", action="store_true", help="one heatmap channel for all classes")
        p.add_argument("--radius", type=float, default=None, help="edge radius in grid units (default 20)")
    if tracker_flags:
        p.add_argument("--det-threshold", type=float, default=None, help="detection threshold (default 0.4)")
        p.add_argument("--tau", type=float, default=None, help="re-detection IoU threshold (default 0.3)")
        p.add_argument("--no-redet", action="store_true")
        p.add_argument("--redet-mode", choices=("affinity", "heatmap"), default=None)
        p.add_argument("--oracle", action="store_true", help="replay ground truth instead of running the network")
        p.add_argument("--checkpoint")
        p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hgttrack", description="RGB-T multi-object tracking on heterogeneous graphs")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="render a synthetic scenario")
    p.add_argument("spec")
    _add_common(p, model_flags=False)
    p.set_defaults(seed=None)

    p = sub.add_parser("train", help="fit the network on one sequence")
    p.add_argument("manifest")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--grad-clip", type=float, default=0.0)
    p.add_argument("--init", help="start from this checkpoint")
    _add_common(p)

    p = sub.add_parser("track", help="run the tracker over sequences")
    p.add_argument("manifest", nargs="+")
    _add_common(p, tracker_flags=True)

    p = sub.add_parser("eval", help="score results against ground truth")
    p.add_argument("gt", help="ground-truth MOT file, or a sequence manifest")
    p.add_argument("results", help="result MOT file, or a directory from 'track'")
    p.add_argument("--iou", type=float, default=0.3)
    p.add_argument("--out", default=None)

    p = sub.add_parser("ablate", help="compare tracker variants on one sequence")
    p.add_argument("manifest")
    p.add_argument("--variants", default="full,no-redet,heatmap,no-hgt,hgt-s",
                   help="comma list of: full, no-redet, heatmap, no-hgt, hgt-s, single-class, layers=N")
    p.add_argument("--checkpoint-for", action="append", default=[], metavar="VARIANT=PATH")
    p.add_argument("--iou", type=float, default=0.3)
    _add_common(p, tracker_flags=True)
    return parser


# -- subcommands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    try:
        spec = load_scenario(args.spec)
    except OSError as exc:
        raise DataError(f"cannot read scenario {args.spec}: {exc.strerror}") from None
    except ScenarioError as exc:
        raise DataError(f"bad scenario {args.spec}: {exc}") from None
    if args.seed is not None:
        spec.seed = args.seed
    seq = synth(spec)
    name = os.path.splitext(os.path.basename(args.spec))[0]
    save_sequence(seq, args.out, name)
    print(f"wrote {seq.num_frames} frames to {args.out} (tags: {','.join(seq.tags) or 'none'})")
    return EXIT_OK


def _load_seq(path):
    try:
        man = load_manifest(path)
        return man, load_sequence(man)
    except OSError as exc:
        raise DataError(f"cannot read sequence {path}: {exc}") from None
    except (ManifestError, MotFormatError, ValueError) as exc:
        raise DataError(f"bad sequence {path}: {exc}") from None


def _load_net(mcfg: ModelConfig, path: str | None, seed: int) -> HgtTrackNet:
    net = HgtTrackNet(mcfg, seed=seed)
    if path:
        try:
            net.load_tensors(checkpoint.checkpoint_load(path))
        except OSError as exc:
            raise DataError(f"cannot read checkpoint {path}: {exc.strerror}") from None
        except (checkpoint.CheckpointError, KeyError, ValueError) as exc:
            raise DataError(f"checkpoint {path}: {exc}") from None
    return net


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    mcfg = model_config(args, cfg)
    tcfg = _build(TrainConfig, cfg.get("train", {}), "train", steps=args.steps, lr=args.lr,
                  momentum=args.momentum, batch=args.batch, seed=args.seed, grad_clip=args.grad_clip)
    _, seq = _load_seq(args.manifest)
    if seq.num_frames < 2:
        raise DataError("training needs a sequence with at least two frames")
    net = _load_net(mcfg, args.init, args.seed)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "model.ckpt")
    curve_path = os.path.join(args.out, "loss_curve.txt")
    with open(curve_path, "w", encoding="utf-8") as curve:
        try:
            res = train(net, seq, tcfg, log=lambda s, v: curve.write(f"{s} {v!r}\n"))
        except NumericalFailure as exc:
            checkpoint.checkpoint_save(exc.last_finite, ckpt)
            print(f"training diverged at step {exc.step}: {exc}; last finite weights in {ckpt}", file=sys.stderr)
            return EXIT_NUMERIC
    checkpoint.checkpoint_save(net.named_tensors(), ckpt)
    with open(os.path.join(args.out, "model_config.json"), "w", encoding="utf-8") as fh:
        json.dump({"model": asdict(mcfg)}, fh, indent=2, sort_keys=True)
    with open(os.path.join(args.out, "train_summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"initial_loss={res.initial!r}\nfinal_loss={res.final!r}\nratio={res.final / res.initial!r}\nsteps={res.steps_run}\n")
    print(f"loss {res.initial:.4f} -> {res.final:.4f} ({100 * res.final / res.initial:.2f}%) in {res.steps_run} steps")
    return EXIT_OK


def _track_one(job) -> tuple[str, dict]:
    path, mcfg, tcfg, ckpt, seed, oracle, out_dir = job
    man, seq = _load_seq(path)
    if oracle:
        perception = OraclePerception({"V": seq.gt_v, "T": seq.gt_t}, seq.frames_v.shape[1:3], seq.num_frames,
                                      mcfg.downscale, mcfg.num_classes, tcfg.det_threshold)
    else:
        net = _load_net(mcfg, ckpt, seed)
        perception = ModelPerception(net, seq.frames_v, seq.frames_t, tcfg.det_threshold, tcfg.max_detections,
                                     tcfg.radius_d)
    res = run_tracker(perception, tcfg)
    os.makedirs(out_dir, exist_ok=True)
    for m in MODALITIES:
        write_mot(res.records[m], os.path.join(out_dir, f"results_{m.lower()}.txt"))
    with open(os.path.join(out_dir, "events.log"), "w", encoding="utf-8") as fh:
        fh.write("".join(e + "\n" for e in res.events))
    return man.name, {m: len(res.records[m]) for m in MODALITIES}


def cmd_track(args) -> int:
    cfg = _load_config(args.config)
    mcfg, tcfg = model_config(args, cfg), tracker_config(args, cfg)
    if not args.oracle and not args.checkpoint:
        print("no --checkpoint given; using freshly initialised weights", file=sys.stderr)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    jobs = []
    for i, path in enumerate(args.manifest):
        sub = args.out if len(args.manifest) == 1 else os.path.join(args.out, f"{i:03d}")
        jobs.append((path, mcfg, tcfg, args.checkpoint, args.seed, args.oracle, sub))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_track_one, jobs))
    else:
        results = [_track_one(j) for j in jobs]
    for (name, counts), job in zip(results, jobs):
        print(f"{name}: {counts['V']} visible / {counts['T']} thermal records -> {job[-1]}")
    return EXIT_OK


def _read_mot(path):
    try:
        return parse_mot(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except MotFormatError as exc:
        raise DataError(str(exc)) from None


def _emit_reports(rows: list[tuple[str, MetricsReport]], out: str | None, stem: str) -> None:
    table = format_table(rows)
    kv = "\n".join(r.keyvalue(prefix=f"{name}.") for name, r in rows) + "\n"
    print(table)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, f"{stem}.txt"), "w", encoding="utf-8") as fh:
            fh.write(table + "\n")
        with open(os.path.join(out, f"{stem}.kv"), "w", encoding="utf-8") as fh:
            fh.write(kv)


def cmd_eval(args) -> int:
    if not 0.0 <= args.iou < 1.0:
        raise UsageError("--iou must lie in [0, 1)")
    try:
        if os.path.isdir(args.gt) or args.gt.endswith(".json"):
            man, _ = _load_seq(args.gt)
            if not os.path.isdir(args.results):
                raise DataError(f"{args.results} is not a results directory")
            rows = []
            for m in MODALITIES:
                gt = _read_mot(man.path(man.gt_v if m == "V" else man.gt_t))
                pred = _read_mot(os.path.join(args.results, f"results_{m.lower()}.txt"))
                rows.append((m, evaluate(gt, pred, args.iou, man.frames)))
        else:
            gt, pred = _read_mot(args.gt), _read_mot(args.results)
            rows = [("all", evaluate(gt, pred, args.iou))]
    except AlignmentError as exc:
        raise DataError(str(exc)) from None
    expanded = []
    for name, r in rows:
        expanded.append((name, r))
        expanded.extend((f"{name}.{c}", sub) for c, sub in r.per_class.items())
    _emit_reports(expanded, args.out, "metrics")
    return EXIT_OK


def _variant(name: str, args) -> tuple[dict, dict]:
    """Flag overrides (model, tracker) for one ablation row."""
    if name == "full":
        return {}, {}
    if name == "no-redet":
        return {}, {"redet_enabled": False}
    if name == "heatmap":
        return {}, {"redet_mode": "heatmap"}
    if name == "no-hgt":
        return {"use_hgt": False}, {}
    if name == "hgt-s":
        return {"use_dh_edges": False}, {}
    if name == "single-class":
        return {"single_class": True}, {}
    if name.startswith("layers="):
        try:
            return {"layers": int(name.split("=", 1)[1])}, {}
        except ValueError:
            pass
    raise UsageError(f"unknown variant {name!r}")


def cmd_ablate(args) -> int:
    cfg = _load_config(args.config)
    base_m, base_t = model_config(args, cfg), tracker_config(args, cfg)
    per_variant = {}
    for item in args.checkpoint_for:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--checkpoint-for expects VARIANT=PATH, got {item!r}")
        per_variant[key] = val
    man, seq = _load_seq(args.manifest)
    names = [v.strip() for v in args.variants.split(",") if v.strip()]
    if not names:
        raise UsageError("--variants is empty")
    rows = []
    for name in names:
        mo, to = _variant(name, args)
        mcfg = ModelConfig(**{**asdict(base_m), **mo})
        tcfg = TrackerConfig(**{**asdict(base_t), **to})
        sub = os.path.join(args.out, name.replace("=", "_"))
        _track_one((args.manifest, mcfg, tcfg, per_variant.get(name, args.checkpoint), args.seed, args.oracle, sub))
        for m in MODALITIES:
            gt = seq.gt_v if m == "V" else seq.gt_t
            pred = _read_mot(os.path.join(sub, f"results_{m.lower()}.txt"))
            rows.append((f"{name}/{m}", evaluate(gt, pred, args.iou, man.frames, per_class=False)))
    _emit_reports(rows, args.out, "ablation")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "track": cmd_track, "eval": cmd_eval, "ablate": cmd_ablate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    np.seterr(over="ignore", under="ignore")
    try:
        return COMMANDS[args.cmd](args)
    except UsageError as exc:
        print(f"hgttrack {args.cmd}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"hgttrack {args.cmd}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, NumericalFailure) as exc:
        print(f"hgttrack {args.cmd}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
