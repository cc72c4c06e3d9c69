"""Command-line harness: train, select-links, heatmap, wsol, gradcheck, gen-data."""

import argparse
import json
import sys

import numpy as np

from . import linksel, wsol
from .checkpoint import load_checkpoint
from .data import gen_shapes, read_boxes_csv, read_cifar10_batch, write_boxes_csv, write_cifar10_batch
from .errors import ConfigurationError, DegenerateInputError
from .models import Student
from .train import TrainConfig, no_grad, prepare_inputs, run_training, student_config
from . import tensor as T


def _load_config(args):
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    for name in ("model", "epochs", "seed", "teacher_checkpoint", "checkpoint_out",
                 "metrics_out", "dataset_kind", "dataset_path", "mask_spec", "lambda0", "lr"):
        val = getattr(args, name.replace("-", "_"), None)
        if val is not None:
            setattr(cfg, name, val)
    if args.aal:
        cfg.aal = True
    if args.hard_distill:
        cfg.hard_distill = True
    return cfg


def cmd_train(args):
    cfg = _load_config(args)
    run_training(cfg)
    return 0


def _snapshot_from_checkpoint(path):
    tensors, meta = load_checkpoint(path)
    if "aal.W" not in tensors:
        raise ConfigurationError(f"checkpoint {path!r} has no trained links (aal.W missing)")
    cfg = TrainConfig.from_dict(meta["config"])
    block_index = [j for j, w in enumerate(cfg.teacher_widths) for _ in range(w)]
    head_layer = [(m, n) for n in range(cfg.layers) for m in range(cfg.heads)]
    return linksel.LinkSnapshot(W=tensors["aal.W"].astype(np.float64),
                                block_index=block_index, head_layer=head_layer,
                                epoch=int(meta.get("epoch", 0))), tensors, meta


def cmd_select_links(args):
    snap, _, _ = _snapshot_from_checkpoint(args.checkpoint)
    normed = linksel.normalize_links(snap)
    mask = linksel.prune_links(normed, args.theta)
    np.save(args.out + "_mask.npy", mask)
    # block-range view: min/max kept layer per teacher block (1-based, empty -> 0,0)
    ranges = []
    for j in range(snap.num_blocks):
        rows = [c for c, b in enumerate(snap.block_index) if b == j]
        layers = sorted({n + 1 for c in rows
                         for col, (_, n) in enumerate(snap.head_layer) if mask[c, col]})
        ranges.append({"block": j + 1, "lo": layers[0] if layers else 0,
                       "hi": layers[-1] if layers else 0})
    with open(args.out + "_ranges.json", "w") as fh:
        json.dump(ranges, fh, indent=2)
        fh.write("\n")
    frac = float(mask.mean())
    print(f"kept-link fraction: {frac:.4f}")
    return 0


def cmd_heatmap(args):
    snap, _, _ = _snapshot_from_checkpoint(args.checkpoint)
    hm = linksel.block_heatmap(snap)
    linksel.heatmap_to_csv(args.out + ".csv", hm)
    linksel.heatmap_to_pgm(args.out + ".pgm", hm)
    print(f"wrote {args.out}.csv and {args.out}.pgm "
          f"({hm.values.shape[0]} blocks x {hm.values.shape[1]} layers)")
    return 0


def cmd_wsol(args):
    tensors, meta = load_checkpoint(args.checkpoint)
    cfg = TrainConfig.from_dict(meta["config"])
    scfg = student_config(cfg)
    student = Student(scfg)
    params = {name: T.constant(arr) for name, arr in tensors.items()
              if not name.startswith("aal.")}
    dataset = read_cifar10_batch(args.data + ".bin")
    dataset.boxes = read_boxes_csv(args.data + "_boxes.csv")
    heats = []
    with no_grad(params):
        for lo in range(0, len(dataset), cfg.batch_size):
            x = prepare_inputs(cfg, dataset.images[lo:lo + cfg.batch_size])
            _, attn = student.forward(params, x)
            heats.append(wsol.mean_attention_heat(attn.maps.data, cfg.image_size))
    report = wsol.wsol_report(np.concatenate(heats), dataset.boxes,
                              deltas=tuple(args.iou))
    for key, value in report.items():
        print(f"{key}: {value:.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_gradcheck(args):
    from .checks import run_all_checks
    failures = run_all_checks(verbose=True)
    return 1 if failures else 0


def cmd_gen_data(args):
    dataset = gen_shapes(args.seed, args.n, classes=args.classes)
    write_cifar10_batch(args.out + ".bin", dataset)
    write_boxes_csv(args.out + "_boxes.csv", dataset)
    print(f"wrote {args.out}.bin and {args.out}_boxes.csv ({args.n} samples)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="attnlink",
                                     description="Attention-link regularization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a student or teacher model")
    p.add_argument("--config", help="JSON config file (TrainConfig fields)")
    p.add_argument("--model", choices=["student", "teacher"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda0", type=float)
    p.add_argument("--dataset-kind", choices=["shapes", "cifar10"])
    p.add_argument("--dataset-path")
    p.add_argument("--teacher-checkpoint")
    p.add_argument("--checkpoint-out")
    p.add_argument("--metrics-out")
    p.add_argument("--mask-spec")
    p.add_argument("--aal", action="store_true")
    p.add_argument("--hard-distill", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select-links", help="normalize and threshold-prune trained links")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--theta", type=float, default=0.05)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_select_links)

    p = sub.add_parser("heatmap", help="export block-by-layer link-magnitude heatmap")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("wsol", help="localization evaluation on a dataset with boxes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset prefix (expects .bin and _boxes.csv)")
    p.add_argument("--iou", type=float, nargs="+", default=[0.3, 0.5, 0.7])
    p.add_argument("--out", help="optional JSON report path")
    p.set_defaults(func=cmd_wsol)

    p = sub.add_parser("gradcheck", help="finite-difference check of every primitive")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-data", help="generate the synthetic shapes dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DegenerateInputError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
