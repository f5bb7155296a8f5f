"""Command-line entry point.

Commands: pipeline, split, train-classifier, train-sr, eval, psnr,
coverage, synth, serve. Every command accepts --seed and --json, plus
--config pointing at a flat key=value file whose entries fill in any flag
not given explicitly. Exit codes: 0 success, 1 usage error, 2 runtime
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import classifier as clf
from . import superres as sr
from .coverage import coverage_report, pseudocolor
from .images import (
    load_image,
    normalize,
    resize,
    save_image,
    scan_dataset_dir,
    split_dataset,
    split_from_json,
)
from .metrics import psnr
from .pipeline import ModelStore, PipelineConfig, StageError, parse_config_file, run_pipeline
from .synth import FieldSpec, generate_classification_dataset, generate_field

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(args, doc: dict, human_lines=None):
    if args.json:
        print(json.dumps(doc))
    else:
        for line in human_lines if human_lines is not None else [json.dumps(doc, indent=2)]:
            print(line)


def _merged(args, parser_defaults: dict):
    """Fill unset (None) options from --config, then hard defaults."""
    file_values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    for key, default in parser_defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, file_values.get(key, default))
    return args


def cmd_pipeline(args):
    args = _merged(
        args,
        {
            "outscale": 1,
            "threshold": 5.0,
            "sr_model": None,
            "classifier_model": None,
            "seed": 0,
        },
    )
    config = PipelineConfig(
        outscale=int(args.outscale),
        threshold_user=float(args.threshold),
        sr_model=args.sr_model,
        classifier_model=args.classifier_model,
        seed=int(args.seed),
        force_coverage=bool(args.force_coverage),
    )
    result = run_pipeline(args.image, config, ModelStore(config))
    lines = [
        f"prediction: {result['prediction']['label']}",
        f"probs: {result['prediction']['probs']}",
    ]
    if result["coverage_skipped"]:
        lines.append("coverage skipped: populated 100% by classification")
    else:
        cov = result["coverage"]
        lines.append(
            f"populated {cov['populated_pct']:.2f}% / depopulated {cov['depopulated_pct']:.2f}% "
            f"(threshold {cov['threshold_user']} -> gray {cov['threshold_gray']})"
        )
    _emit(args, result, lines)
    return EXIT_OK


def cmd_split(args):
    args = _merged(args, {"fraction": 0.8, "seed": 0, "out": None})
    split = split_dataset(scan_dataset_dir(args.root), float(args.fraction), int(args.seed))
    text = split.to_json()
    if args.out:
        Path(args.out).write_text(text)
    doc = split.to_json_dict()
    counts = {c["name"]: (len(c["train"]), len(c["test"])) for c in doc["classes"]}
    _emit(args, doc, [f"{name}: train {tr} / test {te}" for name, (tr, te) in counts.items()])
    return EXIT_OK


def _load_split(args, root):
    if getattr(args, "split", None):
        return split_from_json(Path(args.split).read_text())
    return split_dataset(scan_dataset_dir(root), float(args.fraction), int(args.seed))


def cmd_train_classifier(args):
    args = _merged(
        args,
        {
            "fraction": 0.8,
            "seed": 0,
            "split": None,
            "epochs": 5,
            "batch_size": 32,
            "lr": 0.001,
            "input_size": 224,
            "out": "classifier.cccl",
            "history": None,
        },
    )
    config = clf.ClassifierConfig(
        input_size=int(args.input_size),
        epochs=int(args.epochs),
        batch_size=int(args.batch_size),
        lr=float(args.lr),
    )
    split = _load_split(args, args.root)
    params, history = clf.train_from_split(args.root, split, config, int(args.seed))
    clf.save_classifier_model(args.out, params, config)
    if args.history:
        Path(args.history).write_text(clf.history_csv(history))
    doc = {
        "model": str(args.out),
        "epochs": [e.__dict__ for e in history],
        "final_val_acc": history[-1].val_acc,
    }
    _emit(
        args,
        doc,
        [f"epoch {e.epoch}: loss {e.train_loss:.4f} acc {e.train_acc:.3f} "
         f"val_loss {e.val_loss:.4f} val_acc {e.val_acc:.3f}" for e in history]
        + [f"saved {args.out}"],
    )
    return EXIT_OK


def cmd_train_sr(args):
    args = _merged(
        args,
        {
            "outscale": 4,
            "steps": 200,
            "batch_size": 4,
            "lr": 2e-3,
            "seed": 0,
            "size": 8,
            "out": "generator.ccsr",
            "num_features": 8,
            "num_rrdb": 2,
            "growth": 4,
        },
    )
    config = sr.GeneratorConfig(
        num_features=int(args.num_features),
        num_rrdb=int(args.num_rrdb),
        growth_channels=int(args.growth),
        out_scale=int(args.outscale),
    )
    scale, side = config.out_scale, int(args.size)
    pairs = []
    for path in sorted(Path(args.data).iterdir()):
        if path.suffix.lower() not in (".png", ".ppm", ".pgm"):
            continue
        image = load_image(path)
        hr = resize(image, side * scale, side * scale)
        lo = resize(image, side, side)
        if hr.channels == 1 or lo.channels == 1:
            continue
        pairs.append((normalize(lo), normalize(hr)))
    training = sr.SRTrainingConfig(
        batch_size=int(args.batch_size), steps=int(args.steps), lr=float(args.lr), seed=int(args.seed)
    )
    params, history = sr.train_generator_l1(pairs, config, training)
    sr.save_generator_model(args.out, params, config)
    doc = {
        "model": str(args.out),
        "pairs": len(pairs),
        "initial_loss": history[0],
        "final_loss": history[-1],
        "steps": len(history),
    }
    _emit(
        args,
        doc,
        [f"trained on {len(pairs)} pairs for {len(history)} steps",
         f"L1 loss {history[0]:.4f} -> {history[-1]:.4f}",
         f"saved {args.out}"],
    )
    return EXIT_OK


def cmd_eval(args):
    args = _merged(args, {"fraction": 0.8, "seed": 0, "split": None})
    params, config = clf.load_classifier_model(args.model)
    split = _load_split(args, args.root)
    _, _, val_x, val_y = clf.load_split_arrays(args.root, split, config)
    cm = clf.evaluate_arrays(val_x, val_y, params, config)
    doc = cm.to_json_dict()
    _emit(
        args,
        doc,
        [f"classes: {doc['classes']}", f"counts: {doc['counts']}", f"accuracy: {doc['accuracy']}"],
    )
    return EXIT_OK


def cmd_psnr(args):
    result = psnr(load_image(args.a), load_image(args.b))
    doc = result.to_json_dict()
    _emit(args, doc, [f"mse {doc['mse']}", f"psnr_db {doc['psnr_db']}"])
    return EXIT_OK


def cmd_coverage(args):
    args = _merged(args, {"threshold": 5.0, "seed": 0, "mask_out": None, "pseudocolor_out": None})
    image = load_image(args.image)
    report, mask = coverage_report(image, float(args.threshold))
    if args.mask_out:
        save_image(mask.to_image(), args.mask_out)
    if args.pseudocolor_out:
        from .images import to_grayscale

        colored = pseudocolor(to_grayscale(image), [(0, 0, 0), (255, 255, 255)])
        save_image(colored, args.pseudocolor_out)
    doc = report.to_json_dict()
    _emit(
        args,
        doc,
        [f"threshold {doc['threshold_user']} -> gray {doc['threshold_gray']}",
         f"populated {doc['populated_pct']:.2f}% ({doc['populated']} px)",
         f"depopulated {doc['depopulated_pct']:.2f}% ({doc['depopulated']} px)"],
    )
    return EXIT_OK


def cmd_synth(args):
    args = _merged(
        args,
        {"n_per_class": 10, "size": 96, "seed": 0, "gap": None, "field_out": None},
    )
    if args.field_out:
        spec = FieldSpec(
            width=int(args.size),
            height=int(args.size),
            gap_fraction_target=float(args.gap if args.gap is not None else 0.25),
            seed=int(args.seed),
        )
        image, mask, fraction = generate_field(spec)
        save_image(image, args.field_out)
        mask_path = Path(args.field_out).with_suffix(".mask.pgm")
        from .coverage import SegmentationMask

        save_image(SegmentationMask(spec.width, spec.height, mask).to_image(), mask_path)
        doc = {
            "field": str(args.field_out),
            "mask": str(mask_path),
            "gap_fraction": fraction,
            "ideal_threshold": spec.ideal_threshold_user(),
        }
        _emit(args, doc, [f"wrote {args.field_out} (gap {fraction:.4f})"])
        return EXIT_OK
    rows = generate_classification_dataset(
        int(args.n_per_class), int(args.seed), args.out, size=int(args.size)
    )
    doc = {"out": str(args.out), "files": len(rows)}
    _emit(args, doc, [f"wrote {len(rows)} images under {args.out}"])
    return EXIT_OK


def cmd_serve(args):
    args = _merged(
        args,
        {
            "host": "127.0.0.1",
            "port": 8754,
            "workdir": ".",
            "sr_model": None,
            "classifier_model": None,
            "static": None,
            "seed": 0,
        },
    )
    config = PipelineConfig(
        sr_model=args.sr_model,
        classifier_model=args.classifier_model,
        host=args.host,
        port=int(args.port),
        workdir=args.workdir,
        static_dir=args.static,
        seed=int(args.seed),
    )
    from .server import serve_forever

    serve_forever(config)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="canecover", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="deterministic seed")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--config", default=None, help="flat key=value config file")

    p = sub.add_parser("pipeline", help="enhance, classify, and measure one image")
    p.add_argument("image")
    p.add_argument("--outscale", type=int, default=None, choices=(1, 2, 3, 4))
    p.add_argument("--threshold", type=float, default=None, help="coverage threshold 0-10")
    p.add_argument("--sr-model", default=None)
    p.add_argument("--classifier-model", default=None)
    p.add_argument("--force-coverage", action="store_true",
                   help="run coverage even when classified as populated")
    common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("split", help="seeded train/test split of a dataset directory")
    p.add_argument("root")
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--out", default=None, help="write the split JSON here")
    common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-classifier", help="train the populated/depopulated CNN")
    p.add_argument("root")
    p.add_argument("--split", default=None, help="existing split JSON")
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--input-size", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--history", default=None, help="write per-epoch CSV here")
    common(p)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("train-sr", help="train the super-resolution generator")
    p.add_argument("data", help="directory of RGB images; LR/HR pairs come from resizing")
    p.add_argument("--outscale", type=int, default=None, choices=(1, 2, 3, 4))
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--size", type=int, default=None, help="low-res training side length")
    p.add_argument("--num-features", type=int, default=None)
    p.add_argument("--num-rrdb", type=int, default=None)
    p.add_argument("--growth", type=int, default=None)
    p.add_argument("--out", default=None)
    common(p)
    p.set_defaults(func=cmd_train_sr)

    p = sub.add_parser("eval", help="confusion matrix of a trained classifier")
    p.add_argument("root")
    p.add_argument("--model", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--fraction", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("psnr", help="peak signal-to-noise ratio between two images")
    p.add_argument("a")
    p.add_argument("b")
    common(p)
    p.set_defaults(func=cmd_psnr)

    p = sub.add_parser("coverage", help="threshold segmentation and area percentages")
    p.add_argument("image")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--mask-out", default=None, help="write the binary mask PGM here")
    p.add_argument("--pseudocolor-out", default=None)
    common(p)
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("synth", help="generate synthetic labeled fields")
    p.add_argument("--out", default="synth_dataset")
    p.add_argument("--n-per-class", type=int, default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--gap", type=float, default=None, help="gap fraction for --field-out")
    p.add_argument("--field-out", default=None, help="write a single field image instead")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="HTTP API + web UI for interactive thresholding")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--workdir", default=None, help="image store directory")
    p.add_argument("--sr-model", default=None)
    p.add_argument("--classifier-model", default=None)
    p.add_argument("--static", default=None, help="built web UI directory")
    common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"canecover: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # runtime failures map to exit code 2
        print(f"canecover: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
