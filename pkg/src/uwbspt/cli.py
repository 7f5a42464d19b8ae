"""Command-line entry point.

Subcommands: ``simulate``, ``featurize``, ``augment-preview``, ``train``,
``eval``, ``report``.  Every command echoes its fully resolved configuration
(including every seed) as one JSON object on stdout before doing any work.

Exit codes: 0 success, 1 usage error, 2 unreadable or invalid input data,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .augment import OP_ORDER, AugmentSpec, apply_combo
from .dataformat import DataFormatError, classes_for_mode, load_dataset, save_dataset
from .evaluation import (
    DEFAULT_WS_SWEEP,
    ExperimentSpec,
    PROTOCOLS,
    SESSION_CHOICES,
    _kfold_splits,
    run_experiment,
)
from .nn import ModelSpec, TrainConfig, build_model, save_model, train
from .pipeline import FeatureConfig, clean_and_crop, prepare_dataset, stack_views
from .simulate import Distractor, SimConfig, synth_dataset
from .wrtft import StftConfig


class CliUsageError(Exception):
    """Bad flags or arguments; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise CliUsageError(message)


def _echo_config(config: dict) -> None:
    print(json.dumps(config, sort_keys=True))
    sys.stdout.flush()


def _add_stft_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stft-seg", type=int, default=32, help="STFT segment length")
    p.add_argument("--stft-hop", type=int, default=4, help="STFT hop in frames")
    p.add_argument("--stft-fft", type=int, default=64, help="zero-padded FFT length")


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-epochs", type=int, default=300)
    p.add_argument("--patience", type=int, default=20)


def _stft_config(args) -> StftConfig:
    return StftConfig(segment_len=args.stft_seg, hop=args.stft_hop, fft_len=args.stft_fft)


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=seed,
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="uwbspt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"uwbspt {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--participants", type=int, default=26)
    p.add_argument("--per-class", type=int, default=5, dest="per_class")
    p.add_argument("--class-mode", type=int, choices=(4, 5), default=4)
    p.add_argument("--session", choices=("1", "2", "both"), default="1")
    p.add_argument(
        "--distractor",
        choices=("on", "off"),
        default="on",
        help="periodic fixed-range reflector in session 2 recordings",
    )
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("featurize", help="extract network views from a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ws", type=int, default=40, help="range window size in bins")
    p.add_argument("--aug", choices=("on", "off"), default="off")
    p.add_argument("--seed", type=int, default=0)
    _add_stft_args(p)

    p = sub.add_parser("augment-preview", help="render each augmentation op on one sample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--index", type=int, default=0, help="sample index in the manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ws", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train one model on a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--method", choices=("td", "wrtft", "spn"), default="spn")
    p.add_argument("--aug", choices=("on", "off"), default="off")
    p.add_argument("--class-mode", type=int, choices=(4, 5), default=4)
    p.add_argument("--ws", type=int, default=40)
    p.add_argument("--session", choices=("1", "2", "both"), default="both")
    p.add_argument("--seed", type=int, default=0)
    _add_stft_args(p)
    _add_train_args(p)

    p = sub.add_parser("eval", help="run an evaluation protocol end to end")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--protocol", choices=PROTOCOLS, default="unseen")
    p.add_argument(
        "--methods",
        default="spn+aug",
        help="comma-separated tokens: td, wrtft, spn, each optionally +aug",
    )
    p.add_argument("--class-mode", type=int, choices=(4, 5), default=4)
    p.add_argument("--ws", type=int, default=40)
    p.add_argument(
        "--ws-values",
        default=",".join(str(w) for w in DEFAULT_WS_SWEEP),
        help="comma-separated window sizes for the sweep protocol",
    )
    p.add_argument("--session", choices=SESSION_CHOICES, default="both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=5, help="training runs per configuration")
    p.add_argument("--partitions", type=int, default=10, help="random partitions (unseen)")
    p.add_argument("--val-participants", type=int, default=4)
    p.add_argument("--test-participants", type=int, default=4)
    p.add_argument("--jobs", type=int, default=1, help="reserved; runs are sequential")
    _add_stft_args(p)
    _add_train_args(p)

    p = sub.add_parser("report", help="re-render tables and figures from a report JSON")
    p.add_argument("--report", required=True, help="path to report.json")
    p.add_argument("--out", required=True, help="output directory")

    return parser


def _cmd_simulate(args) -> int:
    sessions = {"1": (1,), "2": (2,), "both": (1, 2)}[args.session]
    distractor = (
        Distractor(range_bin=30, period_s=1.5, amplitude=0.5)
        if args.distractor == "on"
        else None
    )
    cfg = SimConfig(rng_seed=args.seed, distractor=distractor)
    _echo_config(
        {
            "command": "simulate",
            "out": str(args.out),
            "participants": args.participants,
            "per_class": args.per_class,
            "class_mode": args.class_mode,
            "session": args.session,
            "distractor": args.distractor,
            "seed": args.seed,
        }
    )
    samples = synth_dataset(
        cfg,
        n_participants=args.participants,
        samples_per_class_per_participant=args.per_class,
        class_mode=args.class_mode,
        sessions=sessions,
    )
    manifest_path = save_dataset(samples, args.out, cfg.radar, class_mode=args.class_mode)
    print(f"wrote {len(samples)} samples; manifest at {manifest_path}")
    return 0


def _cmd_featurize(args) -> int:
    _echo_config(
        {
            "command": "featurize",
            "manifest": str(args.manifest),
            "out": str(args.out),
            "ws": args.ws,
            "aug": args.aug,
            "seed": args.seed,
            "stft": {"segment_len": args.stft_seg, "hop": args.stft_hop, "fft_len": args.stft_fft},
        }
    )
    samples, manifest = load_dataset(args.manifest)
    fcfg = FeatureConfig(ws=args.ws, stft=_stft_config(args))
    augment = AugmentSpec(rng_seed=args.seed) if args.aug == "on" else None
    prepared = prepare_dataset(samples, fcfg, augment=augment)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.savez(
        out / "features.npz",
        td=np.stack([p.td for p in prepared]),
        wrtft=np.stack([p.wr for p in prepared]),
        labels=np.array([p.label.index for p in prepared], dtype=np.int64),
        participants=np.array([p.participant_id for p in prepared], dtype=np.int64),
        sessions=np.array([p.session_id for p in prepared], dtype=np.int64),
        origins=np.array([p.origin for p in prepared], dtype=np.int64),
    )
    meta = {
        "num_prepared": len(prepared),
        "num_source_samples": len(samples),
        "class_names": [c.value for c in classes_for_mode(manifest.class_mode)],
        "td_shape": list(prepared[0].td.shape),
        "wrtft_shape": list(prepared[0].wr.shape),
        "augmented": args.aug == "on",
    }
    (out / "features.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(prepared)} feature pairs to {out / 'features.npz'}")
    return 0


def _cmd_augment_preview(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    _echo_config(
        {
            "command": "augment-preview",
            "manifest": str(args.manifest),
            "index": args.index,
            "out": str(args.out),
            "ws": args.ws,
            "seed": args.seed,
        }
    )
    samples, _ = load_dataset(args.manifest)
    if not 0 <= args.index < len(samples):
        raise IndexError(f"sample index {args.index} outside [0, {len(samples)})")
    sample = samples[args.index]
    cropped, window = clean_and_crop(sample.frames, args.ws)
    spec = AugmentSpec(rng_seed=args.seed)

    panels = [("original", cropped)]
    for j, op in enumerate(OP_ORDER):
        rng = np.random.default_rng([args.seed, args.index, j])
        panels.append((op, apply_combo(cropped, (op,), spec, rng)))

    fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.4))
    for ax, (name, mat) in zip(axes, panels):
        ax.imshow(mat, aspect="auto", cmap="viridis")
        ax.set_title(name)
        ax.set_xlabel("frame")
        ax.set_ylabel("range bin")
    fig.tight_layout()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fig_path = out / "augment_preview.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    meta = {
        "sample_index": args.index,
        "label": sample.label.value,
        "window": [window.start, window.end],
        "ops": list(OP_ORDER),
        "figure": fig_path.name,
    }
    (out / "augment_preview.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {fig_path}")
    return 0


def _cmd_train(args) -> int:
    from .report import plot_history

    _echo_config(
        {
            "command": "train",
            "manifest": str(args.manifest),
            "out": str(args.out),
            "method": args.method,
            "aug": args.aug,
            "class_mode": args.class_mode,
            "ws": args.ws,
            "session": args.session,
            "seed": args.seed,
            "stft": {"segment_len": args.stft_seg, "hop": args.stft_hop, "fft_len": args.stft_fft},
            "train": {
                "lr": args.lr,
                "batch_size": args.batch_size,
                "max_epochs": args.max_epochs,
                "patience": args.patience,
            },
        }
    )
    samples, _ = load_dataset(args.manifest)
    if args.session != "both":
        wanted = int(args.session)
        samples = [s for s in samples if s.session_id == wanted]
    if not samples:
        raise ValueError("no samples after session filter")
    labels = classes_for_mode(args.class_mode)
    for s in samples:
        if s.label not in labels:
            raise ValueError(f"label {s.label.value} invalid for class mode {args.class_mode}")

    # hold out one stratified fold for early stopping, train on the rest
    fold = _kfold_splits(samples, list(range(len(samples))), 5)[0]
    train_idx = list(fold.train) + list(fold.test)
    val_idx = list(fold.val)

    fcfg = FeatureConfig(ws=args.ws, stft=_stft_config(args))
    augment = AugmentSpec(rng_seed=args.seed) if args.aug == "on" else None
    train_ps = prepare_dataset(
        [samples[i] for i in train_idx], fcfg, origins=train_idx, augment=augment
    )
    val_ps = prepare_dataset([samples[i] for i in val_idx], fcfg, origins=val_idx)

    t_inputs, t_labels = stack_views(train_ps, args.method)
    v_inputs, v_labels = stack_views(val_ps, args.method)
    mspec = ModelSpec(
        kind=args.method,
        num_classes=len(labels),
        td_shape=train_ps[0].td.shape[:2],
        wr_shape=train_ps[0].wr.shape[:2],
        seed=args.seed,
    )
    model = build_model(mspec)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(
        model,
        t_inputs,
        t_labels,
        v_inputs,
        v_labels,
        _train_config(args, args.seed),
        history_path=out / "history.csv",
    )
    save_model(model, out / "model.spnw")
    plot_history(result.history, out / "history.png")
    print(
        f"trained {args.method} for {len(result.history)} epochs; "
        f"best val loss {result.best_val_loss:.4f} at epoch {result.best_epoch}"
    )
    return 0


def _cmd_eval(args) -> int:
    from .report import render_report

    methods = tuple(tok.strip() for tok in args.methods.split(",") if tok.strip())
    ws_values = tuple(int(v) for v in args.ws_values.split(",") if v.strip())
    spec = ExperimentSpec(
        protocol=args.protocol,
        methods=methods,
        class_mode=args.class_mode,
        ws=args.ws,
        ws_values=ws_values,
        session=args.session,
        seed=args.seed,
        runs_per_config=args.runs,
        n_partitions=args.partitions,
        n_val_participants=args.val_participants,
        n_test_participants=args.test_participants,
        stft=_stft_config(args),
        train=_train_config(args, args.seed),
    )
    config = spec.to_config_dict()
    config["command"] = "eval"
    config["manifest"] = str(args.manifest)
    config["out"] = str(args.out)
    config["jobs"] = args.jobs
    _echo_config(config)
    if args.jobs > 1:
        print("note: --jobs > 1 is reserved; running sequentially", file=sys.stderr)

    samples, _ = load_dataset(args.manifest)
    report = run_experiment(samples, spec, progress=lambda msg: print(msg, file=sys.stderr))
    written = render_report(report, args.out)
    for row in report.summary_rows():
        print(
            f"{row['method']} ws={row['ws']} session={row['session']}: "
            f"{100 * row['mean_acc']:.2f}% +/- {100 * row['se']:.2f} (n={row['n_runs']})"
        )
    print(f"report files in {args.out}: {', '.join(written)}")
    return 0


def _cmd_report(args) -> int:
    from .report import load_report_json, render_report

    _echo_config({"command": "report", "report": str(args.report), "out": str(args.out)})
    report = load_report_json(args.report)
    written = render_report(report, args.out)
    print(f"report files in {args.out}: {', '.join(written)}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "featurize": _cmd_featurize,
    "augment-preview": _cmd_augment_preview,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliUsageError("a subcommand is required")
        return _COMMANDS[args.command](args)
    except CliUsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, FileNotFoundError, IsADirectoryError, IndexError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit code 3
        print(f"runtime failure: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 3


def console_main() -> None:
    sys.exit(main())
