"""Command-line interface: synth, train, eval, report-model, bench.

Exit codes: 0 success, 1 runtime failure, 2 bad flags/usage. Logs go to
stderr; data artifacts go to files. Every artifact-producing command writes a
manifest (config snapshot, seed, input digests, output paths) alongside its
outputs so a run can be reproduced exactly.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench, bits, data, metrics
from . import model as model_mod
from . import train as train_mod
from .errors import BineegError

PRESET_SHAPES = {"aes": (16, 8000), "chbmit": (23, 5120), "synth": (4, 2000)}


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(command, args, inputs, outputs, extra=None):
    """One manifest per artifact-producing run, next to the first output."""
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        manifest.update(extra)
    path = Path(str(outputs[0]) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _labeling_from_args(args):
    profile = data.PROFILES[args.profile]
    lab = profile.labeling
    overrides = {}
    if getattr(args, "sph", None) is not None:
        overrides["sph_s"] = args.sph
    if getattr(args, "pil", None) is not None:
        overrides["pil_s"] = args.pil
    if getattr(args, "postictal", None) is not None:
        overrides["postictal_exclusion_s"] = args.postictal
    if overrides:
        lab = data.LabelingConfig(**{**lab.__dict__, **overrides})
    return lab, profile.windowing


def _load_dataset(args):
    meta, rec = data.load_recording(args.recording)
    seizures = data.load_annotations(args.annotations)
    labeling, windowing = _labeling_from_args(args)
    intervals = data.label_intervals(meta, seizures, labeling)
    windows = data.extract_windows(rec, meta.sample_rate_hz, intervals,
                                   windowing, recording_id=meta.id)
    return meta, seizures, labeling, windowing, windows


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    labeling = data.LabelingConfig(sph_s=args.sph if args.sph is not None else 60.0,
                                   pil_s=args.pil if args.pil is not None else 600.0,
                                   postictal_exclusion_s=args.postictal
                                   if args.postictal is not None else 600.0)
    arr, seizures, meta = data.synth_generate(
        seed=args.seed, electrodes=args.electrodes, sample_rate_hz=args.fs,
        duration_s=args.hours * 3600.0, n_seizures=args.seizures,
        snr=args.snr, labeling=labeling)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec_path = out / "recording.eegr"
    ann_path = out / "annotations.tsv"
    data.save_recording(rec_path, arr, meta.sample_rate_hz)
    data.save_annotations(ann_path, seizures)
    write_manifest("synth", args, [], [rec_path, ann_path])
    print(f"wrote {rec_path} ({meta.electrode_count} electrodes, "
          f"{meta.duration_s:.0f}s @ {meta.sample_rate_hz} Hz, "
          f"{len(seizures)} seizures)", file=sys.stderr)
    return 0


def cmd_train(args):
    meta, _, _, windowing, windows = _load_dataset(args)
    samples = round(windowing.window_s * meta.sample_rate_hz)
    config = model_mod.ModelConfig.for_input(meta.electrode_count, samples,
                                             conv_mode=args.conv_mode, head=args.head)
    model = model_mod.build(config, seed=args.seed)
    tcfg = train_mod.TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                                 seed=args.seed, validation_fraction=args.val_fraction)
    history_lines = []

    def log(line):
        history_lines.append(line)
        print(line, file=sys.stderr)

    model, history = train_mod.train(model, windows, tcfg, log=log)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model_mod.save(model, out)
    history_path = Path(str(out) + ".history.tsv")
    history_path.write_text("".join(line + "\n" for line in history_lines))
    write_manifest("train", args, [args.recording, args.annotations],
                   [out, history_path], extra={"steps": history.steps})
    print(f"wrote {out} after {history.steps} steps", file=sys.stderr)
    return 0


def cmd_eval(args):
    model = model_mod.load(args.model)
    meta, seizures, labeling, windowing, windows = _load_dataset(args)
    scored = train_mod.score_windows(model, windows)
    labels = [1 if w.label == data.PREICTAL else 0 for w in windows]
    report = metrics.alarm_metrics(scored, {meta.id: seizures}, labeling,
                                   window_s=windowing.window_s,
                                   threshold=args.threshold,
                                   refractory_s=args.refractory)
    curve = metrics.roc_curve([s.score for s in scored], labels)
    out_metrics = Path(args.out_metrics)
    out_metrics.parent.mkdir(parents=True, exist_ok=True)
    out_metrics.write_text(report.to_json_line() + "\n")
    out_roc = Path(args.out_roc)
    out_roc.write_text("threshold,tpr,fpr\n" + "".join(
        f"{thr},{tpr},{fpr}\n" for thr, tpr, fpr in curve))
    write_manifest("eval", args, [args.model, args.recording, args.annotations],
                   [out_metrics, out_roc])
    print(report.to_json_line())
    return 0


def _model_from_args(args):
    if args.model is not None:
        return model_mod.load(args.model), [args.model]
    e, t = PRESET_SHAPES[args.preset]
    config = model_mod.ModelConfig.for_input(e, t)
    return model_mod.build(config, seed=args.seed), []


def cmd_report_model(args):
    model, inputs = _model_from_args(args)
    report = model_mod.resource_report(model)
    text = report.as_csv() if args.format == "csv" else report.as_text()
    if args.out:
        out = Path(args.out)
        out.write_text(text + "\n")
        write_manifest("report-model", args, inputs, [out])
    print(text)
    return 0


def cmd_bench(args):
    model, _ = _model_from_args(args)
    report = bench.bench_model(model, n_windows=args.windows, iters=args.iters,
                               seed=args.seed)
    print(report.as_text())
    if not report.outputs_identical:
        print("error: packed path diverged from naive path", file=sys.stderr)
        return 1
    print(f"active backend: {bits.active_backend_name()} "
          f"(compiled available: {bits.HAVE_COMPILED})", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _positive_int(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return n


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bineeg",
        description="Binarized 1D CNNs for EEG seizure prediction",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic recording + annotations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--electrodes", type=_positive_int, default=4)
    p.add_argument("--fs", type=_positive_int, default=100)
    p.add_argument("--hours", type=float, default=4.0)
    p.add_argument("--seizures", type=int, default=3)
    p.add_argument("--snr", type=float, default=4.0)
    p.add_argument("--sph", type=float, default=None)
    p.add_argument("--pil", type=float, default=None)
    p.add_argument("--postictal", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a recording")
    p.add_argument("--recording", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=sorted(data.PROFILES), default="synth")
    p.add_argument("--conv-mode", choices=model_mod.CONV_MODES, default="1d-1d")
    p.add_argument("--head", choices=("global_mean_pool", "flatten"),
                   default="global_mean_pool")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--sph", type=float, default=None)
    p.add_argument("--pil", type=float, default=None)
    p.add_argument("--postictal", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model, write metrics + ROC csv")
    p.add_argument("--model", required=True)
    p.add_argument("--recording", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out-metrics", required=True)
    p.add_argument("--out-roc", required=True)
    p.add_argument("--profile", choices=sorted(data.PROFILES), default="synth")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--refractory", type=float, default=1800.0)
    p.add_argument("--sph", type=float, default=None)
    p.add_argument("--pil", type=float, default=None)
    p.add_argument("--postictal", type=float, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report-model", help="parameter/operation accounting")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--model")
    group.add_argument("--preset", choices=sorted(PRESET_SHAPES), default="aes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report_model)

    p = sub.add_parser("bench", help="packed vs naive binary conv throughput")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--model")
    group.add_argument("--preset", choices=sorted(PRESET_SHAPES), default="synth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--windows", type=_positive_int, default=16)
    p.add_argument("--iters", type=_positive_int, default=3)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BineegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
