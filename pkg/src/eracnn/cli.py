"""Command line surface.

Subcommands: synth, preprocess, train, eval, compare, psd. Every flag can
also be set in a flat key-value config file (``key = value`` per line,
``#`` comments); explicit flags win over the file, the file wins over
defaults. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import data as dat
from . import harness, sigproc
from .errors import DataError, EracnnError, NumericError, ShapeError
from .fbcsp import FbcspRlda
from .model import EraConfig, build, build_flat, load_checkpoint, save_checkpoint


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def load_config_file(path):
    """Flat key = value settings; later lines win."""
    settings = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
                key, value = line.split("=", 1)
                settings[key.strip()] = value.strip()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    return settings


class Settings:
    """Flag/config-file/default resolution."""

    def __init__(self, args):
        self.args = vars(args)
        self.file = load_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(self, key, default, cast=str):
        cli = self.args.get(key.replace("-", "_"))
        if cli is not None:
            return cli
        if key in self.file:
            raw = self.file[key]
            try:
                return cast(raw)
            except ValueError as exc:
                raise UsageError(f"config key {key}={raw!r}: {exc}") from exc
        return default


def _add_config_flag(p):
    p.add_argument("--config", help="flat key = value settings file; flags override it")


def build_parser():
    parser = _Parser(prog="eracnn", description="hierarchical EEG motor-imagery decoding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic epoch files")
    p.add_argument("--out", help="output epoch file (single subject)")
    p.add_argument("--out-dir", help="directory for per-subject epoch files")
    p.add_argument("--subjects", type=int)
    p.add_argument("--trials-per-class", type=int)
    p.add_argument("--snr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--task", help="restrict classes to a task (3, 5, 7hor, 7ver); default all nine")
    _add_config_flag(p)

    p = sub.add_parser("preprocess", help="recording file -> epoch file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bandpass", help="low:high in Hz, default 1:60, 'off' disables")
    p.add_argument("--notch", help="notch frequency in Hz, default 60, 'off' disables")
    p.add_argument("--resample", type=float, help="target rate in Hz, default 250")
    p.add_argument("--montage", help="channel selection, default motor24, 'off' disables")
    p.add_argument("--window", type=int, help="epoch window in samples, default 751")
    p.add_argument("--offset", type=int, help="epoch start relative to each event, default 0")
    _add_config_flag(p)

    p = sub.add_parser("train", help="train one method on an epoch file")
    p.add_argument("--task", required=True, help="3, 5, 7hor or 7ver")
    p.add_argument("--method", required=True, choices=harness.METHODS)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--precision", choices=("float64", "float32"))
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--checkpoint-dir")
    p.add_argument("--history", help="optional JSON file for the loss history")
    _add_config_flag(p)

    p = sub.add_parser("eval", help="evaluate a saved model on an epoch file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task", help="required for fbcsp models; checkpoints carry their task")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    _add_config_flag(p)

    p = sub.add_parser("compare", help="same-split multi-method comparison on synthetic subjects")
    p.add_argument("--task", required=True)
    p.add_argument("--methods", help="comma list, default era,flat,fbcsp")
    p.add_argument("--subjects", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--trials-per-class", type=int)
    p.add_argument("--snr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--precision", choices=("float64", "float32"))
    p.add_argument("--out", required=True, help="report directory")
    _add_config_flag(p)

    p = sub.add_parser("psd", help="per-class spectral density report")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flag(p)

    return parser


def _cmd_synth(args):
    s = Settings(args)
    subjects = s.pick("subjects", 1, int)
    trials = s.pick("trials-per-class", 50, int)
    snr = s.pick("snr", 5.0, float)
    seed = s.pick("seed", 0, int)
    task_id = s.pick("task", None)
    classes = tuple(dat.ClassLabel) if not task_id else _synth_classes(task_id)
    out = s.pick("out", None)
    out_dir = s.pick("out-dir", None)
    if subjects == 1 and out:
        paths = [out]
    elif out_dir:
        os.makedirs(out_dir, exist_ok=True)
        paths = [os.path.join(out_dir, f"sub{i + 1}.epochs") for i in range(subjects)]
    else:
        raise UsageError("give --out for one subject or --out-dir for several")
    seeds = np.random.SeedSequence(seed).spawn(subjects)
    for i, path in enumerate(paths):
        cfg = dat.SynthConfig(
            trials_per_class=trials,
            snr=snr,
            seed=int(seeds[i].generate_state(1)[0]),
            subject=f"sub{i + 1}",
            classes=classes,
        )
        dat.write_epochs(dat.synth_generate(cfg), path)
        print(path)
    return 0


def _synth_classes(task_id):
    task = dat.taskspec(task_id)
    return tuple(dat.ClassLabel) if task.categorical_only else tuple(task.classes)


def _cmd_preprocess(args):
    s = Settings(args)
    rec = sigproc.read_recording(args.infile)
    notch_flag = s.pick("notch", "60")
    if str(notch_flag).lower() != "off":
        rec = sigproc.notch(rec, f0=float(notch_flag))
    band = s.pick("bandpass", "1:60")
    if str(band).lower() != "off":
        try:
            low, high = (float(v) for v in str(band).split(":"))
        except ValueError as exc:
            raise UsageError(f"--bandpass wants low:high, got {band!r}") from exc
        rec = sigproc.bandpass(rec, low=low, high=high)
    montage = s.pick("montage", "motor24")
    if str(montage).lower() != "off":
        rec = sigproc.select_channels(rec, montage)
    target = s.pick("resample", 250.0, float)
    if target:
        rec = sigproc.resample(rec, target=float(target))
    window = s.pick("window", 751, int)
    offset = s.pick("offset", 0, int)
    epoch_set = sigproc.epoch(rec, window_samples=window, offset=offset)
    dat.write_epochs(epoch_set, args.out)
    print(args.out)
    return 0


def _train_cfg(s):
    return harness.TrainConfig(
        batch_size=s.pick("batch", 32, int),
        epochs=s.pick("epochs", 200, int),
        seed=s.pick("seed", 0, int),
        lr=s.pick("lr", 1e-3, float),
        precision=s.pick("precision", "float64"),
        checkpoint_every=s.pick("checkpoint-every", 0, int),
        checkpoint_dir=s.pick("checkpoint-dir", "", str),
    )


def _cmd_train(args):
    s = Settings(args)
    task = dat.taskspec(args.task)
    epoch_set = dat.read_epochs(args.data)
    cfg = _train_cfg(s)
    if args.method == "fbcsp":
        labels = [task.project(lab) for lab in epoch_set.labels]
        clf = FbcspRlda().fit(epoch_set.epochs, labels, epoch_set.sampling_rate)
        clf.save(args.out)
        print(args.out)
        return 0
    model_cfg = EraConfig(dtype=cfg.precision)
    model = build(model_cfg, task, seed=cfg.seed) if args.method == "era" else build_flat(model_cfg, task, seed=cfg.seed)
    history = harness.train(model, epoch_set, cfg)
    save_checkpoint(model, args.out, epoch=len(history), metrics={"final_total": history[-1]["total"]})
    history_path = s.pick("history", None)
    if history_path:
        with open(history_path, "w") as fh:
            json.dump(history, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(args.out)
    return 0


def _sniff_kind(path):
    with open(path, "rb") as fh:
        line = fh.readline(1 << 20)
    try:
        return json.loads(line.decode("utf-8")).get("kind")
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: unreadable model header ({exc})") from exc


def _cmd_eval(args):
    kind = _sniff_kind(args.model)
    if kind == "fbcsp":
        if not args.task:
            raise UsageError("--task is required when evaluating an fbcsp model")
        task = dat.taskspec(args.task)
        model = FbcspRlda.load(args.model)
    else:
        model, header = load_checkpoint(args.model)
        task = model.task
        if args.task and dat.taskspec(args.task) is not task:
            raise UsageError(f"checkpoint was trained for task {task.task_id}, not {args.task}")
    epoch_set = dat.read_epochs(args.data)
    result = harness.evaluate(model, epoch_set, task)
    payload = {
        "task": task.task_id,
        "n": result.n,
        "accuracy": result.accuracy,
        "classes": [getattr(c, "value", c) for c in result.classes],
        "confusion": result.confusion.tolist(),
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_compare(args):
    s = Settings(args)
    methods = [m.strip() for m in (s.pick("methods", "era,flat,fbcsp")).split(",") if m.strip()]
    for m in methods:
        if m not in harness.METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {harness.METHODS}")
    synth_base = dat.SynthConfig(
        trials_per_class=s.pick("trials-per-class", 50, int),
        snr=s.pick("snr", 5.0, float),
    )
    report = harness.run_experiment(
        args.task,
        methods,
        n_subjects=s.pick("subjects", 9, int),
        seed=s.pick("seed", 0, int),
        synth_base=synth_base,
        train_cfg=_train_cfg(s),
        out_dir=args.out,
    )
    print(os.path.join(args.out, "report.json"))
    for m in methods:
        print(f"{m}: mean {report.mean[m]:.4f} std {report.std[m]:.4f}")
    return 0


def _cmd_psd(args):
    epoch_set = dat.read_epochs(args.data)
    csv_path, svg_path = harness.psd_report(epoch_set, args.out)
    print(csv_path)
    print(svg_path)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
    "psd": _cmd_psd,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except EracnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
