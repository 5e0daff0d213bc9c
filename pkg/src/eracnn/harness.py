"""Training loop, evaluation protocol, statistics and report files."""

import csv
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
from scipy import special

from .data import SynthConfig, split, synth_generate, taskspec
from .errors import DataError, NumericError
from .fbcsp import FbcspRlda
from .model import EraConfig, build, build_flat, save_checkpoint
from .sigproc import welch_psd_data
from .tensor import Adam, ComputeGraph, Tensor

METHODS = ("era", "flat", "fbcsp")


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    precision: str = "float64"  # float32 cuts training time roughly in half
    checkpoint_every: int = 0  # epochs between checkpoints, 0 disables
    checkpoint_dir: str = ""

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise DataError("batch_size and epochs must be >= 1")


def train(model, train_set, config, stop_fn=None):
    """Mini-batch training with seeded shuffling.

    Returns the per-epoch loss history as a list of dicts with keys
    total/shared/arm/hand. ``stop_fn(model, epoch, record)`` may return
    True to stop early (used by smoke tests that stop at an accuracy bar).
    """
    n = len(train_set)
    if n == 0:
        raise DataError("empty training set")
    dtype = model.config.np_dtype
    x_all = np.ascontiguousarray(train_set.epochs[:, None, :, :], dtype=dtype)
    labels = train_set.labels
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.parameters(), lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    history = []
    for ep in range(config.epochs):
        perm = rng.permutation(n)
        sums = {"total": 0.0, "shared": 0.0, "arm": 0.0, "hand": 0.0}
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb = Tensor(x_all[idx], dtype=dtype)
            yb = [labels[int(i)] for i in idx]
            with ComputeGraph() as graph:
                parts = model.batch_loss(xb, yb)
                graph.backward(parts.total)
            opt.step()
            opt.zero_grad()
            w = len(idx) / n
            sums["total"] += parts.total.item() * w
            sums["shared"] += parts.shared * w
            sums["arm"] += parts.arm * w
            sums["hand"] += parts.hand * w
        record = {"epoch": ep, **sums}
        history.append(record)
        if config.checkpoint_every and (ep + 1) % config.checkpoint_every == 0:
            os.makedirs(config.checkpoint_dir or ".", exist_ok=True)
            save_checkpoint(
                model,
                os.path.join(config.checkpoint_dir or ".", f"epoch{ep + 1:04d}.ckpt"),
                epoch=ep + 1,
                metrics={"total": sums["total"]},
            )
        if stop_fn is not None and stop_fn(model, ep, record):
            break
    return history


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # (K, K), rows true class, columns predicted, task class order
    classes: list
    n: int


def evaluate(model, test_set, task):
    """Accuracy and confusion matrix of routed predictions on a test set."""
    if len(test_set) == 0:
        raise DataError("empty test set")
    preds = model.predict(test_set.epochs)
    classes = list(task.classes)
    k = len(classes)
    confusion = np.zeros((k, k), dtype=int)
    correct = 0
    for pred, label in zip(preds, test_set.labels):
        truth = task.project(label)
        confusion[classes.index(truth), classes.index(pred)] += 1
        correct += int(pred == truth)
    return EvalResult(accuracy=correct / len(test_set), confusion=confusion, classes=classes, n=len(test_set))


@dataclass
class TTestResult:
    t: float
    p: float
    df: int


def paired_ttest(acc_a, acc_b):
    """Two-tailed paired t-test; p through the regularized incomplete beta."""
    a = np.asarray(acc_a, dtype=np.float64)
    b = np.asarray(acc_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise DataError("paired_ttest wants two equal-length vectors with n >= 2")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0.0:
        raise NumericError("paired differences have zero variance, t statistic undefined")
    n = d.size
    t = d.mean() / (sd / np.sqrt(n))
    df = n - 1
    if t == 0.0:
        p = 1.0
    else:
        p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t=float(t), p=p, df=df)


# ---------------------------------------------------------------------------
# experiment protocol


@dataclass
class EvalReport:
    task: str
    methods: list
    subjects: list
    accuracy: dict  # method -> [per-subject accuracy]
    mean: dict
    std: dict
    ttests: dict  # "a_vs_b" -> {"t", "p", "df"} or note when n < 2
    data_hashes: dict  # subject -> sha256 of the train/test arrays every method saw
    seed: int

    def as_dict(self):
        return {
            "task": self.task,
            "methods": self.methods,
            "subjects": self.subjects,
            "accuracy": self.accuracy,
            "mean": self.mean,
            "std": self.std,
            "ttests": self.ttests,
            "data_hashes": self.data_hashes,
            "seed": self.seed,
        }


def _hash_sets(train_set, test_set):
    h = hashlib.sha256()
    for part in (train_set, test_set):
        h.update(part.epochs.tobytes())
        h.update(",".join(lab.value for lab in part.labels).encode())
    return h.hexdigest()


def fit_method(method, task, train_set, train_cfg, model_cfg=None, seed=0):
    """Train one method on one training set; returns a predict-capable model.

    The classical pipeline is fitted on task-space labels (categories for
    the 3-class task), so its predictions land directly in task classes.
    """
    if method == "fbcsp":
        labels = [task.project(lab) for lab in train_set.labels]
        return FbcspRlda().fit(train_set.epochs, labels, train_set.sampling_rate)
    cfg = model_cfg or EraConfig(dtype=train_cfg.precision)
    if method == "era":
        model = build(cfg, task, seed=seed)
    elif method == "flat":
        model = build_flat(cfg, task, seed=seed)
    else:
        raise DataError(f"unknown method {method!r}; choose from {METHODS}")
    train(model, train_set, train_cfg)
    return model


def run_experiment(
    task_id,
    methods,
    n_subjects,
    seed=0,
    synth_base=None,
    train_cfg=None,
    out_dir=None,
    test_fraction=0.2,
):
    """Same-split, same-data comparison of methods over synthetic subjects.

    Every method sees byte-identical train/test epochs per subject (the
    report stores the hash). Writes report.json / report.csv when out_dir
    is given.
    """
    task = taskspec(task_id)
    methods = list(methods)
    train_cfg = train_cfg or TrainConfig()
    synth_base = synth_base or SynthConfig()
    # the 3-class task categorizes all imagery classes; the others keep their own class list
    gen_classes = synth_base.classes if task.categorical_only else tuple(task.classes)
    seeds = np.random.SeedSequence(seed).spawn(n_subjects)
    accuracy = {m: [] for m in methods}
    hashes = {}
    subjects = []
    for si in range(n_subjects):
        subject = f"sub{si + 1}"
        subjects.append(subject)
        cfg = dataclasses.replace(
            synth_base,
            seed=int(seeds[si].generate_state(1)[0]),
            subject=subject,
            classes=gen_classes,
        )
        epoch_set = synth_generate(cfg)
        train_set, test_set = split(epoch_set, test_fraction=test_fraction, seed=seed + si)
        hashes[subject] = _hash_sets(train_set, test_set)
        for m in methods:
            fitted = fit_method(m, task, train_set, train_cfg, seed=seed + si)
            result = evaluate(fitted, test_set, task)
            accuracy[m].append(result.accuracy)
    mean = {m: float(np.mean(accuracy[m])) for m in methods}
    std = {m: float(np.std(accuracy[m], ddof=1)) if n_subjects > 1 else 0.0 for m in methods}
    ttests = {}
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            key = f"{a}_vs_{b}"
            if n_subjects < 2:
                ttests[key] = {"note": "insufficient subjects for a paired test"}
            else:
                try:
                    r = paired_ttest(accuracy[a], accuracy[b])
                    ttests[key] = {"t": r.t, "p": r.p, "df": r.df}
                except NumericError as exc:
                    ttests[key] = {"note": str(exc)}
    report = EvalReport(
        task=task.task_id,
        methods=methods,
        subjects=subjects,
        accuracy={m: [float(v) for v in accuracy[m]] for m in methods},
        mean=mean,
        std=std,
        ttests=ttests,
        data_hashes=hashes,
        seed=seed,
    )
    if out_dir:
        write_report(report, out_dir)
    return report


def write_report(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject"] + report.methods)
        for i, subject in enumerate(report.subjects):
            writer.writerow([subject] + [f"{report.accuracy[m][i]:.6f}" for m in report.methods])
        writer.writerow(["mean"] + [f"{report.mean[m]:.6f}" for m in report.methods])
        writer.writerow(["std"] + [f"{report.std[m]:.6f}" for m in report.methods])
    return json_path, csv_path


# ---------------------------------------------------------------------------
# spectral report


def class_mean_psd(epoch_set, segment=None, overlap=0.5):
    """Per-class PSD averaged over trials and channels: (freqs, {class: curve})."""
    labels = epoch_set.labels
    classes = sorted(set(labels), key=lambda c: c.value)
    freqs = None
    curves = {}
    for c in classes:
        rows = [i for i, l in enumerate(labels) if l == c]
        if not rows:
            raise DataError(f"class {c.value} has no trials")
        est = welch_psd_data(
            epoch_set.epochs[rows].reshape(-1, epoch_set.epochs.shape[-1]),
            epoch_set.sampling_rate,
            segment,
            overlap,
        )
        freqs = est.frequencies
        curves[c] = est.power.mean(axis=0)
    return freqs, curves


def psd_report(epoch_set, out_dir, mu_band=(8.0, 12.0)):
    """CSV table plus an SVG line chart of per-class mean PSD."""
    freqs, curves = class_mean_psd(epoch_set)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "psd.csv")
    classes = list(curves)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frequency_hz"] + [c.value for c in classes])
        for i, f in enumerate(freqs):
            writer.writerow([f"{f:.6f}"] + [f"{curves[c][i]:.8e}" for c in classes])
    svg_path = os.path.join(out_dir, "psd.svg")
    with open(svg_path, "w") as fh:
        fh.write(_psd_svg(freqs, curves, mu_band))
    return csv_path, svg_path


_SVG_COLORS = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
)


def _psd_svg(freqs, curves, mu_band, width=640, height=400, margin=50):
    fmax = float(freqs[-1])
    ymax = max(float(np.max(v)) for v in curves.values())
    ymax = ymax if ymax > 0 else 1.0
    ph, pw = height - 2 * margin, width - 2 * margin

    def xmap(f):
        return margin + pw * f / fmax

    def ymap(v):
        return height - margin - ph * v / ymax

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{xmap(mu_band[0]):.1f}" y="{margin}" width="{xmap(mu_band[1]) - xmap(mu_band[0]):.1f}" '
        f'height="{ph}" fill="#fde9c8"/>',
        f'<text x="{xmap(sum(mu_band) / 2):.1f}" y="{margin - 8}" font-size="11" text-anchor="middle">'
        f"{mu_band[0]:g}-{mu_band[1]:g} Hz</text>",
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" font-size="12" text-anchor="middle">frequency (Hz)</text>',
    ]
    for i, (cls, curve) in enumerate(curves.items()):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = " ".join(f"{xmap(f):.2f},{ymap(v):.2f}" for f, v in zip(freqs, curve))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(
            f'<text x="{width - margin + 4}" y="{margin + 14 * i + 10}" font-size="10" fill="{color}">{cls.value}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
