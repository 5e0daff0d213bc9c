"""Label taxonomy, classification task definitions, epoch containers and the
synthetic oscillatory-suppression EEG generator used in place of real
recordings.

The generator writes, per trial, pink background noise plus a 10 Hz
rhythm (with a half-amplitude 20 Hz harmonic) whose per-channel amplitude
is attenuated according to the class's suppression-depth map. Classes are
therefore distinguished purely by the spatial pattern of band-power
suppression, which is the effect the classifiers are supposed to pick up.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .fileio import check_payload_size, read_container, write_container

EPOCHS_VERSION = 1


class ClassLabel(enum.Enum):
    REACH_LEFT = "reach_left"
    REACH_RIGHT = "reach_right"
    REACH_FORWARD = "reach_forward"
    REACH_BACKWARD = "reach_backward"
    REACH_UP = "reach_up"
    REACH_DOWN = "reach_down"
    GRASP = "grasp"
    TWIST = "twist"
    REST = "rest"


class Category(enum.Enum):
    ARM = "arm"
    HAND = "hand"
    REST = "rest"


CATEGORY_ORDER = (Category.ARM, Category.HAND, Category.REST)

CATEGORY_OF = {
    ClassLabel.REACH_LEFT: Category.ARM,
    ClassLabel.REACH_RIGHT: Category.ARM,
    ClassLabel.REACH_FORWARD: Category.ARM,
    ClassLabel.REACH_BACKWARD: Category.ARM,
    ClassLabel.REACH_UP: Category.ARM,
    ClassLabel.REACH_DOWN: Category.ARM,
    ClassLabel.GRASP: Category.HAND,
    ClassLabel.TWIST: Category.HAND,
    ClassLabel.REST: Category.REST,
}

HAND_CLASSES = (ClassLabel.GRASP, ClassLabel.TWIST)


@dataclass(frozen=True)
class TaskSpec:
    """One classification task: ordered class list plus the arm-class split."""

    task_id: str
    classes: tuple  # ClassLabel members, or Category members for the 3-class task
    arm_classes: tuple  # ordered ClassLabel members mapped by the arm head

    @property
    def n_classes(self):
        return len(self.classes)

    @property
    def n_arm(self):
        """Output width of the arm head (the task's arm-class count)."""
        return len(self.arm_classes)

    @property
    def categorical_only(self):
        return self.task_id == "three_class"

    def contains(self, label):
        if self.categorical_only:
            return label in CATEGORY_OF
        return label in self.classes

    def project(self, label):
        """Map a ground-truth ClassLabel onto this task's class set."""
        if self.categorical_only:
            return CATEGORY_OF[label]
        if label not in self.classes:
            raise DataError(f"label {label.value} is not part of task {self.task_id}")
        return label


_FIVE = (ClassLabel.REACH_LEFT, ClassLabel.REACH_RIGHT, ClassLabel.GRASP, ClassLabel.TWIST, ClassLabel.REST)
_SEVEN_HOR = (
    ClassLabel.REACH_LEFT, ClassLabel.REACH_RIGHT, ClassLabel.REACH_FORWARD, ClassLabel.REACH_BACKWARD,
    ClassLabel.GRASP, ClassLabel.TWIST, ClassLabel.REST,
)
_SEVEN_VER = (
    ClassLabel.REACH_LEFT, ClassLabel.REACH_RIGHT, ClassLabel.REACH_UP, ClassLabel.REACH_DOWN,
    ClassLabel.GRASP, ClassLabel.TWIST, ClassLabel.REST,
)

_TASKS = {
    "three_class": TaskSpec("three_class", CATEGORY_ORDER, ()),
    "five_class": TaskSpec("five_class", _FIVE, _FIVE[:2]),
    "seven_hor": TaskSpec("seven_hor", _SEVEN_HOR, _SEVEN_HOR[:4]),
    "seven_ver": TaskSpec("seven_ver", _SEVEN_VER, _SEVEN_VER[:4]),
}

TASK_ALIASES = {
    "3": "three_class",
    "5": "five_class",
    "7hor": "seven_hor",
    "7ver": "seven_ver",
}


def taskspec(task_id):
    key = TASK_ALIASES.get(str(task_id).lower(), str(task_id).lower())
    if key not in _TASKS:
        raise DataError(f"unknown task {task_id!r}; choose from {sorted(_TASKS)} or {sorted(TASK_ALIASES)}")
    return _TASKS[key]


def to_targets(label, spec):
    """(category one-hot of width 3, sub-head one-hot or None) for one label."""
    if not spec.contains(label):
        raise DataError(f"label {label.value} is not part of task {spec.task_id}")
    category = CATEGORY_OF[label]
    cat = np.zeros(3)
    cat[CATEGORY_ORDER.index(category)] = 1.0
    if spec.categorical_only or category is Category.REST:
        return cat, None
    if category is Category.ARM:
        sub = np.zeros(spec.n_arm)
        sub[spec.arm_classes.index(label)] = 1.0
    else:
        sub = np.zeros(2)
        sub[HAND_CLASSES.index(label)] = 1.0
    return cat, sub


# ---------------------------------------------------------------------------
# epoch container


@dataclass
class EpochSet:
    """Segmented labeled trials: (n, channels, samples) at a fixed rate."""

    epochs: np.ndarray
    labels: list  # ClassLabel per trial
    subject: str = "sub0"
    sampling_rate: float = 250.0

    def __post_init__(self):
        self.epochs = np.asarray(self.epochs, dtype=np.float64)
        if self.epochs.ndim != 3:
            raise DataError(f"epochs must be (n, channels, samples), got {self.epochs.shape}")
        if len(self.labels) != self.epochs.shape[0]:
            raise DataError(f"{len(self.labels)} labels for {self.epochs.shape[0]} epochs")

    def __len__(self):
        return self.epochs.shape[0]

    def subset(self, indices):
        return EpochSet(
            epochs=self.epochs[np.asarray(indices)],
            labels=[self.labels[int(i)] for i in indices],
            subject=self.subject,
            sampling_rate=self.sampling_rate,
        )


def split(epoch_set, test_fraction=0.2, seed=0):
    """Stratified train/test split; deterministic under seed."""
    labels = epoch_set.labels
    by_class = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    for lab, idx in by_class.items():
        if len(idx) < 2:
            raise DataError(f"class {lab.value} has {len(idx)} trial(s), need at least 2 to split")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for lab in sorted(by_class, key=lambda c: c.value):
        idx = np.array(by_class[lab])
        perm = rng.permutation(len(idx))
        n_test = int(round(test_fraction * len(idx)))
        test_idx.extend(idx[perm[:n_test]])
        train_idx.extend(idx[perm[n_test:]])
    return epoch_set.subset(sorted(train_idx)), epoch_set.subset(sorted(test_idx))


# ---------------------------------------------------------------------------
# synthetic generator


def default_weight_maps(channels=24):
    """Per-class suppression-depth maps, one smooth bump per imagery class.

    Arm classes sit on the first two thirds of the montage and hand classes
    on the last third, so the category split is spatially coarse while the
    within-category distinctions are finer. Rest suppresses nothing.
    """
    centers = {
        ClassLabel.REACH_LEFT: 2.0,
        ClassLabel.REACH_RIGHT: 5.0,
        ClassLabel.REACH_FORWARD: 8.0,
        ClassLabel.REACH_BACKWARD: 11.0,
        ClassLabel.REACH_UP: 14.0,
        ClassLabel.REACH_DOWN: 17.0,
        ClassLabel.GRASP: 20.0,
        ClassLabel.TWIST: 23.0,
    }
    ch = np.arange(channels, dtype=np.float64)
    maps = {}
    for label in ClassLabel:
        if label is ClassLabel.REST:
            maps[label] = np.zeros(channels)
        else:
            maps[label] = 0.9 * np.exp(-0.5 * ((ch - centers[label]) / 1.8) ** 2)
    return maps


@dataclass
class SynthConfig:
    channels: int = 24
    samples: int = 751
    sampling_rate: float = 250.0
    trials_per_class: int = 50
    snr: float = 5.0
    mu_hz: float = 10.0
    mu_width_hz: float = 2.0  # per-trial rhythm frequency is drawn from mu_hz +- width/2
    noise_exponent: float = 1.0  # 1/f^exponent background
    seed: int = 0
    subject: str = "sub0"
    classes: tuple = tuple(ClassLabel)
    weight_maps: dict = field(default_factory=default_weight_maps)

    def __post_init__(self):
        if self.snr < 0:
            raise DataError("snr must be non-negative")
        maps = [np.asarray(self.weight_maps[c]) for c in self.classes]
        for i in range(len(maps)):
            for j in range(i + 1, len(maps)):
                if float(np.linalg.norm(maps[i] - maps[j])) == 0.0:
                    raise DataError(
                        f"weight maps of {self.classes[i].value} and {self.classes[j].value} coincide"
                    )


def _pink_noise(rng, channels, samples, exponent):
    """Unit-variance 1/f^exponent noise per channel."""
    white = rng.standard_normal((channels, samples))
    spec = np.fft.rfft(white, axis=1)
    freqs = np.fft.rfftfreq(samples)
    shaping = np.ones_like(freqs)
    nonzero = freqs > 0
    shaping[nonzero] = freqs[nonzero] ** (-exponent / 2.0)
    shaping[0] = 0.0
    x = np.fft.irfft(spec * shaping, n=samples, axis=1)
    sd = x.std(axis=1, keepdims=True)
    sd[sd == 0] = 1.0
    return x / sd


def synth_generate(cfg):
    """EpochSet of trials_per_class trials per class, deterministic under seed."""
    rng = np.random.default_rng(cfg.seed)
    t = np.arange(cfg.samples) / cfg.sampling_rate
    epochs = []
    labels = []
    for label in cfg.classes:
        depth = np.asarray(cfg.weight_maps[label], dtype=np.float64)
        amplitude = cfg.snr * (1.0 - depth)  # suppression: deeper -> weaker rhythm
        for _ in range(cfg.trials_per_class):
            noise = _pink_noise(rng, cfg.channels, cfg.samples, cfg.noise_exponent)
            f = cfg.mu_hz + cfg.mu_width_hz * (rng.random() - 0.5)
            phase = rng.random() * 2.0 * np.pi
            phase2 = rng.random() * 2.0 * np.pi
            rhythm = np.sin(2.0 * np.pi * f * t + phase) + 0.5 * np.sin(2.0 * np.pi * 2.0 * f * t + phase2)
            epochs.append(noise + amplitude[:, None] * rhythm[None, :])
            labels.append(label)
    return EpochSet(
        epochs=np.stack(epochs),
        labels=labels,
        subject=cfg.subject,
        sampling_rate=cfg.sampling_rate,
    )


# ---------------------------------------------------------------------------
# file format


def write_epochs(epoch_set, path):
    n, channels, samples = epoch_set.epochs.shape
    header = {
        "kind": "epochs",
        "version": EPOCHS_VERSION,
        "sampling_rate": epoch_set.sampling_rate,
        "n": n,
        "channels": channels,
        "samples": samples,
        "labels": [lab.value for lab in epoch_set.labels],
        "subject": epoch_set.subject,
    }
    write_container(path, header, epoch_set.epochs.reshape(-1))


def read_epochs(path):
    header, payload = read_container(path, kind="epochs", version=EPOCHS_VERSION)
    n, channels, samples = int(header["n"]), int(header["channels"]), int(header["samples"])
    check_payload_size(path, payload, n * channels * samples)
    names = header["labels"]
    if len(names) != n:
        raise DataError(f"{path}: header lists {len(names)} labels for {n} epochs")
    try:
        labels = [ClassLabel(v) for v in names]
    except ValueError as exc:
        raise DataError(f"{path}: unknown class label in header ({exc})") from exc
    return EpochSet(
        epochs=payload.reshape(n, channels, samples).copy(),
        labels=labels,
        subject=header.get("subject", "sub0"),
        sampling_rate=float(header["sampling_rate"]),
    )
