"""Hierarchical trunk-plus-heads classifier and its flat comparator.

The trunk turns one raw trial (1, 24, 751) into shared features
(36, 1, 216) and a 3-way category distribution (arm / hand / rest):

    temporal conv 36 x (1,63)   -> (36, 24, 689)   kernel = quarter second
    spatial  conv 36 x (24,1)   -> (36, 1, 689)    collapses the montage
    ELU, avg-pool (1,3)/(1,3)   -> (36, 1, 229)
    conv 36 x (1,14), ELU       -> (36, 1, 216)    = shared features
    conv 3 x (1,216), softmax   -> (3,)            category head

The temporal and spatial convolutions are consecutive linear maps, so the
forward pass runs them as one fused conv whose kernel is composed on the
fly (exact algebra, cheaper by far; gradients flow through the composition).

Two role-assigned heads consume the shared features:

    arm : conv-pool blocks 36/72/144/288, kernels 5,5,5,3 -> width 1 -> M-way
    hand: conv-pool blocks 72/144/288,    kernels 7,7,7   -> width 5 -> 2-way

Training weights each head's per-sample cross entropy by the trunk's own
category probability for that head (treated as a constant by default), and
only samples labeled for a head contribute to its loss. The flat comparator
shares the trunk topology, runs the hand-style block stack and ends in a
single K-way softmax.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .data import CATEGORY_ORDER, CATEGORY_OF, HAND_CLASSES, Category, ClassLabel, to_targets
from .errors import DataError, ShapeError
from .fileio import check_payload_size, read_container, write_container
from .tensor import (
    Tensor,
    add,
    avg_pool2d,
    compose_conv_bias,
    compose_conv_kernels,
    conv2d,
    cross_entropy,
    elu,
    mul,
    mul_const,
    reshape,
    select_column,
    soft_cross_entropy,
    softmax,
    sum_all,
    take_rows,
)

CHECKPOINT_VERSION = 1

ARM_COL = CATEGORY_ORDER.index(Category.ARM)
HAND_COL = CATEGORY_ORDER.index(Category.HAND)


def quarter_rate_kernel(sampling_rate):
    """Temporal kernel length: a quarter of the sampling rate, half-up rounded."""
    return int(np.floor(sampling_rate / 4.0 + 0.5))


@dataclass(frozen=True)
class EraConfig:
    in_channels: int = 24
    in_samples: int = 751
    sampling_rate: float = 250.0
    shared_width: int = 36
    temporal_kernel: int = 0  # 0 -> derived from sampling_rate
    block2_kernel: int = 14
    arm_widths: tuple = (36, 72, 144, 288)
    arm_kernels: tuple = (5, 5, 5, 3)
    hand_widths: tuple = (72, 144, 288)
    hand_kernels: tuple = (7, 7, 7)
    pool: tuple = (1, 3)
    pool_stride: tuple = (1, 3)
    dtype: str = "float64"
    differentiable_gates: bool = False  # let gradients flow through the head weights of the loss
    other_head_uniform: bool = False  # alternative reading: train the unlabeled head toward uniform

    @property
    def temporal_kernel_len(self):
        return self.temporal_kernel if self.temporal_kernel > 0 else quarter_rate_kernel(self.sampling_rate)

    @property
    def np_dtype(self):
        if self.dtype not in ("float64", "float32"):
            raise DataError(f"unsupported dtype {self.dtype!r}")
        return np.float64 if self.dtype == "float64" else np.float32


DEFAULT_SHARED_FEATURES = (36, 1, 216)


def _pooled(extent, window, stride):
    return (extent - window) // stride + 1


def shared_feature_shape(config):
    """Symbolic shape of the trunk output; raises naming the failing block."""
    kt = config.temporal_kernel_len
    w = config.in_samples - kt + 1
    if kt > config.in_samples or w < 1:
        raise ShapeError(f"temporal conv: kernel {kt} does not fit {config.in_samples} samples")
    pw, sw = config.pool[1], config.pool_stride[1]
    if pw > w:
        raise ShapeError(f"shared pool: window {config.pool} exceeds extent {w}")
    w = _pooled(w, pw, sw)
    w = w - config.block2_kernel + 1
    if w < 1:
        raise ShapeError(f"shared block 2: kernel {config.block2_kernel} leaves extent {w}")
    return (config.shared_width, 1, w)


def head_extents(config, widths, kernels, name):
    """Temporal extents after each conv-pool block of one head."""
    _, _, w = shared_feature_shape(config)
    pw, sw = config.pool[1], config.pool_stride[1]
    extents = []
    for i, k in enumerate(kernels):
        w = w - k + 1
        if w < 1:
            raise ShapeError(f"{name} block {i + 1}: kernel {k} leaves extent {w}")
        if pw > w:
            raise ShapeError(f"{name} block {i + 1}: pool {config.pool} exceeds extent {w}")
        w = _pooled(w, pw, sw)
        extents.append(w)
    return extents


def _glorot(rng, shape, dtype):
    fan_in = int(np.prod(shape[1:]))
    fan_out = shape[0] * int(np.prod(shape[2:]))
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class _Params:
    """Ordered named parameter store."""

    def __init__(self):
        self.order = []
        self.by_name = {}

    def new(self, rng, name, shape, dtype, zero=False):
        data = np.zeros(shape, dtype=dtype) if zero else _glorot(rng, shape, dtype)
        t = Tensor(data, requires_grad=True)
        self.order.append(name)
        self.by_name[name] = t
        return t

    def tensors(self):
        return [self.by_name[n] for n in self.order]

    def count(self):
        return int(sum(t.size for t in self.tensors()))


class _BaseModel:
    config: EraConfig

    def parameters(self):
        return self._params.tensors()

    def parameter_names(self):
        return list(self._params.order)

    def parameter_count(self):
        return self._params.count()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def _trunk(self, x):
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != cfg.in_channels or x.shape[3] != cfg.in_samples:
            raise ShapeError(
                f"expected input (N, 1, {cfg.in_channels}, {cfg.in_samples}), got {x.shape}"
            )
        p = self._params.by_name
        fused_k = compose_conv_kernels(p["spatial_w"], p["temporal_w"])
        fused_b = compose_conv_bias(p["spatial_w"], p["temporal_b"], p["spatial_b"])
        h = conv2d(x, fused_k, fused_b)
        h = elu(h)
        h = avg_pool2d(h, cfg.pool, cfg.pool_stride)
        h = conv2d(h, p["block2_w"], p["block2_b"])
        return elu(h)  # shared features (N, width, 1, t)

    def _build_trunk_params(self, rng, dtype):
        cfg = self.config
        kt = cfg.temporal_kernel_len
        w = cfg.shared_width
        self._params.new(rng, "temporal_w", (w, 1, 1, kt), dtype)
        self._params.new(rng, "temporal_b", (w,), dtype, zero=True)
        self._params.new(rng, "spatial_w", (w, w, cfg.in_channels, 1), dtype)
        self._params.new(rng, "spatial_b", (w,), dtype, zero=True)
        self._params.new(rng, "block2_w", (w, w, 1, cfg.block2_kernel), dtype)
        self._params.new(rng, "block2_b", (w,), dtype, zero=True)

    def _build_stack_params(self, rng, dtype, prefix, widths, kernels):
        cfg = self.config
        cin = cfg.shared_width
        for i, (width, k) in enumerate(zip(widths, kernels)):
            self._params.new(rng, f"{prefix}{i + 1}_w", (width, cin, 1, k), dtype)
            self._params.new(rng, f"{prefix}{i + 1}_b", (width,), dtype, zero=True)
            cin = width
        return cin

    def _run_stack(self, feats, prefix, n_blocks):
        cfg = self.config
        p = self._params.by_name
        h = feats
        for i in range(n_blocks):
            h = conv2d(h, p[f"{prefix}{i + 1}_w"], p[f"{prefix}{i + 1}_b"])
            h = elu(h)
            h = avg_pool2d(h, cfg.pool, cfg.pool_stride)
        return h


@dataclass
class CompositeLossParts:
    """Batch loss decomposition, kept in plain floats/arrays for reporting."""

    total: Tensor  # scalar tensor on the active graph
    shared: float  # mean shared-layer cross entropy over the batch
    arm: float  # mean arm-head cross entropy over arm-labeled samples (0 when none)
    hand: float
    arm_gate: np.ndarray  # per-sample category probability for arm (N,)
    hand_gate: np.ndarray
    per_sample_shared: np.ndarray = field(default_factory=lambda: np.zeros(0))
    arm_rows: list = field(default_factory=list)
    per_sample_arm: np.ndarray = field(default_factory=lambda: np.zeros(0))
    hand_rows: list = field(default_factory=list)
    per_sample_hand: np.ndarray = field(default_factory=lambda: np.zeros(0))


class EraModel(_BaseModel):
    """Shared trunk plus role-assigned arm/hand heads.

    For the 3-class task the heads are absent and the trunk's category
    output is the prediction.
    """

    kind = "era"

    def __init__(self, config, task, seed=0):
        self.config = config
        self.task = task
        self.seed = int(seed)
        dtype = config.np_dtype
        rng = np.random.default_rng(self.seed)
        self._params = _Params()
        self._build_trunk_params(rng, dtype)
        width, _, t = shared_feature_shape(config)
        self._params.new(rng, "category_w", (3, width, 1, t), dtype)
        self._params.new(rng, "category_b", (3,), dtype, zero=True)
        if not task.categorical_only:
            if task.n_arm < 2:
                raise DataError(f"task {task.task_id} has {task.n_arm} arm classes, need >= 2 for the arm head")
            arm_ext = head_extents(config, config.arm_widths, config.arm_kernels, "arm")
            if arm_ext[-1] != 1:
                raise ShapeError(f"arm head must end at extent 1, got {arm_ext[-1]}")
            hand_ext = head_extents(config, config.hand_widths, config.hand_kernels, "hand")
            cin = self._build_stack_params(rng, dtype, "arm", config.arm_widths, config.arm_kernels)
            self._params.new(rng, "arm_out_w", (task.n_arm, cin, 1, 1), dtype)
            self._params.new(rng, "arm_out_b", (task.n_arm,), dtype, zero=True)
            cin = self._build_stack_params(rng, dtype, "hand", config.hand_widths, config.hand_kernels)
            self._params.new(rng, "hand_out_w", (2, cin, 1, hand_ext[-1]), dtype)
            self._params.new(rng, "hand_out_b", (2,), dtype, zero=True)

    def forward_shared(self, x):
        """(category probabilities (N,3), shared features (N,width,1,t))."""
        feats = self._trunk(x)
        p = self._params.by_name
        logits = conv2d(feats, p["category_w"], p["category_b"])
        probs = softmax(reshape(logits, (x.shape[0], 3)))
        return probs, feats

    def forward_sub(self, feats, head):
        """Head probabilities for 'arm' ((n, M)) or 'hand' ((n, 2)) features."""
        if self.task.categorical_only:
            raise DataError("the 3-class model is trunk-only and has no sub-networks")
        if head not in ("arm", "hand"):
            raise DataError(f"unknown head {head!r}")
        cfg = self.config
        p = self._params.by_name
        blocks = len(cfg.arm_kernels) if head == "arm" else len(cfg.hand_kernels)
        h = self._run_stack(feats, head, blocks)
        h = conv2d(h, p[f"{head}_out_w"], p[f"{head}_out_b"])
        k = h.shape[1]
        return softmax(reshape(h, (feats.shape[0], k)))

    # -- training ---------------------------------------------------------

    def batch_loss(self, x, labels):
        """Composite loss over one batch.

        Per sample: shared CE, plus the arm (hand) head CE weighted by the
        trunk's arm (hand) probability when the sample is labeled for that
        head. Both heads run on every non-rest sample. The mean over the
        batch is the training objective.
        """
        task = self.task
        n = x.shape[0]
        if n == 0:
            raise DataError("empty batch")
        cat_probs, feats = self.forward_shared(x)
        dtype = x.dtype
        cat_targets = np.stack([to_targets(lab, task)[0] for lab in labels]).astype(dtype)
        ls_vec = cross_entropy(cat_probs, Tensor(cat_targets))
        total = sum_all(ls_vec)

        arm_gate = cat_probs.data[:, ARM_COL].astype(np.float64)
        hand_gate = cat_probs.data[:, HAND_COL].astype(np.float64)
        parts = CompositeLossParts(
            total=None,
            shared=float(ls_vec.data.mean()),
            arm=0.0,
            hand=0.0,
            arm_gate=arm_gate,
            hand_gate=hand_gate,
            per_sample_shared=ls_vec.data.astype(np.float64),
        )

        if not task.categorical_only:
            arm_rows = [i for i, lab in enumerate(labels) if CATEGORY_OF[lab] is Category.ARM]
            hand_rows = [i for i, lab in enumerate(labels) if CATEGORY_OF[lab] is Category.HAND]
            nonrest = sorted(arm_rows + hand_rows)
            if nonrest:
                pos = {row: k for k, row in enumerate(nonrest)}
                feats_nr = take_rows(feats, nonrest)
                arm_probs = self.forward_sub(feats_nr, "arm")
                hand_probs = self.forward_sub(feats_nr, "hand")
                total, arm_losses = self._head_term(
                    total, cat_probs, arm_probs, ARM_COL, arm_rows, hand_rows, pos,
                    [to_targets(labels[i], task)[1] for i in arm_rows], dtype,
                )
                parts.arm_rows = arm_rows
                parts.per_sample_arm = arm_losses
                parts.arm = float(arm_losses.mean()) if arm_rows else 0.0
                total, hand_losses = self._head_term(
                    total, cat_probs, hand_probs, HAND_COL, hand_rows, arm_rows, pos,
                    [to_targets(labels[i], task)[1] for i in hand_rows], dtype,
                )
                parts.hand_rows = hand_rows
                parts.per_sample_hand = hand_losses
                parts.hand = float(hand_losses.mean()) if hand_rows else 0.0

        parts.total = mul_const(total, 1.0 / n)
        return parts

    def _head_term(self, total, cat_probs, head_probs, col, own_rows, other_rows, pos, targets, dtype):
        """Add one head's gated loss to the running total (mean taken later)."""
        losses = np.zeros(0)
        if own_rows:
            own_pos = [pos[r] for r in own_rows]
            probs = take_rows(head_probs, own_pos)
            vec = cross_entropy(probs, Tensor(np.stack(targets).astype(dtype)))
            losses = vec.data.astype(np.float64)
            if self.config.differentiable_gates:
                gates = take_rows(select_column(cat_probs, col), own_rows)
                total = add(total, sum_all(mul(gates, vec)))
            else:
                gates = cat_probs.data[own_rows, col]
                total = add(total, sum_all(mul_const(vec, gates)))
        if self.config.other_head_uniform and other_rows:
            other_pos = [pos[r] for r in other_rows]
            probs = take_rows(head_probs, other_pos)
            k = probs.shape[1]
            uniform = Tensor(np.full((len(other_rows), k), 1.0 / k, dtype=dtype))
            vec = soft_cross_entropy(probs, uniform)
            gates = cat_probs.data[other_rows, col]
            total = add(total, sum_all(mul_const(vec, gates)))
        return total, losses

    # -- inference --------------------------------------------------------

    def predict(self, x_np, batch=64):
        """Routed class prediction per trial of (n, channels, samples) data."""
        out = []
        for start in range(0, x_np.shape[0], batch):
            out.extend(self._predict_batch(x_np[start:start + batch]))
        return out

    def _predict_batch(self, x_np):
        task = self.task
        x = Tensor(x_np[:, None, :, :], dtype=self.config.np_dtype)
        cat_probs, feats = self.forward_shared(x)
        cat_idx = np.argmax(cat_probs.data, axis=1)
        n = x.shape[0]
        preds = [None] * n
        if task.categorical_only:
            return [CATEGORY_ORDER[int(i)] for i in cat_idx]
        for col, head, classes in ((ARM_COL, "arm", task.arm_classes), (HAND_COL, "hand", HAND_CLASSES)):
            rows = [i for i in range(n) if cat_idx[i] == col]
            if rows:
                probs = self.forward_sub(take_rows(feats, rows), head)
                choice = np.argmax(probs.data, axis=1)
                for r, c in zip(rows, choice):
                    preds[r] = classes[int(c)]
        for i in range(n):
            if preds[i] is None:
                preds[i] = ClassLabel.REST
        return preds


class FlatModel(_BaseModel):
    """Single-softmax comparator: trunk topology plus the hand-style stack."""

    kind = "flat"

    def __init__(self, config, task, seed=0):
        self.config = config
        self.task = task
        self.seed = int(seed)
        dtype = config.np_dtype
        rng = np.random.default_rng(self.seed)
        self._params = _Params()
        self._build_trunk_params(rng, dtype)
        ext = head_extents(config, config.hand_widths, config.hand_kernels, "flat")
        cin = self._build_stack_params(rng, dtype, "flat", config.hand_widths, config.hand_kernels)
        k = task.n_classes
        self._params.new(rng, "out_w", (k, cin, 1, ext[-1]), dtype)
        self._params.new(rng, "out_b", (k,), dtype, zero=True)

    def forward(self, x):
        feats = self._trunk(x)
        h = self._run_stack(feats, "flat", len(self.config.hand_kernels))
        h = conv2d(h, self._params.by_name["out_w"], self._params.by_name["out_b"])
        return softmax(reshape(h, (x.shape[0], self.task.n_classes)))

    def batch_loss(self, x, labels):
        task = self.task
        n = x.shape[0]
        if n == 0:
            raise DataError("empty batch")
        probs = self.forward(x)
        onehot = np.zeros((n, task.n_classes), dtype=x.dtype)
        for i, lab in enumerate(labels):
            onehot[i, task.classes.index(task.project(lab))] = 1.0
        vec = cross_entropy(probs, Tensor(onehot))
        total = mul_const(sum_all(vec), 1.0 / n)
        mean = float(vec.data.mean())
        return CompositeLossParts(
            total=total,
            shared=mean,
            arm=0.0,
            hand=0.0,
            arm_gate=np.zeros(n),
            hand_gate=np.zeros(n),
            per_sample_shared=vec.data.astype(np.float64),
        )

    def predict(self, x_np, batch=64):
        out = []
        for start in range(0, x_np.shape[0], batch):
            xb = Tensor(x_np[start:start + batch][:, None, :, :], dtype=self.config.np_dtype)
            probs = self.forward(xb)
            out.extend(self.task.classes[int(i)] for i in np.argmax(probs.data, axis=1))
        return out


def build(config, task, seed=0):
    """Construct a hierarchical model, verifying the derived shape chain."""
    shape = shared_feature_shape(config)
    arch = dataclasses.replace(config, dtype="float64", differentiable_gates=False, other_head_uniform=False)
    if arch == EraConfig() and shape != DEFAULT_SHARED_FEATURES:
        raise ShapeError(f"default config derived shared features {shape}, expected {DEFAULT_SHARED_FEATURES}")
    return EraModel(config, task, seed=seed)


def build_flat(config, task, seed=0):
    shared_feature_shape(config)
    return FlatModel(config, task, seed=seed)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model, path, epoch=0, metrics=None):
    params = model.parameters()
    names = model.parameter_names()
    header = {
        "kind": "checkpoint",
        "version": CHECKPOINT_VERSION,
        "model": model.kind,
        "task": model.task.task_id,
        "seed": model.seed,
        "epoch": int(epoch),
        "metrics": metrics or {},
        "config": dataclasses.asdict(model.config),
        "params": [{"name": n, "shape": list(p.shape)} for n, p in zip(names, params)],
    }
    payload = np.concatenate([p.data.reshape(-1).astype(np.float64) for p in params]) if params else np.zeros(0)
    write_container(path, header, payload)


def load_checkpoint(path):
    from .data import taskspec

    header, payload = read_container(path, kind="checkpoint", version=CHECKPOINT_VERSION)
    cfg_dict = dict(header["config"])
    for key in ("arm_widths", "arm_kernels", "hand_widths", "hand_kernels", "pool", "pool_stride"):
        cfg_dict[key] = tuple(cfg_dict[key])
    config = EraConfig(**cfg_dict)
    task = taskspec(header["task"])
    cls = {"era": EraModel, "flat": FlatModel}.get(header["model"])
    if cls is None:
        raise DataError(f"{path}: unknown model kind {header['model']!r}")
    model = cls(config, task, seed=int(header["seed"]))
    declared = [(e["name"], tuple(e["shape"])) for e in header["params"]]
    derived = [(n, p.shape) for n, p in zip(model.parameter_names(), model.parameters())]
    if declared != derived:
        raise DataError(f"{path}: parameter table does not match the config-derived architecture")
    check_payload_size(path, payload, sum(int(np.prod(s)) for _, s in declared))
    if payload.size and not np.all(np.isfinite(payload)):
        raise DataError(f"{path}: checkpoint payload contains non-finite values")
    offset = 0
    for p in model.parameters():
        chunk = payload[offset:offset + p.size].reshape(p.shape)
        p.data = np.ascontiguousarray(chunk, dtype=model.config.np_dtype)
        offset += p.size
    return model, header
