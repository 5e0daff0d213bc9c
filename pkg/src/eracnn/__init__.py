"""Hierarchical EEG motor-imagery decoding toolkit.

A trunk network categorizes trials into arm / hand / rest and hands its
shared features to two role-assigned heads for the fine-grained decision;
training weights each head's loss by the trunk's own category probability.
Ships with the preprocessing chain, a synthetic oscillatory-EEG generator,
an FBCSP+RLDA baseline, a flat single-softmax comparator and an
evaluation harness with a CLI.
"""

from .data import (
    CATEGORY_OF,
    CATEGORY_ORDER,
    Category,
    ClassLabel,
    EpochSet,
    SynthConfig,
    TaskSpec,
    read_epochs,
    split,
    synth_generate,
    taskspec,
    to_targets,
    write_epochs,
)
from .errors import (
    DataError,
    EracnnError,
    GraphError,
    MalformedHeaderError,
    NumericError,
    ShapeError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .fbcsp import FbcspRlda, csp_fit, fbcsp_features, fbcsp_fit, rlda_fit, rlda_predict
from .harness import (
    EvalReport,
    TrainConfig,
    evaluate,
    paired_ttest,
    psd_report,
    run_experiment,
    train,
)
from .model import (
    CompositeLossParts,
    EraConfig,
    EraModel,
    FlatModel,
    build,
    build_flat,
    load_checkpoint,
    save_checkpoint,
    shared_feature_shape,
)
from .sigproc import (
    MOTOR24,
    PsdEstimate,
    Recording,
    bandpass,
    epoch,
    notch,
    read_recording,
    resample,
    select_channels,
    welch_psd,
    write_recording,
)
from .tensor import Adam, ComputeGraph, Tensor, active_backend, finite_diff_gradcheck

__version__ = "0.1.0"
