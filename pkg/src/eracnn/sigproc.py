"""EEG preprocessing: band-pass, notch, integer-factor resampling, channel
selection, epoching, and Welch spectral density estimates.

All filters are zero phase (forward-backward application with reflective
edge padding) and operate per channel. Array-level helpers are exposed so
other modules can filter plain (…, samples) arrays without building a
Recording.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .data import ClassLabel, EpochSet
from .errors import DataError, ShapeError
from .fileio import check_payload_size, read_container, write_container

RECORDING_VERSION = 1

# motor-cortex montage used throughout (10-20 labels, ground FPz / reference FCz excluded)
MOTOR24 = (
    "F3", "F1", "Fz", "F2", "F4",
    "FC3", "FC1", "FC2", "FC4",
    "C3", "C1", "Cz", "C2", "C4",
    "CP3", "CP1", "CPz", "CP2", "CP4",
    "P3", "P1", "Pz", "P2", "P4",
)

MONTAGES = {"motor24": MOTOR24}


@dataclass
class Recording:
    """Continuous multi-channel signal in microvolts with event markers."""

    data: np.ndarray  # (channels, samples) float64
    sampling_rate: float
    channel_names: list
    events: list = field(default_factory=list)  # [(sample_index, label), ...]

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ShapeError(f"recording data must be (channels, samples), got {self.data.shape}")
        if len(self.channel_names) != self.data.shape[0]:
            raise DataError(
                f"{len(self.channel_names)} channel names for {self.data.shape[0]} channels"
            )
        if self.sampling_rate <= 0:
            raise DataError("sampling_rate must be positive")
        n = self.data.shape[1]
        for s, label in self.events:
            if not 0 <= s < n:
                raise DataError(f"event at sample {s} outside recording of {n} samples")

    @property
    def n_channels(self):
        return self.data.shape[0]

    @property
    def n_samples(self):
        return self.data.shape[1]


@dataclass
class PsdEstimate:
    """One-sided spectral density, power per Hz, per channel."""

    frequencies: np.ndarray  # (bins,) strictly increasing, 0..Nyquist
    power: np.ndarray  # (channels, bins), non-negative

    def __post_init__(self):
        if np.any(np.diff(self.frequencies) <= 0):
            raise DataError("PSD frequencies must be strictly increasing")
        if np.any(self.power < 0):
            raise DataError("PSD power must be non-negative")

    def band_power(self, low, high):
        """Integrated power per channel over [low, high] Hz (trapezoid rule)."""
        sel = (self.frequencies >= low) & (self.frequencies <= high)
        return np.trapezoid(self.power[:, sel], self.frequencies[sel], axis=1)


# ---------------------------------------------------------------------------
# array-level filters


def bandpass_data(data, fs, low=1.0, high=60.0, order=4):
    """Zero-phase Butterworth band-pass along the last axis."""
    nyq = fs / 2.0
    if not 0.0 < low < high < nyq:
        raise DataError(f"band edges ({low}, {high}) must satisfy 0 < low < high < {nyq}")
    sos = signal.butter(order, [low, high], btype="bandpass", fs=fs, output="sos")
    padlen = 3 * (2 * order + 1)
    return signal.sosfiltfilt(sos, data, axis=-1, padtype="even", padlen=padlen)


def notch_data(data, fs, f0=60.0, q=30.0):
    """Zero-phase second-order IIR notch along the last axis."""
    if f0 >= fs / 2.0:
        raise DataError(f"notch frequency {f0} must be below Nyquist {fs / 2.0}")
    b, a = signal.iirnotch(f0, q, fs=fs)
    return signal.filtfilt(b, a, data, axis=-1, padtype="even", padlen=9)


def resample_data(data, fs, target):
    """Kaiser-windowed FIR anti-alias low-pass then integer decimation.

    Cutoff is 0.8x the new Nyquist. Output length is floor(n / factor).
    """
    factor = fs / target
    if abs(factor - round(factor)) > 1e-9 or factor < 1:
        raise DataError(f"resampling {fs} -> {target} Hz is not an integer decimation")
    factor = int(round(factor))
    if factor == 1:
        return np.array(data, dtype=np.float64, copy=True)
    cutoff = 0.8 * (target / 2.0)
    taps = 20 * factor + 1
    h = signal.firwin(taps, cutoff, window=("kaiser", 5.0), fs=fs, scale=True)
    half = taps // 2
    padded = np.pad(data, [(0, 0)] * (data.ndim - 1) + [(half, half)], mode="reflect")
    smooth = signal.fftconvolve(padded, h.reshape((1,) * (data.ndim - 1) + (taps,)), mode="valid", axes=-1)
    n = data.shape[-1]
    keep = (n // factor) * factor
    return np.ascontiguousarray(smooth[..., :keep:factor])


def welch_psd_data(data, fs, segment=None, overlap=0.5):
    """Hann-windowed averaged periodogram (density scaling) along the last axis."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if segment is None:
        segment = int(round(fs))
    if segment > data.shape[-1]:
        raise DataError(f"segment length {segment} exceeds {data.shape[-1]} samples")
    freqs, power = signal.welch(
        data,
        fs=fs,
        window="hann",
        nperseg=segment,
        noverlap=int(overlap * segment),
        detrend=False,
        scaling="density",
        axis=-1,
    )
    return PsdEstimate(frequencies=freqs, power=power)


# ---------------------------------------------------------------------------
# Recording-level operations


def bandpass(rec, low=1.0, high=60.0, order=4):
    return replace(rec, data=bandpass_data(rec.data, rec.sampling_rate, low, high, order))


def notch(rec, f0=60.0, q=30.0):
    return replace(rec, data=notch_data(rec.data, rec.sampling_rate, f0, q))


def resample(rec, target=250.0):
    """Decimate to ``target`` Hz; event sample indices are rescaled."""
    factor = int(round(rec.sampling_rate / target))
    data = resample_data(rec.data, rec.sampling_rate, target)
    events = [(s // factor, label) for s, label in rec.events]
    return Recording(data=data, sampling_rate=float(target), channel_names=list(rec.channel_names), events=events)


def select_channels(rec, wanted):
    """Reorder (and subset) channels to ``wanted``; unknown names are an error."""
    if isinstance(wanted, str):
        if wanted not in MONTAGES:
            raise DataError(f"unknown montage {wanted!r}; available: {sorted(MONTAGES)}")
        wanted = MONTAGES[wanted]
    index = {name: i for i, name in enumerate(rec.channel_names)}
    missing = [name for name in wanted if name not in index]
    if missing:
        raise DataError(f"channels not present in recording: {missing}")
    rows = [index[name] for name in wanted]
    return Recording(
        data=rec.data[rows].copy(),
        sampling_rate=rec.sampling_rate,
        channel_names=list(wanted),
        events=list(rec.events),
    )


def epoch(rec, window_samples=751, offset=0, subject="sub0"):
    """Cut one (channels, window) trial per event, starting at event + offset."""
    n = rec.n_samples
    trials = []
    labels = []
    for pos, (s, label) in enumerate(rec.events):
        start = s + offset
        if start < 0 or start + window_samples > n:
            raise DataError(
                f"event {pos} at sample {s}: window [{start}, {start + window_samples}) "
                f"does not fit in {n} samples"
            )
        try:
            labels.append(ClassLabel(label))
        except ValueError as exc:
            raise DataError(f"event {pos}: unknown class label {label!r}") from exc
        trials.append(rec.data[:, start:start + window_samples])
    if trials:
        stacked = np.stack(trials).astype(np.float64)
    else:
        stacked = np.zeros((0, rec.n_channels, window_samples))
    return EpochSet(epochs=stacked, labels=labels, subject=subject, sampling_rate=rec.sampling_rate)


def welch_psd(data, fs=250.0, segment=None, overlap=0.5):
    """PsdEstimate of a (channels, samples) array or a Recording."""
    if isinstance(data, Recording):
        return welch_psd_data(data.data, data.sampling_rate, segment, overlap)
    return welch_psd_data(data, fs, segment, overlap)


# ---------------------------------------------------------------------------
# file format


def write_recording(rec, path):
    header = {
        "kind": "recording",
        "version": RECORDING_VERSION,
        "sampling_rate": rec.sampling_rate,
        "channel_names": list(rec.channel_names),
        "events": [{"sample": int(s), "label": str(label)} for s, label in rec.events],
        "n_samples": rec.n_samples,
    }
    write_container(path, header, rec.data.reshape(-1))


def read_recording(path):
    header, payload = read_container(path, kind="recording", version=RECORDING_VERSION)
    names = header["channel_names"]
    n_samples = int(header["n_samples"])
    check_payload_size(path, payload, len(names) * n_samples)
    data = payload.reshape(len(names), n_samples).copy()
    events = [(int(e["sample"]), e["label"]) for e in header["events"]]
    return Recording(data=data, sampling_rate=float(header["sampling_rate"]), channel_names=list(names), events=events)
