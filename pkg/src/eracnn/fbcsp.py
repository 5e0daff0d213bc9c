"""Filter-bank common spatial patterns with shrinkage-regularized LDA.

CSP filters come from the whitening construction: eigendecompose the
composite covariance, whiten, then eigendecompose the whitened class-A
covariance. Each filter w therefore satisfies w' Ca w + w' Cb w = 1.
Features are per-band log-variances of the spatially filtered trials.
Multi-class problems use one-vs-rest CSP per class with a single
multi-class RLDA on the concatenated features.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DataError, NumericError
from .fileio import check_payload_size, read_container, write_container
from .sigproc import bandpass_data

FBCSP_VERSION = 1

DEFAULT_BANK = tuple((lo, lo + 4) for lo in range(4, 40, 4))  # nine 4 Hz bands, 4-40 Hz


@dataclass
class CspFilters:
    filters: np.ndarray  # (channels, 2*n_pairs) columns sorted by discriminative eigenvalue
    eigenvalues: np.ndarray  # (2*n_pairs,) of the whitened class-A covariance
    band: tuple = None


def _trial_covariances(epochs):
    x = epochs - epochs.mean(axis=-1, keepdims=True)
    covs = np.matmul(x, x.transpose(0, 2, 1)) / (x.shape[-1] - 1)
    traces = np.trace(covs, axis1=1, axis2=2)
    if np.any(traces <= 0):
        raise DataError("trial with zero variance cannot be used for spatial filtering")
    return covs / traces[:, None, None]


def class_covariance(epochs, shrink=1e-6):
    """Mean trace-normalized trial covariance plus diagonal shrinkage."""
    if epochs.shape[0] < 2:
        raise DataError(f"need at least 2 trials per class, got {epochs.shape[0]}")
    cov = _trial_covariances(epochs).mean(axis=0)
    return cov + shrink * np.eye(cov.shape[0])


def csp_fit(epochs_a, epochs_b, n_pairs=2, shrink=1e-6, band=None):
    """Spatial filters separating two trial sets by variance ratio.

    Returns the top and bottom ``n_pairs`` generalized eigenvectors of
    (Ca, Ca + Cb), eigenvalues descending, sign fixed so each filter's
    largest-magnitude loading is positive.
    """
    ca = class_covariance(epochs_a, shrink)
    cb = class_covariance(epochs_b, shrink)
    comp = ca + cb
    evals, u = np.linalg.eigh(comp)
    if evals.min() <= 1e-12 * evals.max():
        raise NumericError("composite covariance is rank deficient after shrinkage")
    whiten = u / np.sqrt(evals)  # columns scaled: whiten.T @ comp @ whiten = I
    s = whiten.T @ ca @ whiten
    lam, v = np.linalg.eigh((s + s.T) / 2.0)
    order = np.argsort(-lam, kind="stable")
    lam, v = lam[order], v[:, order]
    w = whiten @ v  # generalized eigenvectors, w' comp w = I
    keep = list(range(n_pairs)) + list(range(w.shape[1] - n_pairs, w.shape[1]))
    w = w[:, keep]
    lam = lam[keep]
    signs = np.sign(w[np.abs(w).argmax(axis=0), np.arange(w.shape[1])])
    signs[signs == 0] = 1.0
    return CspFilters(filters=w * signs, eigenvalues=lam, band=band)


def log_variance(epochs, filters):
    """Per-trial log variance of each spatially filtered signal."""
    z = np.matmul(filters.T[None, :, :], epochs)  # (n, 2*pairs, samples)
    var = z.var(axis=-1, ddof=1)
    return np.log(np.maximum(var, 1e-300))


def fbcsp_fit(epochs, is_target, fs, bank=DEFAULT_BANK, n_pairs=2):
    """One CspFilters per band for a binary (target vs rest) split."""
    out = []
    for band in bank:
        filtered = bandpass_data(epochs, fs, band[0], band[1])
        out.append(csp_fit(filtered[is_target], filtered[~is_target], n_pairs=n_pairs, band=tuple(band)))
    return out


def fbcsp_features(epochs, fs, filters_per_band):
    """(n, bands * 2*n_pairs) log-variance features; filters must be fitted."""
    if not filters_per_band:
        raise DataError("no fitted spatial filters")
    feats = []
    for flt in filters_per_band:
        if flt.band is None:
            raise DataError("spatial filters carry no band; fit them through fbcsp_fit")
        filtered = bandpass_data(epochs, fs, flt.band[0], flt.band[1])
        feats.append(log_variance(filtered, flt.filters))
    return np.concatenate(feats, axis=1)


# ---------------------------------------------------------------------------
# regularized LDA


@dataclass
class RldaModel:
    class_order: list
    means: np.ndarray  # (K, d)
    cov_inv: np.ndarray  # inverse of the shrunken pooled covariance
    priors: np.ndarray  # (K,)
    lam: float


def ledoit_wolf_shrinkage(x_centered):
    """Analytic shrinkage intensity toward (trace/dim) * identity, in [0, 1]."""
    n, d = x_centered.shape
    s = x_centered.T @ x_centered / n
    mu = np.trace(s) / d
    delta = float(np.sum((s - mu * np.eye(d)) ** 2))
    if delta <= 0:
        return 0.0
    norms = np.einsum("ij,ij->i", x_centered, x_centered)
    beta = (np.sum(norms ** 2) - n * np.sum(s * s)) / n ** 2
    beta = min(max(beta, 0.0), delta)
    return float(beta / delta)


def rlda_fit(features, labels, lam="auto"):
    """Multi-class LDA with shrunken pooled covariance.

    Shrinkage target is (trace/dim) * identity; lam="auto" uses the
    analytic Ledoit-Wolf estimate on the class-centered features.
    """
    labels = list(labels)
    class_order = sorted(set(labels), key=lambda c: getattr(c, "value", c))
    if len(class_order) < 2:
        raise DataError("rlda_fit needs at least 2 classes")
    x = np.asarray(features, dtype=np.float64)
    n, d = x.shape
    means = np.stack([x[[l == c for l in labels]].mean(axis=0) for c in class_order])
    centered = x.copy()
    for c, m in zip(class_order, means):
        centered[[l == c for l in labels]] -= m
    if lam == "auto":
        lam = ledoit_wolf_shrinkage(centered)
    lam = float(min(max(lam, 0.0), 1.0))
    pooled = centered.T @ centered / max(n - len(class_order), 1)
    target = (np.trace(pooled) / d) * np.eye(d)
    shrunk = (1.0 - lam) * pooled + lam * target
    try:
        cov_inv = linalg.inv(shrunk)
    except linalg.LinAlgError as exc:
        raise NumericError(f"shrunken covariance is singular (lam={lam})") from exc
    priors = np.array([sum(l == c for l in labels) / n for c in class_order])
    return RldaModel(class_order=class_order, means=means, cov_inv=cov_inv, priors=priors, lam=lam)


def rlda_scores(model, features):
    """Linear discriminant scores (n, K), higher is more likely."""
    x = np.asarray(features, dtype=np.float64)
    a = model.means @ model.cov_inv  # (K, d)
    const = -0.5 * np.einsum("kd,kd->k", a, model.means) + np.log(model.priors)
    return x @ a.T + const


def rlda_predict(model, features):
    scores = rlda_scores(model, features)
    return [model.class_order[int(i)] for i in np.argmax(scores, axis=1)]


# ---------------------------------------------------------------------------
# end-to-end classifier


class FbcspRlda:
    """One-vs-rest FBCSP feature extraction followed by multi-class RLDA."""

    kind = "fbcsp"

    def __init__(self, bank=DEFAULT_BANK, n_pairs=2, lam="auto"):
        self.bank = tuple(tuple(b) for b in bank)
        self.n_pairs = n_pairs
        self.lam = lam
        self.splits = None  # [(class, filters_per_band)], binary keeps a single split
        self.rlda = None
        self.fs = None

    def fit(self, epochs, labels, fs):
        self.fs = float(fs)
        classes = sorted(set(labels), key=lambda c: getattr(c, "value", c))
        if len(classes) < 2:
            raise DataError("need at least 2 classes")
        mask = {c: np.array([l == c for l in labels]) for c in classes}
        if len(classes) == 2:
            self.splits = [(classes[0], fbcsp_fit(epochs, mask[classes[0]], self.fs, self.bank, self.n_pairs))]
        else:
            self.splits = [
                (c, fbcsp_fit(epochs, mask[c], self.fs, self.bank, self.n_pairs)) for c in classes
            ]
        feats = self._features(epochs)
        self.rlda = rlda_fit(feats, list(labels), lam=self.lam)
        return self

    def _features(self, epochs):
        return np.concatenate([fbcsp_features(epochs, self.fs, flt) for _, flt in self.splits], axis=1)

    def predict(self, epochs):
        if self.rlda is None:
            raise DataError("classifier is not fitted")
        return rlda_predict(self.rlda, self._features(epochs))

    # -- persistence (same manifest + payload scheme as network checkpoints)

    def save(self, path):
        arrays = []
        split_meta = []
        for cls, per_band in self.splits:
            bands = []
            for flt in per_band:
                arrays.append(flt.filters.reshape(-1))
                arrays.append(flt.eigenvalues)
                bands.append({"band": list(flt.band), "shape": list(flt.filters.shape)})
            split_meta.append({"class": getattr(cls, "value", cls), "bands": bands})
        for arr in (self.rlda.means, self.rlda.cov_inv, self.rlda.priors):
            arrays.append(np.asarray(arr).reshape(-1))
        header = {
            "kind": "fbcsp",
            "version": FBCSP_VERSION,
            "bank": [list(b) for b in self.bank],
            "n_pairs": self.n_pairs,
            "fs": self.fs,
            "lam": self.rlda.lam,
            "splits": split_meta,
            "classes": [getattr(c, "value", c) for c in self.rlda.class_order],
            "feature_dim": int(self.rlda.means.shape[1]),
        }
        write_container(path, header, np.concatenate(arrays))

    @classmethod
    def load(cls, path):
        from .data import ClassLabel

        header, payload = read_container(path, kind="fbcsp", version=FBCSP_VERSION)
        obj = cls(bank=[tuple(b) for b in header["bank"]], n_pairs=int(header["n_pairs"]), lam=header["lam"])
        obj.fs = float(header["fs"])
        k = len(header["classes"])
        d = int(header["feature_dim"])
        expected = sum(
            int(np.prod(b["shape"])) + b["shape"][1] for s in header["splits"] for b in s["bands"]
        ) + k * d + d * d + k
        check_payload_size(path, payload, expected)
        offset = 0

        def take(shape):
            nonlocal offset
            size = int(np.prod(shape))
            out = payload[offset:offset + size].reshape(shape).copy()
            offset += size
            return out

        def revive(name):
            try:
                return ClassLabel(name)
            except ValueError:
                return name

        obj.splits = []
        for s in header["splits"]:
            per_band = []
            for b in s["bands"]:
                filters = take(tuple(b["shape"]))
                eigenvalues = take((b["shape"][1],))
                per_band.append(CspFilters(filters=filters, eigenvalues=eigenvalues, band=tuple(b["band"])))
            obj.splits.append((revive(s["class"]), per_band))
        means = take((k, d))
        cov_inv = take((d, d))
        priors = take((k,))
        obj.rlda = RldaModel(
            class_order=[revive(c) for c in header["classes"]],
            means=means,
            cov_inv=cov_inv,
            priors=priors,
            lam=float(header["lam"]),
        )
        return obj
