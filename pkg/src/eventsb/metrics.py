"""Distribution metrics on day/night-trained histogram features.

Generic image-domain feature metrics transfer poorly to event data, so
the feature extractor here is a small classifier trained specifically to
separate synthetic day from night histograms. A metric value is only
meaningful relative to the extractor that produced it; every report
therefore embeds a fingerprint (data hash, architecture, validation
accuracy, seed), and extractors below 80% validation accuracy are
refused outright.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import CertificationError, ConfigError
from .networks import FeatureExtractor2d, FeatureExtractor3d, extract_features
from .training import normalize_counts

CERTIFICATION_THRESHOLD = 0.8


@dataclass(frozen=True)
class ExtractorFingerprint:
    data_hash: str
    arch_id: str
    validation_accuracy: float
    seed: int

    @property
    def digest(self) -> str:
        key = f"{self.data_hash}|{self.arch_id}|{self.validation_accuracy:.6f}|{self.seed}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass
class MetricReport:
    """Metric values plus the extractor identity they were computed under."""

    fingerprint: ExtractorFingerprint
    event_fid: float | None = None
    event_fvd: float | None = None
    kid: float | None = None
    n_a: int = 0
    n_b: int = 0

    def assert_comparable(self, other: "MetricReport") -> None:
        if self.fingerprint.digest != other.fingerprint.digest:
            raise CertificationError(
                "reports were computed under different extractor fingerprints "
                f"({self.fingerprint.digest} vs {other.fingerprint.digest}); refusing to compare"
            )

    def to_text(self) -> str:
        lines = [
            f"fingerprint {self.fingerprint.digest}",
            f"arch {self.fingerprint.arch_id}",
            f"validation_accuracy {self.fingerprint.validation_accuracy!r}",
            f"seed {self.fingerprint.seed}",
            f"n_a {self.n_a}",
            f"n_b {self.n_b}",
        ]
        for name in ("event_fid", "event_fvd", "kid"):
            value = getattr(self, name)
            if value is not None:
                lines.append(f"{name} {value!r}")
        return "\n".join(lines) + "\n"


def _dataset_hash(day_histograms, night_histograms) -> str:
    h = hashlib.sha256()
    for group in (day_histograms, night_histograms):
        for hist in group:
            h.update(np.ascontiguousarray(hist.data).tobytes())
    return h.hexdigest()[:16]


def train_extractor(
    day_histograms,
    night_histograms,
    arch: str = "fid",
    seed: int = 0,
    epochs: int = 16,
    batch_size: int = 16,
    norm_cap: float = 10.0,
):
    """Fit a day/night classifier and certify it on a held-out 20% split.

    Returns (extractor, fingerprint); the fingerprint is also attached to
    the extractor. Refuses certification (CertificationError) if the
    validation accuracy ends up below 0.8, e.g. when the two classes are
    indistinguishable.
    """
    if len(day_histograms) < 100 or len(night_histograms) < 100:
        raise ConfigError(
            "need at least 100 histograms per class, got "
            f"{len(day_histograms)} day / {len(night_histograms)} night"
        )
    if arch not in ("fid", "fvd"):
        raise ConfigError(f"arch must be 'fid' or 'fvd', got {arch!r}")
    bins = day_histograms[0].bins
    for h in day_histograms + night_histograms:
        if h.bins != bins:
            raise ConfigError("all histograms must share one bin count")

    torch.manual_seed(seed)
    if arch == "fid":
        model = FeatureExtractor2d(2 * bins, norm_cap=norm_cap)
    else:
        model = FeatureExtractor3d(bins, norm_cap=norm_cap)

    x = torch.from_numpy(
        np.stack(
            [normalize_counts(h.data, norm_cap) for h in day_histograms]
            + [normalize_counts(h.data, norm_cap) for h in night_histograms]
        )
    )
    y = torch.cat(
        [
            torch.zeros(len(day_histograms), dtype=torch.int64),
            torch.ones(len(night_histograms), dtype=torch.int64),
        ]
    )
    order = torch.randperm(len(x), generator=torch.Generator().manual_seed(seed))
    x, y = x[order], y[order]
    n_train = int(0.8 * len(x))
    x_train, y_train = x[:n_train], y[:n_train]
    x_val, y_val = x[n_train:], y[n_train:]

    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    shuffle_rng = torch.Generator().manual_seed(seed + 1)
    model.train()
    for _ in range(epochs):
        perm = torch.randperm(n_train, generator=shuffle_rng)
        for start in range(0, n_train, batch_size):
            idx = perm[start : start + batch_size]
            xb = x_train[idx]
            # Random flips keep the classifier on density/polarity cues
            # instead of memorizing layouts of the small training set.
            flips = torch.randint(0, 4, (len(idx),), generator=shuffle_rng)
            xb = torch.stack(
                [
                    xi.flip(-1) if f == 1 else xi.flip(-2) if f == 2
                    else xi.flip(-1, -2) if f == 3 else xi
                    for xi, f in zip(xb, flips)
                ]
            )
            logits = model(xb)
            loss = F.cross_entropy(logits, y_train[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()

    model.eval()
    with torch.no_grad():
        accuracy = float((model(x_val).argmax(dim=1) == y_val).float().mean())
    if accuracy < CERTIFICATION_THRESHOLD:
        raise CertificationError(
            f"validation accuracy {accuracy:.3f} below {CERTIFICATION_THRESHOLD}; "
            "the metric would be uninformative, refusing to certify"
        )
    fingerprint = ExtractorFingerprint(
        data_hash=_dataset_hash(day_histograms, night_histograms),
        arch_id=model.arch_id,
        validation_accuracy=accuracy,
        seed=seed,
    )
    model.fingerprint = fingerprint
    return model, fingerprint


def frechet_distance(mu1, cov1, mu2, cov2) -> float:
    """||mu1-mu2||^2 + Tr(C1 + C2 - 2 sqrt(C1 C2)).

    The matrix square root is taken through symmetric eigendecompositions
    with negative eigenvalues clipped at zero, which keeps small-sample
    covariance noise from producing complex values.
    """
    mu1 = np.asarray(mu1, dtype=np.float64).ravel()
    mu2 = np.asarray(mu2, dtype=np.float64).ravel()
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=np.float64))
    cov2 = np.atleast_2d(np.asarray(cov2, dtype=np.float64))
    for name, cov in (("cov1", cov1), ("cov2", cov2)):
        if np.abs(cov - cov.T).max() > 1e-8:
            raise ValueError(f"{name} is not symmetric")

    def _sym_sqrt(mat):
        vals, vecs = np.linalg.eigh(mat)
        vals = np.clip(vals, 0.0, None)
        return (vecs * np.sqrt(vals)) @ vecs.T

    root1 = _sym_sqrt(cov1)
    inner = root1 @ cov2 @ root1
    inner = (inner + inner.T) / 2.0
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    trace_sqrt = float(np.sqrt(vals).sum())
    value = float(((mu1 - mu2) ** 2).sum() + np.trace(cov1) + np.trace(cov2) - 2.0 * trace_sqrt)
    return max(value, 0.0)


def _feature_matrix(extractor, histograms) -> np.ndarray:
    feats = [extract_features(extractor, h).numpy() for h in histograms]
    return np.stack(feats).astype(np.float64)


def _check_certified(extractor) -> None:
    fp = getattr(extractor, "fingerprint", None)
    if fp is None:
        raise CertificationError("extractor has no fingerprint; train_extractor it first")
    if fp.validation_accuracy < CERTIFICATION_THRESHOLD:
        raise CertificationError(
            f"extractor accuracy {fp.validation_accuracy:.3f} below certification threshold"
        )


def _moments(features: np.ndarray):
    if features.shape[0] < features.shape[1]:
        warnings.warn(
            f"only {features.shape[0]} samples for {features.shape[1]}-dim features; "
            "covariance estimates will be noisy",
            stacklevel=3,
        )
    mu = features.mean(axis=0)
    cov = np.cov(features, rowvar=False)
    return mu, np.atleast_2d(cov)


def _frechet_between(extractor, set_a, set_b) -> float:
    _check_certified(extractor)
    if len(set_a) < 2 or len(set_b) < 2:
        raise ConfigError("need at least 2 samples per set")
    fa = _feature_matrix(extractor, set_a)
    fb = _feature_matrix(extractor, set_b)
    mu_a, cov_a = _moments(fa)
    mu_b, cov_b = _moments(fb)
    return frechet_distance(mu_a, cov_a, mu_b, cov_b)


def event_fid(extractor, set_a, set_b) -> float:
    """Frechet distance between feature moments under a 2-D extractor."""
    if extractor.arch_id != FeatureExtractor2d.arch_id:
        raise ConfigError("event_fid expects the 2-D (fid) extractor")
    return _frechet_between(extractor, set_a, set_b)


def event_fvd(extractor, set_a, set_b) -> float:
    """Frechet distance under the spatio-temporal (3-D) extractor."""
    if extractor.arch_id != FeatureExtractor3d.arch_id:
        raise ConfigError("event_fvd expects the 3-D (fvd) extractor")
    return _frechet_between(extractor, set_a, set_b)


def polynomial_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def kid(extractor, set_a, set_b) -> float:
    """Unbiased squared MMD with a cubic polynomial kernel, times 100."""
    _check_certified(extractor)
    if len(set_a) < 2 or len(set_b) < 2:
        raise ConfigError("need at least 2 samples per set")
    fa = _feature_matrix(extractor, set_a)
    fb = _feature_matrix(extractor, set_b)
    m, n = fa.shape[0], fb.shape[0]
    k_aa = polynomial_kernel(fa, fa)
    k_bb = polynomial_kernel(fb, fb)
    k_ab = polynomial_kernel(fa, fb)
    sum_aa = (k_aa.sum() - np.trace(k_aa)) / (m * (m - 1))
    sum_bb = (k_bb.sum() - np.trace(k_bb)) / (n * (n - 1))
    value = sum_aa + sum_bb - 2.0 * k_ab.mean()
    return float(value) * 100.0


def metric_report(
    set_a,
    set_b,
    fid_extractor=None,
    fvd_extractor=None,
    with_kid: bool = True,
) -> MetricReport:
    """Bundle the requested metrics between two sets into one report."""
    if fid_extractor is None and fvd_extractor is None:
        raise ConfigError("need at least one extractor")
    anchor = fid_extractor if fid_extractor is not None else fvd_extractor
    report = MetricReport(fingerprint=anchor.fingerprint, n_a=len(set_a), n_b=len(set_b))
    if fid_extractor is not None:
        report.event_fid = event_fid(fid_extractor, set_a, set_b)
        if with_kid:
            report.kid = kid(fid_extractor, set_a, set_b)
    if fvd_extractor is not None:
        report.event_fvd = event_fvd(fvd_extractor, set_a, set_b)
    return report
