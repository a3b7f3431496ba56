"""Class-wise Gaussian loss, stage penalties and class-center maintenance.

Embeddings ``r`` are ``(B, L)`` float arrays.  Single-label targets are an
integer vector of class ids; multi-label targets are a ``(B, C)`` 0/1 matrix.
Losses are means over the batch, so every returned gradient already carries
the ``1/B`` factor.
"""

from dataclasses import dataclass
import struct

import numpy as np

from ._io import Reader, atomic_write
from .errors import CenterUpdateError, ConfigError, DimensionError, FormatError, LabelRangeError

# Gaussian width per code length for single-label training.
SIGMA_SQ_BY_BITS = {12: 0.5, 16: 0.5, 24: 0.5, 32: 1.0, 48: 1.0, 64: 2.0}
MULTILABEL_SIGMA_SQ = 1.0


def default_sigma_sq(bits, multilabel=False):
    """Look up the tuned sigma^2 for ``bits``; nearest smaller tabulated length otherwise."""
    if multilabel:
        return MULTILABEL_SIGMA_SQ
    if bits in SIGMA_SQ_BY_BITS:
        return SIGMA_SQ_BY_BITS[bits]
    below = [b for b in SIGMA_SQ_BY_BITS if b <= bits]
    return SIGMA_SQ_BY_BITS[max(below)] if below else SIGMA_SQ_BY_BITS[12]


@dataclass
class LossConfig:
    code_length: int
    class_count: int
    sigma_sq: float = None
    alpha: float = 1.1
    eta1: float = 10.0
    eta2: float = 0.01
    multilabel: bool = False

    def __post_init__(self):
        if self.sigma_sq is None:
            self.sigma_sq = default_sigma_sq(self.code_length, self.multilabel)
        self.validate()

    def validate(self):
        if self.code_length <= 0:
            raise ConfigError(f"code length must be positive, got {self.code_length}")
        if self.class_count <= 0:
            raise ConfigError(f"class count must be positive, got {self.class_count}")
        if not self.sigma_sq > 0:
            raise ConfigError(f"sigma^2 must be positive, got {self.sigma_sq}")
        if not self.alpha >= 1:
            raise ConfigError(f"alpha must be >= 1, got {self.alpha}")
        if self.eta1 < 0 or self.eta2 < 0:
            raise ConfigError("eta1 and eta2 must be nonnegative")


@dataclass
class ClassCenters:
    centers: np.ndarray  # (C, L)
    mode: str = "continuous"  # or "binary"

    @property
    def class_count(self):
        return self.centers.shape[0]

    @property
    def code_length(self):
        return self.centers.shape[1]

    def copy(self):
        return ClassCenters(self.centers.copy(), self.mode)


def sign(x):
    """Elementwise sign with ``sign(0) = +1``."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


def _check_sigma(cfg):
    if not cfg.sigma_sq > 0:
        raise ConfigError(f"sigma^2 must be positive, got {cfg.sigma_sq}")


def _check_single_labels(labels, n, class_count):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionError(f"expected {n} class ids, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= class_count):
        bad = labels[(labels < 0) | (labels >= class_count)][0]
        raise LabelRangeError(f"label id {bad} outside [0, {class_count})")
    return labels.astype(np.intp)


def _check_multi_hot(labels, n, class_count):
    labels = np.asarray(labels)
    if labels.shape != (n, class_count):
        raise DimensionError(
            f"expected multi-hot shape {(n, class_count)}, got {labels.shape}"
        )
    if n and not np.all(labels.any(axis=1)):
        row = int(np.flatnonzero(~labels.any(axis=1))[0])
        raise LabelRangeError(f"multi-hot label row {row} has no set bit")
    return labels.astype(np.float64)


def _sq_dists(r, centers):
    # ||r - mu||^2 expanded directly; the difference form keeps it exact for tests
    diff = r[:, None, :] - centers[None, :, :]
    return np.einsum("bcl,bcl->bc", diff, diff)


def _log_softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    with np.errstate(under="ignore"):
        lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - lse


def _softmax_terms(r, centers, sigma_sq):
    logits = -_sq_dists(r, centers) / (2.0 * sigma_sq)
    logp = _log_softmax(logits)
    return logp, np.exp(logp)


def classwise_loss_grad(embeddings, labels, centers, cfg):
    """Mean negative log-likelihood of the class-wise Gaussian softmax.

    Logits are ``-||r - mu_i||^2 / (2 sigma^2)``; the true class is part of
    the normalizer.  Returns ``(loss, d loss / d embeddings)``.
    """
    _check_sigma(cfg)
    r = np.asarray(embeddings, dtype=np.float64)
    mu = _centers_array(centers)
    labels = _check_single_labels(labels, r.shape[0], mu.shape[0])
    b = r.shape[0]
    if b == 0:
        return 0.0, np.zeros_like(r)
    logp, p = _softmax_terms(r, mu, cfg.sigma_sq)
    rows = np.arange(b)
    loss = -logp[rows, labels].sum() / b
    # d/dr = (sum_i p_i mu_i - mu_y) / sigma^2
    grad = (p @ mu - mu[labels]) / (cfg.sigma_sq * b)
    return float(loss), grad


def center_gradients(embeddings, labels, centers, cfg):
    """Gradient of the mean class-wise loss with respect to every center."""
    _check_sigma(cfg)
    r = np.asarray(embeddings, dtype=np.float64)
    mu = _centers_array(centers)
    labels = _check_single_labels(labels, r.shape[0], mu.shape[0])
    b = r.shape[0]
    if b == 0:
        return np.zeros_like(mu)
    _, p = _softmax_terms(r, mu, cfg.sigma_sq)
    coef = p
    coef[np.arange(b), labels] -= 1.0
    # sum_n coef_ni (r_n - mu_i) / sigma^2
    grad = coef.T @ r - coef.sum(axis=0)[:, None] * mu
    return grad / (cfg.sigma_sq * b)


def cube_penalty_grad(embeddings, cfg):
    """Linear hinge keeping each coordinate inside ``[-alpha, alpha]``."""
    r = np.asarray(embeddings, dtype=np.float64)
    b = max(r.shape[0], 1)
    over = np.maximum(r - cfg.alpha, 0.0)
    under = np.maximum(-cfg.alpha - r, 0.0)
    penalty = cfg.eta1 * (over.sum() + under.sum()) / b
    grad = (cfg.eta1 / b) * ((r > cfg.alpha).astype(np.float64)
                             - (r < -cfg.alpha).astype(np.float64))
    return float(penalty), grad


def vertex_penalty_grad(embeddings, cfg):
    """Quantization penalty ``eta2 * ||sign(r) - r||^2``; sign is held constant."""
    r = np.asarray(embeddings, dtype=np.float64)
    b = max(r.shape[0], 1)
    resid = r - sign(r)
    penalty = cfg.eta2 * np.sum(resid * resid) / b
    return float(penalty), (2.0 * cfg.eta2 / b) * resid


def quantization_error(embeddings):
    """Mean over rows of ``||sign(r) - r||^2``."""
    r = np.asarray(embeddings, dtype=np.float64)
    if r.shape[0] == 0:
        return 0.0
    resid = r - sign(r)
    return float(np.sum(resid * resid) / r.shape[0])


def _centers_array(centers):
    mu = centers.centers if isinstance(centers, ClassCenters) else centers
    return np.asarray(mu, dtype=np.float64)


def update_centers(embeddings_full, labels, class_count, alpha):
    """Per-class mean embedding, clipped to ``[-alpha, alpha]``."""
    r = np.asarray(embeddings_full, dtype=np.float64)
    labels = _check_single_labels(labels, r.shape[0], class_count)
    counts = np.bincount(labels, minlength=class_count)
    _require_nonempty(counts)
    sums = np.zeros((class_count, r.shape[1]))
    np.add.at(sums, labels, r)
    return ClassCenters(np.clip(sums / counts[:, None], -alpha, alpha), "continuous")


def binarize_centers(embeddings_full, labels, class_count):
    """Binary centers by per-bit majority vote of sample signs; ties go to +1."""
    r = np.asarray(embeddings_full, dtype=np.float64)
    labels = _check_single_labels(labels, r.shape[0], class_count)
    _require_nonempty(np.bincount(labels, minlength=class_count))
    votes = np.zeros((class_count, r.shape[1]))
    np.add.at(votes, labels, sign(r))
    return ClassCenters(sign(votes), "binary")


def binarize_centers_multilabel(embeddings_full, labels, class_count):
    """Voting variant for multi-hot labels: a sample votes in each of its classes."""
    r = np.asarray(embeddings_full, dtype=np.float64)
    l = _check_multi_hot(labels, r.shape[0], class_count)
    _require_nonempty(l.sum(axis=0))
    return ClassCenters(sign(l.T @ sign(r)), "binary")


def _require_nonempty(counts):
    empty = np.flatnonzero(np.asarray(counts) == 0)
    if empty.size:
        raise CenterUpdateError(empty[0])


def semantic_center(label, centers):
    """Mean of the centers of every class set in a multi-hot ``label``."""
    l = np.asarray(label, dtype=np.float64)
    mu = _centers_array(centers)
    if l.shape != (mu.shape[0],):
        raise DimensionError(f"label length {l.shape} does not match {mu.shape[0]} classes")
    total = l.sum()
    if total <= 0:
        raise LabelRangeError("multi-hot label has no set bit")
    return (l @ mu) / total


def semantic_centers(labels, centers):
    """Row-wise :func:`semantic_center` for a ``(B, C)`` multi-hot matrix."""
    mu = _centers_array(centers)
    l = np.asarray(labels, dtype=np.float64)
    return (l @ mu) / l.sum(axis=1, keepdims=True)


def _multilabel_terms(r, l, mu, sigma_sq):
    mu_hat = semantic_centers(l, mu)
    pos = r - mu_hat
    logits = np.empty((r.shape[0], mu.shape[0] + 1))
    logits[:, 0] = -np.einsum("bl,bl->b", pos, pos) / (2.0 * sigma_sq)
    logits[:, 1:] = -_sq_dists(r, mu) / (2.0 * sigma_sq)
    # classes in the label set are not negatives
    logits[:, 1:][l > 0] = -np.inf
    logp = _log_softmax(logits)
    return mu_hat, logp, np.exp(logp)


def multilabel_loss_grad(embeddings, labels, centers, cfg):
    """Multi-label loss: the semantic center is the positive, absent classes the negatives.

    The semantic center is a batch constant for the embedding gradient.
    """
    _check_sigma(cfg)
    r = np.asarray(embeddings, dtype=np.float64)
    mu = _centers_array(centers)
    l = _check_multi_hot(labels, r.shape[0], mu.shape[0])
    b = r.shape[0]
    if b == 0:
        return 0.0, np.zeros_like(r)
    mu_hat, logp, p = _multilabel_terms(r, l, mu, cfg.sigma_sq)
    loss = -logp[:, 0].sum() / b
    pulled = p[:, :1] * mu_hat + p[:, 1:] @ mu
    grad = (pulled - mu_hat) / (cfg.sigma_sq * b)
    return float(loss), grad


def multilabel_center_gradients(embeddings, labels, centers, cfg):
    """Center gradient of the multi-label loss, including the path through the semantic center."""
    _check_sigma(cfg)
    r = np.asarray(embeddings, dtype=np.float64)
    mu = _centers_array(centers)
    l = _check_multi_hot(labels, r.shape[0], mu.shape[0])
    b = r.shape[0]
    if b == 0:
        return np.zeros_like(mu)
    mu_hat, _, p = _multilabel_terms(r, l, mu, cfg.sigma_sq)
    # negatives: p_i (r - mu_i); positive: (p_0 - 1)(r - mu_hat) spread by l_i / |l|
    neg = p[:, 1:]
    grad = neg.T @ r - neg.sum(axis=0)[:, None] * mu
    weights = l / l.sum(axis=1, keepdims=True)
    grad += weights.T @ ((p[:, :1] - 1.0) * (r - mu_hat))
    return grad / (cfg.sigma_sq * b)


def update_centers_multilabel(embeddings_full, labels, class_count, alpha):
    """Weighted class means: each sample contributes ``r / |l|`` to each of its classes."""
    r = np.asarray(embeddings_full, dtype=np.float64)
    l = _check_multi_hot(labels, r.shape[0], class_count)
    counts = l.sum(axis=0)
    _require_nonempty(counts)
    sums = l.T @ (r / l.sum(axis=1, keepdims=True))
    return ClassCenters(np.clip(sums / counts[:, None], -alpha, alpha), "continuous")


CENTERS_MAGIC = b"DCWC"
CENTERS_VERSION = 1
_CENTER_MODES = ("continuous", "binary")


def save_centers(path, centers):
    c, l = centers.centers.shape
    atomic_write(path, b"".join([
        CENTERS_MAGIC,
        struct.pack("<IIIB", CENTERS_VERSION, c, l, _CENTER_MODES.index(centers.mode)),
        np.ascontiguousarray(centers.centers, dtype="<f8").tobytes(),
    ]))


def load_centers(path):
    with open(path, "rb") as fh:
        r = Reader(fh.read(), str(path))
    r.expect_magic(CENTERS_MAGIC)
    r.expect_version({CENTERS_VERSION})
    c, l, mode = r.unpack("IIB")
    if mode >= len(_CENTER_MODES):
        raise FormatError(f"{path}: unknown center mode {mode}")
    mu = np.frombuffer(r.take(8 * c * l), dtype="<f8").reshape(c, l).astype(np.float64)
    r.finish()
    return ClassCenters(mu, _CENTER_MODES[mode])
