"""Two-stage alternating optimisation of network parameters and class centers.

Stage I minimises the class-wise loss plus the cube hinge; Stage II starts
from the Stage I network and swaps the hinge for the vertex (quantisation)
penalty.  Within a stage, centers are either refreshed from a full forward
pass every ``center_update_period`` iterations, or (``center_mode =
"gradient"``) treated as parameters and stepped alongside the network.
"""

from dataclasses import dataclass, field
import io
import math
from typing import NamedTuple

import numpy as np

from . import loss as L
from .codec import CodeSet, encode
from .errors import ConfigError, TrainingError
from .net import backward, embed, forward, init_net, sgd_step

CENTER_MODES = ("periodic", "gradient")
STAGE2_CENTERS = ("continuous", "binary")


@dataclass
class TrainConfig:
    loss: L.LossConfig
    lr: float = 0.001
    weight_decay: float = 0.0005
    batch_size: int = 64
    center_update_period: int = None  # None: one epoch
    stage1_epochs: int = 300
    stage2_epochs: int = 100
    center_mode: str = "periodic"
    stage2_centers: str = "continuous"
    hidden: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self):
        self.loss.validate()
        if not self.lr >= 0:
            raise ConfigError(f"lr must be nonnegative, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be nonnegative, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be positive, got {self.batch_size}")
        if self.center_update_period is not None and self.center_update_period < 1:
            raise ConfigError("center update period must be >= 1")
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ConfigError("epoch counts must be nonnegative")
        if self.center_mode not in CENTER_MODES:
            raise ConfigError(f"center mode must be one of {CENTER_MODES}")
        if self.stage2_centers not in STAGE2_CENTERS:
            raise ConfigError(f"stage2 centers must be one of {STAGE2_CENTERS}")
        if self.center_mode == "gradient" and self.stage2_centers == "binary":
            raise ConfigError("binary stage II centers cannot be trained by gradient")
        if any(h <= 0 for h in self.hidden):
            raise ConfigError(f"hidden sizes must be positive, got {self.hidden}")

    def layer_dims(self, input_dim):
        return [input_dim, *self.hidden, self.loss.code_length]


@dataclass
class TrainLog:
    iterations: list = field(default_factory=list)
    # per refresh: (iteration, stage, intra-class variance, inter-center distance)
    refreshes: list = field(default_factory=list)

    def add(self, iteration, stage, loss, penalty, quant_error):
        for name, v in (("loss", loss), ("penalty", penalty), ("quant_error", quant_error)):
            if not math.isfinite(v):
                raise TrainingError(f"non-finite {name} at iteration {iteration}, stage {stage}")
        if self.iterations and iteration <= self.iterations[-1][0]:
            raise TrainingError(f"iteration {iteration} logged out of order")
        self.iterations.append((iteration, stage, loss, penalty, quant_error))

    def column(self, name, stage=None):
        idx = ("iteration", "stage", "loss", "penalty", "quant_error").index(name)
        return np.array([r[idx] for r in self.iterations if stage is None or r[1] == stage])

    def objective(self, stage=None):
        """Logged loss plus penalty per iteration."""
        return self.column("loss", stage) + self.column("penalty", stage)

    def extend(self, other):
        self.iterations.extend(other.iterations)
        self.refreshes.extend(other.refreshes)

    def to_csv(self):
        buf = io.StringIO()
        buf.write("iteration,stage,loss,penalty,quant_error\n")
        for it, stage, loss, pen, qe in self.iterations:
            buf.write(f"{it},{stage},{loss!r},{pen!r},{qe!r}\n")
        return buf.getvalue()

    def refreshes_csv(self):
        buf = io.StringIO()
        buf.write("iteration,stage,intra_class_variance,inter_class_distance\n")
        for it, stage, var, dist in self.refreshes:
            buf.write(f"{it},{stage},{var!r},{dist!r}\n")
        return buf.getvalue()


def _membership(data):
    if data.multilabel:
        return data.labels.astype(np.float64)
    m = np.zeros((len(data), data.class_count))
    m[np.arange(len(data)), data.labels] = 1.0
    return m


def intra_class_variance(embeddings, data):
    """Mean over classes of the mean squared distance to the class mean."""
    m = _membership(data)
    counts = m.sum(axis=0)
    means = (m.T @ embeddings) / counts[:, None]
    sq = np.einsum("nl,nl->n", embeddings, embeddings)
    # E||r||^2 - ||E r||^2 per class
    per_class = (m.T @ sq) / counts - np.einsum("cl,cl->c", means, means)
    return float(np.mean(np.maximum(per_class, 0.0)))


def inter_class_distance(centers):
    """Mean Euclidean distance over distinct center pairs."""
    mu = centers.centers if isinstance(centers, L.ClassCenters) else np.asarray(centers)
    c = mu.shape[0]
    if c < 2:
        return 0.0
    diff = mu[:, None, :] - mu[None, :, :]
    d = np.sqrt(np.einsum("ijl,ijl->ij", diff, diff))
    return float(d[np.triu_indices(c, 1)].mean())


def compute_centers(net, data, cfg, binary=False):
    """Centers from a full forward pass over ``data``."""
    r = embed(net, data.features)
    return _centers_from(r, data, cfg, binary)


def _centers_from(r, data, cfg, binary):
    c, alpha = data.class_count, cfg.loss.alpha
    if data.multilabel:
        if binary:
            return L.binarize_centers_multilabel(r, data.labels, c)
        return L.update_centers_multilabel(r, data.labels, c, alpha)
    if binary:
        return L.binarize_centers(r, data.labels, c)
    return L.update_centers(r, data.labels, c, alpha)


def _loss_grad(r, labels, centers, cfg, multilabel):
    if multilabel:
        return L.multilabel_loss_grad(r, labels, centers, cfg.loss)
    return L.classwise_loss_grad(r, labels, centers, cfg.loss)


def _center_grad(r, labels, centers, cfg, multilabel):
    if multilabel:
        return L.multilabel_center_gradients(r, labels, centers, cfg.loss)
    return L.center_gradients(r, labels, centers, cfg.loss)


def _penalty(r, cfg, stage):
    if stage == 1:
        return L.cube_penalty_grad(r, cfg.loss)
    return L.vertex_penalty_grad(r, cfg.loss)


def _check_classes(data):
    if len(data) == 0:
        raise ConfigError("training set is empty")
    empty = np.flatnonzero(data.class_sizes() == 0)
    if empty.size:
        raise L.CenterUpdateError(empty[0])


def _run_stage(net, centers, data, cfg, stage, epochs, first_iteration=0):
    log = TrainLog()
    if epochs == 0:
        return net, centers, log
    n = len(data)
    bs = cfg.batch_size
    period = cfg.center_update_period or math.ceil(n / bs)
    binary = stage == 2 and cfg.stage2_centers == "binary"
    periodic = cfg.center_mode == "periodic"
    multilabel = data.multilabel
    rng = np.random.default_rng([cfg.seed, stage])
    it = 0
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            step = first_iteration + it
            if periodic and it % period == 0:
                r_full = embed(net, data.features)
                centers = _centers_from(r_full, data, cfg, binary)
                log.refreshes.append((step, stage, intra_class_variance(r_full, data),
                                      inter_class_distance(centers)))
            rows = perm[start:start + bs]
            x, labels = data.features[rows], data.labels[rows]
            r, cache = forward(net, x)
            loss, g = _loss_grad(r, labels, centers, cfg, multilabel)
            pen, g_pen = _penalty(r, cfg, stage)
            log.add(step, stage, loss, pen, L.quantization_error(r))
            if cfg.lr > 0:
                grads = backward(net, cache, g + g_pen)
                if not periodic:
                    g_mu = _center_grad(r, labels, centers, cfg, multilabel)
                    mu = np.clip(centers.centers - cfg.lr * g_mu, -cfg.loss.alpha, cfg.loss.alpha)
                    centers = L.ClassCenters(mu, "continuous")
                try:
                    net = sgd_step(net, grads, cfg.lr, cfg.weight_decay)
                except TrainingError as exc:
                    raise TrainingError(f"{exc} at iteration {step}, stage {stage}") from exc
            it += 1
    return net, centers, log


def train_stage1(net, data, cfg):
    """Stage I: class-wise loss plus cube hinge.  Returns ``(net, centers, log)``."""
    _check_classes(data)
    centers = compute_centers(net, data, cfg)
    return _run_stage(net, centers, data, cfg, 1, cfg.stage1_epochs)


def train_stage2(net, centers, data, cfg, first_iteration=0):
    """Stage II: class-wise loss plus vertex penalty, starting from Stage I outputs."""
    _check_classes(data)
    if cfg.stage2_epochs and cfg.stage2_centers == "binary":
        centers = compute_centers(net, data, cfg, binary=True)
    return _run_stage(net, centers, data, cfg, 2, cfg.stage2_epochs, first_iteration)


class TrainResult(NamedTuple):
    net: object
    centers: L.ClassCenters
    log: TrainLog
    codes: CodeSet


def train_full(data, cfg):
    """Initialise a network, run both stages and encode the training set."""
    _check_classes(data)
    if data.multilabel != cfg.loss.multilabel:
        raise ConfigError("loss config label mode does not match the dataset")
    if data.class_count != cfg.loss.class_count:
        raise ConfigError(
            f"loss config has {cfg.loss.class_count} classes, dataset {data.class_count}"
        )
    net = init_net(cfg.layer_dims(data.dim), cfg.seed)
    net, centers, log = train_stage1(net, data, cfg)
    next_it = log.iterations[-1][0] + 1 if log.iterations else 0
    net, centers, log2 = train_stage2(net, centers, data, cfg, next_it)
    log.extend(log2)
    return TrainResult(net, centers, log, encode(net, data.features))
