"""Contrastive pretraining and the identity-geometry fine-tuning loop.

Pretraining aligns beat-segment and report projections with the symmetric
contrastive objective over shuffled mini-batches. Fine-tuning freezes the
report branch and the contrastive heads, recomputes each class's medoid
center at the start of every epoch with the current encoder, and jointly
updates the encoder weights, prototypes, reciprocal points, and margins
under the weighted three-part objective. Both loops are bit-reproducible
for a fixed config seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .encoder import (
    EncoderConfig,
    ModelParams,
    build_model,
    encode_signal_batch,
    hash_reports,
    init_params,
)
from .errors import ConfigurationError, InputError, ParameterError, StateError
from .losses import (
    ClassGeometry,
    LossWeights,
    center_loss_grad,
    compute_medoid,
    contrastive_loss_grad,
    prototype_loss_grad,
    repulsion_loss_grad,
)

_OPTIMIZERS = ("adam", "sgd")

#: Parameter-name prefixes updated by fine-tuning (the embedding path only).
_SIGNAL_PREFIXES = ("stem.", "block", "embed.")


@dataclass(frozen=True)
class TrainConfig:
    """Knobs shared by both training stages.

    ``optimizer`` selects between an adaptive-moment update ("adam",
    beta1/beta2/eps) and momentum SGD ("sgd", momentum). Pretraining
    additionally requires batch_size >= 2 — the contrastive loss needs
    in-batch negatives.
    """

    batch_size: int = 32
    epochs: int = 20
    learning_rate: float = 1e-3
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ParameterError("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be positive")
        if self.optimizer not in _OPTIMIZERS:
            raise ParameterError(f"optimizer must be one of {_OPTIMIZERS}")


@dataclass
class EpochStats:
    epoch: int
    losses: dict[str, float]
    seconds: float


@dataclass
class TrainReport:
    """Line-oriented training log: per-epoch loss components and wall time."""

    stage: str
    epochs: list[EpochStats] = field(default_factory=list)
    final_checksum: str = ""

    def to_lines(self) -> list[str]:
        lines = [f"stage={self.stage}"]
        for es in self.epochs:
            parts = " ".join(f"{k}={v:.6f}" for k, v in es.losses.items())
            lines.append(f"epoch {es.epoch} {parts} seconds={es.seconds:.3f}")
        lines.append(f"checksum={self.final_checksum}")
        return lines


# ----------------------------------------------------------------------
# optimizers

class _Adam:
    def __init__(self, lr, beta1, beta2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for key in sorted(grads):
            g = grads[key]
            m = self.m.setdefault(key, np.zeros_like(g))
            v = self.v.setdefault(key, np.zeros_like(g))
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            tensors[key] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _Sgd:
    def __init__(self, lr, momentum):
        self.lr, self.momentum = lr, momentum
        self.vel: dict[str, np.ndarray] = {}

    def step(self, tensors, grads):
        for key in sorted(grads):
            vel = self.vel.setdefault(key, np.zeros_like(grads[key]))
            vel *= self.momentum
            vel += grads[key]
            tensors[key] -= self.lr * vel


def _make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return _Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    return _Sgd(cfg.learning_rate, cfg.momentum)


def _check_epoch_losses(losses: dict[str, float], stage: str):
    if not all(np.isfinite(v) for v in losses.values()):
        raise StateError(f"{stage} diverged: non-finite epoch loss {losses}")


# ----------------------------------------------------------------------
# pretraining

def pretrain(pairs, cfg: TrainConfig,
             encoder_config: EncoderConfig | None = None):
    """Contrastively align (beat segment, report text) pairs.

    Initializes fresh encoder parameters from cfg.seed and minimizes the
    symmetric contrastive loss over shuffled mini-batches; a trailing batch
    of size 1 is dropped (no negatives). Returns (ModelParams, TrainReport).
    """
    if cfg.batch_size < 2:
        raise ConfigurationError("pretraining needs batch_size >= 2 for negatives")
    pairs = list(pairs)
    if len(pairs) < 2:
        raise InputError("pretraining needs at least 2 (segment, report) pairs")
    windows = np.stack([seg.window for seg, _ in pairs])
    hashed = hash_reports([text for _, text in pairs])

    mp = init_params(encoder_config or EncoderConfig(), windows.shape[1], cfg.seed)
    model = build_model(mp)
    opt = _make_optimizer(cfg)
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport(stage="pretrain")

    n = len(pairs)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            zs = model.forward_signal(mp, windows[idx], train=True, project=True)
            zr = model.forward_report(mp, hashed[idx], train=True, project=True)
            loss, dzs, dzr = contrastive_loss_grad(zs, zr, cfg.weights.tau)
            grads = model.backward_signal(mp, dzs)
            grads.update(model.backward_report(mp, dzr))
            opt.step(mp.params, grads)
            total += loss * idx.size
            seen += idx.size
        losses = {"contrastive": total / seen}
        _check_epoch_losses(losses, "pretrain")
        report.epochs.append(EpochStats(epoch, losses, time.perf_counter() - t0))
    report.final_checksum = mp.checksum()
    return mp, report


# ----------------------------------------------------------------------
# fine-tuning

def _group_by_class(labeled):
    """-> (windows (n, L), class ids sorted, per-sample class index)."""
    labeled = list(labeled)
    if not labeled:
        raise InputError("no labeled segments")
    windows = np.stack([seg.window for seg, _ in labeled])
    ids = np.array([int(sid) for _, sid in labeled])
    class_ids = sorted(set(ids.tolist()))
    counts = {cid: int((ids == cid).sum()) for cid in class_ids}
    thin = [cid for cid, c in counts.items() if c < 2]
    if thin:
        raise ConfigurationError(
            f"every identity needs >= 2 segments; got fewer for {thin}"
        )
    index_of = {cid: k for k, cid in enumerate(class_ids)}
    return windows, class_ids, np.array([index_of[i] for i in ids])


def _class_medoids(mp: ModelParams, windows, class_idx, n_classes) -> np.ndarray:
    emb = encode_signal_batch(mp, windows)
    return np.stack([
        compute_medoid(emb[class_idx == k]) for k in range(n_classes)
    ])


def recompute_centers(params: ModelParams, labeled, geometry=None):
    """Set every class center to the medoid of its current embeddings.

    Prototypes, reciprocal points, and margins are carried over unchanged
    when an existing geometry mapping is given; otherwise they start at the
    medoid, the zero vector, and 1.0 respectively. Pure in ``params``.
    """
    windows, class_ids, class_idx = _group_by_class(labeled)
    medoids = _class_medoids(params, windows, class_idx, len(class_ids))
    out = {}
    for k, cid in enumerate(class_ids):
        if geometry is not None and cid in geometry:
            old = geometry[cid]
            out[cid] = ClassGeometry(
                center=medoids[k],
                prototype=old.prototype.copy(),
                reciprocal=old.reciprocal.copy(),
                margin=old.margin,
            )
        else:
            out[cid] = ClassGeometry(
                center=medoids[k],
                prototype=medoids[k].copy(),
                reciprocal=np.zeros_like(medoids[k]),
                margin=1.0,
            )
    return out


def finetune(labeled, params: ModelParams, cfg: TrainConfig):
    """Train encoder weights and per-identity geometry on labeled segments.

    Implements the joint loop: at the start of each epoch, class centers are
    reset to the medoids of the current embeddings; each mini-batch then
    applies the weighted self-constraint, prototype, and repulsion losses and
    updates the signal-branch weights together with prototypes, reciprocal
    points, and margins. Margins are clamped to >= 0 after every step. Loss
    terms with zero weight are skipped outright, leaving their geometry
    untouched. Returns (ModelParams, {class id: ClassGeometry}, TrainReport).
    """
    windows, class_ids, class_idx = _group_by_class(labeled)
    n, n_classes = windows.shape[0], len(class_ids)
    w = cfg.weights

    mp = params.copy()
    model = build_model(mp)
    rng = np.random.default_rng(cfg.seed)

    centers = _class_medoids(mp, windows, class_idx, n_classes)
    protos = centers.copy()
    recips = rng.normal(0.0, 0.1, size=centers.shape)
    margins = np.ones(n_classes)

    trainable = [k for k in mp.params if k.startswith(_SIGNAL_PREFIXES)]
    opt = _make_optimizer(cfg)
    report = TrainReport(stage="finetune")

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        centers = _class_medoids(mp, windows, class_idx, n_classes)
        perm = rng.permutation(n)
        sums = {"self": 0.0, "proto": 0.0, "repulsion": 0.0, "total": 0.0}
        seen = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            yb = class_idx[idx]
            feats = model.forward_signal(mp, windows[idx], train=True)
            d_feats = np.zeros_like(feats)
            geom_grads: dict[str, np.ndarray] = {}
            l_self = l_proto = l_rep = 0.0
            if w.alpha > 0:
                l_self, dfc = center_loss_grad(feats, centers[yb])
                d_feats += w.alpha * dfc
            if w.beta > 0:
                l_proto, dfp, dp = prototype_loss_grad(feats, yb, protos)
                d_feats += w.beta * dfp
                geom_grads["geom.protos"] = w.beta * dp
            if w.gamma > 0:
                l_rep, dfr, dor, drr = repulsion_loss_grad(
                    feats, recips[yb], margins[yb]
                )
                d_feats += w.gamma * dfr
                go = np.zeros_like(recips)
                gr = np.zeros_like(margins)
                np.add.at(go, yb, w.gamma * dor)
                np.add.at(gr, yb, w.gamma * drr)
                geom_grads["geom.recips"] = go
                geom_grads["geom.margins"] = gr
            grads = model.backward_signal(mp, d_feats)
            tensors = {k: mp.params[k] for k in trainable}
            tensors.update({"geom.protos": protos, "geom.recips": recips,
                            "geom.margins": margins})
            grads.update(geom_grads)
            opt.step(tensors, grads)
            np.maximum(margins, 0.0, out=margins)
            batch_total = w.alpha * l_self + w.beta * l_proto + w.gamma * l_rep
            sums["self"] += l_self * idx.size
            sums["proto"] += l_proto * idx.size
            sums["repulsion"] += l_rep * idx.size
            sums["total"] += batch_total * idx.size
            seen += idx.size
        losses = {k: v / seen for k, v in sums.items()}
        _check_epoch_losses(losses, "finetune")
        report.epochs.append(EpochStats(epoch, losses, time.perf_counter() - t0))

    # leave centers consistent with the final weights
    centers = _class_medoids(mp, windows, class_idx, n_classes)
    geometry = {
        cid: ClassGeometry(center=centers[k], prototype=protos[k],
                           reciprocal=recips[k], margin=float(margins[k]))
        for k, cid in enumerate(class_ids)
    }
    report.final_checksum = mp.checksum()
    return mp, geometry, report
