"""Optimization engine: SGD with momentum, stepwise LR decay, and the three
training procedures (teachers, adaptor, student).

Teachers train under the angular-margin loss and keep the epoch checkpoint
with the best verification accuracy on their assigned group's validation
pairs (ties go to the earliest epoch). Adaptors train on concatenated
frozen-teacher embeddings with their own disposable classification header
and keep the epoch with the lowest mean training loss. Students mimic the
fused target space (optionally plus classification) and keep the final
epoch. All shuffling, margins, and dropout draw from generators derived
from the configured seeds, so a full run is bit-reproducible.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import losses, models
from .autodiff import Tape
from .data import GroupTag, PairList, SampleSet
from .errors import ConfigError, ContractError, DivergenceError
from .evaluation import verification_accuracy
from .losses import EafConfig, StudentLossConfig
from .models import AdaptorModel, BackboneConfig, StudentModel, TeacherModel

DIVERGENCE_LIMIT = 3   # consecutive non-finite losses before aborting


@dataclass
class OptimConfig:
    lr0: float
    epochs: int
    decay_epochs: tuple[int, ...]
    decay_factor: float = 10.0
    momentum: float = 0.9
    batch_size: int = 128
    seed: int = 0

    def validate(self) -> None:
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if any(b <= a for a, b in zip(self.decay_epochs, self.decay_epochs[1:])):
            raise ConfigError("decay_epochs must be strictly increasing")
        if any(d < 1 or d >= self.epochs for d in self.decay_epochs):
            raise ConfigError("decay_epochs must lie in [1, epochs)")


# published schedules: (lr0, epochs, decay epochs)
TEACHER_PHASE = (0.1, 52, (16, 28, 40, 50))
STUDENT_PHASE = (0.1, 26, (8, 14, 20, 25))
ADAPTOR_PHASE = (1.0, 26, (8, 14, 20, 25))


def scale_phase(lr0: float, epochs: int, decay_epochs: tuple[int, ...],
                scale: float) -> tuple[float, int, tuple[int, ...]]:
    """Shrink a schedule proportionally for desk-scale runs.

    Epoch counts and decay epochs scale and round down; decay epochs are
    kept strictly increasing (at least 1 apart) and must stay below the
    final epoch count, dropping any that cannot.
    """
    if scale <= 0:
        raise ConfigError("schedule scale must be > 0")
    new_epochs = max(1, math.floor(epochs * scale))
    scaled = []
    prev = 0
    for d in decay_epochs:
        nd = max(math.floor(d * scale), prev + 1)
        if nd < new_epochs:
            scaled.append(nd)
            prev = nd
    return lr0, new_epochs, tuple(scaled)


def lr_at_epoch(cfg: OptimConfig, epoch: int) -> float:
    """lr0 divided by decay_factor once per decay epoch reached (1-based)."""
    return cfg.lr0 / cfg.decay_factor ** sum(1 for d in cfg.decay_epochs
                                             if d <= epoch)


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             velocity: dict[str, np.ndarray], lr: float, momentum: float) -> None:
    """Heavy-ball update in place: v <- momentum*v + g; p <- p - lr*v."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ContractError(f"gradient shape mismatch for {name}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in {name}")
        v = velocity[name]
        v *= momentum
        v += g
        p -= lr * v


class SgdMomentum:
    """Stateful wrapper keeping one velocity buffer per parameter."""

    def __init__(self, params: dict[str, np.ndarray], momentum: float = 0.9):
        self.params = params
        self.momentum = momentum
        self.velocity = {n: np.zeros_like(p) for n, p in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        sgd_step(self.params, grads, self.velocity, lr, self.momentum)


class DivergenceGuard:
    """Aborts after `limit` consecutive non-finite losses."""

    def __init__(self, limit: int = DIVERGENCE_LIMIT):
        self.limit = limit
        self.consecutive = 0

    def check(self, loss_value: float) -> bool:
        """True if the loss is finite; raises once the limit is hit."""
        if np.isfinite(loss_value):
            self.consecutive = 0
            return True
        self.consecutive += 1
        if self.consecutive >= self.limit:
            raise DivergenceError(
                f"loss non-finite for {self.consecutive} consecutive steps")
        return False


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Seeded shuffle covering every index exactly once; last batch kept."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


@dataclass
class TrainLogRecord:
    epoch: int
    mean_loss: float
    lr: float
    val_acc: Optional[dict[str, float]] = None
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {"epoch": self.epoch, "mean_loss": self.mean_loss, "lr": self.lr,
               "val_acc": self.val_acc, "wall_time": self.wall_time}
        doc.update(self.extras)
        return json.dumps(doc, sort_keys=True)


def write_log(records: list[TrainLogRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def _rng_streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _grads_of(ptens: dict) -> dict[str, np.ndarray]:
    return {name: (t.grad if t.grad is not None else np.zeros_like(t.values))
            for name, t in ptens.items()}


def train_teacher(subset: SampleSet, group: GroupTag, backbone_cfg: BackboneConfig,
                  eaf_cfg: EafConfig, optim: OptimConfig, val_pool: SampleSet,
                  val_pairs: PairList, init_seed: int,
                  augment: Optional[Callable] = None,
                  ) -> tuple[TeacherModel, list[TrainLogRecord]]:
    """Train one teacher on its subset; keep the epoch checkpoint with the
    best own-group validation verification accuracy (ties: earliest)."""
    optim.validate()
    if subset.n == 0:
        raise ContractError("teacher training subset is empty")
    class_ids = np.unique(subset.identities)
    local_labels = np.searchsorted(class_ids, subset.identities)
    model = models.new_teacher(backbone_cfg, class_ids, group, init_seed)
    opt = SgdMomentum(model.params, optim.momentum)
    shuffle_rng, margin_rng, augment_rng = _rng_streams(optim.seed, 3)
    guard = DivergenceGuard()
    own_pairs = val_pairs.of_group(group.index)

    best_acc, best_epoch, best_params = -np.inf, 0, None
    records = []
    for epoch in range(1, optim.epochs + 1):
        t0 = time.perf_counter()
        lr = lr_at_epoch(optim, epoch)
        epoch_losses = []
        for batch in epoch_batches(subset.n, optim.batch_size, shuffle_rng):
            x = subset.values[batch]
            if augment is not None:
                x = augment(x, augment_rng)
            tape = Tape()
            ptens = models.param_tensors(tape, model.params)
            emb = models.backbone_graph(tape, ptens, backbone_cfg, x)
            loss = losses.elastic_arcface(emb, ptens["header.W"],
                                          local_labels[batch], eaf_cfg,
                                          mode="train", rng=margin_rng)
            if not guard.check(float(loss.values)):
                continue
            epoch_losses.append(float(loss.values))
            tape.backward(loss)
            opt.step(_grads_of(ptens), lr)
        acc, _ = verification_accuracy(model.embed(val_pool.values), own_pairs)
        if acc > best_acc:
            best_acc, best_epoch = acc, epoch
            best_params = {n: p.copy() for n, p in model.params.items()}
        records.append(TrainLogRecord(
            epoch, float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
            lr, {group.name: acc}, time.perf_counter() - t0))
    model.params = best_params
    model.best_epoch = best_epoch
    return model, records


def extract_embeddings(teachers: list[TeacherModel],
                       dataset: SampleSet) -> list[SampleSet]:
    """Every teacher embeds every sample; outputs stay row-aligned."""
    out = []
    for t in teachers:
        emb = t.embed(dataset.values)
        out.append(SampleSet(emb, dataset.identities.copy(),
                             dataset.groups.copy(), dataset.group_tags))
    return out


def train_adaptor(kind: str, embedding_sets: list[SampleSet], eaf_cfg: EafConfig,
                  optim: OptimConfig, init_seed: int,
                  fusion_order: Optional[list[int]] = None,
                  ) -> tuple[AdaptorModel, list[TrainLogRecord]]:
    """Train a fusion adaptor on concatenated teacher embeddings.

    Uses identity labels only (no group information). The classification
    header trained alongside is discarded; the returned adaptor is the
    epoch checkpoint with the lowest epoch-mean training loss.
    """
    optim.validate()
    fused = models.fuse_inputs(embedding_sets, fusion_order)
    identities = embedding_sets[0].identities
    class_ids = np.unique(identities)
    local_labels = np.searchsorted(class_ids, identities)
    emb_dim = embedding_sets[0].dim
    model = models.new_adaptor(kind, len(embedding_sets), emb_dim, init_seed)
    header_rng = np.random.default_rng(np.random.SeedSequence(init_seed).spawn(1)[0])
    header = {"header.W": models.init_header(header_rng, len(class_ids), emb_dim)}
    trainable = {**model.params, **header}
    opt = SgdMomentum(trainable, optim.momentum)
    shuffle_rng, margin_rng, dropout_rng = _rng_streams(optim.seed, 3)
    guard = DivergenceGuard()

    best_loss, best_epoch, best_params = np.inf, 0, None
    records = []
    for epoch in range(1, optim.epochs + 1):
        t0 = time.perf_counter()
        lr = lr_at_epoch(optim, epoch)
        epoch_losses = []
        for batch in epoch_batches(fused.shape[0], optim.batch_size, shuffle_rng):
            tape = Tape()
            ptens = models.param_tensors(tape, trainable)
            e_mt = models.adaptor_graph(tape, ptens, model, fused[batch],
                                        mode="train", rng=dropout_rng)
            loss = losses.elastic_arcface(e_mt, ptens["header.W"],
                                          local_labels[batch], eaf_cfg,
                                          mode="train", rng=margin_rng)
            if not guard.check(float(loss.values)):
                continue
            epoch_losses.append(float(loss.values))
            tape.backward(loss)
            opt.step(_grads_of(ptens), lr)
        mean_loss = float(np.mean(epoch_losses)) if epoch_losses else float("inf")
        if mean_loss < best_loss:
            best_loss, best_epoch = mean_loss, epoch
            best_params = {n: model.params[n].copy() for n in model.params}
        records.append(TrainLogRecord(epoch, mean_loss, lr, None,
                                      time.perf_counter() - t0))
    model.params = best_params
    model.best_epoch = best_epoch
    return model, records


def fused_target(teachers: list[TeacherModel], adaptor: AdaptorModel,
                 x: np.ndarray, fusion_order: Optional[list[int]] = None,
                 ) -> np.ndarray:
    """Frozen-network mimicry target: extract, fuse, adapt, in eval mode."""
    sets = [t.embed(x) for t in teachers]
    order = list(range(len(sets))) if fusion_order is None else list(fusion_order)
    fused = np.concatenate([sets[g] for g in order], axis=1)
    return models.adaptor_forward(adaptor, fused, mode="eval")


def train_student(mode: str, adaptor: AdaptorModel, teachers: list[TeacherModel],
                  dataset: SampleSet, loss_cfg: StudentLossConfig,
                  eaf_cfg: EafConfig, backbone_cfg: BackboneConfig,
                  optim: OptimConfig, init_seed: int,
                  fusion_order: Optional[list[int]] = None,
                  ) -> tuple[StudentModel, list[TrainLogRecord]]:
    """Distill the fused teacher space into a student; returns the
    final-epoch model. Teachers and adaptor stay frozen (verified)."""
    optim.validate()
    loss_cfg = StudentLossConfig(loss_cfg.lam, mode)
    loss_cfg.validate()
    frozen_before = _param_bytes(teachers, adaptor)
    if mode == "eaf_kd":
        class_ids = np.unique(dataset.identities)
        local_labels = np.searchsorted(class_ids, dataset.identities)
        model = models.new_student(backbone_cfg, mode, class_ids, init_seed)
    else:
        model = models.new_student(backbone_cfg, mode, None, init_seed)
    opt = SgdMomentum(model.params, optim.momentum)
    shuffle_rng, margin_rng = _rng_streams(optim.seed, 2)
    guard = DivergenceGuard()

    records = []
    for epoch in range(1, optim.epochs + 1):
        t0 = time.perf_counter()
        lr = lr_at_epoch(optim, epoch)
        epoch_total, epoch_eaf, epoch_kd = [], [], []
        for batch in epoch_batches(dataset.n, optim.batch_size, shuffle_rng):
            x = dataset.values[batch]
            e_mt = fused_target(teachers, adaptor, x, fusion_order)
            tape = Tape()
            ptens = models.param_tensors(tape, model.params)
            emb = models.backbone_graph(tape, ptens, backbone_cfg, x)
            kd = losses.kd_mse(e_mt, emb)
            if mode == "eaf_kd":
                eaf = losses.elastic_arcface(emb, ptens["header.W"],
                                             local_labels[batch], eaf_cfg,
                                             mode="train", rng=margin_rng)
                total = losses.student_loss(eaf, kd, loss_cfg)
                epoch_eaf.append(float(eaf.values))
            else:
                total = losses.student_loss(None, kd, loss_cfg)
            if not guard.check(float(total.values)):
                continue
            epoch_total.append(float(total.values))
            epoch_kd.append(float(kd.values))
            tape.backward(total)
            opt.step(_grads_of(ptens), lr)
        extras = {"mean_kd": float(np.mean(epoch_kd)) if epoch_kd else None}
        if mode == "eaf_kd":
            extras["mean_eaf"] = float(np.mean(epoch_eaf)) if epoch_eaf else None
        records.append(TrainLogRecord(
            epoch, float(np.mean(epoch_total)) if epoch_total else float("nan"),
            lr, None, time.perf_counter() - t0, extras))
    if _param_bytes(teachers, adaptor) != frozen_before:
        raise ContractError("frozen teacher/adaptor parameters changed "
                            "during student training")
    return model, records


def _param_bytes(teachers: list[TeacherModel], adaptor: AdaptorModel) -> bytes:
    chunks = []
    for t in teachers:
        for name in sorted(t.params):
            chunks.append(t.params[name].tobytes())
    for name in sorted(adaptor.params):
        chunks.append(adaptor.params[name].tobytes())
    return b"".join(chunks)
