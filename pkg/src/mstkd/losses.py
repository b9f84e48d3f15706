"""Objective functions: softmax cross-entropy, ElasticArcFace, the embedding
mimicry MSE, and the combined student objectives.

All losses return scalar `DiffTensor`s reduced by the batch mean and are
computed through the log-sum-exp path for stability. The angular-margin loss
follows the elastic formulation: cosines are clamped, converted to angles,
shifted by a per-sample margin drawn from Normal(m, sigma^2) in train mode
(exactly m in eval mode), and mapped back through cos before scaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import DiffTensor
from .errors import ContractError, DimensionError

UNIT_NORM_TOL = 1e-8


@dataclass
class EafConfig:
    s: float = 64.0
    m: float = 0.5
    sigma: float = 0.05

    def validate(self) -> None:
        if self.s <= 0 or self.m < 0 or self.sigma < 0:
            raise ContractError("EafConfig requires s > 0, m >= 0, sigma >= 0")


@dataclass
class StudentLossConfig:
    lam: float = 10000.0
    mode: str = "eaf_kd"   # "eaf_kd" | "a_kd"

    def validate(self) -> None:
        if self.lam <= 0:
            raise ContractError("lambda must be > 0")
        if self.mode not in ("eaf_kd", "a_kd"):
            raise ContractError(f"unknown student loss mode {self.mode!r}")


def _check_labels(labels: np.ndarray, n_classes: int, batch: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ContractError("labels must provide one class index per row")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ContractError("label out of range")
    return labels


def softmax_ce(logits: DiffTensor, labels: np.ndarray) -> DiffTensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    if logits.values.ndim != 2:
        raise DimensionError("softmax_ce expects a [batch, classes] matrix")
    if not np.all(np.isfinite(logits.values)):
        raise ContractError("softmax_ce requires finite logits")
    labels = _check_labels(labels, logits.values.shape[1], logits.values.shape[0])
    return ad.mean_all(ad.sub(ad.logsumexp_rows(logits), ad.pick(logits, labels)))


def cosine_logits(embeddings: DiffTensor, class_weights: DiffTensor) -> DiffTensor:
    """Cosine similarities of unit-norm embeddings against row-normalized weights."""
    return ad.matmul(embeddings, ad.transpose(ad.l2_normalize(class_weights)))


def elastic_arcface(embeddings: DiffTensor, class_weights: DiffTensor,
                    labels: np.ndarray, cfg: EafConfig, mode: str = "train",
                    rng: Optional[np.random.Generator] = None) -> DiffTensor:
    """Angular-margin cross-entropy with a per-sample Gaussian margin.

    The target-class cosine is clamped, turned into an angle, shifted by a
    margin drawn from Normal(m, sigma^2) (train) or fixed at m (eval), and
    mapped back; the shifted angle is clipped to [0, pi] so a larger margin
    can never make the target logit more favorable. All logits are scaled
    by s before the cross-entropy.
    """
    cfg.validate()
    if mode not in ("train", "eval"):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    if embeddings.values.ndim != 2 or class_weights.values.ndim != 2:
        raise DimensionError("elastic_arcface expects 2-D embeddings and weights")
    if embeddings.values.shape[1] != class_weights.values.shape[1]:
        raise DimensionError("embedding and class-weight dimensions differ")
    norms = np.linalg.norm(embeddings.values, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        raise ContractError("embeddings must be unit-norm rows")
    batch = embeddings.values.shape[0]
    labels = _check_labels(labels, class_weights.values.shape[0], batch)

    if mode == "train" and cfg.sigma > 0.0:
        if rng is None:
            raise ContractError("train mode with sigma > 0 requires an rng")
        margins = rng.normal(cfg.m, cfg.sigma, size=batch)
    else:
        margins = np.full(batch, cfg.m)

    tape = embeddings.tape
    cosines = ad.clamp(cosine_logits(embeddings, class_weights),
                       -1.0 + ad.EPS_COS, 1.0 - ad.EPS_COS)
    theta = ad.arccos(ad.pick(cosines, labels))
    shifted = ad.clamp(ad.add(theta, tape.constant(margins)), 0.0, ad.PI)
    logits = ad.scatter_replace(cosines, labels, ad.cos(shifted))
    return softmax_ce(ad.scale(logits, cfg.s), labels)


def kd_mse(target, student_emb: DiffTensor) -> DiffTensor:
    """Mean squared error between the mimicry target and the student embedding.

    The target is treated as a constant: no gradient reaches whatever
    produced it. Equals the batch mean of (1/D) * sum_d (target - emb)^2.
    """
    values = target.values if isinstance(target, DiffTensor) else np.asarray(target)
    if values.shape != student_emb.values.shape:
        raise DimensionError(
            f"kd_mse shapes differ: {values.shape} vs {student_emb.values.shape}")
    diff = ad.sub(student_emb.tape.constant(values), student_emb)
    return ad.mean_all(ad.mul(diff, diff))


def student_loss(classification: Optional[DiffTensor], kd: DiffTensor,
                 cfg: StudentLossConfig) -> DiffTensor:
    """Combined student objective: classification + lambda*kd, or lambda*kd alone."""
    cfg.validate()
    weighted = ad.scale(kd, cfg.lam)
    if cfg.mode == "a_kd":
        return weighted
    if classification is None:
        raise ContractError("eaf_kd mode requires the classification term")
    return ad.add(classification, weighted)
