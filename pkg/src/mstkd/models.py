"""Network assemblies: teacher, the three fusion adaptors, and the student.

Backbones are multilayer perceptrons with leaky-relu activations whose final
affine output is L2-normalized onto the unit hypersphere. Classification
headers are bias-free weight matrices whose rows are normalized at use time,
so header logits are cosine similarities in [-1, 1].

Parameters live in plain float64 arrays keyed by dotted names; forward
passes record onto a caller-provided tape so the same code path serves
training and inference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import store
from .autodiff import DiffTensor, Tape
from .data import GroupTag, SampleSet
from .errors import ConfigError, ContractError, DimensionError, UnsupportedKindError

ADAPTOR_KINDS = ("SL", "DuL", "DLDPO")
DROPOUT_P = 0.2


@dataclass
class BackboneConfig:
    input_dim: int
    hidden: tuple[int, ...] = (64,)
    embedding_dim: int = 32
    slope: float = 0.01

    def validate(self) -> None:
        if self.embedding_dim < 2:
            raise ConfigError("embedding_dim must be >= 2")
        if not self.hidden:
            raise ConfigError("backbone needs at least one hidden layer")
        if min((self.input_dim,) + tuple(self.hidden)) < 1:
            raise ConfigError("layer sizes must be positive")


@dataclass
class TeacherModel:
    cfg: BackboneConfig
    params: dict[str, np.ndarray]
    assigned_group: GroupTag
    class_ids: np.ndarray          # global identity per local class index
    best_epoch: int = 0

    def embed(self, x: np.ndarray) -> np.ndarray:
        return _embed(self.params, self.cfg, x)


@dataclass
class AdaptorModel:
    kind: str
    n_teachers: int
    emb_dim: int
    params: dict[str, np.ndarray]
    slope: float = 0.01
    dropout_p: float = DROPOUT_P
    best_epoch: int = 0

    @property
    def input_dim(self) -> int:
        return self.n_teachers * self.emb_dim


@dataclass
class StudentModel:
    cfg: BackboneConfig
    mode: str                      # "eaf_kd" | "a_kd"
    params: dict[str, np.ndarray]
    class_ids: Optional[np.ndarray] = None   # None in a_kd mode

    def embed(self, x: np.ndarray) -> np.ndarray:
        return _embed(self.params, self.cfg, x)


def _kaiming_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_backbone(cfg: BackboneConfig, rng: np.random.Generator,
                   prefix: str = "backbone") -> dict[str, np.ndarray]:
    dims = [cfg.input_dim, *cfg.hidden, cfg.embedding_dim]
    params: dict[str, np.ndarray] = {}
    for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
        params[f"{prefix}.{i}.W"] = _kaiming_uniform(rng, din, (din, dout))
        params[f"{prefix}.{i}.b"] = np.zeros(dout)
    return params


def init_header(rng: np.random.Generator, n_classes: int, dim: int) -> np.ndarray:
    """Classification header rows: unit Gaussian draws, row-normalized."""
    w = rng.normal(size=(n_classes, dim))
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def new_teacher(cfg: BackboneConfig, class_ids: np.ndarray, group: GroupTag,
                seed: int) -> TeacherModel:
    cfg.validate()
    rng = np.random.default_rng(seed)
    params = _init_backbone(cfg, rng)
    params["header.W"] = init_header(rng, len(class_ids), cfg.embedding_dim)
    return TeacherModel(cfg, params, group, np.asarray(class_ids, dtype=np.int64))


def new_adaptor(kind: str, n_teachers: int, emb_dim: int, seed: int,
                slope: float = 0.01) -> AdaptorModel:
    if kind not in ADAPTOR_KINDS:
        raise ConfigError(f"unknown adaptor kind {kind!r}; expected {ADAPTOR_KINDS}")
    rng = np.random.default_rng(seed)
    d_in = n_teachers * emb_dim
    params = {"adaptor.0.W": _kaiming_uniform(rng, d_in, (d_in, emb_dim)),
              "adaptor.0.b": np.zeros(emb_dim)}
    if kind in ("DuL", "DLDPO"):
        params["adaptor.1.W"] = _kaiming_uniform(rng, emb_dim, (emb_dim, emb_dim))
        params["adaptor.1.b"] = np.zeros(emb_dim)
    return AdaptorModel(kind, n_teachers, emb_dim, params, slope)


def new_student(cfg: BackboneConfig, mode: str,
                class_ids: Optional[np.ndarray], seed: int) -> StudentModel:
    cfg.validate()
    if mode not in ("eaf_kd", "a_kd"):
        raise ConfigError(f"unknown student mode {mode!r}")
    rng = np.random.default_rng(seed)
    params = _init_backbone(cfg, rng)
    if mode == "eaf_kd":
        if class_ids is None:
            raise ConfigError("eaf_kd student needs the training identity list")
        params["header.W"] = init_header(rng, len(class_ids), cfg.embedding_dim)
        class_ids = np.asarray(class_ids, dtype=np.int64)
    else:
        class_ids = None
    return StudentModel(cfg, mode, params, class_ids)


def param_tensors(tape: Tape, params: dict[str, np.ndarray],
                  trainable: bool = True) -> dict[str, DiffTensor]:
    make = tape.param if trainable else tape.constant
    return {name: make(arr) for name, arr in params.items()}


def backbone_graph(tape: Tape, ptens: dict[str, DiffTensor], cfg: BackboneConfig,
                   x_values: np.ndarray, prefix: str = "backbone") -> DiffTensor:
    """Record the backbone forward pass; returns the unit-norm embedding."""
    if x_values.ndim != 2 or x_values.shape[1] != cfg.input_dim:
        raise DimensionError(
            f"batch width {x_values.shape} does not match input_dim {cfg.input_dim}")
    h = tape.constant(x_values)
    n_layers = len(cfg.hidden) + 1
    for i in range(n_layers):
        h = ad.affine(h, ptens[f"{prefix}.{i}.W"], ptens[f"{prefix}.{i}.b"])
        if i < n_layers - 1:
            h = ad.leaky_relu(h, cfg.slope)
    return ad.l2_normalize(h)


def adaptor_graph(tape: Tape, ptens: dict[str, DiffTensor], a: AdaptorModel,
                  fused_values: np.ndarray, mode: str = "eval",
                  rng: Optional[np.random.Generator] = None) -> DiffTensor:
    """Record the adaptor forward pass; returns the unit-norm fused embedding.

    DLDPO applies dropout before the activation, train mode only.
    """
    if fused_values.ndim != 2 or fused_values.shape[1] != a.input_dim:
        raise DimensionError(
            f"fused width {fused_values.shape} does not match {a.input_dim}")
    h = ad.affine(tape.constant(fused_values), ptens["adaptor.0.W"],
                  ptens["adaptor.0.b"])
    if a.kind in ("DuL", "DLDPO"):
        if a.kind == "DLDPO":
            h = ad.dropout(h, a.dropout_p, mode, rng)
        h = ad.leaky_relu(h, a.slope)
        h = ad.affine(h, ptens["adaptor.1.W"], ptens["adaptor.1.b"])
    return ad.l2_normalize(h)


def _embed(params: dict[str, np.ndarray], cfg: BackboneConfig,
           x: np.ndarray) -> np.ndarray:
    tape = Tape()
    ptens = param_tensors(tape, params, trainable=False)
    return backbone_graph(tape, ptens, cfg, np.asarray(x, dtype=np.float64)).values


def _cosines(emb: np.ndarray, header: np.ndarray) -> np.ndarray:
    wn = header / np.linalg.norm(header, axis=1, keepdims=True)
    return emb @ wn.T


def teacher_forward(t: TeacherModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode forward: (unit-norm embeddings, cosine logits in [-1, 1])."""
    emb = t.embed(x)
    return emb, _cosines(emb, t.params["header.W"])


def student_forward(s: StudentModel,
                    x: np.ndarray) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Eval-mode forward; logits are absent for a_kd students."""
    emb = s.embed(x)
    if s.mode == "a_kd":
        return emb, None
    return emb, _cosines(emb, s.params["header.W"])


def adaptor_forward(a: AdaptorModel, fused: np.ndarray, mode: str = "eval",
                    rng: Optional[np.random.Generator] = None) -> np.ndarray:
    tape = Tape()
    ptens = param_tensors(tape, a.params, trainable=False)
    return adaptor_graph(tape, ptens, a, np.asarray(fused, dtype=np.float64),
                         mode, rng).values


def fuse_inputs(sets: list[SampleSet], order: Optional[list[int]] = None) -> np.ndarray:
    """Concatenate aligned teacher embedding sets into [n, G*D] rows.

    Blocks follow `order` (teacher indices; default 0..G-1). All sets must
    cover the same samples in the same row order.
    """
    if not sets:
        raise ContractError("fuse_inputs needs at least one embedding set")
    n = sets[0].n
    for s in sets[1:]:
        if s.n != n:
            raise ContractError("embedding sets are not aligned (row counts differ)")
        if not np.array_equal(s.identities, sets[0].identities):
            raise ContractError("embedding sets are not aligned (labels differ)")
    order = list(range(len(sets))) if order is None else list(order)
    if sorted(order) != list(range(len(sets))):
        raise ContractError(f"fusion order {order} is not a permutation")
    return np.concatenate([sets[g].values for g in order], axis=1)


def trace_teacher_attribution(a: AdaptorModel) -> np.ndarray:
    """Per-teacher share of the SL adaptor's weight mass.

    Frobenius norm of each teacher's input block of the single affine map,
    normalized to sum to one.
    """
    if a.kind != "SL":
        raise UnsupportedKindError("attribution tracing requires an SL adaptor")
    w = a.params["adaptor.0.W"]
    norms = np.array([
        np.linalg.norm(w[g * a.emb_dim:(g + 1) * a.emb_dim, :])
        for g in range(a.n_teachers)])
    return norms / norms.sum()


def count_params(params: dict[str, np.ndarray]) -> int:
    return sum(arr.size for arr in params.values())


# --- checkpoint persistence ------------------------------------------------

def save_teacher(t: TeacherModel, path) -> None:
    meta = {"kind": "teacher", "backbone": _cfg_meta(t.cfg),
            "group_index": t.assigned_group.index, "group_name": t.assigned_group.name,
            "class_ids": t.class_ids.tolist(), "best_epoch": t.best_epoch}
    store.save_params(path, t.params, meta)


def load_teacher(path) -> TeacherModel:
    params, meta = store.load_params(path)
    _expect_kind(meta, "teacher", path)
    return TeacherModel(_cfg_from_meta(meta["backbone"]), params,
                        GroupTag(meta["group_index"], meta["group_name"]),
                        np.array(meta["class_ids"], dtype=np.int64),
                        meta["best_epoch"])


def save_adaptor(a: AdaptorModel, path) -> None:
    meta = {"kind": "adaptor", "adaptor_kind": a.kind, "n_teachers": a.n_teachers,
            "emb_dim": a.emb_dim, "slope": a.slope, "dropout_p": a.dropout_p,
            "best_epoch": a.best_epoch}
    store.save_params(path, a.params, meta)


def load_adaptor(path) -> AdaptorModel:
    params, meta = store.load_params(path)
    _expect_kind(meta, "adaptor", path)
    return AdaptorModel(meta["adaptor_kind"], meta["n_teachers"], meta["emb_dim"],
                        params, meta["slope"], meta["dropout_p"], meta["best_epoch"])


def save_student(s: StudentModel, path) -> None:
    meta = {"kind": "student", "backbone": _cfg_meta(s.cfg), "mode": s.mode,
            "class_ids": None if s.class_ids is None else s.class_ids.tolist()}
    store.save_params(path, s.params, meta)


def load_student(path) -> StudentModel:
    params, meta = store.load_params(path)
    _expect_kind(meta, "student", path)
    ids = meta["class_ids"]
    return StudentModel(_cfg_from_meta(meta["backbone"]), meta["mode"], params,
                        None if ids is None else np.array(ids, dtype=np.int64))


def _cfg_meta(cfg: BackboneConfig) -> dict:
    return {"input_dim": cfg.input_dim, "hidden": list(cfg.hidden),
            "embedding_dim": cfg.embedding_dim, "slope": cfg.slope}


def _cfg_from_meta(m: dict) -> BackboneConfig:
    return BackboneConfig(m["input_dim"], tuple(m["hidden"]),
                          m["embedding_dim"], m["slope"])


def _expect_kind(meta: dict, kind: str, path) -> None:
    if meta.get("kind") != kind:
        raise ContractError(f"{path}: checkpoint holds a {meta.get('kind')}, "
                            f"expected {kind}")
