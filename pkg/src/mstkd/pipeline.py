"""Experiment orchestration: config, run manifest, and pipeline stages.

One JSON config drives every stage. Stages form the DAG
gen-data -> train-teachers -> extract -> train-adaptor -> train-student ->
evaluate; each stage checks that its upstream artifacts exist on disk with
the hashes recorded in the manifest, skips itself when its own artifacts
are already present (unless forced), and registers everything it writes.
All artifacts are pure functions of (config, seeds), so re-runs are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import __version__, data, models, store, training
from .errors import ConfigError, MissingArtifactError
from .evaluation import (FairnessReport, compare_reports, evaluate_embeddings,
                         render_table, report_from_json, report_to_json)
from .losses import EafConfig, StudentLossConfig

STAGES = ("gen-data", "train-teachers", "extract", "train-adaptor",
          "train-student", "evaluate")
UPSTREAM = {
    "gen-data": (),
    "train-teachers": ("gen-data",),
    "extract": ("gen-data", "train-teachers"),
    "train-adaptor": ("extract",),
    "train-student": ("gen-data", "train-teachers", "train-adaptor"),
    "evaluate": ("gen-data", "train-student"),
}


@dataclass
class Seeds:
    data: int = 0
    init: int = 1
    train: int = 2


@dataclass
class ExperimentConfig:
    dataset: data.SyntheticDatasetSpec
    split: str = "specialized"
    backbone: models.BackboneConfig = None
    teacher_backbone: Optional[models.BackboneConfig] = None
    adaptors: tuple[str, ...] = models.ADAPTOR_KINDS
    student_modes: tuple[str, ...] = ("eaf_kd", "a_kd")
    schedule_scale: float = 0.25
    batch_size: int = 128
    momentum: float = 0.9
    decay_factor: float = 10.0
    eaf: EafConfig = None
    lam: float = 10000.0
    fusion_order: Optional[tuple[int, ...]] = None
    pairs_per_group: int = 600
    genuine_fraction: float = 0.5
    seeds: Seeds = None
    out_dir: str = "runs/default"

    def validate(self) -> None:
        self.dataset.validate()
        if self.split not in ("specialized", "balanced"):
            raise ConfigError(f"split must be specialized|balanced, got {self.split!r}")
        self.backbone.validate()
        self.teacher_cfg().validate()
        for kind in self.adaptors:
            if kind not in models.ADAPTOR_KINDS:
                raise ConfigError(f"unknown adaptor kind {kind!r}")
        for mode in self.student_modes:
            if mode not in ("eaf_kd", "a_kd"):
                raise ConfigError(f"unknown student mode {mode!r}")
        if not self.adaptors or not self.student_modes:
            raise ConfigError("need at least one adaptor kind and one student mode")
        if self.lam <= 0:
            raise ConfigError("lambda must be > 0")
        if self.fusion_order is not None and (
                sorted(self.fusion_order) != list(range(self.dataset.groups))):
            raise ConfigError("fusion_order must be a permutation of the teachers")
        for phase in ("teacher", "adaptor", "student"):
            self.optim(phase, 0).validate()

    def teacher_cfg(self) -> models.BackboneConfig:
        return self.teacher_backbone or self.backbone

    def resolved_fusion_order(self) -> list[int]:
        return list(self.fusion_order or range(self.dataset.groups))

    def optim(self, phase: str, seed: int) -> training.OptimConfig:
        base = {"teacher": training.TEACHER_PHASE,
                "adaptor": training.ADAPTOR_PHASE,
                "student": training.STUDENT_PHASE}[phase]
        lr0, epochs, decays = training.scale_phase(*base, self.schedule_scale)
        return training.OptimConfig(lr0, epochs, decays, self.decay_factor,
                                    self.momentum, self.batch_size, seed)


def default_config_dict() -> dict:
    """The desk-scale default experiment, as a plain JSON-ready dict."""
    return {
        "dataset": {
            "groups": 4, "identities_per_group": 50, "samples_per_identity": 20,
            "input_dim": 64, "shared_dim": 6, "group_dim": 4,
            "shared_energy": 0.4, "intra_class_noise": [0.17, 0.15, 0.15, 0.15],
            "validation_identities_per_group": 12,
            "test_identities_per_group": 12, "group_names": None,
        },
        "split": "specialized",
        "backbone": {"hidden": [128], "embedding_dim": 32, "slope": 0.01},
        "teacher_backbone": None,
        "adaptors": ["SL", "DuL", "DLDPO"],
        "student_modes": ["eaf_kd", "a_kd"],
        "schedule_scale": 0.25,
        "batch_size": 128,
        "momentum": 0.9,
        "decay_factor": 10.0,
        "eaf": {"s": 64.0, "m": 0.5, "sigma": 0.05},
        "lambda": 10000.0,
        "fusion_order": None,
        "pairs_per_group": 600,
        "genuine_fraction": 0.5,
        "seeds": {"data": 0, "init": 1, "train": 2},
        "out_dir": "runs/default",
    }


def _reject_unknown(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def config_from_dict(doc: dict) -> ExperimentConfig:
    base = default_config_dict()
    _reject_unknown(doc, set(base), "config")
    merged = {**base, **doc}
    for key in ("dataset", "backbone", "eaf", "seeds"):
        sub = dict(base[key])
        override = merged[key] if merged[key] is not None else {}
        _reject_unknown(override, set(sub), key)
        sub.update(override)
        merged[key] = sub

    ds = merged["dataset"]
    spec = data.SyntheticDatasetSpec(
        groups=ds["groups"], identities_per_group=ds["identities_per_group"],
        samples_per_identity=ds["samples_per_identity"],
        input_dim=ds["input_dim"], shared_dim=ds["shared_dim"],
        group_dim=ds["group_dim"], shared_energy=ds["shared_energy"],
        intra_class_noise=tuple(ds["intra_class_noise"]),
        validation_identities_per_group=ds["validation_identities_per_group"],
        test_identities_per_group=ds["test_identities_per_group"],
        group_names=None if ds["group_names"] is None else tuple(ds["group_names"]),
        seed=merged["seeds"]["data"])

    def backbone_of(sub: Optional[dict]) -> Optional[models.BackboneConfig]:
        if sub is None:
            return None
        _reject_unknown(sub, {"hidden", "embedding_dim", "slope"}, "backbone")
        filled = {**base["backbone"], **sub}
        return models.BackboneConfig(ds["input_dim"], tuple(filled["hidden"]),
                                     filled["embedding_dim"], filled["slope"])

    cfg = ExperimentConfig(
        dataset=spec, split=merged["split"],
        backbone=backbone_of(merged["backbone"]),
        teacher_backbone=backbone_of(merged["teacher_backbone"]),
        adaptors=tuple(merged["adaptors"]),
        student_modes=tuple(merged["student_modes"]),
        schedule_scale=merged["schedule_scale"],
        batch_size=merged["batch_size"], momentum=merged["momentum"],
        decay_factor=merged["decay_factor"],
        eaf=EafConfig(merged["eaf"]["s"], merged["eaf"]["m"], merged["eaf"]["sigma"]),
        lam=merged["lambda"],
        fusion_order=None if merged["fusion_order"] is None
        else tuple(merged["fusion_order"]),
        pairs_per_group=merged["pairs_per_group"],
        genuine_fraction=merged["genuine_fraction"],
        seeds=Seeds(**merged["seeds"]), out_dir=merged["out_dir"])
    cfg.validate()
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    ds = cfg.dataset
    doc = default_config_dict()
    doc["dataset"] = {
        "groups": ds.groups, "identities_per_group": ds.identities_per_group,
        "samples_per_identity": ds.samples_per_identity, "input_dim": ds.input_dim,
        "shared_dim": ds.shared_dim, "group_dim": ds.group_dim,
        "shared_energy": ds.shared_energy,
        "intra_class_noise": list(ds.intra_class_noise),
        "validation_identities_per_group": ds.validation_identities_per_group,
        "test_identities_per_group": ds.test_identities_per_group,
        "group_names": None if ds.group_names is None else list(ds.group_names),
    }
    doc.update({
        "split": cfg.split,
        "backbone": {"hidden": list(cfg.backbone.hidden),
                     "embedding_dim": cfg.backbone.embedding_dim,
                     "slope": cfg.backbone.slope},
        "teacher_backbone": None if cfg.teacher_backbone is None else
        {"hidden": list(cfg.teacher_backbone.hidden),
         "embedding_dim": cfg.teacher_backbone.embedding_dim,
         "slope": cfg.teacher_backbone.slope},
        "adaptors": list(cfg.adaptors), "student_modes": list(cfg.student_modes),
        "schedule_scale": cfg.schedule_scale, "batch_size": cfg.batch_size,
        "momentum": cfg.momentum, "decay_factor": cfg.decay_factor,
        "eaf": {"s": cfg.eaf.s, "m": cfg.eaf.m, "sigma": cfg.eaf.sigma},
        "lambda": cfg.lam,
        "fusion_order": None if cfg.fusion_order is None else list(cfg.fusion_order),
        "pairs_per_group": cfg.pairs_per_group,
        "genuine_fraction": cfg.genuine_fraction,
        "seeds": {"data": cfg.seeds.data, "init": cfg.seeds.init,
                  "train": cfg.seeds.train},
        "out_dir": cfg.out_dir,
    })
    return doc


def load_config(path, seed_override: Optional[int] = None,
                out_override: Optional[str] = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    if seed_override is not None:
        doc["seeds"] = {"data": seed_override, "init": seed_override + 1,
                        "train": seed_override + 2}
        doc.setdefault("dataset", {})
    if out_override is not None:
        doc["out_dir"] = out_override
    return config_from_dict(doc)


def config_hash(cfg: ExperimentConfig) -> str:
    doc = config_to_dict(cfg)
    doc.pop("out_dir")  # runs are relocatable
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# --- manifest ----------------------------------------------------------------

def _manifest_path(out: Path) -> Path:
    return out / "manifest.json"


def load_manifest(out: Path) -> Optional[dict]:
    path = _manifest_path(out)
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _save_manifest(out: Path, manifest: dict) -> None:
    with open(_manifest_path(out), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _open_manifest(out: Path, cfg: ExperimentConfig, reset: bool = False) -> dict:
    h = config_hash(cfg)
    manifest = load_manifest(out)
    if manifest is None or reset:
        return {"config_hash": h, "tool_version": __version__,
                "fusion_order": cfg.resolved_fusion_order(), "stages": {}}
    if manifest["config_hash"] != h:
        raise ConfigError(
            f"config hash mismatch for {out}: manifest has "
            f"{manifest['config_hash'][:12]}..., config gives {h[:12]}...; "
            "use a fresh --out directory (or run-all --force) for a new config")
    return manifest


def _stage_ok(manifest: dict, stage: str, out: Path) -> bool:
    record = manifest["stages"].get(stage)
    if record is None:
        return False
    for rel, digest in record["artifacts"].items():
        path = out / rel
        if not path.exists() or store.sha256_file(path) != digest:
            return False
    return True


def _expected_artifacts(cfg: ExperimentConfig, stage: str) -> list[str]:
    if stage == "gen-data":
        return [f"dataset/{n}" for n in ("train.mste", "validation.mste",
                                         "test.mste", "pairs_validation.txt",
                                         "pairs_test.txt")]
    if stage == "train-teachers":
        return [f"teachers/teacher_{g}.ckpt" for g in range(cfg.dataset.groups)]
    if stage == "extract":
        return [f"embeddings/teacher_{g}.mste" for g in range(cfg.dataset.groups)]
    if stage == "train-adaptor":
        return [f"adaptors/{k}.ckpt" for k in cfg.adaptors]
    if stage == "train-student":
        return [f"students/{k}_{m}.ckpt" for k in cfg.adaptors
                for m in cfg.student_modes]
    return [f"reports/{k}_{m}.json" for k in cfg.adaptors
            for m in cfg.student_modes]


def _require_upstream(manifest: dict, stage: str, out: Path,
                      cfg: ExperimentConfig) -> None:
    for up in UPSTREAM[stage]:
        record = manifest["stages"].get(up)
        if record is None:
            raise MissingArtifactError(
                f"stage {stage!r} needs {up!r}, which has not run in {out}; "
                f"expected artifacts: {_expected_artifacts(cfg, up)}")
        missing = [rel for rel in record["artifacts"]
                   if not (out / rel).exists()
                   or store.sha256_file(out / rel) != record["artifacts"][rel]]
        if missing:
            raise MissingArtifactError(
                f"stage {stage!r} needs {up!r} artifacts, but these are "
                f"missing or modified: {missing}")


def _record_stage(manifest: dict, stage: str, out: Path,
                  paths: list[Path]) -> None:
    manifest["stages"][stage] = {
        "artifacts": {str(p.relative_to(out)): store.sha256_file(p)
                      for p in sorted(paths)}}
    _save_manifest(out, manifest)


def _write_config_copy(out: Path, cfg: ExperimentConfig) -> None:
    doc = config_to_dict(cfg)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- stage bodies ------------------------------------------------------------

def _dataset_paths(out: Path) -> dict[str, Path]:
    d_dir = out / "dataset"
    return {"train": d_dir / "train.mste",
            "validation": d_dir / "validation.mste",
            "test": d_dir / "test.mste",
            "pairs_validation": d_dir / "pairs_validation.txt",
            "pairs_test": d_dir / "pairs_test.txt"}


def _load_pools(cfg: ExperimentConfig, out: Path):
    paths = _dataset_paths(out)
    tags = cfg.dataset.tags()
    train = store.load_sample_set(paths["train"], tags)
    val = store.load_sample_set(paths["validation"], tags)
    test = store.load_sample_set(paths["test"], tags)
    val_pairs = store.load_pairs(paths["pairs_validation"])
    test_pairs = store.load_pairs(paths["pairs_test"])
    return train, val, test, val_pairs, test_pairs


def _split_of(cfg: ExperimentConfig, train: data.SampleSet) -> data.DataSplit:
    if cfg.split == "specialized":
        return data.split_specialized(train)
    return data.split_balanced(train, cfg.seeds.data)


def _teacher_path(out: Path, g: int) -> Path:
    return out / "teachers" / f"teacher_{g}.ckpt"


def _run_stage(stage: str, cfg: ExperimentConfig, out: Path, force: bool,
               reset: bool = False) -> bool:
    """Common prologue; returns False when the stage can be skipped."""
    out.mkdir(parents=True, exist_ok=True)
    manifest = _open_manifest(out, cfg, reset=reset)
    _write_config_copy(out, cfg)
    _require_upstream(manifest, stage, out, cfg)
    if not force and _stage_ok(manifest, stage, out):
        print(f"[mstkd] {stage}: up to date in {out}, skipping (use --force to redo)")
        return False
    _save_manifest(out, manifest)
    return True


def cmd_gen_data(cfg: ExperimentConfig, force: bool = False) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _open_manifest(out, cfg, reset=force)
    _write_config_copy(out, cfg)
    if not force and _stage_ok(manifest, "gen-data", out):
        print(f"[mstkd] gen-data: up to date in {out}, skipping")
        return out
    train, val, test = data.generate(cfg.dataset)
    val_pairs = data.build_pairs(val, cfg.pairs_per_group, cfg.genuine_fraction,
                                 seed=cfg.seeds.data + 1)
    test_pairs = data.build_pairs(test, cfg.pairs_per_group, cfg.genuine_fraction,
                                  seed=cfg.seeds.data + 2)
    paths = _dataset_paths(out)
    store.ensure_dir(out / "dataset")
    store.save_sample_set(train, paths["train"])
    store.save_sample_set(val, paths["validation"])
    store.save_sample_set(test, paths["test"])
    store.save_pairs(val_pairs, paths["pairs_validation"])
    store.save_pairs(test_pairs, paths["pairs_test"])
    _record_stage(manifest, "gen-data", out, list(paths.values()))
    print(f"[mstkd] gen-data: wrote {train.n} train / {val.n} validation / "
          f"{test.n} test samples to {out / 'dataset'}")
    return out


def _train_one_teacher(cfg_doc: dict, out_dir: str, g: int) -> list[str]:
    """Worker body for one teacher; safe to run in a separate process."""
    cfg = config_from_dict(cfg_doc)
    out = Path(out_dir)
    train, val, _, val_pairs, _ = _load_pools(cfg, out)
    split = _split_of(cfg, train)
    subset = train.select(train.rows_of_identities(split.subsets[g]))
    optim = cfg.optim("teacher", cfg.seeds.train + g)
    teacher, records = training.train_teacher(
        subset, train.group_tags[g], cfg.teacher_cfg(), cfg.eaf, optim,
        val, val_pairs, init_seed=cfg.seeds.init + g)
    ckpt = _teacher_path(out, g)
    log = out / "teachers" / f"teacher_{g}.log.jsonl"
    models.save_teacher(teacher, ckpt)
    training.write_log(records, log)
    return [str(ckpt), str(log)]


def cmd_train_teachers(cfg: ExperimentConfig, force: bool = False) -> Path:
    out = Path(cfg.out_dir)
    if not _run_stage("train-teachers", cfg, out, force):
        return out
    store.ensure_dir(out / "teachers")
    workers = int(os.environ.get("MSTKD_WORKERS", "1"))
    doc = config_to_dict(cfg)
    written: list[Path] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.dataset.groups)) as ex:
            futures = [ex.submit(_train_one_teacher, doc, str(out), g)
                       for g in range(cfg.dataset.groups)]
            for fut in futures:
                written.extend(Path(p) for p in fut.result())
    else:
        for g in range(cfg.dataset.groups):
            written.extend(Path(p) for p in _train_one_teacher(doc, str(out), g))
    manifest = _open_manifest(out, cfg)
    _record_stage(manifest, "train-teachers", out, written)
    print(f"[mstkd] train-teachers: {cfg.dataset.groups} {cfg.split} teachers -> "
          f"{out / 'teachers'}")
    return out


def cmd_extract(cfg: ExperimentConfig, force: bool = False) -> Path:
    out = Path(cfg.out_dir)
    if not _run_stage("extract", cfg, out, force):
        return out
    train, _, _, _, _ = _load_pools(cfg, out)
    teachers = [models.load_teacher(_teacher_path(out, g))
                for g in range(cfg.dataset.groups)]
    sets = training.extract_embeddings(teachers, train)
    store.ensure_dir(out / "embeddings")
    written = []
    for g, s in enumerate(sets):
        path = out / "embeddings" / f"teacher_{g}.mste"
        store.save_sample_set(s, path)
        written.append(path)
    manifest = _open_manifest(out, cfg)
    _record_stage(manifest, "extract", out, written)
    print(f"[mstkd] extract: {len(sets)} x {sets[0].n} embeddings -> "
          f"{out / 'embeddings'}")
    return out


def _load_embedding_sets(cfg: ExperimentConfig, out: Path) -> list[data.SampleSet]:
    tags = cfg.dataset.tags()
    return [store.load_sample_set(out / "embeddings" / f"teacher_{g}.mste", tags)
            for g in range(cfg.dataset.groups)]


def cmd_train_adaptor(cfg: ExperimentConfig, force: bool = False) -> Path:
    out = Path(cfg.out_dir)
    if not _run_stage("train-adaptor", cfg, out, force):
        return out
    sets = _load_embedding_sets(cfg, out)
    store.ensure_dir(out / "adaptors")
    written = []
    for i, kind in enumerate(cfg.adaptors):
        optim = cfg.optim("adaptor", cfg.seeds.train + 100 + i)
        adaptor, records = training.train_adaptor(
            kind, sets, cfg.eaf, optim, init_seed=cfg.seeds.init + 100 + i,
            fusion_order=cfg.resolved_fusion_order())
        ckpt = out / "adaptors" / f"{kind}.ckpt"
        log = out / "adaptors" / f"{kind}.log.jsonl"
        models.save_adaptor(adaptor, ckpt)
        training.write_log(records, log)
        written.extend([ckpt, log])
    manifest = _open_manifest(out, cfg)
    _record_stage(manifest, "train-adaptor", out, written)
    print(f"[mstkd] train-adaptor: {list(cfg.adaptors)} -> {out / 'adaptors'}")
    return out


def cmd_train_student(cfg: ExperimentConfig, force: bool = False) -> Path:
    out = Path(cfg.out_dir)
    if not _run_stage("train-student", cfg, out, force):
        return out
    train, _, _, _, _ = _load_pools(cfg, out)
    teachers = [models.load_teacher(_teacher_path(out, g))
                for g in range(cfg.dataset.groups)]
    store.ensure_dir(out / "students")
    written = []
    for i, kind in enumerate(cfg.adaptors):
        adaptor = models.load_adaptor(out / "adaptors" / f"{kind}.ckpt")
        for j, mode in enumerate(cfg.student_modes):
            optim = cfg.optim("student", cfg.seeds.train + 200 + 10 * i + j)
            student, records = training.train_student(
                mode, adaptor, teachers, train,
                StudentLossConfig(cfg.lam, mode), cfg.eaf, cfg.backbone, optim,
                init_seed=cfg.seeds.init + 200 + 10 * i + j,
                fusion_order=cfg.resolved_fusion_order())
            ckpt = out / "students" / f"{kind}_{mode}.ckpt"
            log = out / "students" / f"{kind}_{mode}.log.jsonl"
            models.save_student(student, ckpt)
            training.write_log(records, log)
            written.extend([ckpt, log])
    manifest = _open_manifest(out, cfg)
    _record_stage(manifest, "train-student", out, written)
    print(f"[mstkd] train-student: {len(cfg.adaptors) * len(cfg.student_modes)} "
          f"students -> {out / 'students'}")
    return out


def cmd_evaluate(cfg: ExperimentConfig, force: bool = False) -> Path:
    out = Path(cfg.out_dir)
    if not _run_stage("evaluate", cfg, out, force):
        return out
    _, _, test, _, test_pairs = _load_pools(cfg, out)
    store.ensure_dir(out / "reports")
    written = []
    for kind in cfg.adaptors:
        for mode in cfg.student_modes:
            student = models.load_student(out / "students" / f"{kind}_{mode}.ckpt")
            report = evaluate_embeddings(student.embed(test.values), test,
                                         test_pairs)
            jpath = out / "reports" / f"{kind}_{mode}.json"
            tpath = out / "reports" / f"{kind}_{mode}.txt"
            jpath.write_text(report_to_json(report), encoding="utf-8")
            tpath.write_text(render_table([(f"{kind} ({mode})", report)]),
                             encoding="utf-8")
            written.extend([jpath, tpath])
    manifest = _open_manifest(out, cfg)
    _record_stage(manifest, "evaluate", out, written)
    print(f"[mstkd] evaluate: reports -> {out / 'reports'}")
    return out


def _run_label(run_dir: Path) -> str:
    with open(run_dir / "config.json", encoding="utf-8") as fh:
        split = json.load(fh)["split"]
    return "Ours" if split == "specialized" else "Baseline"


def cmd_report(cfg: ExperimentConfig, run_dirs: list[str],
               out_override: Optional[str] = None) -> Path:
    """Combine evaluated runs into per-mode comparison tables.

    Rows are grouped by run (specialized runs labeled Ours, balanced runs
    Baseline) with one row per adaptor kind, mirroring the per-mode student
    result tables; the best value per column is starred within each block.
    """
    runs = [Path(r) for r in run_dirs]
    if not runs:
        raise ConfigError("report needs at least one evaluated run directory")
    for run in runs:
        if not (run / "config.json").exists():
            raise MissingArtifactError(f"{run} has no config.json; run stages first")
    out = Path(out_override) if out_override else Path(cfg.out_dir) / "comparison"
    store.ensure_dir(out)
    written = []
    for mode in cfg.student_modes:
        rows: list[tuple[str, FairnessReport]] = []
        blocks = []
        for run in runs:
            label = _run_label(run)
            block = 0
            for kind in cfg.adaptors:
                path = run / "reports" / f"{kind}_{mode}.json"
                if not path.exists():
                    raise MissingArtifactError(
                        f"missing report {path}; run evaluate on {run} first")
                rows.append((f"{label}-{kind}",
                             report_from_json(path.read_text(encoding="utf-8"))))
                block += 1
            blocks.append(block)
        table = render_table(rows, blocks=blocks)
        tpath = out / f"students_{mode}.txt"
        tpath.write_text(table, encoding="utf-8")
        doc = {"mode": mode,
               "rows": [{"label": label, "report": json.loads(report_to_json(r))}
                        for label, r in rows]}
        # per-adaptor deltas between the first specialized and first balanced run
        by_label = dict(rows)
        deltas = {}
        for kind in cfg.adaptors:
            ours, base = by_label.get(f"Ours-{kind}"), by_label.get(f"Baseline-{kind}")
            if ours is not None and base is not None:
                deltas[kind] = compare_reports(ours, base)["deltas"]
        doc["ours_minus_baseline"] = deltas
        jpath = out / f"students_{mode}.json"
        with open(jpath, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.extend([tpath, jpath])
        print(f"[mstkd] report ({mode}):\n{table}", end="")
    return out


def run_all(cfg: ExperimentConfig, force: bool = False) -> Path:
    cmd_gen_data(cfg, force)
    cmd_train_teachers(cfg, force)
    cmd_extract(cfg, force)
    cmd_train_adaptor(cfg, force)
    cmd_train_student(cfg, force)
    cmd_evaluate(cfg, force)
    return Path(cfg.out_dir)
