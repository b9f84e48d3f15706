"""Desk-scale multi-specialized-teacher knowledge distillation with fairness metrics.

The library is organized around seven pieces: a minimal reverse-mode tape
(`autodiff`), a synthetic group-structured identity generator (`data`),
binary persistence (`store`), margin and distillation losses (`losses`),
the teacher/adaptor/student assemblies (`models`), the training engine
(`training`), and verification-protocol scoring with fairness summaries
(`evaluation`). `pipeline` wires them into reproducible staged experiments,
exposed on the command line as `mstkd`.
"""

__version__ = "0.1.0"

from .data import (DataSplit, GroupTag, LabeledSample, PairList, SampleSet,
                   SyntheticDatasetSpec, build_pairs, generate,
                   split_balanced, split_specialized)
from .evaluation import (FairnessReport, best_threshold_accuracy,
                         compare_reports, evaluate_embeddings, evaluate_model,
                         fairness_metrics, render_table, verification_accuracy)
from .losses import (EafConfig, StudentLossConfig, elastic_arcface, kd_mse,
                     softmax_ce, student_loss)
from .models import (ADAPTOR_KINDS, AdaptorModel, BackboneConfig, StudentModel,
                     TeacherModel, adaptor_forward, fuse_inputs, new_adaptor,
                     new_student, new_teacher, student_forward, teacher_forward,
                     trace_teacher_attribution)
from .training import (OptimConfig, SgdMomentum, TrainLogRecord,
                       extract_embeddings, fused_target, lr_at_epoch,
                       scale_phase, sgd_step, train_adaptor, train_student,
                       train_teacher)

__all__ = [name for name in dir() if not name.startswith("_")]
