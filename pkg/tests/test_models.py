import numpy as np
import pytest

from mstkd import autodiff as ad
from mstkd import losses, models
from mstkd.data import GroupTag, SampleSet
from mstkd.errors import ConfigError, ContractError, UnsupportedKindError
from mstkd.models import BackboneConfig

from gradcheck import assert_grads_close, numeric_grad

G0 = GroupTag(0, "g0")
CFG = BackboneConfig(input_dim=16, hidden=(24,), embedding_dim=8)


def make_teacher(n_classes=10, seed=0, cfg=CFG):
    return models.new_teacher(cfg, np.arange(n_classes), G0, seed)


def test_teacher_forward_contracts():
    t = make_teacher()
    x = np.random.default_rng(0).normal(size=(12, 16))
    emb, logits = models.teacher_forward(t, x)
    assert np.all(np.abs(np.linalg.norm(emb, axis=1) - 1.0) < 1e-10)
    assert logits.shape == (12, 10)
    assert np.all(logits >= -1.0) and np.all(logits <= 1.0)


def test_fresh_teacher_loss_near_uniform():
    t = make_teacher(n_classes=50)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(64, 16))
    _, logits = models.teacher_forward(t, x)
    tape = ad.Tape()
    loss = losses.softmax_ce(tape.param(logits), rng.integers(0, 50, size=64))
    assert abs(float(loss.values) - np.log(50)) < 0.2 * np.log(50)


def test_backbone_gradients_match_finite_differences():
    cfg = BackboneConfig(input_dim=5, hidden=(6,), embedding_dim=4)
    t = models.new_teacher(cfg, np.arange(3), G0, seed=3)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(4, 5))
    w_proj = rng.normal(size=(4, 4))
    names = [n for n in t.params if n.startswith("backbone")]
    arrays = [t.params[n].copy() for n in names]

    def f(*arrs):
        p = dict(zip(names, arrs))
        h = x
        h = np.maximum(h @ p["backbone.0.W"] + p["backbone.0.b"],
                       0.01 * (h @ p["backbone.0.W"] + p["backbone.0.b"]))
        h = h @ p["backbone.1.W"] + p["backbone.1.b"]
        h = h / np.linalg.norm(h, axis=1, keepdims=True)
        return float(np.sum(h * w_proj))

    tape = ad.Tape()
    ptens = models.param_tensors(tape, t.params)
    emb = models.backbone_graph(tape, ptens, cfg, x)
    tape.backward(ad.sum_all(ad.mul(emb, tape.constant(w_proj))))
    numeric = numeric_grad(f, [a.copy() for a in arrays])
    for name, n in zip(names, numeric):
        assert_grads_close(ptens[name].grad, n)


def test_init_is_deterministic():
    a = make_teacher(seed=7)
    b = make_teacher(seed=7)
    c = make_teacher(seed=8)
    for name in a.params:
        assert np.array_equal(a.params[name], b.params[name])
    assert any(not np.array_equal(a.params[n], c.params[n]) for n in a.params)


def test_fuse_inputs_widths_and_order():
    rng = np.random.default_rng(5)
    ids = np.arange(3)
    grp = np.zeros(3, dtype=int)

    def unit_set(seed, d=4):
        v = np.random.default_rng(seed).normal(size=(3, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return SampleSet(v, ids, grp, [G0])

    sets = [unit_set(0), unit_set(1)]
    fused = models.fuse_inputs(sets)
    assert fused.shape == (3, 8)
    assert np.array_equal(fused[:, :4], sets[0].values)
    assert np.array_equal(fused[:, 4:], sets[1].values)
    swapped = models.fuse_inputs(sets, order=[1, 0])
    assert np.array_equal(swapped[:, :4], sets[1].values)
    # paper-scale width: 4 teachers x 512 dims
    big = [SampleSet(np.zeros((2, 512)) + 1.0, np.arange(2),
                     np.zeros(2, dtype=int), [G0]) for _ in range(4)]
    assert models.fuse_inputs(big).shape == (2, 2048)


def test_fuse_inputs_misaligned():
    a = SampleSet(np.ones((3, 2)), np.arange(3), np.zeros(3, dtype=int), [G0])
    b = SampleSet(np.ones((4, 2)), np.arange(4), np.zeros(4, dtype=int), [G0])
    with pytest.raises(ContractError):
        models.fuse_inputs([a, b])
    c = SampleSet(np.ones((3, 2)), np.arange(3) + 1, np.zeros(3, dtype=int), [G0])
    with pytest.raises(ContractError):
        models.fuse_inputs([a, c])


def test_sl_adaptor_with_block_selecting_weights():
    d = 6
    a = models.new_adaptor("SL", 4, d, seed=0)
    w = np.zeros((4 * d, d))
    w[:d, :] = np.eye(d)
    a.params["adaptor.0.W"] = w
    a.params["adaptor.0.b"] = np.zeros(d)
    rng = np.random.default_rng(6)
    e0 = rng.normal(size=(5, d))
    e0 /= np.linalg.norm(e0, axis=1, keepdims=True)
    fused = np.concatenate([e0] + [rng.normal(size=(5, d)) for _ in range(3)], axis=1)
    out = models.adaptor_forward(a, fused)
    assert np.allclose(out, e0, atol=1e-12)


def test_sl_block_average_of_identical_teachers():
    d = 5
    a = models.new_adaptor("SL", 4, d, seed=0)
    a.params["adaptor.0.W"] = np.concatenate([np.eye(d)] * 4, axis=0) / 4.0
    a.params["adaptor.0.b"] = np.zeros(d)
    e = np.random.default_rng(7).normal(size=(3, d))
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    out = models.adaptor_forward(a, np.concatenate([e] * 4, axis=1))
    assert np.allclose(out, e, atol=1e-12)


def test_adaptor_outputs_unit_norm_all_kinds():
    rng = np.random.default_rng(8)
    fused = rng.normal(size=(10, 4 * 6))
    for kind in models.ADAPTOR_KINDS:
        a = models.new_adaptor(kind, 4, 6, seed=1)
        for mode in ("train", "eval"):
            out = models.adaptor_forward(a, fused, mode, np.random.default_rng(0))
            assert np.all(np.abs(np.linalg.norm(out, axis=1) - 1.0) < 1e-10)


def test_dul_eval_deterministic():
    a = models.new_adaptor("DuL", 4, 6, seed=2)
    fused = np.random.default_rng(9).normal(size=(7, 24))
    assert np.array_equal(models.adaptor_forward(a, fused),
                          models.adaptor_forward(a, fused))


def test_dldpo_dropout_rate_and_placement():
    a = models.new_adaptor("DLDPO", 4, 16, seed=3)
    rng = np.random.default_rng(10)
    fused = rng.normal(size=(500, 64))
    out = models.adaptor_forward(a, fused, "train", np.random.default_rng(42))
    # reconstruct: the dropout mask is the generator's first draw
    h = fused @ a.params["adaptor.0.W"] + a.params["adaptor.0.b"]
    keep = (np.random.default_rng(42).random(h.shape) >= 0.2) / 0.8
    dropped_frac = np.mean(keep == 0.0)
    assert abs(dropped_frac - 0.2) < 0.02
    h = h * keep
    h = np.where(h >= 0, h, 0.01 * h)
    h = h @ a.params["adaptor.1.W"] + a.params["adaptor.1.b"]
    h /= np.linalg.norm(h, axis=1, keepdims=True)
    assert np.allclose(out, h, atol=1e-12)


def test_parameter_count_ordering():
    sl = models.new_adaptor("SL", 4, 8, seed=0)
    dul = models.new_adaptor("DuL", 4, 8, seed=0)
    dldpo = models.new_adaptor("DLDPO", 4, 8, seed=0)
    assert models.count_params(sl.params) < models.count_params(dul.params)
    assert models.count_params(dul.params) == models.count_params(dldpo.params)


def test_attribution_block_selection_and_uniformity():
    d = 8
    a = models.new_adaptor("SL", 4, d, seed=0)
    w = np.zeros((4 * d, d))
    w[:d, :] = np.eye(d)
    a.params["adaptor.0.W"] = w
    assert np.allclose(models.trace_teacher_attribution(a), [1, 0, 0, 0])

    shares = []
    for seed in range(200):
        a = models.new_adaptor("SL", 4, d, seed=seed)
        attr = models.trace_teacher_attribution(a)
        assert np.all(attr >= 0)
        assert abs(attr.sum() - 1.0) < 1e-12
        shares.append(attr)
    assert np.allclose(np.mean(shares, axis=0), 0.25, atol=0.01)


def test_attribution_invariant_under_output_rotation():
    a = models.new_adaptor("SL", 4, 6, seed=5)
    before = models.trace_teacher_attribution(a)
    q, _ = np.linalg.qr(np.random.default_rng(11).normal(size=(6, 6)))
    a.params["adaptor.0.W"] = a.params["adaptor.0.W"] @ q
    assert np.allclose(models.trace_teacher_attribution(a), before, atol=1e-12)


def test_attribution_requires_sl():
    a = models.new_adaptor("DuL", 4, 6, seed=0)
    with pytest.raises(UnsupportedKindError):
        models.trace_teacher_attribution(a)


def test_student_modes():
    akd = models.new_student(CFG, "a_kd", None, seed=0)
    emb, logits = models.student_forward(akd, np.random.default_rng(0).normal(size=(4, 16)))
    assert logits is None
    assert np.all(np.abs(np.linalg.norm(emb, axis=1) - 1.0) < 1e-10)
    assert "header.W" not in akd.params

    eaf = models.new_student(CFG, "eaf_kd", np.arange(200), seed=0)
    _, logits = models.student_forward(eaf, np.random.default_rng(0).normal(size=(4, 16)))
    assert logits.shape == (4, 200)
    with pytest.raises(ConfigError):
        models.new_student(CFG, "eaf_kd", None, seed=0)


def test_checkpoint_round_trips(tmp_path):
    t = make_teacher(seed=13)
    t.best_epoch = 5
    models.save_teacher(t, tmp_path / "t.ckpt")
    t2 = models.load_teacher(tmp_path / "t.ckpt")
    assert t2.assigned_group == t.assigned_group
    assert t2.best_epoch == 5
    assert t2.cfg == t.cfg
    for n in t.params:
        assert np.array_equal(t2.params[n], t.params[n])

    a = models.new_adaptor("DLDPO", 4, 8, seed=14)
    models.save_adaptor(a, tmp_path / "a.ckpt")
    a2 = models.load_adaptor(tmp_path / "a.ckpt")
    assert (a2.kind, a2.n_teachers, a2.emb_dim) == ("DLDPO", 4, 8)
    for n in a.params:
        assert np.array_equal(a2.params[n], a.params[n])

    s = models.new_student(CFG, "eaf_kd", np.arange(20), seed=15)
    models.save_student(s, tmp_path / "s.ckpt")
    s2 = models.load_student(tmp_path / "s.ckpt")
    assert s2.mode == "eaf_kd"
    assert np.array_equal(s2.class_ids, s.class_ids)
    for n in s.params:
        assert np.array_equal(s2.params[n], s.params[n])
