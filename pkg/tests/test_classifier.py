import dataclasses
import math

import numpy as np
import pytest

from parloop.classifier import (
    Checkpoint,
    Dataset,
    Hyperparameters,
    ModelConfig,
    forward,
    init_params,
    load_checkpoint,
    lr_schedule,
    predict,
    predict_proba,
    save_checkpoint,
    train,
)
from parloop.classifier.checkpoint import dumps_checkpoint, loads_checkpoint
from parloop.classifier.model import cross_entropy, is_decayed, param_shapes, softmax
from parloop.classifier.training import AdamW, clip_gradients, evaluate
from parloop.errors import ConfigError, DivergenceError, ParloopError, SchemaVersionError, ShapeError
from parloop.tokenizer import CLS, PAD, SEP

from conftest import grad_check, toy_batch

TINY = ModelConfig(vocab_size=20, num_layers=2, num_heads=2, d_model=16, d_ff=32, max_len=16, seed=5)


def separable(n=64, length=10, seed=0):
    """Label is whether the first real token is 4 (class 0) or 5 (class 1); the rest is noise."""
    rng = np.random.default_rng(seed)
    ids, mask, _ = toy_batch(rng, n, length, 12)
    labels = np.arange(n) % 2
    ids[:, 1] = 4 + labels
    return Dataset(ids, mask, labels)


class TestForward:
    def test_shapes(self):
        ids, mask, _ = toy_batch(np.random.default_rng(0), 3, 8)
        assert forward(init_params(TINY), TINY, ids, mask).shape == (3, 2)

    def test_pad_only_is_finite(self):
        ids = np.zeros((2, 8), np.int64)
        mask = np.zeros((2, 8), np.int8)
        assert np.isfinite(forward(init_params(TINY), TINY, ids, mask)).all()

    def test_attention_ignores_padding(self):
        ids, mask, _ = toy_batch(np.random.default_rng(1), 6, 8)
        _, cache = forward(init_params(TINY), TINY, ids, mask, keep_cache=True)
        for lc in cache["layers"]:
            p = lc["probs"]
            km = mask.astype(bool)[:, None, None, :]
            assert np.allclose(p.sum(-1), 1.0)
            assert np.all(p[np.broadcast_to(~km, p.shape)] == 0)

    def test_padding_content_irrelevant(self):
        ids, mask, _ = toy_batch(np.random.default_rng(2), 6, 8)
        other = ids.copy()
        other[mask == 0] = 7
        params = init_params(TINY)
        assert np.allclose(forward(params, TINY, ids, mask), forward(params, TINY, other, mask))

    def test_trim_matches_full_width(self):
        cfg = dataclasses.replace(TINY, max_len=512)
        ids, mask, _ = toy_batch(np.random.default_rng(3), 4, 12)
        wide_ids = np.full((4, 512), PAD, np.int64)
        wide_mask = np.zeros((4, 512), np.int8)
        wide_ids[:, :12], wide_mask[:, :12] = ids, mask
        params = init_params(cfg)
        assert np.allclose(forward(params, cfg, ids, mask), forward(params, cfg, wide_ids, wide_mask), atol=1e-5)

    def test_shape_errors(self):
        params = init_params(TINY)
        with pytest.raises(ShapeError):
            forward(params, TINY, np.zeros((2, 17), np.int64), np.ones((2, 17), np.int8))
        with pytest.raises(ShapeError):
            forward(params, TINY, np.full((1, 4), 20), np.ones((1, 4), np.int8))
        with pytest.raises(ShapeError):
            forward(params, dataclasses.replace(TINY, vocab_size=30), np.zeros((1, 4), np.int64), np.ones((1, 4)))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(vocab_size=10, d_model=10, num_heads=3)
        with pytest.raises(ValueError):
            ModelConfig(vocab_size=10, dropout=1.0)


class TestGradients:
    def test_no_dropout(self):
        cfg = dataclasses.replace(TINY, dtype="float64", dropout=0.0, max_len=8)
        ids, mask, labels = toy_batch(np.random.default_rng(4), 4, 8)
        errors = grad_check(cfg, ids, mask, labels)
        assert max(errors.values()) < 1e-4, errors

    def test_with_dropout(self):
        cfg = dataclasses.replace(TINY, dtype="float64", dropout=0.2, max_len=8, num_layers=1)
        ids, mask, labels = toy_batch(np.random.default_rng(5), 3, 8)
        errors = grad_check(cfg, ids, mask, labels, dropout_seed=9)
        assert max(errors.values()) < 1e-4, errors


class TestLoss:
    def test_uniform_is_ln2(self):
        assert cross_entropy(np.zeros((3, 2)), np.array([0, 1, 1])) == pytest.approx(math.log(2))

    def test_confident_is_near_zero(self):
        assert cross_entropy(np.array([[20.0, -20.0]]), np.array([0])) < 1e-12

    def test_bad_labels(self):
        with pytest.raises(ValueError):
            cross_entropy(np.zeros((1, 2)), np.array([2]))


class TestSchedule:
    def test_examples(self):
        assert lr_schedule(0, 100, 2e-5, 0.1) == 0.0
        assert lr_schedule(10, 100, 2e-5, 0.1) == pytest.approx(2e-5)
        assert lr_schedule(55, 100, 2e-5, 0.1) == pytest.approx(1e-5)
        assert lr_schedule(100, 100, 2e-5, 0.1) == 0.0

    def test_warmup_rounds_up(self):
        assert lr_schedule(2, 15, 1.0, 0.1) == pytest.approx(1.0)
        assert lr_schedule(1, 15, 1.0, 0.1) == pytest.approx(0.5)

    def test_hyper_validation(self):
        with pytest.raises(ConfigError) as exc:
            Hyperparameters(warmup_fraction=1.5)
        assert exc.value.field == "warmup_fraction"


class TestOptimizer:
    def test_decay_groups(self):
        decayed = {n for n in param_shapes(TINY) if is_decayed(n)}
        assert "layer0.attn.q.w" in decayed and "embed.token" in decayed and "head.w" in decayed
        assert not decayed & {"layer0.attn.q.b", "layer0.ln1.g", "layer0.ffn.b1", "head.b"}

    def test_first_step_matches_closed_form(self):
        h = Hyperparameters(weight_decay=0.1)
        p = {"x.w": np.array([1.0, -2.0]), "x.b": np.array([1.0])}
        g = {"x.w": np.array([0.5, 0.5]), "x.b": np.array([-3.0])}
        AdamW(p, h).step(p, g, 0.01)
        # decay then a unit-magnitude Adam step of size lr
        assert np.allclose(p["x.w"], [1.0 * 0.999 - 0.01, -2.0 * 0.999 - 0.01], atol=1e-7)
        assert np.allclose(p["x.b"], [1.01], atol=1e-7)

    def test_clip(self):
        g = {"a": np.array([3.0, 4.0])}
        assert clip_gradients(g, 1.0) == 5.0
        assert np.linalg.norm(g["a"]) == pytest.approx(1.0, abs=1e-6)


class TestTraining:
    def test_learns_separable_toy(self):
        data = separable()
        cfg = dataclasses.replace(TINY, vocab_size=12, dropout=0.0)
        hyper = Hyperparameters(epochs=20, batch_size=8, learning_rate=3e-3, seed=1)
        best, hist = train(data, data, cfg, hyper)
        assert max(hist.train_acc) == 1.0
        assert evaluate(best.weights, cfg, data)[1] == 1.0

    def test_best_is_min_val_loss(self):
        data = separable(32, seed=1)
        cfg = dataclasses.replace(TINY, vocab_size=12)
        best, hist = train(data.subset(range(24)), data.subset(range(24, 32)), cfg,
                           Hyperparameters(epochs=6, batch_size=8, learning_rate=1e-3))
        assert best.val_loss == min(hist.val_loss)
        assert best.epoch == hist.best_epoch == hist.val_loss.index(min(hist.val_loss)) + 1
        assert evaluate(best.weights, cfg, data.subset(range(24, 32)))[0] == pytest.approx(best.val_loss)

    def test_patience_not_reached_runs_all(self):
        data = separable(16)
        cfg = dataclasses.replace(TINY, vocab_size=12)
        _, hist = train(data, data, cfg, Hyperparameters(epochs=4, batch_size=8, patience=50))
        assert len(hist.val_loss) == 4 and not hist.stopped_early

    def test_early_stop(self):
        data = separable(16)
        cfg = dataclasses.replace(TINY, vocab_size=12)
        # a learning rate this small cannot move validation loss in fp32 after the first epoch
        _, hist = train(data, data, cfg, Hyperparameters(epochs=10, batch_size=8, learning_rate=1e-12, patience=2))
        assert hist.stopped_early and len(hist.val_loss) < 10

    def test_deterministic(self):
        data = separable(16)
        cfg = dataclasses.replace(TINY, vocab_size=12)
        hyper = Hyperparameters(epochs=2, batch_size=4, learning_rate=1e-3, seed=3)
        a, ha = train(data, data, cfg, hyper)
        b, hb = train(data, data, cfg, hyper)
        assert ha.to_csv() == hb.to_csv()
        assert all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)

    def test_divergence(self):
        data = separable(16)
        cfg = dataclasses.replace(TINY, vocab_size=12, num_layers=1)
        with pytest.raises(DivergenceError):
            train(data, data, cfg, Hyperparameters(epochs=5, batch_size=4, learning_rate=1e6, max_grad_norm=0,
                                                   warmup_fraction=0.0))

    def test_history_csv(self):
        data = separable(8)
        cfg = dataclasses.replace(TINY, vocab_size=12)
        _, hist = train(data, data, cfg, Hyperparameters(epochs=2, batch_size=4))
        lines = hist.to_csv().splitlines()
        assert lines[0].startswith("epoch,") and len(lines) == 3


class TestPredict:
    def head_only(self, bias):
        params = {k: np.zeros_like(v) for k, v in init_params(TINY).items()}
        for k in params:
            if k.endswith(".g"):
                params[k][:] = 1.0
        params["head.b"][:] = bias
        return params

    def test_probability_example(self):
        ids, mask, _ = toy_batch(np.random.default_rng(6), 2, 6)
        p = predict_proba(self.head_only([3.2, -1.1]), TINY, (ids, mask))
        assert p[0, 0] == pytest.approx(0.98661, abs=1e-4)
        assert p[0].sum() == pytest.approx(1.0)
        assert np.allclose(softmax(np.array([[3.2, -1.1]])), p[:1], atol=1e-6)

    def test_tie_goes_to_undefined(self):
        ids, mask, _ = toy_batch(np.random.default_rng(7), 3, 6)
        assert list(predict(self.head_only([0.0, 0.0]), TINY, (ids, mask))) == [0, 0, 0]

    def test_permutation_invariant(self):
        ids, mask, _ = toy_batch(np.random.default_rng(8), 90, 10)
        params = init_params(TINY)
        p = predict_proba(params, TINY, (ids, mask))
        perm = np.random.default_rng(9).permutation(90)
        assert np.array_equal(predict_proba(params, TINY, (ids[perm], mask[perm])), p[perm])

    def test_empty(self):
        assert predict_proba(init_params(TINY), TINY, (np.zeros((0, 4), int), np.zeros((0, 4)))).shape == (0, 2)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        ids, mask, _ = toy_batch(np.random.default_rng(10), 4, 8)
        ck = Checkpoint(init_params(TINY), TINY, Hyperparameters(), 3, 0.25, 0.5)
        save_checkpoint(ck, tmp_path / "ck.bin")
        back = load_checkpoint(tmp_path / "ck.bin")
        assert back.config == TINY and back.hyper == ck.hyper and back.epoch == 3
        assert np.array_equal(forward(back.weights, TINY, ids, mask), forward(ck.weights, TINY, ids, mask))

    def test_float64_round_trip_close(self):
        cfg = dataclasses.replace(TINY, dtype="float64")
        ck = Checkpoint(init_params(cfg), cfg, None, 0, 1.0, 0.0)
        back = loads_checkpoint(dumps_checkpoint(ck))
        assert back.weights["head.w"].dtype == np.float64
        assert np.allclose(back.weights["head.w"], ck.weights["head.w"], rtol=1e-6)

    def test_corruption(self):
        blob = dumps_checkpoint(Checkpoint(init_params(TINY), TINY, None, 0, 1.0, 0.0))
        with pytest.raises(ParloopError):
            loads_checkpoint(b"X" + blob[1:])
        with pytest.raises(ParloopError):
            loads_checkpoint(blob[:-4])
        with pytest.raises(SchemaVersionError):
            loads_checkpoint(blob[:8] + (2).to_bytes(4, "little") + blob[12:])


def test_specials_are_fixed():
    assert (PAD, CLS, SEP) == (0, 2, 3)
