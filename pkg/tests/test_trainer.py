from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from longtail.annotations import BBox, ImageRecord
from longtail.errors import TrainingError, ValidationError
from longtail.rng import derive_rng
from longtail.trainer import (
    AugmentationConfig,
    Model,
    ModelConfig,
    RMSPropState,
    TrainConfig,
    augment,
    eval_transform,
    inverse_frequency_weights,
    load_checkpoint,
    predict,
    rmsprop_step,
    save_checkpoint,
    train,
)
from longtail.trainer.model import softmax_cross_entropy

from conftest import make_record


def _image(seed=0, h=48, w=48):
    rng = np.random.default_rng(seed)
    return (rng.random((h, w, 3)) * 255).astype(np.uint8)


class TestAugment:
    def test_identity_path(self):
        cfg = AugmentationConfig(output_resolution=32).identity()
        img = _image(1)
        out = augment(img, cfg, derive_rng(0, "aug"))
        assert np.array_equal(out, eval_transform(img, 32))

    def test_crop_area_fraction_respected(self):
        cfg = AugmentationConfig(output_resolution=32, min_crop_fraction=0.65)
        from longtail.trainer.augment import _crop_window

        for i in range(500):
            rng = derive_rng(i, "crop")
            h, w = 48, 64
            _, _, cw, ch = _crop_window(h, w, cfg, rng)
            assert cw * ch >= 0.65 * h * w - 1e-9

    def test_flip_rate(self):
        cfg = AugmentationConfig(output_resolution=16, flip_probability=0.5)
        img = _image(2, 16, 16)
        img[:, :8] = 0  # asymmetric so flips are detectable
        flips = 0
        n = 10000
        reference = augment(img, cfg.identity(), derive_rng(0, "ref"))
        for i in range(n):
            out = augment(img, cfg, derive_rng(i, "flip"))
            if out[:, :8].mean() > out[:, 8:].mean():
                flips += 1
        rate = flips / n
        sigma = np.sqrt(0.25 / n)
        assert abs(rate - 0.5) < 3 * sigma

    def test_determinism(self):
        cfg = AugmentationConfig(output_resolution=24)
        img = _image(3)
        a = augment(img, cfg, derive_rng(5, "det"))
        b = augment(img, cfg, derive_rng(5, "det"))
        assert np.array_equal(a, b)

    def test_tiny_image_upscaled(self):
        cfg = AugmentationConfig(output_resolution=32)
        out = augment(_image(4, 6, 5), cfg, derive_rng(0, "tiny"))
        assert out.shape == (32, 32, 3)

    def test_invalid_config(self):
        with pytest.raises(ValidationError):
            AugmentationConfig(min_crop_fraction=0.0)


class TestRMSprop:
    def _cfg(self, **kw):
        defaults = dict(learning_rate=0.0045, rmsprop_decay=0.9, momentum=0.9,
                        epsilon=1.0, batch_size=1, max_epochs=1, early_stop_patience=1)
        defaults.update(kw)
        return TrainConfig(**defaults)

    def test_zero_gradient_no_change(self):
        params = {"w": np.array([1.0, -2.0])}
        state = RMSPropState.zeros_like(params)
        new_params, _ = rmsprop_step(params, {"w": np.zeros(2)}, state, self._cfg())
        assert np.array_equal(new_params["w"], params["w"])

    def test_two_steps_match_recurrence(self):
        # independent hand-rolled recurrence of the update equations
        lr, rho, mu, eps = 0.0045, 0.9, 0.9, 1.0
        acc = mom = 0.0
        w_ref = 1.0
        for _ in range(2):
            g = 1.0
            acc = rho * acc + (1 - rho) * g * g
            mom = mu * mom + lr * g / np.sqrt(acc + eps)
            w_ref -= mom

        params = {"w": np.array([1.0])}
        state = RMSPropState.zeros_like(params)
        cfg = self._cfg()
        for _ in range(2):
            params, state = rmsprop_step(params, {"w": np.array([1.0])}, state, cfg)
        assert params["w"][0] == pytest.approx(w_ref, rel=1e-12)

    def test_quadratic_descent(self):
        # minimize w^2 from w0 = 1: loss after 100 steps is strictly below the
        # start (momentum may oscillate near the optimum, so no per-step claim)
        params = {"w": np.array([1.0])}
        state = RMSPropState.zeros_like(params)
        cfg = self._cfg()
        losses = [params["w"][0] ** 2]
        for _ in range(100):
            grads = {"w": 2 * params["w"]}
            params, state = rmsprop_step(params, grads, state, cfg)
            losses.append(params["w"][0] ** 2)
        assert losses[-1] < losses[0]
        assert min(losses) < 0.05 * losses[0]

    def test_nonfinite_gradient_names_tensor(self):
        params = {"fine": np.ones(2), "broken": np.ones(2)}
        grads = {"fine": np.ones(2), "broken": np.array([1.0, np.nan])}
        state = RMSPropState.zeros_like(params)
        with pytest.raises(TrainingError, match="broken"):
            rmsprop_step(params, grads, state, self._cfg())

    def test_inputs_not_mutated(self):
        params = {"w": np.ones(3)}
        state = RMSPropState.zeros_like(params)
        rmsprop_step(params, {"w": np.ones(3)}, state, self._cfg())
        assert np.array_equal(params["w"], np.ones(3))
        assert np.array_equal(state.acc["w"], np.zeros(3))


class TestModel:
    def test_softmax_normalized(self):
        cfg = ModelConfig(classes=("a", "b", "c"), input_resolution=16, channels=(4, 8))
        model = Model(cfg, seed=0)
        x = np.random.default_rng(0).random((5, 16, 16, 3)).astype(np.float32)
        scores, emb = predict(model, (x * 255).astype(np.uint8))
        assert np.allclose(scores.sum(axis=1), 1.0, atol=1e-6)
        assert emb.shape == (5, 64)

    def test_zero_logit_weights_uniform_scores(self):
        cfg = ModelConfig(classes=("a", "b", "c", "d"), input_resolution=16, channels=(4, 8))
        model = Model(cfg, seed=0)
        model.params["logits.weight"][:] = 0
        model.params["logits.bias"][:] = 0
        scores, _ = predict(model, _image(0, 16, 16)[None])
        assert np.allclose(scores, 0.25, atol=1e-7)

    def test_wrong_resolution_rejected(self):
        cfg = ModelConfig(classes=("a", "b"), input_resolution=16, channels=(4, 8))
        model = Model(cfg, seed=0)
        with pytest.raises(ValidationError):
            predict(model, np.zeros((1, 20, 20, 3), np.uint8))

    def test_batch_equals_single(self):
        cfg = ModelConfig(classes=("a", "b", "c"), input_resolution=16, channels=(4, 8))
        model = Model(cfg, seed=3)
        images = np.stack([_image(i, 16, 16) for i in range(7)])
        batch_scores, batch_emb = predict(model, images)
        for i in range(7):
            s, e = predict(model, images[i : i + 1])
            assert np.allclose(s, batch_scores[i : i + 1], atol=1e-6)
            assert np.allclose(e, batch_emb[i : i + 1], atol=1e-5)

    def test_gradient_check_micro_model(self):
        # analytic vs central finite differences in float64 on an 8x8 model
        cfg = ModelConfig(classes=("a", "b", "c"), input_resolution=8,
                          channels=(4, 6), embedding_dim=8, dtype="float64")
        rng = np.random.default_rng(0)
        worst = 0.0
        for draw in range(30):
            model = Model(cfg, seed=draw)
            x = rng.random((2, 8, 8, 3))
            y = rng.integers(0, 3, 2)

            def loss_of() -> float:
                logits, _, _ = model.forward(x)
                return softmax_cross_entropy(logits, y)[0]

            logits, _, cache = model.forward(x, want_cache=True)
            loss, dlogits = softmax_cross_entropy(logits, y)
            grads = model.backward(dlogits, cache)
            h = 1e-6
            for name, w in model.params.items():
                flat = w.reshape(-1)
                for i in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                    keep = flat[i]
                    flat[i] = keep + h
                    lp = loss_of()
                    flat[i] = keep - h
                    lm = loss_of()
                    flat[i] = keep
                    fd = (lp - lm) / (2 * h)
                    analytic = grads[name].reshape(-1)[i]
                    rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8)
                    worst = max(worst, rel)
        assert worst < 1e-4

    def test_weighted_loss_scales(self):
        cfg = ModelConfig(classes=("a", "b"), input_resolution=8, channels=(4, 4))
        model = Model(cfg, seed=1)
        x = np.random.default_rng(1).random((6, 8, 8, 3)).astype(np.float32)
        y = np.array([0, 1, 0, 1, 1, 0])
        logits, _, _ = model.forward(x)
        plain, _ = softmax_cross_entropy(logits, y)
        weighted, _ = softmax_cross_entropy(logits, y, np.full(6, 2.5, np.float32))
        assert weighted == pytest.approx(2.5 * plain, rel=1e-6)


def _blob_loader(rec: ImageRecord) -> np.ndarray:
    rng = np.random.default_rng(int(rec.image_id.split("-")[-1]) * 7919 + 13)
    img = np.zeros((32, 32, 3), np.uint8)
    cy, cx = rng.integers(10, 22, 2)
    yy, xx = np.mgrid[0:32, 0:32]
    blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 28.0)
    channel = 0 if rec.class_label == "red" else 2
    img[:, :, channel] = (blob * 210).astype(np.uint8)
    noise = rng.integers(0, 25, (32, 32, 3), dtype=np.uint8)
    return img + noise


def _blob_records(cls: str, n: int, offset: int = 0) -> list[ImageRecord]:
    return [
        ImageRecord(
            image_id=f"{cls}-{offset + i}",
            location_id="L",
            date=dt.date(2021, 6, 2),
            class_label=cls,
            boxes=(BBox(0, 0, 32, 32),),
            day_night="day",
            source="real",
            width=32,
            height=32,
            file_path=f"{cls}-{offset + i}.png",
        )
        for i in range(n)
    ]


class TestTrainLoop:
    def _setup(self):
        train_set = _blob_records("red", 40) + _blob_records("blue", 40)
        val_set = _blob_records("red", 10, 1000) + _blob_records("blue", 10, 1000)
        cfg = ModelConfig(classes=("blue", "red"), input_resolution=32, channels=(8, 16))
        return cfg, train_set, val_set

    def test_separable_classes_reach_zero_train_error(self):
        cfg, train_set, val_set = self._setup()
        tc = TrainConfig(learning_rate=0.001, epsilon=1e-8, batch_size=16,
                         max_epochs=20, early_stop_patience=20, seed=2)
        model, history = train(cfg, train_set, val_set, tc, _blob_loader)
        from longtail.trainer.loop import predict_records

        scores, _ = predict_records(model, train_set, _blob_loader)
        labels = np.array([cfg.classes.index(r.class_label) for r in train_set])
        train_error = float((scores.argmax(axis=1) != labels).mean())
        assert history.epochs_run <= 20
        assert train_error == 0.0

    def test_patience_one_stops_after_two_epochs(self):
        cfg, train_set, val_set = self._setup()
        tc = TrainConfig(learning_rate=50.0, epsilon=1e-8, batch_size=16,
                         max_epochs=30, early_stop_patience=1, seed=0)
        model, history = train(cfg, train_set, val_set, tc, _blob_loader)
        if history.val_metric[1] >= history.val_metric[0]:
            assert history.epochs_run == 2
            assert history.selected_epoch == 0

    def test_bitwise_reproducible(self):
        cfg, train_set, val_set = self._setup()
        tc = TrainConfig(learning_rate=0.001, epsilon=1e-8, batch_size=16,
                         max_epochs=4, early_stop_patience=4, seed=9)
        model_a, hist_a = train(cfg, train_set, val_set, tc, _blob_loader)
        model_b, hist_b = train(cfg, train_set, val_set, tc, _blob_loader)
        assert hist_a.to_dict() == hist_b.to_dict()
        for name in model_a.params:
            assert np.array_equal(model_a.params[name], model_b.params[name])

    def test_selected_epoch_is_argmin(self):
        cfg, train_set, val_set = self._setup()
        tc = TrainConfig(learning_rate=0.001, epsilon=1e-8, batch_size=16,
                         max_epochs=6, early_stop_patience=6, seed=4)
        _, history = train(cfg, train_set, val_set, tc, _blob_loader)
        assert history.selected_epoch == int(np.argmin(history.val_metric))

    def test_unknown_val_class_rejected(self):
        cfg, train_set, _ = self._setup()
        bad_val = _blob_records("green", 3, 500)
        tc = TrainConfig(max_epochs=1, early_stop_patience=1, seed=0)
        with pytest.raises(TrainingError, match="green"):
            train(cfg, train_set, bad_val, tc, _blob_loader)

    def test_empty_sets_rejected(self):
        cfg, train_set, val_set = self._setup()
        tc = TrainConfig(max_epochs=1, early_stop_patience=1)
        with pytest.raises(TrainingError):
            train(cfg, [], val_set, tc, _blob_loader)
        with pytest.raises(TrainingError):
            train(cfg, train_set, [], tc, _blob_loader)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = ModelConfig(classes=("a", "b", "c"), input_resolution=16, channels=(4, 8))
        model = Model(cfg, seed=5)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path, meta={"note": "test"})
        loaded, meta = load_checkpoint(path)
        assert meta == {"note": "test"}
        assert loaded.config == cfg
        for name in model.params:
            assert np.array_equal(loaded.params[name], model.params[name])

    def test_equal_models_equal_bytes(self, tmp_path):
        cfg = ModelConfig(classes=("a", "b"), input_resolution=16, channels=(4,))
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(Model(cfg, seed=1), a)
        save_checkpoint(Model(cfg, seed=1), b)
        assert a.read_bytes() == b.read_bytes()

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"NOPE....")
        with pytest.raises(ValidationError):
            load_checkpoint(path)


class TestWeights:
    def test_inverse_frequency(self):
        weights = inverse_frequency_weights({"a": 10, "b": 40})
        assert weights["a"] == pytest.approx(4 * weights["b"])
        assert np.mean(list(weights.values())) == pytest.approx(1.0)
