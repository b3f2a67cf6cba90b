"""Model zoo: gradient correctness, masking invariance, capacity, checkpoints."""
import numpy as np
import pytest

from newsbench.errors import ConfigError, ValidationError
from newsbench.models import (
    AdamW,
    Checkpoint,
    ModelConfig,
    build_model,
    classical_baseline_fit_predict,
    finite_difference_check,
    weighted_bce_loss,
)
from newsbench.models.autodiff import sigmoid_values


def _tiny_config(family, **overrides):
    base = dict(family=family, input_dim=6, head_hidden=4, dropout=0.0, seed=7)
    if family in ("rnn", "gru", "lstm", "cnn", "transformer"):
        base.update(view="all", input_dim=5, proj_dim=3, rnn_hidden=4, cnn_channels=4)
    if family == "transformer":
        base.update(d_model=8, n_heads=2, ffn_dim=6, max_len=8)
    if family == "mlp+source_emb":
        base.update(source_vocab_size=4, source_emb_dim=2)
    base.update(overrides)
    return ModelConfig(**base)


def _article_batch(rng, n=4, dim=6):
    return {
        "x": rng.standard_normal((n, dim)),
        "source_idx": rng.integers(0, 4, size=n),
        "avg_eng": rng.standard_normal(n),
    }


def _series_batch(rng, n=3, length=3, dim=5, pad_tail=0):
    mask = np.ones((n, length))
    if pad_tail:
        mask[:, -pad_tail:] = 0.0
    return {
        "text": rng.standard_normal((n, length, dim)),
        "numeric": rng.standard_normal((n, length, 5)),
        "mask": mask,
    }


def _batch_for(family, rng, **kwargs):
    if family.startswith("mlp"):
        return _article_batch(rng, **kwargs)
    return _series_batch(rng, **kwargs)


def _labels(rng, n):
    return (rng.random(n) < 0.5).astype(np.float64)


ALL_NEURAL = ["mlp", "mlp+source_emb", "mlp+avg_eng", "mlp+gating", "rnn", "gru", "lstm", "cnn", "transformer"]


class TestGradients:
    @pytest.mark.parametrize("family", ALL_NEURAL)
    def test_family_matches_finite_differences(self, family):
        rng = np.random.default_rng(13)
        model = build_model(_tiny_config(family))
        batch = _batch_for(family, rng)
        n = len(batch.get("x", batch.get("mask")))
        y = _labels(rng, n)

        def loss():
            return weighted_bce_loss(model.forward(batch, train=False), y, w_pos=2.0)

        errors = finite_difference_check(loss, model.parameters(), rel_tol=1e-4)
        assert max(errors.values()) <= 1e-4

    def test_gating_parameters_are_in_the_graph(self):
        model = build_model(_tiny_config("mlp+gating"))
        assert {"gate_text", "gate_eng", "gate_z", "lift_w", "lift_b"} <= set(model.parameters())

    def test_numeric_projection_is_in_the_graph(self):
        model = build_model(_tiny_config("gru"))
        assert {"proj_w", "proj_b"} <= set(model.parameters())


class TestMlpContracts:
    def test_zero_weights_give_bias_logit(self):
        model = build_model(_tiny_config("mlp"))
        arrays = {name: np.zeros_like(p.value) for name, p in model.parameters().items()}
        arrays["head_b2"] = np.array([0.7])
        model.set_parameters(arrays)
        rng = np.random.default_rng(0)
        out = model.forward({"x": rng.standard_normal((5, 6))})
        assert np.allclose(out.value, 0.7)

    def test_eval_mode_is_deterministic(self):
        model = build_model(_tiny_config("mlp", dropout=0.5))
        x = {"x": np.random.default_rng(1).standard_normal((4, 6))}
        a = model.forward(x, train=False).value
        b = model.forward(x, train=False).value
        assert np.array_equal(a, b)

    def test_train_mode_dropout_changes_output(self):
        model = build_model(_tiny_config("mlp", dropout=0.5))
        x = {"x": np.random.default_rng(1).standard_normal((64, 6))}
        rng = np.random.default_rng(2)
        a = model.forward(x, train=True, rng=rng).value
        b = model.forward(x, train=True, rng=rng).value
        assert not np.array_equal(a, b)

    def test_dim_mismatch_is_config_error(self):
        model = build_model(_tiny_config("mlp"))
        with pytest.raises(ConfigError, match="input_dim"):
            model.forward({"x": np.zeros((2, 9))})

    def test_same_seed_same_initialization(self):
        a = build_model(_tiny_config("gru"))
        b = build_model(_tiny_config("gru"))
        for name in a.parameters():
            assert np.array_equal(a.parameters()[name].value, b.parameters()[name].value)


class TestMasking:
    @pytest.mark.parametrize("family", ["rnn", "gru", "lstm", "cnn", "transformer"])
    def test_appending_padded_rows_keeps_logit(self, family):
        rng = np.random.default_rng(21)
        config = _tiny_config(family)
        model = build_model(config)
        batch = _series_batch(rng, n=3, length=3)
        base = model.forward(batch, train=False).value

        extended = {
            "text": np.concatenate([batch["text"], rng.standard_normal((3, 2, 5))], axis=1),
            "numeric": np.concatenate([batch["numeric"], rng.standard_normal((3, 2, 5))], axis=1),
            "mask": np.concatenate([batch["mask"], np.zeros((3, 2))], axis=1),
        }
        out = model.forward(extended, train=False).value
        # different array shapes take different BLAS paths, so allow last-ulp noise
        np.testing.assert_allclose(out, base, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("family", ["rnn", "gru", "lstm", "cnn", "transformer"])
    def test_padded_content_is_ignored(self, family):
        rng = np.random.default_rng(22)
        model = build_model(_tiny_config(family))
        batch = _series_batch(rng, n=3, length=5, pad_tail=2)
        base = model.forward(batch, train=False).value
        scrambled = dict(batch)
        scrambled["text"] = batch["text"].copy()
        scrambled["numeric"] = batch["numeric"].copy()
        scrambled["text"][:, 3:, :] = 1e6
        scrambled["numeric"][:, 3:, :] = -1e6
        out = model.forward(scrambled, train=False).value
        assert np.array_equal(out, base)

    def test_cnn_permuting_padded_rows_keeps_logit(self):
        rng = np.random.default_rng(23)
        model = build_model(_tiny_config("cnn"))
        batch = _series_batch(rng, n=2, length=5, pad_tail=2)
        base = model.forward(batch, train=False).value
        permuted = dict(batch)
        permuted["text"] = batch["text"].copy()
        permuted["text"][:, [3, 4], :] = batch["text"][:, [4, 3], :]
        assert np.array_equal(model.forward(permuted, train=False).value, base)

    def test_length_one_sequences_are_well_defined(self):
        rng = np.random.default_rng(24)
        for family in ("rnn", "gru", "lstm", "cnn", "transformer"):
            model = build_model(_tiny_config(family))
            out = model.forward(_series_batch(rng, n=2, length=1), train=False).value
            assert out.shape == (2,)
            assert np.all(np.isfinite(out))

    def test_all_zero_mask_rejected(self):
        rng = np.random.default_rng(25)
        model = build_model(_tiny_config("gru"))
        batch = _series_batch(rng, n=2, length=3)
        batch["mask"] = np.zeros((2, 3))
        with pytest.raises(ValidationError, match="unmasked"):
            model.forward(batch)

    def test_transformer_attention_zero_on_padded_keys(self):
        rng = np.random.default_rng(26)
        model = build_model(_tiny_config("transformer"))
        batch = _series_batch(rng, n=2, length=4, pad_tail=2)
        model.forward(batch, train=False)
        attn = model.last_attention  # (n, heads, query, key)
        assert np.all(attn[:, :, :, 2:] == 0.0)
        assert attn.sum(axis=-1) == pytest.approx(np.ones_like(attn.sum(axis=-1)))

    def test_transformer_single_step_independent_of_length_with_zero_positions(self):
        rng = np.random.default_rng(27)
        config = _tiny_config("transformer")
        model = build_model(config)
        arrays = model.parameter_arrays()
        arrays["pos"] = np.zeros_like(arrays["pos"])
        model.set_parameters(arrays)
        text = rng.standard_normal((2, 1, 5))
        numeric = rng.standard_normal((2, 1, 5))
        base = model.forward({"text": text, "numeric": numeric, "mask": np.ones((2, 1))}).value
        for extra in (2, 5):
            batch = {
                "text": np.concatenate([text, np.zeros((2, extra, 5))], axis=1),
                "numeric": np.concatenate([numeric, np.zeros((2, extra, 5))], axis=1),
                "mask": np.concatenate([np.ones((2, 1)), np.zeros((2, extra))], axis=1),
            }
            np.testing.assert_allclose(model.forward(batch).value, base, rtol=0, atol=1e-10)


class TestCnnTimeInvariance:
    def test_single_step_pool_equals_activation(self):
        rng = np.random.default_rng(28)
        model = build_model(_tiny_config("cnn", view="text_only"))
        batch = {"text": rng.standard_normal((2, 1, 5)),
                 "numeric": np.zeros((2, 1, 5)), "mask": np.ones((2, 1))}
        out = model.forward(batch).value
        assert np.all(np.isfinite(out))

    def test_interior_activations_constant_for_constant_input(self):
        rng = np.random.default_rng(29)
        model = build_model(_tiny_config("cnn", view="text_only"))
        row = rng.standard_normal(5)
        text = np.tile(row, (2, 7, 1))
        batch = {"text": text, "numeric": np.zeros((2, 7, 5)), "mask": np.ones((2, 7))}
        x, mask = model._assemble(batch)
        conv = model._conv(x, "conv1").value
        interior = conv[:, 1:-1, :]
        assert np.allclose(interior, interior[:, :1, :])


class TestViews:
    def test_view_controls_step_width(self):
        assert build_model(_tiny_config("gru", view="all")).step_dim == 5 + 3
        assert build_model(_tiny_config("gru", view="text_only")).step_dim == 5
        assert build_model(_tiny_config("gru", view="numeric_only")).step_dim == 3

    def test_text_only_ignores_numeric(self):
        rng = np.random.default_rng(30)
        model = build_model(_tiny_config("gru", view="text_only"))
        batch = _series_batch(rng)
        base = model.forward(batch).value
        batch2 = dict(batch)
        batch2["numeric"] = rng.standard_normal(batch["numeric"].shape)
        assert np.array_equal(model.forward(batch2).value, base)


class TestCapacity:
    @pytest.mark.parametrize("family", ALL_NEURAL)
    def test_separable_set_reaches_high_train_accuracy(self, family):
        rng = np.random.default_rng(31)
        n, dim = 64, 6
        w = rng.standard_normal(dim)
        x = rng.standard_normal((n, dim))
        margin = x @ w
        x += 0.3 * np.sign(margin)[:, None] * w[None, :] / np.linalg.norm(w)  # enforce a margin
        y = (x @ w > 0).astype(np.float64)

        if family.startswith("mlp"):
            batch = {"x": x, "source_idx": rng.integers(0, 4, size=n), "avg_eng": np.zeros(n)}
            config = _tiny_config(family)
        else:
            batch = {
                "text": np.repeat(x[:, None, :], 3, axis=1) if False else np.tile(x[:, None, :], (1, 3, 1)),
                "numeric": np.zeros((n, 3, 5)),
                "mask": np.ones((n, 3)),
            }
            config = _tiny_config(family, input_dim=dim)
        model = build_model(config)
        optimizer = AdamW(model.parameters(), lr=0.02, weight_decay=0.0)
        train_rng = np.random.default_rng(32)
        accuracy = 0.0
        for epoch in range(200):
            logits = model.forward(batch, train=True, rng=train_rng)
            loss = weighted_bce_loss(logits, y)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            predictions = sigmoid_values(model.forward(batch, train=False).value) >= 0.5
            accuracy = (predictions == y.astype(bool)).mean()
            if accuracy >= 0.99:
                break
        assert accuracy >= 0.99, f"{family} reached only {accuracy:.3f} after {epoch + 1} epochs"


class TestCheckpoints:
    def test_save_load_forward_bit_identical(self, tmp_path):
        rng = np.random.default_rng(33)
        for family in ("mlp", "gru", "transformer"):
            model = build_model(_tiny_config(family))
            batch = _batch_for(family, rng)
            before = model.forward(batch).value
            path = tmp_path / f"{family.replace('+', '_')}.npz"
            Checkpoint.from_model(model, epoch=3, selection_score=0.5).save(str(path))
            restored = Checkpoint.load(str(path)).restore()
            after = restored.forward(batch).value
            assert np.array_equal(before, after)

    def test_metadata_round_trip(self, tmp_path):
        model = build_model(_tiny_config("mlp"))
        path = tmp_path / "ckpt.npz"
        Checkpoint.from_model(model, epoch=11, selection_score=0.625).save(str(path))
        loaded = Checkpoint.load(str(path))
        assert loaded.epoch == 11
        assert loaded.selection_score == 0.625
        assert loaded.config == model.config

    def test_unknown_entries_rejected(self, tmp_path):
        model = build_model(_tiny_config("mlp"))
        path = tmp_path / "ckpt.npz"
        Checkpoint.from_model(model, epoch=0, selection_score=0.0).save(str(path))
        data = dict(np.load(str(path), allow_pickle=False))
        data["rogue_field"] = np.zeros(1)
        np.savez(str(path), **data)
        with pytest.raises(ValidationError, match="unknown"):
            Checkpoint.load(str(path))


class TestClassicalBaselines:
    def test_dummy_f1_tracks_prevalence(self):
        rng = np.random.default_rng(34)
        prevalence = 0.05
        f1s = []
        for seed in range(40):
            y_train = (rng.random(2000) < prevalence).astype(np.int64)
            y_test = (rng.random(2000) < prevalence).astype(np.int64)
            x = np.zeros((2000, 2))
            scores, preds = classical_baseline_fit_predict("dummy_stratified", x, y_train, x, seed=seed)
            tp = int(((preds == 1) & (y_test == 1)).sum())
            fp = int(((preds == 1) & (y_test == 0)).sum())
            fn = int(((preds == 0) & (y_test == 1)).sum())
            p = tp / (tp + fp) if tp + fp else 0.0
            r = tp / (tp + fn) if tp + fn else 0.0
            f1s.append(2 * p * r / (p + r) if p + r else 0.0)
        assert abs(np.mean(f1s) - prevalence) < 0.02

    def test_linear_separates_two_points(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0]])
        y = np.array([0, 1])
        scores, preds = classical_baseline_fit_predict("linear", x, y, x)
        assert preds.tolist() == [0, 1]

    def test_tree_predicts_majority_on_constant_features(self):
        x = np.zeros((20, 3))
        y = np.array([1] * 15 + [0] * 5)
        scores, preds = classical_baseline_fit_predict("tree_ensemble", x, y, np.zeros((4, 3)), seed=1)
        assert preds.tolist() == [1, 1, 1, 1]

    def test_single_class_training_rejected(self):
        x = np.zeros((5, 2))
        with pytest.raises(ValidationError):
            classical_baseline_fit_predict("linear", x, np.ones(5, dtype=int), x)
