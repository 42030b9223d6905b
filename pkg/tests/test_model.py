import math

import numpy as np
import pytest

from dbnmix.errors import ConfigError, NumericError, ShapeError
from dbnmix.model import (DualBranchModel, NetworkSpec, SingleBranchModel,
                          dbn_loss, load_checkpoint, plain_softmax,
                          save_checkpoint, sbn_forward_train, scaled_softmax,
                          temperatures, uniform_schedule)
from dbnmix.numerics import backward, constant

from oracles import (cross_entropy_rows, finite_difference_grads, max_rel_err,
                     softmax_rows)


class TestTemperatures:
    def test_largest_class_has_temperature_exactly_one(self):
        sched = temperatures(3.0, 0.6, [1000, 500, 10])
        assert sched.t[0] == 1.0
        assert np.all(sched.t >= 1.0)

    def test_direct_evaluation_of_the_formula(self):
        # eps = 0.6, eta = 3, N_k / N_max = 0.01:
        # B = 0.6 * 0.01 + 0.4 = 0.406, T = (1 / 0.406)^(1/3)
        sched = temperatures(3.0, 0.6, [1000, 10])
        b_expected = 0.6 * (10 / 1000) + (1 - 0.6)
        t_expected = (1.0 / b_expected) ** (1.0 / 3.0)
        assert abs(sched.b[1] - b_expected) <= 1e-12
        assert abs(sched.t[1] - t_expected) <= 1e-12

    def test_epsilon_to_zero_disables_scaling(self):
        sched = temperatures(3.0, 1e-12, [1000, 10, 1])
        assert np.allclose(sched.t, 1.0, rtol=0, atol=1e-9)

    def test_monotone_nonincreasing_in_class_count(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            counts = rng.integers(1, 5000, size=12)
            sched = temperatures(float(rng.uniform(0.5, 10)),
                                 float(rng.uniform(0.05, 1.0)), counts)
            order = np.argsort(counts)
            assert np.all(np.diff(sched.t[order]) <= 1e-15)

    def test_parameter_validation(self):
        with pytest.raises(ConfigError):
            temperatures(0.0, 0.6, [10, 5])
        with pytest.raises(ConfigError):
            temperatures(3.0, 0.0, [10, 5])
        with pytest.raises(ConfigError):
            temperatures(3.0, 1.5, [10, 5])


class TestScaledSoftmax:
    def test_all_ones_temperature_matches_plain_softmax_oracle(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(6, 4)) * 3
        sched = uniform_schedule(4)
        p = scaled_softmax(constant(z), sched)
        assert np.allclose(p.array, softmax_rows(z), rtol=0, atol=1e-15)

    def test_hand_evaluated_two_class_case(self):
        # z = [2, 2], T = [1, 2] -> p propto [e^2, e^1] = [e/(e+1), 1/(e+1)]
        sched = temperatures(1.0, 1.0, [2, 1])
        assert np.allclose(sched.t, [1.0, 2.0], rtol=0, atol=1e-15)
        p = scaled_softmax(constant([[2.0, 2.0]]), sched)
        e = math.e
        assert np.allclose(p.array, [[e / (e + 1), 1 / (e + 1)]], rtol=0, atol=1e-15)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(64, 7)) * 10
        sched = temperatures(2.0, 0.9, rng.integers(1, 100, size=7))
        p = scaled_softmax(constant(z), sched).array
        assert np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-9)
        assert np.all(p > 0.0) and np.all(p < 1.0)

    def test_shift_invariance_only_for_uniform_temperatures(self):
        z = np.array([[0.3, -1.2, 2.0]])
        uniform = uniform_schedule(3)
        p0 = scaled_softmax(constant(z), uniform).array
        p1 = scaled_softmax(constant(z + 5.0), uniform).array
        assert np.allclose(p0, p1, rtol=0, atol=1e-12)
        nonuniform = temperatures(1.0, 0.5, [100, 10, 1])
        q0 = scaled_softmax(constant(z), nonuniform).array
        q1 = scaled_softmax(constant(z + 5.0), nonuniform).array
        assert not np.allclose(q0, q1, rtol=0, atol=1e-6)


class TestDbnLoss:
    def test_one_hot_certain_prediction_gives_zero_loss(self):
        p = np.array([[1.0 - 1e-12, 1e-12]])
        y = np.array([[1.0, 0.0]])
        loss = dbn_loss(constant(p), y, constant(p), y)
        assert loss.item() == pytest.approx(0.0, abs=1e-11)

    def test_uniform_prediction_gives_log_k(self):
        k = 5
        p = np.full((3, k), 1.0 / k)
        y = np.eye(k)[[0, 2, 4]]
        loss = dbn_loss(constant(p), y, constant(p), y)
        assert loss.item() == pytest.approx(math.log(k), rel=1e-12)

    def test_equals_mean_of_scalar_loop_oracles(self):
        rng = np.random.default_rng(3)
        p_c = softmax_rows(rng.normal(size=(8, 4)))
        p_r = softmax_rows(rng.normal(size=(8, 4)))
        y_c = np.eye(4)[rng.integers(0, 4, 8)]
        y_r = 0.5 * np.eye(4)[rng.integers(0, 4, 8)] + 0.5 * np.eye(4)[rng.integers(0, 4, 8)]
        loss = dbn_loss(constant(p_c), y_c, constant(p_r), y_r)
        expected = 0.5 * cross_entropy_rows(p_c, y_c) + 0.5 * cross_entropy_rows(p_r, y_r)
        assert loss.item() == pytest.approx(expected, rel=1e-14)

    def test_rejects_nonpositive_probability_under_label(self):
        p = np.array([[0.0, 1.0]])
        y = np.array([[1.0, 0.0]])
        with pytest.raises(NumericError):
            dbn_loss(constant(p), y, constant(p), y)

    def test_total_is_exactly_the_mean_of_branch_losses(self):
        from dbnmix.numerics import soft_cross_entropy
        rng = np.random.default_rng(17)
        p_c = softmax_rows(rng.normal(size=(5, 3)))
        p_r = softmax_rows(rng.normal(size=(5, 3)))
        y_c = np.eye(3)[rng.integers(0, 3, 5)]
        y_r = np.eye(3)[rng.integers(0, 3, 5)]
        total = dbn_loss(constant(p_c), y_c, constant(p_r), y_r).item()
        ce_c = soft_cross_entropy(constant(p_c), y_c).item()
        ce_r = soft_cross_entropy(constant(p_r), y_r).item()
        assert total == 0.5 * ce_c + 0.5 * ce_r


def small_dbn(seed=0):
    spec = NetworkSpec(in_dim=3, num_classes=4, hidden=(6, 5))
    return DualBranchModel(spec, seed=seed)


class TestDualBranchModel:
    def test_heads_are_parameter_disjoint(self):
        model = small_dbn()
        names = model.store.names()
        assert any(n.startswith("head_c.") for n in names)
        assert any(n.startswith("head_r.") for n in names)
        assert not any(n.startswith("head_c.") and n.startswith("head_r.")
                       for n in names)

    def test_identical_inputs_and_heads_give_identical_logits(self):
        model = small_dbn(seed=1)
        for kind in ("w0", "b0"):
            model.store[f"head_r.{kind}"].array[...] = \
                model.store[f"head_c.{kind}"].array
        x = np.random.default_rng(2).normal(size=(5, 3))
        z_c, z_r = model.forward_train(x, x)
        assert np.array_equal(z_c.array, z_r.array)

    def test_zeroed_heads_give_bias_logits(self):
        model = small_dbn(seed=3)
        for head in ("head_c", "head_r"):
            model.store[f"{head}.w0"].array[...] = 0.0
            model.store[f"{head}.b0"].array[...] = np.arange(4.0)
        x = np.random.default_rng(4).normal(size=(2, 3))
        z_c, z_r = model.forward_train(x, x)
        assert np.array_equal(z_c.array, np.tile(np.arange(4.0), (2, 1)))
        assert np.array_equal(z_r.array, z_c.array)

    def test_backbone_gets_gradient_from_both_branches(self):
        model = small_dbn(seed=5)
        rng = np.random.default_rng(6)
        x_c = rng.normal(size=(4, 3))
        x_r = rng.normal(size=(4, 3))
        y_c = np.eye(4)[rng.integers(0, 4, 4)]
        y_r = np.eye(4)[rng.integers(0, 4, 4)]
        sched = temperatures(3.0, 0.6, [100, 50, 10, 2])

        def loss_value():
            z_c, z_r = model.forward_train(x_c, x_r)
            return dbn_loss(scaled_softmax(z_c, sched), y_c,
                            scaled_softmax(z_r, sched), y_r)

        loss = loss_value()
        model.store.zero_grad()
        backward(loss)
        fd = finite_difference_grads(
            lambda: loss_value().item(),
            {name: t.array for name, t in model.store.items()})
        for name, t in model.store.items():
            assert max_rel_err(t.grad, fd[name]) < 1e-4, name
        # the shared trunk moves even when only one branch's loss changes:
        # gradient contributions from both branches land on backbone.w0
        assert np.any(fd["backbone.w0"] != 0.0)

    def test_infer_is_equal_weight_logit_average(self):
        model = small_dbn(seed=7)
        rng = np.random.default_rng(8)
        x = rng.normal(size=(6, 3))
        z, probs = model.infer(x)
        z_c = model.branch_logits(x, "head_c")
        z_r = model.branch_logits(x, "head_r")
        assert np.array_equal(z, 0.5 * (z_c + z_r))
        assert np.allclose(probs, softmax_rows(z), rtol=0, atol=1e-15)

    def test_infer_identical_heads_equals_single_branch(self):
        model = small_dbn(seed=9)
        for kind in ("w0", "b0"):
            model.store[f"head_r.{kind}"].array[...] = \
                model.store[f"head_c.{kind}"].array
        x = np.random.default_rng(10).normal(size=(3, 3))
        z, _ = model.infer(x)
        assert np.allclose(z, model.branch_logits(x, "head_c"), rtol=0, atol=1e-15)

    def test_infer_opposite_heads_cancel(self):
        model = small_dbn(seed=11)
        model.store["head_r.w0"].array[...] = -model.store["head_c.w0"].array
        model.store["head_r.b0"].array[...] = -model.store["head_c.b0"].array
        x = np.random.default_rng(12).normal(size=(3, 3))
        z, _ = model.infer(x)
        assert np.allclose(z, 0.0, rtol=0, atol=1e-12)

    def test_infer_ignores_any_temperature_schedule(self):
        # temperatures exist only in the training path; inference output is
        # byte-identical no matter which schedule is around
        model = small_dbn(seed=13)
        x = np.random.default_rng(14).normal(size=(4, 3))
        temperatures(3.0, 0.6, [500, 100, 20, 4])
        z1, p1 = model.infer(x)
        temperatures(9.0, 0.2, [500, 100, 20, 4])
        z2, p2 = model.infer(x)
        assert z1.tobytes() == z2.tobytes()
        assert p1.tobytes() == p2.tobytes()

    def test_argmax_of_probabilities_equals_argmax_of_logits(self):
        model = small_dbn(seed=15)
        x = np.random.default_rng(16).normal(size=(32, 3))
        z, probs = model.infer(x)
        assert np.array_equal(z.argmax(axis=1), probs.argmax(axis=1))

    def test_input_shape_validation(self):
        model = small_dbn()
        with pytest.raises(ShapeError):
            model.infer(np.zeros((2, 5)))


class TestSingleBranch:
    def test_sbn_with_tiny_epsilon_matches_plain_ce(self):
        model = SingleBranchModel(NetworkSpec(in_dim=2, num_classes=3), seed=0)
        rng = np.random.default_rng(1)
        x = rng.normal(size=(8, 2))
        y = np.eye(3)[rng.integers(0, 3, 8)]
        sched = temperatures(3.0, 1e-12, [100, 10, 1])
        _, loss_scaled = sbn_forward_train(model, x, y, schedule=sched)
        _, loss_plain = sbn_forward_train(model, x, y, schedule=None)
        assert loss_scaled.item() == pytest.approx(loss_plain.item(), abs=1e-8)

    def test_probability_rows_sum_to_one(self):
        model = SingleBranchModel(NetworkSpec(in_dim=2, num_classes=3), seed=2)
        rng = np.random.default_rng(3)
        x = rng.normal(size=(16, 2))
        y = np.eye(3)[rng.integers(0, 3, 16)]
        p, _ = sbn_forward_train(model, x, y,
                                 schedule=temperatures(2.0, 0.6, [50, 20, 5]))
        assert np.allclose(p.array.sum(axis=1), 1.0, rtol=0, atol=1e-9)

    def test_gradient_check(self):
        model = SingleBranchModel(NetworkSpec(in_dim=2, num_classes=3,
                                              hidden=(4,)), seed=4)
        rng = np.random.default_rng(5)
        x = rng.normal(size=(6, 2))
        y = np.eye(3)[rng.integers(0, 3, 6)]
        sched = temperatures(2.0, 0.5, [30, 10, 2])

        def loss_value():
            _, loss = sbn_forward_train(model, x, y, schedule=sched)
            return loss

        loss = loss_value()
        model.store.zero_grad()
        backward(loss)
        fd = finite_difference_grads(
            lambda: loss_value().item(),
            {name: t.array for name, t in model.store.items()})
        for name, t in model.store.items():
            assert max_rel_err(t.grad, fd[name]) < 1e-4, name


class TestCheckpoint:
    @pytest.mark.parametrize("kind", ["dbn", "sbn"])
    def test_round_trip_is_bit_exact(self, tmp_path, kind):
        spec = NetworkSpec(in_dim=3, num_classes=4, hidden=(6, 5), head_hidden=(4,))
        model = (DualBranchModel if kind == "dbn" else SingleBranchModel)(spec, seed=21)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path, extra_config={"note": "round-trip", "gamma": "inf"})
        back, extra = load_checkpoint(path)
        assert extra == {"note": "round-trip", "gamma": "inf"}
        assert type(back) is type(model)
        assert back.store.names() == model.store.names()
        for name in model.store.names():
            a = model.store[name].array
            b = back.store[name].array
            assert a.tobytes() == b.tobytes(), name

    def test_same_model_saves_identical_bytes(self, tmp_path):
        spec = NetworkSpec(in_dim=2, num_classes=2)
        model = SingleBranchModel(spec, seed=3)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(model, p1)
        save_checkpoint(model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        from dbnmix.errors import ParseError
        with pytest.raises(ParseError):
            load_checkpoint(path)
