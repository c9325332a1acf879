import math

import numpy as np
import pytest

from app.core.errors import ConfigError
from app.domain.dtos.run_config import OptimizerKind, ScheduleKind
from app.domain.masks import prunable_set
from app.nn.layers import ParameterRole
from app.nn.network import Gradients, ParameterEntry, ParameterStore, backward
from app.services.optimizers import Adam, AdamState, NesterovSGD, SgdState, adam_step, build_optimizer, sgd_nesterov_step
from app.services.pruning import apply_mask, random_mask
from app.services.schedules import Schedule, one_cycle_lr, parent_lr

T = 1000


class TestParentSchedule:
    def test_start(self):
        assert parent_lr(0, T) == 0.1

    def test_flat_until_half(self):
        assert parent_lr(0.5 * T - 1, T) == 0.1

    def test_midpoint_of_decay(self):
        assert parent_lr(0.7 * T, T) == pytest.approx(0.0505)

    def test_floor_from_ninety_percent(self):
        assert parent_lr(0.9 * T, T) == pytest.approx(0.001)
        assert parent_lr(T - 1, T) == pytest.approx(0.001)

    def test_monotone_non_increasing(self):
        rates = [parent_lr(t, T) for t in range(T)]
        assert all(b <= a for a, b in zip(rates, rates[1:]))


class TestOneCycle:
    def test_starts_at_min(self):
        assert one_cycle_lr(0, T, 0.001, 0.1) == pytest.approx(0.001)

    def test_peak_at_warmup_end(self):
        assert one_cycle_lr(0.1 * T, T, 0.001, 0.1) == 0.1

    def test_terminal_value(self):
        assert one_cycle_lr(T, T, 0.001, 0.1) == pytest.approx(1e-7, abs=1e-9)

    def test_continuous_around_peak(self):
        before = one_cycle_lr(0.1 * T - 1e-6, T, 0.001, 0.1)
        after = one_cycle_lr(0.1 * T + 1e-6, T, 0.001, 0.1)
        assert before == pytest.approx(0.1, rel=1e-6)
        assert after == pytest.approx(0.1, rel=1e-6)

    def test_rises_then_falls(self):
        rates = np.array([one_cycle_lr(t, T, 0.001, 0.1) for t in range(T + 1)])
        peak = int(0.1 * T)
        assert np.all(np.diff(rates[:peak + 1]) > 0)
        assert np.all(np.diff(rates[peak:]) < 0)


class TestSchedule:
    def test_constant(self):
        schedule = Schedule.constant(0.01)
        assert schedule.lr_at(0, 10) == schedule.lr_at(9, 10) == 0.01

    def test_step_linear_matches_function(self):
        schedule = Schedule.step_linear()
        for t in (0, 500, 700, 950):
            assert schedule.lr_at(t, T) == parent_lr(t, T)

    def test_final_lr_is_last_batch(self):
        schedule = Schedule.one_cycle(0.001, 0.1)
        assert schedule.final_lr(T) == one_cycle_lr(T - 1, T, 0.001, 0.1)

    def test_kind_from_string(self):
        assert Schedule("one-cycle").kind == ScheduleKind.ONE_CYCLE

    @pytest.mark.parametrize("kwargs", [
        {"kind": ScheduleKind.CONSTANT, "lr": -1.0},
        {"kind": ScheduleKind.ONE_CYCLE, "warmup_frac": 0.0},
        {"kind": ScheduleKind.STEP_LINEAR, "decay_start": 0.9, "decay_end": 0.5},
        {"kind": ScheduleKind.ONE_CYCLE, "lr_min": 0.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            Schedule(**kwargs)


def _constant_gradients(store, value):
    grads = Gradients.zeros_like(store)
    for entry in store:
        grads[entry.name] = np.full_like(entry.tensor, value)
    return grads


def _random_gradients(store, rng):
    grads = Gradients.zeros_like(store)
    for entry in store:
        grads[entry.name] = rng.standard_normal(entry.tensor.shape).astype(entry.tensor.dtype) + 0.5
    return grads


def _scalar_store(value):
    return ParameterStore([ParameterEntry("w", np.array([value], dtype=np.float64), ParameterRole.WEIGHT, "fc")])


def _quadratic_gradient(store):
    """f(w) = w^2 / 2, so the gradient is w itself."""
    grads = Gradients.zeros_like(store)
    grads["w"] = store["w"].copy()
    return grads


class TestOptimizers:
    def test_nesterov_first_step(self, tiny_net):
        store = tiny_net.parameters
        before = store.flatten().copy()
        NesterovSGD(momentum=0.9, weight_decay=0.0).step(store, _constant_gradients(store, 1.0), lr=0.1)
        np.testing.assert_allclose(store.flatten(), before - 0.1 * 1.9, rtol=1e-6, atol=1e-6)

    def test_plain_momentum_first_step(self, tiny_net):
        store = tiny_net.parameters
        before = store.flatten().copy()
        NesterovSGD(momentum=0.9, weight_decay=0.0, nesterov=False).step(
            store, _constant_gradients(store, 1.0), lr=0.1)
        np.testing.assert_allclose(store.flatten(), before - 0.1, rtol=1e-6, atol=1e-6)

    def test_weight_decay_skips_biases(self, tiny_net):
        store = tiny_net.parameters
        bias_before = store["fc1.bias"].copy()
        NesterovSGD(weight_decay=0.5).step(store, Gradients.zeros_like(store), lr=0.1)
        np.testing.assert_array_equal(store["fc1.bias"], bias_before)

    def test_adam_first_step_is_sign(self, tiny_net):
        store = tiny_net.parameters
        before = store.flatten().copy()
        Adam().step(store, _constant_gradients(store, -2.0), lr=0.01)
        np.testing.assert_allclose(store.flatten(), before + 0.01, rtol=1e-5, atol=1e-6)

    @pytest.mark.parametrize("kind", list(OptimizerKind))
    def test_zero_lr_leaves_parameters(self, tiny_net, tiny_batch, kind):
        optimizer = build_optimizer(kind)
        before = tiny_net.parameters.flatten().copy()
        for _ in range(3):
            _, grads = backward(tiny_net, *tiny_batch)
            optimizer.step(tiny_net.parameters, grads, lr=0.0)
        np.testing.assert_array_equal(tiny_net.parameters.flatten(), before)

    @pytest.mark.parametrize("kind", list(OptimizerKind))
    def test_masked_entries_stay_zero(self, tiny_net, tiny_batch, kind):
        prunable = prunable_set(tiny_net)
        child = apply_mask(tiny_net, random_mask(0, prunable, 0.5))
        optimizer = build_optimizer(kind)
        for _ in range(100):
            _, grads = backward(child, *tiny_batch)
            optimizer.step(child.parameters, grads, lr=0.05, mask=child.keep_arrays())
        flat = child.parameters.flatten()
        pruned = prunable.indices[~child.mask.bits]
        assert np.all(flat[pruned] == 0.0)
        kept = prunable.indices[child.mask.bits]
        assert not np.array_equal(flat[kept], tiny_net.parameters.flatten()[kept])

    def test_negative_lr_rejected(self, tiny_net):
        store = tiny_net.parameters
        with pytest.raises(ConfigError):
            Adam().step(store, Gradients.zeros_like(store), lr=-0.1)

    def test_build_optimizer_kinds(self):
        assert isinstance(build_optimizer("sgd"), NesterovSGD)
        adam = build_optimizer("adam")
        assert isinstance(adam, Adam) and adam.state.weight_decay == 0.0
        assert math.isclose(build_optimizer("sgd", weight_decay=0.001).state.weight_decay, 0.001)


class TestMaskedUpdates:
    @pytest.mark.parametrize("optimizer", [
        lambda: NesterovSGD(momentum=0.9, weight_decay=0.01),
        lambda: Adam(weight_decay=0.01),
    ])
    def test_random_gradients_never_revive_pruned_entries(self, tiny_net, optimizer):
        prunable = prunable_set(tiny_net)
        child = apply_mask(tiny_net, random_mask(0, prunable, 0.5))
        keep = child.keep_arrays()
        opt = optimizer()
        rng = np.random.default_rng(7)
        for _ in range(100):
            grads = _random_gradients(child.parameters, rng)
            opt.step(child.parameters, grads, lr=0.05, mask=keep)
        flat = child.parameters.flatten()
        assert np.all(flat[prunable.indices[~child.mask.bits]] == 0.0)
        assert np.any(flat[prunable.indices[child.mask.bits]] != 0.0)

    @pytest.mark.parametrize("kind", list(OptimizerKind))
    def test_all_ones_mask_matches_unmasked_step(self, tiny_net, kind):
        masked, plain = tiny_net.parameters.copy(), tiny_net.parameters.copy()
        ones = {entry.name: np.ones_like(entry.tensor) for entry in masked}
        masked_opt, plain_opt = build_optimizer(kind), build_optimizer(kind)
        rng = np.random.default_rng(3)
        for _ in range(5):
            grads = _random_gradients(masked, rng)
            masked_opt.step(masked, grads, lr=0.01, mask=ones)
            plain_opt.step(plain, grads, lr=0.01)
        np.testing.assert_array_equal(masked.flatten(), plain.flatten())


class TestUpdateTraces:
    def test_nesterov_two_steps(self):
        lr, mu = 0.1, 0.9
        store = _scalar_store(1.0)
        state = SgdState(momentum=mu, weight_decay=0.0)
        trace = []
        for _ in range(2):
            sgd_nesterov_step(state, store, _quadratic_gradient(store), lr)
            trace.append(float(store["w"][0]))

        # v1 = g0; w1 = w0 - lr (g0 + mu v1); v2 = mu v1 + g1; w2 = w1 - lr (g1 + mu v2)
        w0 = 1.0
        g0 = w0
        v1 = g0
        w1 = w0 - lr * (g0 + mu * v1)
        g1 = w1
        v2 = mu * v1 + g1
        w2 = w1 - lr * (g1 + mu * v2)
        assert trace == [w1, w2]
        assert trace == pytest.approx([0.81, 0.5751], abs=1e-12)

    def test_adam_five_steps_on_quadratic(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        store = _scalar_store(2.0)
        state = AdamState(beta1=b1, beta2=b2, eps=eps)
        trace = []
        for _ in range(5):
            adam_step(state, store, _quadratic_gradient(store), lr)
            trace.append(float(store["w"][0]))

        w, m, v, expected = 2.0, 0.0, 0.0, []
        for t in range(1, 6):
            g = w
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w = w - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
            expected.append(float(w))
        assert trace == pytest.approx(expected, rel=1e-12)
        # while the gradient keeps its sign each step moves by about lr
        assert trace[0] == pytest.approx(1.9, abs=1e-6)
        assert trace[-1] == pytest.approx(1.5, abs=1e-2)
