import numpy as np
import pytest

from protofuse.autodiff import Tensor, backward
from protofuse.errors import DeterminismError, InvalidArgumentError, InvalidStateError
from protofuse.params import AdamW, ParamStore, finite_diff_check


def test_store_iteration_is_lexicographic():
    store = ParamStore()
    store.register("b.weight", np.zeros(2))
    store.register("a.weight", np.zeros(2))
    store.register("a.bias", np.zeros(2))
    assert store.names() == ["a.bias", "a.weight", "b.weight"]


def test_duplicate_name_rejected():
    store = ParamStore()
    store.register("w", np.zeros(1))
    with pytest.raises(InvalidArgumentError):
        store.register("w", np.zeros(1))


def test_frozen_entries_have_no_grad_flag():
    store = ParamStore()
    t = store.register("semantic.table", np.ones(3), frozen=True)
    assert not t.requires_grad
    assert store.is_frozen("semantic.table")
    assert "semantic.table" in store.frozen_names


class TestAdamW:
    def test_pure_decay_step(self):
        store = ParamStore()
        p = store.register("w", np.array([1.0]))
        p.grad = np.array([0.0])
        AdamW(store, lr=0.1, weight_decay=0.5).step()
        np.testing.assert_allclose(p.data, [0.95])

    def test_single_step_hand_value(self):
        # m_hat = 1, v_hat = 1 -> update ~ lr -> theta ~ 0.9
        store = ParamStore()
        p = store.register("w", np.array([1.0]))
        p.grad = np.array([1.0])
        AdamW(store, lr=0.1, weight_decay=0.0).step()
        assert abs(p.data[0] - 0.9) < 1e-7

    def test_frozen_entry_untouched_bit_identical(self):
        store = ParamStore()
        frozen = store.register("semantic.t", np.array([1.25, -2.5]), frozen=True)
        live = store.register("w", np.array([1.0]))
        before = frozen.data.tobytes()
        opt = AdamW(store, lr=0.1, weight_decay=0.5)
        for _ in range(25):
            live.grad = np.array([0.3])
            frozen.grad = np.array([123.0])  # even a stray grad must not matter
            opt.step()
        assert frozen.data.tobytes() == before

    def test_missing_gradient_raises(self):
        store = ParamStore()
        store.register("w", np.array([1.0]))
        with pytest.raises(InvalidStateError):
            AdamW(store).step()

    def test_group_learning_rates_longest_prefix(self):
        store = ParamStore()
        v = store.register("visual.fc1.weight", np.array([1.0]))
        a = store.register("adaptor.weight", np.array([1.0]))
        v.grad = np.array([1.0])
        a.grad = np.array([1.0])
        AdamW(store, lr=0.1, weight_decay=0.0, lr_overrides={"visual.": 0.001}).step()
        assert abs(a.data[0] - 0.9) < 1e-6
        assert abs(v.data[0] - 0.999) < 1e-6

    def test_invalid_hyperparameters(self):
        store = ParamStore()
        with pytest.raises(InvalidArgumentError):
            AdamW(store, lr=0.0)
        with pytest.raises(InvalidArgumentError):
            AdamW(store, weight_decay=-1.0)


class TestFiniteDiffCheck:
    def test_quadratic_is_nearly_exact(self):
        store = ParamStore()
        store.register("theta", np.array([1.0, -2.0, 0.5]))

        def loss(s):
            t = s["theta"]
            return (t * t).sum()

        report = finite_diff_check(loss, store, step=1e-5)
        assert report.max_error < 1e-9

    def test_all_frozen_gives_empty_report(self):
        store = ParamStore()
        store.register("theta", np.array([1.0]), frozen=True)
        report = finite_diff_check(lambda s: (s["theta"] * 1.0).sum(), store)
        assert report.per_param == {}
        assert report.max_error == 0.0

    def test_nondeterministic_builder_detected(self):
        store = ParamStore()
        store.register("theta", np.array([1.0]))
        rng = np.random.default_rng(0)

        def noisy(s):
            return (s["theta"] * float(rng.normal())).sum()

        with pytest.raises(DeterminismError):
            finite_diff_check(noisy, store)

    def test_values_restored_after_check(self):
        store = ParamStore()
        t = store.register("theta", np.array([0.25, -1.5]))
        before = t.data.tobytes()
        finite_diff_check(lambda s: (s["theta"] ** 2.0).sum(), store)
        assert t.data.tobytes() == before

    def test_unused_parameter_reports_zero_error(self):
        store = ParamStore()
        store.register("used", np.array([2.0]))
        store.register("unused", np.array([3.0]))
        report = finite_diff_check(lambda s: (s["used"] ** 2.0).sum(), store)
        assert report.per_param["unused"] == 0.0
        assert report.per_param["used"] < 1e-9
