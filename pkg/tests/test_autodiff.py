"""Kernel forward contracts and finite-difference gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import newscast.autodiff as ad
from newscast.autodiff import Tape, Tensor
from newscast.errors import NumericError

from gradcheck import assert_gradients_match


def rng(seed=0):
    return np.random.default_rng(seed)


def t(arr, grad=False):
    return Tensor(arr, requires_grad=grad)


class TestForwardContracts:
    def test_matmul_identity(self):
        a = t([[1.0, 2.0], [3.0, 4.0]])
        out = ad.matmul(a, t(np.eye(2)))
        np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ValueError, match="matmul"):
            ad.matmul(t(np.ones((2, 3))), t(np.ones((2, 3))))

    def test_softmax_uniform_row(self):
        out = ad.softmax_rows(t([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]], rtol=0, atol=1e-15)

    def test_layer_norm_hand_computed(self):
        # (x - mean)/sqrt(var + eps) for [1,2,3]: mean 2, population var 2/3
        x = np.array([[1.0, 2.0, 3.0]])
        out = ad.layer_norm_rows(t(x), t(np.ones((1, 3))), t(np.zeros((1, 3))))
        expected = (x - 2.0) / np.sqrt(2.0 / 3.0 + 1e-5)
        np.testing.assert_allclose(out.data, expected, atol=1e-9)
        assert abs(out.data.mean()) < 1e-9
        # eps=1e-5 inside the sqrt shrinks output variance to var/(var+eps)
        assert abs(out.data.var() - (2 / 3) / (2 / 3 + 1e-5)) < 1e-12

    def test_layer_norm_row_stats_random(self):
        # rows scaled so the eps term is negligible against the row variance
        x = 10.0 * rng(3).normal(size=(6, 16))
        out = ad.layer_norm_rows(t(x), t(np.ones((1, 16))), t(np.zeros((1, 16))))
        assert np.abs(out.data.mean(axis=1)).max() < 1e-9
        assert np.abs(out.data.var(axis=1) - 1.0).max() < 1e-6

    def test_embedding_lookup_rows(self):
        table = t(np.arange(12.0).reshape(4, 3))
        out = ad.embedding_lookup(table, [2, 0, 2])
        np.testing.assert_array_equal(out.data, table.data[[2, 0, 2]])

    def test_slice_and_concat_roundtrip(self):
        x = rng(1).normal(size=(5, 4))
        top = ad.slice_rows(t(x), 0, 2)
        bottom = ad.slice_rows(t(x), 2, 5)
        back = ad.concat_rows([top, bottom])
        np.testing.assert_array_equal(back.data, x)
        left = ad.slice_cols(t(x), 0, 1)
        right = ad.slice_cols(t(x), 1, 4)
        np.testing.assert_array_equal(ad.concat_cols([left, right]).data, x)

    def test_scalar_item(self):
        assert ad.mean_all(t([[2.0, 4.0]])).item() == 3.0

    def test_debug_mode_rejects_nonfinite(self):
        ad.set_debug_checks(True)
        try:
            with pytest.raises(NumericError):
                ad.add(t([[np.nan]]), t([[1.0]]))
        finally:
            ad.set_debug_checks(False)


class TestSoftmaxProperties:
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=12))
    @settings(max_examples=50, deadline=None)
    def test_rows_sum_to_one(self, row):
        out = ad.softmax_rows(t([row]))
        assert abs(out.data.sum() - 1.0) < 1e-12

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=12),
           st.floats(-100, 100))
    @settings(max_examples=50, deadline=None)
    def test_shift_invariance(self, row, c):
        base = ad.softmax_rows(t([row])).data
        shifted = ad.softmax_rows(t([[v + c for v in row]])).data
        assert np.abs(base - shifted).max() < 1e-12

    def test_mask_zeroes_probabilities(self):
        x = t(rng(2).normal(size=(3, 5)))
        mask = np.ones((3, 5), dtype=bool)
        mask[:, 4] = False
        out = ad.softmax_rows(x, mask)
        assert np.all(out.data[:, 4] == 0.0)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-12)


class TestTapeContract:
    def test_unreachable_parameter_gets_zero_grad(self):
        used = t(rng(0).normal(size=(2, 2)), grad=True)
        unused = t(rng(1).normal(size=(3, 3)), grad=True)
        with Tape() as tape:
            loss = ad.sum_all(ad.mul(used, used))
        grads = tape.gradients(loss, [used, unused])
        np.testing.assert_array_equal(grads[unused], np.zeros((3, 3)))
        np.testing.assert_allclose(grads[used], 2 * used.data)

    def test_non_scalar_loss_rejected(self):
        w = t(np.ones((2, 2)), grad=True)
        with Tape() as tape:
            out = ad.mul(w, w)
        with pytest.raises(ValueError, match="scalar"):
            tape.gradients(out, [w])

    def test_tapes_do_not_nest(self):
        with Tape():
            with pytest.raises(RuntimeError, match="already active"):
                with Tape():
                    pass

    def test_grad_of_reused_tensor_accumulates(self):
        x = t([[3.0]], grad=True)
        with Tape() as tape:
            loss = ad.sum_all(ad.mul(x, x))  # same tensor on both slots
        np.testing.assert_allclose(tape.gradients(loss, [x])[x], [[6.0]])

    def test_sum_of_weighted_rows_matches_outer_structure(self):
        # loss = sum(W @ x) with x fixed: dW[i, j] = x[j] summed pattern
        w = t(rng(5).normal(size=(3, 4)), grad=True)
        x = t(rng(6).normal(size=(4, 2)))
        with Tape() as tape:
            loss = ad.sum_all(ad.matmul(w, x))
        expected = np.tile(x.data.sum(axis=1), (3, 1))
        np.testing.assert_allclose(tape.gradients(loss, [w])[w], expected)


class TestGradients:
    """Every kernel against the central finite-difference oracle."""

    def test_matmul(self):
        a = t(rng(10).normal(size=(3, 4)), grad=True)
        b = t(rng(11).normal(size=(4, 2)), grad=True)
        assert_gradients_match(lambda: ad.sum_all(ad.mul(ad.matmul(a, b), ad.matmul(a, b))), [a, b])

    def test_add_sub_mul_scale(self):
        a = t(rng(12).normal(size=(2, 3)), grad=True)
        b = t(rng(13).normal(size=(2, 3)), grad=True)

        def loss():
            s = ad.add(ad.mul(a, b), ad.scale(ad.sub(a, b), 0.7))
            return ad.mean_all(ad.mul(s, s))

        assert_gradients_match(loss, [a, b])

    def test_add_bias(self):
        x = t(rng(14).normal(size=(4, 3)), grad=True)
        b = t(rng(15).normal(size=(1, 3)), grad=True)
        assert_gradients_match(
            lambda: ad.mean_all(ad.mul(ad.add_bias(x, b), ad.add_bias(x, b))), [x, b])

    def test_gelu(self):
        x = t(rng(16).normal(size=(3, 5)), grad=True)
        assert_gradients_match(lambda: ad.sum_all(ad.gelu(x)), [x])

    def test_softmax(self):
        x = t(rng(17).normal(size=(3, 6)), grad=True)
        coef = Tensor(rng(18).normal(size=(3, 6)))
        assert_gradients_match(lambda: ad.sum_all(ad.mul(ad.softmax_rows(x), coef)), [x])

    def test_masked_softmax(self):
        x = t(rng(19).normal(size=(3, 6)), grad=True)
        mask = rng(20).random((3, 6)) > 0.3
        mask[:, 0] = True  # keep every row alive
        coef = Tensor(rng(21).normal(size=(3, 6)))
        assert_gradients_match(lambda: ad.sum_all(ad.mul(ad.softmax_rows(x, mask), coef)), [x])

    def test_layer_norm(self):
        x = t(rng(22).normal(size=(4, 6)), grad=True)
        g = t(rng(23).normal(size=(1, 6)), grad=True)
        o = t(rng(24).normal(size=(1, 6)), grad=True)
        coef = Tensor(rng(25).normal(size=(4, 6)))
        assert_gradients_match(
            lambda: ad.sum_all(ad.mul(ad.layer_norm_rows(x, g, o), coef)), [x, g, o])

    def test_embedding(self):
        table = t(rng(26).normal(size=(7, 4)), grad=True)
        ids = [1, 3, 3, 0]
        coef = Tensor(rng(27).normal(size=(4, 4)))
        assert_gradients_match(
            lambda: ad.sum_all(ad.mul(ad.embedding_lookup(table, ids), coef)), [table])

    def test_reductions_and_reshapes(self):
        x = t(rng(28).normal(size=(4, 5)), grad=True)

        def loss():
            a = ad.mean_over_rows(x)
            b = ad.transpose(ad.slice_cols(x, 1, 4))
            return ad.add(ad.sum_all(ad.mul(a, a)), ad.mean_all(ad.mul(b, b)))

        assert_gradients_match(loss, [x])

    def test_concat(self):
        a = t(rng(29).normal(size=(2, 3)), grad=True)
        b = t(rng(30).normal(size=(3, 3)), grad=True)
        c = t(rng(31).normal(size=(2, 2)), grad=True)

        def loss():
            rows = ad.concat_rows([a, b])
            cols = ad.concat_cols([a, c])
            return ad.add(ad.sum_all(ad.mul(rows, rows)), ad.sum_all(ad.mul(cols, cols)))

        assert_gradients_match(loss, [a, b, c])

    def test_cross_entropy_gradient_is_probs_minus_onehot(self):
        logits = t(rng(32).normal(size=(4, 6)), grad=True)
        targets = [2, 0, 5, 1]
        with Tape() as tape:
            loss = ad.cross_entropy_mean(logits, targets)
        analytic = tape.gradients(loss, [logits])[logits]
        probs = np.exp(logits.data) / np.exp(logits.data).sum(axis=1, keepdims=True)
        onehot = np.zeros((4, 6))
        onehot[np.arange(4), targets] = 1.0
        np.testing.assert_allclose(analytic, (probs - onehot) / 4, atol=1e-12)
        assert_gradients_match(lambda: ad.cross_entropy_mean(logits, targets), [logits])

    def test_softmax_then_nll_composition(self):
        # composed softmax -> cross-entropy against the fused kernel's oracle
        logits = t(rng(33).normal(size=(3, 5)), grad=True)
        targets = [4, 1, 0]

        def composed():
            probs = ad.softmax_rows(logits)
            rows = [ad.slice_cols(ad.slice_rows(probs, i, i + 1), c, c + 1)
                    for i, c in enumerate(targets)]
            stacked = ad.concat_rows(rows)
            # -mean(log p) via log on data is not differentiable here, so use
            # the identity -log p ~ fused CE and check value agreement instead
            return stacked

        with Tape() as tape:
            picked = composed()
            fused = ad.cross_entropy_mean(logits, targets)
        assert abs(fused.item() - float(-np.log(picked.data).mean())) < 1e-12
        assert_gradients_match(lambda: ad.cross_entropy_mean(logits, targets), [logits])
