import math

import numpy as np
import pytest

from dman import autodiff as ad
from dman import layers
from dman.autodiff import Tensor


@pytest.fixture(autouse=True)
def fresh_tape():
    ad.reset_tape()
    yield
    ad.reset_tape()


def zero_lstm(h, d):
    return layers.LSTMWeights(
        Tensor(np.zeros((4 * h, d))), Tensor(np.zeros((4 * h, h))), Tensor(np.zeros(4 * h))
    )


def numpy_lstm_step(w_x, w_h, b, x, h_prev, c_prev):
    """Independent cell oracle in raw numpy."""

    def sig(z):
        return 1.0 / (1.0 + np.exp(-z))

    h = w_h.shape[1]
    gates = w_x @ x + w_h @ h_prev + b
    i, f, g, o = gates[:h], gates[h : 2 * h], gates[2 * h : 3 * h], gates[3 * h :]
    c = sig(f) * c_prev + sig(i) * np.tanh(g)
    return sig(o) * np.tanh(c), c


# ---------------------------------------------------------------------------
# lstm_step


def test_lstm_step_all_zero():
    w = zero_lstm(3, 2)
    h_t, c_t = layers.lstm_step(w, Tensor(np.zeros(2)), Tensor(np.zeros(3)), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(h_t.values, np.zeros(3))
    np.testing.assert_array_equal(c_t.values, np.zeros(3))


def test_lstm_step_saturated_forget_gate_keeps_cell():
    h = 3
    b = np.zeros(4 * h)
    b[h : 2 * h] = 50.0  # forget gate pinned open
    w = layers.LSTMWeights(Tensor(np.zeros((4 * h, 2))), Tensor(np.zeros((4 * h, h))), Tensor(b))
    c_prev = np.array([0.3, -1.2, 2.0])
    _, c_t = layers.lstm_step(w, Tensor(np.zeros(2)), Tensor(np.zeros(h)), Tensor(c_prev))
    np.testing.assert_allclose(c_t.values, c_prev, atol=1e-9)


def test_lstm_step_matches_independent_reimplementation():
    rng = np.random.default_rng(0)
    h, d = 4, 3
    w_x = rng.normal(size=(4 * h, d))
    w_h = rng.normal(size=(4 * h, h))
    b = rng.normal(size=4 * h)
    x, h0, c0 = rng.normal(size=d), rng.normal(size=h), rng.normal(size=h)
    w = layers.LSTMWeights(Tensor(w_x), Tensor(w_h), Tensor(b))
    h_t, c_t = layers.lstm_step(w, Tensor(x), Tensor(h0), Tensor(c0))
    h_ref, c_ref = numpy_lstm_step(w_x, w_h, b, x, h0, c0)
    np.testing.assert_allclose(h_t.values, h_ref, atol=1e-12)
    np.testing.assert_allclose(c_t.values, c_ref, atol=1e-12)


def test_lstm_step_dim_mismatch():
    w = zero_lstm(3, 2)
    with pytest.raises(ad.DimensionError):
        layers.lstm_step(w, Tensor(np.zeros(5)), Tensor(np.zeros(3)), Tensor(np.zeros(3)))


# ---------------------------------------------------------------------------
# bilstm


def test_bilstm_length_one():
    rng = np.random.default_rng(1)
    h, d = 3, 2
    wf = layers.init_lstm(rng, h, d)
    wb = layers.init_lstm(rng, h, d)
    out = layers.bilstm(wf, wb, [Tensor(rng.normal(size=d))])
    assert len(out) == 1
    assert out[0].shape == (2 * h,)


def test_bilstm_empty_errors():
    w = zero_lstm(2, 2)
    with pytest.raises(ad.DimensionError):
        layers.bilstm(w, w, [])


def test_bilstm_reversal_swaps_roles():
    rng = np.random.default_rng(2)
    h, d, t = 3, 2, 5
    wa = layers.init_lstm(rng, h, d)
    wb = layers.init_lstm(rng, h, d)
    xs = [Tensor(rng.normal(size=d)) for _ in range(t)]
    run_rev = layers.bilstm(wa, wb, list(reversed(xs)))
    run_orig = layers.bilstm(wb, wa, xs)
    for j in range(t):
        fwd_half = run_rev[j].values[:h]
        bwd_half = run_orig[t - 1 - j].values[h:]
        np.testing.assert_allclose(fwd_half, bwd_half, atol=1e-12)


def test_bilstm_zero_weights_zero_output():
    w = zero_lstm(2, 3)
    out = layers.bilstm(w, w, [Tensor(np.ones(3)) for _ in range(4)])
    for o in out:
        np.testing.assert_array_equal(o.values, np.zeros(4))


@pytest.mark.parametrize("length", range(1, 11))
def test_bilstm_output_width_and_length(length):
    rng = np.random.default_rng(length)
    h, d = 3, 4
    wf, wb = layers.init_lstm(rng, h, d), layers.init_lstm(rng, h, d)
    out = layers.bilstm(wf, wb, [Tensor(rng.normal(size=d)) for _ in range(length)])
    assert len(out) == length
    assert all(o.shape == (2 * h,) for o in out)


# ---------------------------------------------------------------------------
# char cnn


def test_char_cnn_short_word_padded():
    rng = np.random.default_rng(3)
    w = layers.init_char_cnn(rng, charset_size=10, char_dim=4, width=3, filters=5)
    out = layers.char_cnn(w, [2])
    assert out.shape == (5,)


def test_char_cnn_zero_filters_zero_output():
    w = layers.CharCNNWeights(
        Tensor(np.ones((6, 2))), Tensor(np.zeros((4, 6))), Tensor(np.zeros(4)), 3
    )
    out = layers.char_cnn(w, [2, 3, 4, 5])
    np.testing.assert_array_equal(out.values, np.zeros(4))


def test_char_cnn_pure():
    rng = np.random.default_rng(4)
    w = layers.init_char_cnn(rng, 12, 3, 3, 6)
    a = layers.char_cnn(w, [2, 5, 7, 3]).values
    b = layers.char_cnn(w, [2, 5, 7, 3]).values
    np.testing.assert_array_equal(a, b)


def test_char_cnn_trailing_pad_invariant():
    rng = np.random.default_rng(5)
    w = layers.init_char_cnn(rng, 12, 3, 3, 6)
    base = layers.char_cnn(w, [2, 5, 7, 3]).values
    padded = layers.char_cnn(w, [2, 5, 7, 3, 0, 0, 0]).values
    np.testing.assert_array_equal(base, padded)


def test_char_cnn_unknown_id_maps_to_unk():
    rng = np.random.default_rng(6)
    w = layers.init_char_cnn(rng, 8, 3, 2, 4)
    oov = layers.char_cnn(w, [2, 99, 3]).values
    unk = layers.char_cnn(w, [2, 1, 3]).values
    np.testing.assert_array_equal(oov, unk)


# ---------------------------------------------------------------------------
# feed forward


def test_feed_forward_identity():
    out = layers.feed_forward_relu(Tensor(np.eye(2)), Tensor(np.zeros(2)), Tensor([-1.0, 2.0]))
    np.testing.assert_array_equal(out.values, [0, 2])


def test_feed_forward_zero_input_gives_relu_bias():
    b = np.array([-0.5, 0.7, 0.0])
    out = layers.feed_forward_relu(Tensor(np.zeros((3, 4))), Tensor(b), Tensor(np.zeros(4)))
    np.testing.assert_array_equal(out.values, [0, 0.7, 0])


def test_feed_forward_grad_check():
    rng = np.random.default_rng(7)
    w = Tensor(rng.normal(size=(3, 4)))
    b = Tensor(rng.normal(size=3))
    x = Tensor(rng.normal(size=4))
    for target in (w, b, x):
        report = ad.grad_check(
            lambda _t: ad.sum_all(ad.tanh(layers.feed_forward_relu(w, b, x))),
            target,
            step=1e-5,
            tol=1e-5,
        )
        assert report.passed, report


# ---------------------------------------------------------------------------
# attention pool


def test_attention_pool_zero_vector_is_uniform_mean():
    rng = np.random.default_rng(8)
    states = [Tensor(rng.normal(size=4)) for _ in range(3)]
    w = layers.AttentionPoolWeights(Tensor(np.zeros(4)))
    out = layers.attention_pool(w, states)
    mean = np.mean([s.values for s in states], axis=0)
    np.testing.assert_allclose(out.values, mean, atol=1e-12)


def test_attention_pool_single_state_identity():
    s = Tensor([1.0, -2.0, 3.0])
    w = layers.AttentionPoolWeights(Tensor([0.4, 0.1, -0.2]))
    np.testing.assert_allclose(layers.attention_pool(w, [s]).values, s.values, atol=1e-12)


def test_attention_pool_closed_form_weights():
    # scores (ln 2, 0) -> weights (2/3, 1/3)
    s1 = Tensor([math.log(2.0), 1.0, 5.0])
    s2 = Tensor([0.0, 3.0, -1.0])
    w = layers.AttentionPoolWeights(Tensor([1.0, 0.0, 0.0]))
    out = layers.attention_pool(w, [s1, s2])
    expect = (2 / 3) * s1.values + (1 / 3) * s2.values
    np.testing.assert_allclose(out.values, expect, atol=1e-12)


def test_attention_pool_convex_hull():
    for seed in range(8):
        rng = np.random.default_rng(seed)
        states = [Tensor(rng.normal(size=5)) for _ in range(3)]
        w = layers.AttentionPoolWeights(Tensor(rng.normal(size=5)))
        out = layers.attention_pool(w, states).values
        arr = np.stack([s.values for s in states])
        assert np.all(out >= arr.min(axis=0) - 1e-12)
        assert np.all(out <= arr.max(axis=0) + 1e-12)


# ---------------------------------------------------------------------------
# full-layer gradient checks at tiny dims (h=3, d=4)


def _layer_grad_cases():
    rng = np.random.default_rng(9)
    h, d = 3, 4
    w = layers.init_lstm(rng, h, d)
    xs = [Tensor(rng.normal(size=d)) for _ in range(3)]
    wf, wb = layers.init_lstm(rng, h, d), layers.init_lstm(rng, h, d)
    cnn = layers.init_char_cnn(rng, 10, 3, 2, 4)
    ff_w, ff_b = Tensor(rng.normal(size=(h, d)), requires_grad=True), Tensor(
        rng.normal(size=h), requires_grad=True
    )
    pool = layers.AttentionPoolWeights(Tensor(rng.normal(size=d), requires_grad=True))
    states = [Tensor(rng.normal(size=d)) for _ in range(3)]

    def lstm_loss(_):
        h0 = Tensor(np.zeros(h))
        ht, ct = layers.lstm_step(w, xs[0], h0, h0)
        return ad.sum_all(ad.mul(ht, ct))

    def bilstm_loss(_):
        return ad.sum_all(layers.stack_rows(layers.bilstm(wf, wb, xs)))

    def cnn_loss(_):
        return ad.sum_all(layers.char_cnn(cnn, [2, 4, 6, 3]))

    def ff_loss(_):
        return ad.sum_all(layers.feed_forward_relu(ff_w, ff_b, xs[1]))

    def pool_loss(_):
        return ad.sum_all(layers.attention_pool(pool, states))

    return [
        ("lstm_step", lstm_loss, w.tensors()),
        ("bilstm", bilstm_loss, wf.tensors() + wb.tensors()),
        ("char_cnn", cnn_loss, cnn.tensors()),
        ("feed_forward", ff_loss, [ff_w, ff_b]),
        ("attention_pool", pool_loss, pool.tensors()),
    ]


@pytest.mark.parametrize("name,loss_fn,params", _layer_grad_cases(), ids=lambda c: str(c))
def test_layer_gradients(name, loss_fn, params):
    if not callable(loss_fn):
        pytest.skip("parametrize id pass-through")
    for i, p in enumerate(params):
        report = ad.grad_check(loss_fn, p, step=1e-5, tol=1e-5)
        assert report.passed, f"{name} param {i}: {report}"
