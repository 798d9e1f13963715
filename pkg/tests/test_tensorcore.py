import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stripseg.tensorcore import (
    AdaDeltaState,
    CheckpointError,
    LayerSpec,
    MemoryMeter,
    ShapeError,
    Tensor,
    adadelta_step,
    backward,
    check_gradients,
    concat_channels,
    conv2d,
    conv_transpose2d,
    decode_checkpoint,
    encode_checkpoint,
    maxpool2d,
    metered,
    relu,
    softmax_ce_map,
    tsum,
)


def t64(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def direct_conv(x, w, b, stride, dil, pads):
    """Loop-level cross-correlation used as an independent oracle."""
    n, c, h, wd = x.shape
    co, _, kh, kw = w.shape
    pt, pb, pl, pr = pads
    xp = np.zeros((n, c, h + pt + pb, wd + pl + pr))
    xp[:, :, pt : pt + h, pl : pl + wd] = x
    ho = (xp.shape[2] - (kh - 1) * dil[0] - 1) // stride + 1
    wo = (xp.shape[3] - (kw - 1) * dil[1] - 1) // stride + 1
    out = np.zeros((n, co, ho, wo))
    for bi in range(n):
        for o in range(co):
            for yy in range(ho):
                for xx in range(wo):
                    acc = b[o] if b is not None else 0.0
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += w[o, ci, i, j] * xp[bi, ci, yy * stride + i * dil[0], xx * stride + j * dil[1]]
                    out[bi, o, yy, xx] = acc
    return out


# ---------------------------------------------------------------- conv2d


def test_conv2d_valid_hand_example():
    x = Tensor(np.array([1, 2, 4, 8], dtype=np.float64).reshape(1, 1, 1, 4))
    w = Tensor(np.array([1, 0, -1], dtype=np.float64).reshape(1, 1, 1, 3))
    spec = LayerSpec("conv", kh=1, kw=3, padding="valid")
    out = conv2d(x, spec, w)
    np.testing.assert_array_equal(out.data.ravel(), [-3, -6])


def test_conv2d_identity_kernel_same_padding():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(2, 1, 5, 7)))
    w = Tensor(np.ones((1, 1, 1, 1)))
    out = conv2d(x, LayerSpec("conv"), w)
    np.testing.assert_array_equal(out.data, x.data)


def test_conv2d_dilated_hand_example():
    x = Tensor(np.ones((1, 1, 1, 5)))
    w = Tensor(np.ones((1, 1, 1, 3)))
    spec = LayerSpec("conv", kh=1, kw=3, dilation=(1, 2), padding="valid")
    out = conv2d(x, spec, w)
    assert out.shape == (1, 1, 1, 1)
    assert out.data.item() == 3


@pytest.mark.parametrize(
    "kh,kw,stride,dil,padding",
    [(3, 3, 1, (1, 1), "same"), (3, 3, 2, (1, 1), "same"), (9, 1, 1, (2, 1), "same"),
     (1, 9, 1, (1, 4), "same"), (2, 3, 1, (1, 1), "valid"), (3, 3, 2, (2, 1), "valid")],
)
def test_conv2d_matches_direct_sum(kh, kw, stride, dil, padding):
    rng = np.random.default_rng(kh * 10 + kw)
    x = rng.normal(size=(2, 3, 9, 10))
    w = rng.normal(size=(4, 3, kh, kw))
    b = rng.normal(size=4)
    spec = LayerSpec("conv", kh=kh, kw=kw, cin=3, cout=4, stride=stride, dilation=dil, padding=padding)
    out = conv2d(Tensor(x), spec, Tensor(w), Tensor(b))
    if padding == "same":
        def pads(size, k, d):
            o = -(-size // stride)
            tot = max((o - 1) * stride + (k - 1) * d + 1 - size, 0)
            return tot // 2, tot - tot // 2
        pt, pb = pads(9, kh, dil[0])
        pl, pr = pads(10, kw, dil[1])
    else:
        pt = pb = pl = pr = 0
    ref = direct_conv(x, w, b, stride, dil, (pt, pb, pl, pr))
    np.testing.assert_allclose(out.data, ref, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("k", [1, 3, 5, 9])
@pytest.mark.parametrize("d", [1, 2, 4, 8])
def test_same_padding_preserves_size(k, d):
    x = Tensor(np.zeros((1, 2, 11, 13)))
    for kh, kw, dil in [(k, k, (d, d)), (k, 1, (d, 1)), (1, k, (1, d))]:
        spec = LayerSpec("conv", kh=kh, kw=kw, cin=2, cout=3, dilation=dil)
        assert conv2d(x, spec, Tensor(np.zeros(spec.weight_shape))).shape == (1, 3, 11, 13)


def test_conv2d_rejects_shape_mismatch():
    spec = LayerSpec("conv", kh=3, kw=3, cin=2, cout=4)
    with pytest.raises(ShapeError, match="channels"):
        conv2d(Tensor(np.zeros((1, 3, 4, 4))), spec, Tensor(np.zeros((4, 2, 3, 3))))
    with pytest.raises(ShapeError, match="weight shape"):
        conv2d(Tensor(np.zeros((1, 2, 4, 4))), spec, Tensor(np.zeros((4, 2, 1, 3))))


def test_layerspec_validation():
    with pytest.raises(ValueError):
        LayerSpec("conv", stride=3)
    with pytest.raises(ValueError):
        LayerSpec("conv", kh=0)
    with pytest.raises(ValueError):
        LayerSpec("conv", dilation=(0, 1))


# ---------------------------------------------------------------- conv_transpose2d


def test_conv_transpose_single_pixel_broadcast():
    spec = LayerSpec("conv_transpose", kh=2, kw=2, stride=2)
    out = conv_transpose2d(Tensor(np.ones((1, 1, 1, 1))), spec, Tensor(np.array([[[[1.0, 2], [3, 4]]]])))
    np.testing.assert_array_equal(out.data[0, 0], [[1, 2], [3, 4]])


def test_conv_transpose_nonoverlapping_row():
    spec = LayerSpec("conv_transpose", kh=1, kw=2, stride=2)
    out = conv_transpose2d(Tensor(np.ones((1, 1, 1, 2))), spec, Tensor(np.ones((1, 1, 1, 2))))
    np.testing.assert_array_equal(out.data.ravel(), [1, 1, 1, 1])


def test_conv_transpose_doubles_size_and_input_grad_is_kernel_sum():
    rng = np.random.default_rng(3)
    spec = LayerSpec("conv_transpose", kh=2, kw=2, cin=3, cout=2, stride=2)
    x = t64(rng.normal(size=(1, 3, 4, 5)))
    w = t64(rng.normal(size=spec.weight_shape))
    out = conv_transpose2d(x, spec, w)
    assert out.shape == (1, 2, 8, 10)
    backward(tsum(out))
    kernel_sum = w.data.sum(axis=(1, 2, 3))
    np.testing.assert_allclose(x.grad, np.broadcast_to(kernel_sum[None, :, None, None], x.shape))


def test_conv_transpose_rejects_stride_one():
    with pytest.raises(ValueError, match="stride 2"):
        conv_transpose2d(Tensor(np.ones((1, 1, 2, 2))), LayerSpec("conv_transpose", kh=2, kw=2, stride=1),
                         Tensor(np.ones((1, 1, 2, 2))))


# ---------------------------------------------------------------- pooling / relu / concat


def test_maxpool_examples():
    assert maxpool2d(Tensor(np.array([[[[1.0, 2], [3, 4]]]]))).data.item() == 4
    const = maxpool2d(Tensor(np.full((1, 2, 6, 4), 2.5)))
    assert const.shape == (1, 2, 3, 2)
    assert np.all(const.data == 2.5)


def test_maxpool_odd_size_pads_with_neg_inf():
    x = Tensor(-np.ones((1, 1, 3, 3)))
    out = maxpool2d(x)
    assert out.shape == (1, 1, 2, 2)
    assert np.all(out.data == -1)


def test_maxpool_tie_routes_to_first_element():
    x = t64(np.full((1, 1, 2, 2), 1.0))
    backward(tsum(maxpool2d(x)))
    np.testing.assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])


def test_relu_and_subgradient():
    x = t64([-1.0, 0.0, 2.0])
    y = relu(x)
    np.testing.assert_array_equal(y.data, [0, 0, 2])
    backward(tsum(y))
    np.testing.assert_array_equal(x.grad, [0, 0, 1])


def test_concat_channels():
    a = Tensor(np.zeros((2, 3, 4, 5)))
    b = Tensor(np.ones((2, 5, 4, 5)))
    assert concat_channels([a, b]).shape == (2, 8, 4, 5)
    assert concat_channels([a]) is a
    with pytest.raises(ShapeError):
        concat_channels([a, Tensor(np.zeros((2, 1, 3, 5)))])


# ---------------------------------------------------------------- loss / backward


def test_softmax_ce_uniform_logits():
    loss = softmax_ce_map(Tensor(np.zeros((1, 4, 3, 3))), np.random.default_rng(0).integers(0, 4, (1, 3, 3)))
    assert loss.data.item() == pytest.approx(math.log(4), abs=1e-6)


def test_softmax_ce_decreases_with_margin():
    labels = np.array([[[0, 1], [2, 3]]])
    losses = []
    for margin in (1, 5, 10):
        logits = np.zeros((1, 4, 2, 2))
        for y in range(2):
            for x in range(2):
                logits[0, labels[0, y, x], y, x] = margin
        losses.append(softmax_ce_map(Tensor(logits), labels).data.item())
    assert losses[0] > losses[1] > losses[2] > 0
    assert losses[2] < 1e-3


def test_softmax_ce_rejects_bad_labels():
    with pytest.raises(ValueError, match="labels"):
        softmax_ce_map(Tensor(np.zeros((1, 3, 2, 2))), np.full((1, 2, 2), 3))


def test_backward_sum_and_reuse():
    x = t64(np.arange(6.0).reshape(2, 3))
    backward(tsum(x))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))
    x.grad = None
    backward(tsum(x + x))
    np.testing.assert_array_equal(x.grad, 2 * np.ones((2, 3)))


def test_backward_requires_graph():
    with pytest.raises(ValueError):
        backward(Tensor(np.array(1.0)))


def test_forward_is_deterministic():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 4, 16, 16)).astype(np.float32)
    w = rng.normal(size=(8, 4, 3, 3)).astype(np.float32)
    spec = LayerSpec("conv", kh=3, kw=3, cin=4, cout=8)
    a = conv2d(Tensor(x), spec, Tensor(w)).data
    b = conv2d(Tensor(x.copy()), spec, Tensor(w.copy())).data
    assert a.tobytes() == b.tobytes()


# ---------------------------------------------------------------- gradient checks


def _separated(rng, shape, gap=0.02):
    """Random values whose pairwise gaps exceed ``gap`` and |v| > gap (no kinks)."""
    n = int(np.prod(shape))
    vals = (rng.permutation(n) - n / 2 + 0.5) * gap * 2
    return vals.reshape(shape)


CASES = 20


@pytest.mark.parametrize("case", range(CASES))
def test_gradcheck_conv2d(case):
    rng = np.random.default_rng(100 + case)
    kh, kw = [(3, 3), (9, 1), (1, 9), (1, 1), (2, 3)][case % 5]
    stride = 2 if case % 4 == 3 else 1
    dil = (1 + case % 3, 1 + (case // 3) % 2)
    padding = "valid" if case % 6 == 5 else "same"
    spec = LayerSpec("conv", kh=kh, kw=kw, cin=2, cout=3, stride=stride, dilation=dil, padding=padding)
    h = 6 + (kh - 1) * dil[0]
    w_ = 6 + (kw - 1) * dil[1]
    x = t64(rng.normal(size=(2, 2, h, w_)))
    w = t64(rng.normal(size=spec.weight_shape))
    b = t64(rng.normal(size=3))
    r = rng.normal(size=conv2d(x, spec, w, b).shape)
    res = check_gradients(lambda: tsum(_mul(conv2d(x, spec, w, b), r)), [x, w, b])
    assert res.passed(1e-4), res.rel_errors


@pytest.mark.parametrize("case", range(CASES))
def test_gradcheck_conv_transpose(case):
    rng = np.random.default_rng(200 + case)
    kh, kw = [(2, 2), (1, 2), (2, 1), (3, 3)][case % 4]
    spec = LayerSpec("conv_transpose", kh=kh, kw=kw, cin=3, cout=2, stride=2)
    x = t64(rng.normal(size=(2, 3, 3, 4)))
    w = t64(rng.normal(size=spec.weight_shape))
    b = t64(rng.normal(size=2))
    r = rng.normal(size=conv_transpose2d(x, spec, w, b).shape)
    res = check_gradients(lambda: tsum(_mul(conv_transpose2d(x, spec, w, b), r)), [x, w, b])
    assert res.passed(1e-4), res.rel_errors


@pytest.mark.parametrize("case", range(CASES))
def test_gradcheck_maxpool(case):
    rng = np.random.default_rng(300 + case)
    shape = (1, 2, 4 + case % 3, 4 + (case // 3) % 3)
    x = t64(_separated(rng, shape))
    r = rng.normal(size=maxpool2d(x).shape)
    res = check_gradients(lambda: tsum(_mul(maxpool2d(x), r)), [x])
    assert res.passed(1e-4), res.rel_errors


@pytest.mark.parametrize("case", range(CASES))
def test_gradcheck_relu(case):
    rng = np.random.default_rng(400 + case)
    x = t64(_separated(rng, (2, 3, 3, 3)))
    r = rng.normal(size=x.shape)
    res = check_gradients(lambda: tsum(_mul(relu(x), r)), [x])
    assert res.passed(1e-4), res.rel_errors


@pytest.mark.parametrize("case", range(CASES))
def test_gradcheck_concat(case):
    rng = np.random.default_rng(500 + case)
    a = t64(rng.normal(size=(2, 1 + case % 3, 3, 4)))
    b = t64(rng.normal(size=(2, 2, 3, 4)))
    r = rng.normal(size=(2, a.shape[1] + 2, 3, 4))
    res = check_gradients(lambda: tsum(_mul(concat_channels([a, b]), r)), [a, b])
    assert res.passed(1e-4), res.rel_errors


@pytest.mark.parametrize("case", range(CASES))
def test_gradcheck_softmax_ce(case):
    rng = np.random.default_rng(600 + case)
    c = 2 + case % 4
    logits = t64(rng.normal(size=(1 + case % 2, c, 2, 2)) * 2)
    labels = rng.integers(0, c, size=(logits.shape[0], 2, 2))
    res = check_gradients(lambda: softmax_ce_map(logits, labels), [logits])
    assert res.passed(1e-4), res.rel_errors


@pytest.mark.parametrize("case", range(CASES))
def test_gradcheck_composed_conv_relu_pool_loss(case):
    rng = np.random.default_rng(700 + case)
    x = t64(rng.normal(size=(1, 1, 4, 4)))
    spec = LayerSpec("conv", kh=3, kw=3, cin=1, cout=3)
    w = t64(rng.normal(size=spec.weight_shape))
    b = t64(rng.normal(size=3) * 0.1)
    labels = rng.integers(0, 3, size=(1, 2, 2))

    def fn():
        return softmax_ce_map(maxpool2d(relu(conv2d(x, spec, w, b))), labels)

    res = check_gradients(fn, [x, w, b])
    assert res.passed(1e-4), res.rel_errors


def _mul(t, r):
    """Elementwise product with a constant array (test-only projection)."""
    from stripseg.tensorcore.tensor import make_result

    return make_result(t.data * r, (t,), lambda g: (g * r,))


# ---------------------------------------------------------------- AdaDelta


def test_adadelta_first_step_hand_value():
    p = Tensor(np.zeros(1, dtype=np.float64))
    st_ = AdaDeltaState(rho=0.95, epsilon=1e-6, lr_multiplier=0.1)
    adadelta_step({"p": p}, st_, {"p": np.ones(1)})
    expected = -0.1 * (1e-3 / math.sqrt(0.05 + 1e-6))
    assert p.data[0] == pytest.approx(expected, rel=1e-12)
    assert p.data[0] == pytest.approx(-4.472e-4, rel=1e-3)


def test_adadelta_zero_gradient_is_fixed_point():
    rng = np.random.default_rng(0)
    p = Tensor(rng.normal(size=(3, 4)))
    before = p.data.copy()
    st_ = AdaDeltaState()
    for _ in range(5):
        adadelta_step({"p": p}, st_, {"p": np.zeros((3, 4))})
    np.testing.assert_array_equal(p.data, before)
    assert not st_.sq_grad["p"].any() and not st_.sq_delta["p"].any()


def test_adadelta_lr_staircase_decay():
    st_ = AdaDeltaState(lr_multiplier=0.1, decay_factor=0.1, decay_interval=3)
    p = Tensor(np.zeros(1))
    seen = []
    for _ in range(9):
        seen.append(st_.current_lr)
        adadelta_step({"p": p}, st_, {"p": np.ones(1)})
    np.testing.assert_allclose(seen, [0.1] * 3 + [0.01] * 3 + [0.001] * 3)


def test_adadelta_accumulators_nonnegative():
    rng = np.random.default_rng(2)
    p = Tensor(rng.normal(size=10))
    st_ = AdaDeltaState()
    for _ in range(10):
        adadelta_step({"p": p}, st_, {"p": rng.normal(size=10)})
    assert (st_.sq_grad["p"] >= 0).all() and (st_.sq_delta["p"] >= 0).all()


def test_adadelta_rejects_nonpositive_lr():
    with pytest.raises(ValueError):
        AdaDeltaState(lr_multiplier=0.0)


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_bytes_layout():
    blob = encode_checkpoint(b"{}", {"w": np.array([[1.0, 2.0]], dtype=np.float32)})
    expected = (
        b"SSEG" + (1).to_bytes(4, "little") + (2).to_bytes(4, "little") + b"{}"
        + (1).to_bytes(4, "little") + b"w" + (2).to_bytes(4, "little")
        + (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
        + np.array([1.0, 2.0], dtype="<f4").tobytes()
    )
    assert blob == expected


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.text(min_size=1, max_size=8),
                          st.lists(st.integers(1, 4), min_size=0, max_size=4)), max_size=4, unique_by=lambda t: t[0]),
       st.binary(max_size=40))
def test_checkpoint_round_trip(records, cfg):
    rng = np.random.default_rng(0)
    tensors = {name: rng.normal(size=dims).astype(np.float32) for name, dims in records}
    blob, back = decode_checkpoint(encode_checkpoint(cfg, tensors))
    assert blob == cfg
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        assert back[k].tobytes() == np.asarray(tensors[k]).tobytes()


def test_checkpoint_rejects_garbage():
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"XXXX\x01\x00\x00\x00")
    good = encode_checkpoint(b"", {"a": np.ones((3, 3), np.float32)})
    with pytest.raises(CheckpointError):
        decode_checkpoint(good[:-5])


# ---------------------------------------------------------------- memory meter


def test_meter_releases_graph_after_backward():
    rng = np.random.default_rng(0)
    spec = LayerSpec("conv", kh=3, kw=3, cin=1, cout=4)
    w = Tensor(rng.normal(size=spec.weight_shape).astype(np.float32), requires_grad=True)
    with metered(MemoryMeter()) as meter:
        x = Tensor(rng.normal(size=(1, 1, 8, 8)).astype(np.float32))
        loss = softmax_ce_map(relu(conv2d(x, spec, w)), np.zeros((1, 8, 8), dtype=int))
        assert meter.live > 0
        backward(loss)
        del loss
        assert meter.live == 0
        assert meter.peak >= 2 * 4 * 64 * 4


# ---------------------------------------------------------------- branch replay


def test_branch_replay_pins_the_linear_piece():
    from stripseg.tensorcore.ops import record_branches

    x = Tensor(np.array([[[[-1.0, 2.0], [3.0, -4.0]]]]))
    with record_branches() as tape:
        base = maxpool2d(relu(x)).data
    assert len(tape.items) == 2
    flipped = Tensor(-x.data)
    with record_branches(tape):
        pinned = maxpool2d(relu(flipped)).data
    # same masks and argmax as the recorded pass: relu keeps entries 2 and 3
    assert base.item() == 3.0 and pinned.item() == -3.0
    with pytest.raises(RuntimeError):
        with record_branches(tape) as t:
            t.pos = 2
            relu(x)


def test_frozen_branch_gradcheck_handles_kinks():
    rng = np.random.default_rng(0)
    spec = LayerSpec("conv", kh=3, kw=3, cin=2, cout=3)
    w = t64(rng.normal(size=(3, 2, 3, 3)))
    x = t64(rng.normal(size=(1, 2, 6, 6)))
    # a kink sits within one step of many coordinates when outputs cluster near zero
    fn = lambda: tsum(maxpool2d(relu(conv2d(x, spec, w, None))))
    res = check_gradients(fn, [w, x], step=0.3, freeze_branches=True)
    assert res.passed(1e-8)
