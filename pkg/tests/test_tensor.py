import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import check_gradients, fd_gradients, max_rel_err
from titlegan import tensor as T
from titlegan.params import make_rng
from titlegan.tensor import DomainError, GradTape, ShapeError, Tensor


def test_matmul_identity():
    eye = Tensor(np.eye(2))
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(T.matmul(eye, m).data, m.data)


def test_matmul_zero():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    z = Tensor(np.zeros((2, 2)))
    assert np.array_equal(T.matmul(m, z).data, np.zeros((2, 2)))


def test_matmul_hand_product():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal(T.matmul(a, b).data, [[19.0, 22.0], [43.0, 50.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))


def test_matmul_vector_cases():
    v = Tensor([1.0, 2.0, 3.0])
    m = Tensor(np.arange(6.0).reshape(3, 2))
    assert np.allclose(T.matmul(v, m).data, v.data @ m.data)
    assert np.allclose(T.matmul(m, Tensor([1.0, -1.0])).data, m.data @ [1.0, -1.0])


def test_elementwise_fixed_points():
    assert T.tanh(Tensor(0.0)).item() == 0.0
    assert T.sigmoid(Tensor(0.0)).item() == 0.5
    assert abs(T.tanh(Tensor(1.0)).item() - math.tanh(1.0)) < 1e-15


def test_log_domain_error():
    with pytest.raises(DomainError):
        T.log(Tensor([1.0, 0.0]))
    with pytest.raises(DomainError):
        T.log(Tensor([-0.5]))


def test_add_bias_special_case():
    m = Tensor(np.ones((2, 3)))
    b = Tensor([1.0, 2.0, 3.0])
    out = T.add(m, b)
    assert np.array_equal(out.data, [[2.0, 3.0, 4.0], [2.0, 3.0, 4.0]])
    with pytest.raises(ShapeError):
        T.add(Tensor(np.ones(3)), Tensor(np.ones(4)))


def test_softmax_uniform_and_shift():
    assert np.allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5], atol=1e-15)
    for c in (-7.3, 0.0, 11.0):
        out = T.softmax(Tensor([c, c, c])).data
        assert np.max(np.abs(out - 1.0 / 3.0)) < 1e-12


def test_softmax_direct_evaluation():
    out = T.softmax(Tensor([1.0, 2.0])).data
    expect = np.exp([1.0, 2.0]) / np.exp([1.0, 2.0]).sum()
    assert np.max(np.abs(out - expect)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8),
       st.floats(-30, 30))
def test_softmax_properties(xs, c):
    x = Tensor(xs)
    y = T.softmax(x).data
    assert abs(y.sum() - 1.0) < 1e-12
    assert np.all(y > 0.0) and np.all(y < 1.0 + 1e-12)
    shifted = T.softmax(Tensor([v + c for v in xs])).data
    assert np.max(np.abs(y - shifted)) < 1e-12


def test_softmax_axis_slices():
    x = Tensor(np.arange(12.0).reshape(3, 4))
    y = T.softmax(x, axis=1).data
    assert np.max(np.abs(y.sum(axis=1) - 1.0)) < 1e-12
    y0 = T.softmax(x, axis=0).data
    assert np.max(np.abs(y0.sum(axis=0) - 1.0)) < 1e-12


def test_concat_cases():
    a = Tensor([[1.0, 2.0]])
    assert np.array_equal(T.concat([a], axis=0).data, a.data)
    z = T.concat([Tensor(np.zeros((1, 2))), Tensor(np.zeros((1, 3)))], axis=1)
    assert z.shape == (1, 5) and not z.data.any()
    left = Tensor(np.arange(6.0).reshape(2, 3))
    right = Tensor(np.arange(8.0).reshape(2, 4) + 10)
    both = T.concat([left, right], axis=1)
    assert both.shape == (2, 7)
    assert np.array_equal(both.data[:, :3], left.data)
    assert np.array_equal(both.data[:, 3:], right.data)
    with pytest.raises(ShapeError):
        T.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=1)


def test_lookup_cases():
    table = Tensor(np.arange(12.0).reshape(4, 3))
    assert np.array_equal(T.lookup(table, [0]).data, table.data[:1])
    assert np.array_equal(T.lookup(table, 2).data, table.data[2])
    empty = T.lookup(table, [])
    assert empty.shape == (0, 3)
    with pytest.raises(IndexError, match="7"):
        T.lookup(table, [1, 7])


def test_lookup_scatter_add_backward():
    table = Tensor(np.zeros((4, 3)))
    with GradTape() as tape:
        rows = T.lookup(table, [1, 1])
        loss = T.tsum(rows)
    grads = tape.gradients(loss, {"table": table})
    expect = np.zeros((4, 3))
    expect[1] = 2.0
    assert np.array_equal(grads["table"], expect)


def test_backward_sum_gives_ones():
    w = Tensor(np.arange(6.0).reshape(2, 3))
    with GradTape() as tape:
        loss = T.tsum(w)
    grads = tape.gradients(loss, {"w": w})
    assert np.array_equal(grads["w"], np.ones((2, 3)))


def test_backward_square():
    w = Tensor([1.0, 2.0, 3.0])
    with GradTape() as tape:
        loss = T.tsum(T.mul(w, w))
    grads = tape.gradients(loss, {"w": w})
    assert np.allclose(grads["w"], [2.0, 4.0, 6.0], atol=1e-12)


def test_backward_requires_scalar_loss():
    w = Tensor([1.0, 2.0])
    with GradTape() as tape:
        out = T.tanh(w)
    with pytest.raises(ShapeError):
        tape.gradients(out, {"w": w})


def test_unreachable_parameter_gets_zeros():
    w = Tensor([1.0, 2.0])
    other = Tensor(np.ones((2, 2)))
    with GradTape() as tape:
        loss = T.tsum(w)
    grads = tape.gradients(loss, {"w": w, "other": other})
    assert np.array_equal(grads["other"], np.zeros((2, 2)))


def _composite_graph(seed):
    """One of four op-covering graph templates with seeded leaf values."""
    rng = make_rng(seed)
    template = seed % 4
    if template == 0:
        leaves = {
            "m1": Tensor(rng.uniform(-1, 1, (2, 3))),
            "m2": Tensor(rng.uniform(-1, 1, (3, 4))),
            "bias": Tensor(rng.uniform(-1, 1, 4)),
            "c": Tensor(rng.uniform(-1, 1, (2, 4))),
        }

        def loss_fn():
            x = T.add(T.matmul(leaves["m1"], leaves["m2"]), leaves["bias"])
            return T.tsum(T.mul(T.softmax(T.tanh(x), axis=1), leaves["c"]))

    elif template == 1:
        leaves = {
            "table": Tensor(rng.uniform(-1, 1, (5, 3))),
            "w": Tensor(rng.uniform(-1, 1, (3, 2))),
        }

        def loss_fn():
            rows = T.lookup(leaves["table"], [0, 2, 2])
            one = T.reshape(T.lookup(leaves["table"], 3), (1, 3))
            z = T.matmul(T.concat([rows, one], axis=0), leaves["w"])
            flat = T.reshape(z, (8,))
            return T.tsum(T.sigmoid(T.slice_vec(flat, 1, 6)))

    elif template == 2:
        leaves = {
            "v1": Tensor(rng.uniform(-0.6, 0.6, 5)),
            "v2": Tensor(rng.uniform(-0.6, 0.6, 5)),
        }

        def loss_fn():
            q = T.sigmoid(T.mul(leaves["v1"], leaves["v2"]))
            lq = T.log(T.clip(q, 1e-3, 1.0 - 1e-3))
            return T.add(T.scale(T.tsum(lq), 0.5), T.neg(T.pick(q, 2)))

    else:
        leaves = {
            "enc": Tensor(rng.uniform(-1, 1, (4, 3))),
            "wq": Tensor(rng.uniform(-1, 1, (3, 3))),
            "wk": Tensor(rng.uniform(-1, 1, (3, 3))),
            "h": Tensor(rng.uniform(-1, 1, 3)),
            "v": Tensor(rng.uniform(-1, 1, 3)),
            "u": Tensor(rng.uniform(-1, 1, 3)),
        }

        def loss_fn():
            pre = T.add(T.matmul(leaves["enc"], leaves["wk"]),
                        T.matmul(leaves["h"], leaves["wq"]))
            alpha = T.softmax(T.matmul(T.tanh(pre), leaves["v"]))
            ctx = T.matmul(alpha, leaves["enc"])
            return T.tsum(T.mul(ctx, leaves["u"]))

    return loss_fn, leaves


@pytest.mark.parametrize("seed", range(8))
def test_composite_graph_gradients_match_finite_differences(seed):
    loss_fn, leaves = _composite_graph(seed)
    check_gradients(loss_fn, leaves)


def test_gradients_accumulate_across_reuse():
    x = Tensor([0.3, -0.2])
    with GradTape() as tape:
        y = T.tanh(x)
        loss = T.add(T.tsum(T.mul(y, y)), T.tsum(y))
    grads = tape.gradients(loss, {"x": x})
    numeric = fd_gradients(
        lambda: float(np.sum(np.tanh(x.data) ** 2) + np.sum(np.tanh(x.data))),
        {"x": x},
    )
    assert max_rel_err(grads["x"], numeric["x"]) < 1e-6


def test_forward_stays_finite_on_extreme_inputs():
    big = Tensor([1e3, -1e3, 0.0])
    for out in (T.tanh(big), T.sigmoid(big), T.softmax(big)):
        assert np.all(np.isfinite(out.data))


def test_determinism_same_seed_bit_identical():
    def run():
        rng = make_rng(1234)
        a = Tensor(rng.uniform(-1, 1, (3, 3)))
        b = Tensor(rng.uniform(-1, 1, (3, 3)))
        return T.softmax(T.matmul(T.tanh(a), T.sigmoid(b)), axis=1).data.tobytes()

    assert run() == run()


def test_no_tape_means_no_recording():
    with GradTape() as outer:
        pass  # empty tape: ops below run outside any tape
    x = Tensor([1.0, 2.0])
    y = T.tanh(x)
    assert len(outer) == 0 and y.shape == (2,)
