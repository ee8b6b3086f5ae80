import math

import numpy as np
import pytest

from cnfgnn import numerics as nx
from cnfgnn.errors import ContractError, DimensionError
from cnfgnn.numerics import Adam, SGD, Tensor, check_gradients


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((a @ b).data, [[1, 2], [3, 4]])


def test_matmul_hand_value():
    assert (Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_zero():
    z = nx.matmul(np.zeros((3, 4)), np.random.default_rng(0).normal(size=(4, 5)))
    assert not z.data.any()


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        nx.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_gradient_rules():
    rng = np.random.default_rng(1)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    g = rng.normal(size=(3, 2))
    nx.backward(a @ b, g)
    np.testing.assert_allclose(a.grad, g @ b.data.T)
    np.testing.assert_allclose(b.grad, a.data.T @ g)


@pytest.mark.parametrize("op,args,expected", [
    ("sigmoid", (0.0,), 0.5),
    ("tanh", (0.0,), 0.0),
])
def test_unary_examples(op, args, expected):
    assert nx.elementwise(op, *args).item() == expected


def test_concat_last_axis():
    assert nx.concat([Tensor([1.0, 2.0]), Tensor([3.0])]).data.tolist() == [1.0, 2.0, 3.0]


def test_elementwise_dispatch_and_errors():
    assert nx.elementwise("concat", Tensor([1.0]), Tensor([2.0])).data.tolist() == [1.0, 2.0]
    assert nx.elementwise("slice", Tensor([1.0, 2.0, 3.0]), 1, 3).data.tolist() == [2.0, 3.0]
    with pytest.raises(DimensionError):
        nx.add(np.ones((2, 3)), np.ones((4,)))
    with pytest.raises(ContractError):
        nx.elementwise("softmax", Tensor(1.0))


def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    (x * x).backward()
    assert x.grad == 6.0


def test_backward_sigmoid_at_zero():
    x = Tensor(0.0, requires_grad=True)
    nx.sigmoid(x).backward()
    assert x.grad == 0.25


def test_backward_nonscalar_needs_seed():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_seeded_backward_equals_surrogate_inner_product():
    rng = np.random.default_rng(2)
    w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    x = rng.normal(size=(5, 4))
    seed = rng.normal(size=(5, 3))

    nx.backward(nx.tanh(nx.matmul(x, w)), seed)
    seeded = w.grad.copy()
    w.grad = None
    nx.tsum(nx.mul(nx.tanh(nx.matmul(x, w)), seed)).backward()
    np.testing.assert_allclose(seeded, w.grad, rtol=1e-13)


def test_leaf_gradients_accumulate():
    x = Tensor(2.0, requires_grad=True)
    (x * 3.0).backward()
    (x * 3.0).backward()
    assert x.grad == 6.0


def test_backward_visits_shared_subexpression_once():
    x = Tensor(1.5, requires_grad=True)
    y = nx.tanh(x)
    z = y * y + y
    z.backward()
    t = math.tanh(1.5)
    assert math.isclose(x.grad, (2 * t + 1) * (1 - t * t), rel_tol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_composite_finite_differences(seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    c = Tensor(rng.normal(size=(5,)), requires_grad=True)
    idx = np.array([0, 2, 1, 2])

    def loss():
        h = nx.sigmoid(nx.matmul(a, b) + c)
        h = nx.concat([h, nx.relu(nx.slice_last(h, 1, 3) - 0.5)], axis=-1)
        g = nx.take(h, idx, axis=1)
        s = nx.segment_sum(nx.reshape(g, (8, 7)), np.array([0, 1, 1, 3, 0, 2, 2, 1]), 4)
        return nx.mean(nx.square(s)) + nx.tsum(nx.sorted_sum(s))

    assert check_gradients(loss, [a, b, c]) < 1e-4


def test_broadcast_gradients_reduce_to_operand_shape():
    a = Tensor(np.ones((1, 3)), requires_grad=True)
    b = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    nx.tsum(a * b).backward()
    np.testing.assert_array_equal(a.grad, [[3.0, 5.0, 7.0]])
    np.testing.assert_array_equal(b.grad, np.ones((2, 3)))


def test_sorted_sum_permutation_invariant_bitwise():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(17, 4)) * 10.0 ** rng.integers(-8, 8, size=(17, 4))
    ref = nx.sorted_sum(x).data
    for _ in range(20):
        assert np.array_equal(nx.sorted_sum(x[rng.permutation(17)]).data, ref)


def test_forward_determinism():
    def run():
        rng = np.random.default_rng(7)
        w = Tensor(rng.normal(size=(6, 6)), requires_grad=True)
        x = rng.normal(size=(3, 6))
        y = nx.tanh(x @ w)
        nx.tsum(y * y).backward()
        return y.data, w.grad

    (y1, g1), (y2, g2) = run(), run()
    assert np.array_equal(y1, y2) and np.array_equal(g1, g2)


# -- optimizers --------------------------------------------------------

def test_adam_zero_gradient_leaves_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros(2)
    opt.step()
    assert p.data.tolist() == [1.0, -2.0]
    assert opt.t == 1


def test_adam_first_step_is_signed_lr():
    p = Tensor(np.array([0.0, 0.0, 0.0]), requires_grad=True)
    opt = Adam([p], lr=0.01)
    p.grad = np.array([3.0, -0.2, 1e-3])
    opt.step()
    np.testing.assert_allclose(p.data, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_adam_two_steps_on_square_matches_reference_recurrence():
    # independent scalar recurrence
    x_ref, m, v = 1.0, 0.0, 0.0
    trace = [abs(x_ref)]
    for t in (1, 2):
        g = 2 * x_ref
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x_ref -= 0.1 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        trace.append(abs(x_ref))
    assert trace[0] > trace[1] > trace[2]

    x = Tensor(1.0, requires_grad=True)
    opt = Adam([x], lr=0.1)
    for _ in range(2):
        opt.zero_grad()
        (x * x).backward()
        opt.step()
    assert math.isclose(x.item(), x_ref, rel_tol=1e-12)


def test_optimizer_requires_gradients():
    p = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ContractError):
        Adam([p]).step()
    with pytest.raises(ContractError):
        SGD([p], lr=0.1).step()


def test_sgd_step():
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    p.grad = np.array([0.5, -1.0])
    SGD([p], lr=0.1).step()
    np.testing.assert_allclose(p.data, [0.95, 2.1])
