import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgttrack import autodiff as ad
from hgttrack.autodiff import GraphError, SamplingError, ShapeError, Tensor, backward, grad_check


def leaf(rng, *shape, lo=None, hi=None):
    data = rng.normal(size=shape) if lo is None else rng.uniform(lo, hi, size=shape)
    return Tensor(data, requires_grad=True)


def weighted(t, rng):
    w = rng.normal(size=t.shape)
    return ad.sum_(ad.mul(t, Tensor(w)))


CASES = {
    "matmul": lambda r: ((a := leaf(r, 3, 4)), (b := leaf(r, 4, 2)), lambda: ad.matmul(a, b)),
    "matmul3": lambda r: ((a := leaf(r, 2, 3, 4)), (b := leaf(r, 2, 4, 2)), lambda: ad.matmul(a, b)),
    "linear": lambda r: ((x := leaf(r, 5, 3)), (w := leaf(r, 3, 2)), (b := leaf(r, 2)), lambda: ad.linear(x, w, b)),
    "conv1x1": lambda r: ((x := leaf(r, 3, 4, 2)), (w := leaf(r, 2, 3)), (b := leaf(r, 3)), lambda: ad.conv1x1(x, w, b)),
    "relu": lambda r: ((x := leaf(r, 4, 3)), lambda: ad.relu(x)),
    "sigmoid": lambda r: ((x := leaf(r, 4, 3)), lambda: ad.sigmoid(x)),
    "softmax": lambda r: ((x := leaf(r, 3, 5)), lambda: ad.softmax_lastdim(x)),
    "add": lambda r: ((a := leaf(r, 2, 3)), (b := leaf(r, 2, 3)), lambda: ad.add(a, b)),
    "sub": lambda r: ((a := leaf(r, 2, 3)), (b := leaf(r, 2, 3)), lambda: ad.sub(a, b)),
    "mul_scalar": lambda r: ((a := leaf(r, 2, 3)), lambda: ad.mul_scalar(a, -1.7)),
    "concat": lambda r: ((a := leaf(r, 2, 3)), (b := leaf(r, 2, 1)), lambda: ad.concat_lastdim([a, b])),
    "bilinear": lambda r: ((m := leaf(r, 4, 5, 2)), (c := Tensor(r.uniform(0.2, 2.8, size=(6, 2)), requires_grad=True)),
                           lambda: ad.bilinear_sample(m, c)),
    "gather": lambda r: ((x := leaf(r, 4, 3)), lambda: ad.gather_rows(x, [2, 0, -1, 2])),
    "scatter": lambda r: ((v := leaf(r, 5, 3)), (w := leaf(r, 5)), lambda: ad.scatter_weighted_sum(v, w, [0, 2, 2, 1, 0], 4)),
    "exp_log": lambda r: ((x := leaf(r, 3, 2, lo=0.2, hi=2.0)), lambda: ad.log(ad.exp(ad.mul(x, x)))),
    "abs_clip": lambda r: ((x := leaf(r, 3, 4)), lambda: ad.clip(ad.abs_(x), 0.3, 1.2)),
    "sum_axis": lambda r: ((x := leaf(r, 3, 4)), lambda: ad.sum_(x, axis=1)),
    "reshape_permute": lambda r: ((x := leaf(r, 2, 3, 4)), lambda: ad.permute(ad.reshape(x, (6, 4)), (1, 0))),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_gradients_match_central_differences(name):
    rng = np.random.default_rng(len(name))
    *leaves, build = CASES[name](rng)
    w = np.random.default_rng(1).normal(size=build().shape)
    rep = grad_check(lambda: ad.sum_(ad.mul(build(), Tensor(w))), leaves)
    assert rep.passed, rep
    assert rep.checked > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_two_layer_composite_grad(seed, n, d, k):
    rng = np.random.default_rng(seed)
    x, w1, b1, w2 = leaf(rng, n, d), leaf(rng, d, k), leaf(rng, k), leaf(rng, k, 3)
    target = rng.normal(size=(n, 3))

    def f():
        h = ad.sigmoid(ad.linear(x, w1, b1))
        p = ad.softmax_lastdim(ad.matmul(h, w2))
        return ad.sum_(ad.mul(ad.log(p), Tensor(target)))

    assert grad_check(f, [x, w1, b1, w2]).passed


def test_registry_holds_the_core_kinds():
    assert set(ad.CORE_KINDS) <= set(ad.OPS)
    assert len(ad.CORE_KINDS) == 13
    out = ad.forward_op("add", [Tensor(np.ones(2)), Tensor(np.ones(2))])
    assert np.array_equal(out.data, [2.0, 2.0])


def test_no_broadcasting():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones(3)))
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        ad.concat_lastdim([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))])


def test_softmax_is_stable_for_large_inputs():
    out = ad.softmax_lastdim(Tensor(np.array([[1000.0, 0.0, -1000.0]]))).data
    assert np.isfinite(out).all()
    assert out[0, 0] == pytest.approx(1.0)


def test_bilinear_lattice_points_are_exact_and_out_of_range_errors():
    fmap = np.arange(24.0).reshape(3, 4, 2)
    coords = np.array([[0.0, 0.0], [3.0, 2.0], [1.0, 2.0]])
    out = ad.bilinear_sample(Tensor(fmap), Tensor(coords)).data
    assert np.array_equal(out, fmap[[0, 2, 2], [0, 3, 1]])
    with pytest.raises(SamplingError):
        ad.bilinear_sample(Tensor(fmap), Tensor(np.array([[3.6, 0.0]])))
    # within half a cell: clamped onto the border
    clamped = ad.bilinear_sample(Tensor(fmap), Tensor(np.array([[-0.4, 0.0]]))).data
    assert np.array_equal(clamped, fmap[0, 0][None])


def test_gather_negative_index_is_a_zero_row():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    out = ad.gather_rows(x, [-1, 1])
    assert np.array_equal(out.data[0], np.zeros(3))
    backward(ad.sum_(out))
    assert np.array_equal(x.grad, [[0, 0, 0], [1, 1, 1]])


def test_backward_errors():
    with pytest.raises(GraphError):
        backward(Tensor(np.ones(3), requires_grad=True))
    with pytest.raises(GraphError):
        backward(Tensor(1.0))


def test_backward_zero_fills_unreached_leaves():
    a, b = Tensor(np.ones(2), requires_grad=True), Tensor(np.ones(2), requires_grad=True)
    backward(ad.sum_(a), [a, b])
    assert np.array_equal(b.grad, np.zeros(2))


def test_gradients_accumulate_over_reused_nodes():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = ad.mul(x, x)
    backward(ad.sum_(ad.add(y, y)))
    assert x.grad[0] == pytest.approx(8.0)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with ad.no_grad():
        y = ad.mul_scalar(x, 2.0)
    assert not y.requires_grad


def test_grad_check_detects_a_wrong_gradient():
    x = Tensor(np.array([0.3, -1.2]), requires_grad=True)

    def broken():
        def bwd(g):
            return (3.0 * g,)

        return ad.sum_(ad._make(x.data * 2.0, (x,), bwd, "double"))

    rep = grad_check(broken, [x])
    assert not rep.passed
    assert rep.max_relative_error > 0.1


def test_grad_check_skips_kinks():
    x = Tensor(np.array([0.0, 1.0]), requires_grad=True)
    rep = grad_check(lambda: ad.sum_(ad.relu(x)), [x])
    assert rep.skipped_kinks == 1 and rep.checked == 1 and rep.passed


def test_tape_is_topological():
    a = Tensor(np.ones(2), requires_grad=True)
    b = ad.mul_scalar(a, 2.0)
    c = ad.add(b, a)
    tape = ad.build_tape(ad.sum_(c))
    order = {id(n): i for i, n in enumerate(tape.nodes)}
    for n in tape.nodes:
        for p in n._inputs:
            if id(p) in order:
                assert order[id(p)] < order[id(n)]
