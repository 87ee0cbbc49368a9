import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgttrack import autodiff as ad
from hgttrack.autodiff import Tensor, grad_check
from hgttrack.losses import (
    LossWeights,
    focal_loss,
    gaussian_radius,
    matching_loss,
    render_targets,
    rows_l1,
    sparse_l1,
    total_loss,
)


def test_focal_single_positive():
    got = focal_loss(Tensor(np.array([[0.5]])), np.array([[1.0]])).item()
    assert got == pytest.approx(0.25 * math.log(2), abs=1e-12)


def test_focal_negative_cell_is_penalty_reduced():
    c = np.array([[0.9, 0.3]])
    Y = np.array([[1.0, 0.5]])
    expected = -(0.1**2) * math.log(0.9) - (0.5**4) * (0.3**2) * math.log(0.7)
    assert focal_loss(Tensor(c), Y).item() == pytest.approx(expected, abs=1e-12)


def test_focal_without_positives_is_not_normalised_by_zero():
    got = focal_loss(Tensor(np.array([[0.2]])), np.array([[0.0]])).item()
    assert got == pytest.approx(-(0.2**2) * math.log(0.8))


def test_focal_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        focal_loss(Tensor(np.zeros((2, 2))), np.zeros((2, 3)))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.98), st.floats(0.0, 0.01))
def test_focal_decreases_as_positive_confidence_grows(p, dp):
    a = focal_loss(Tensor(np.array([[p]])), np.array([[1.0]])).item()
    b = focal_loss(Tensor(np.array([[p + dp + 1e-3]])), np.array([[1.0]])).item()
    assert b < a


def test_focal_gradient():
    rng = np.random.default_rng(0)
    c = Tensor(rng.uniform(0.05, 0.95, (4, 4, 2)), requires_grad=True)
    Y = render_targets([[1.3, 2.2]], [[2.0, 2.0]], [1], (4, 4), 2).heatmap
    assert grad_check(lambda: focal_loss(c, Y), [c]).passed


def test_render_peak_is_one_at_the_center_cell():
    r = render_targets([[3.6, 2.2], [0.1, 0.1]], [[3.0, 2.0], [1.0, 1.0]], [0, 2], (6, 8), 3)
    assert r.heatmap[2, 3, 0] == 1.0 and r.heatmap[0, 0, 2] == 1.0
    assert (r.heatmap == 1.0).sum() == 2
    assert r.heatmap.max() <= 1.0
    assert np.allclose(r.refine, [[0.6, 0.2], [0.1, 0.1]])


def test_render_amplitudes_scale_the_peak():
    r = render_targets([[2.0, 2.0]], [[2.0, 2.0]], [0], (5, 5), 1, amplitudes=[0.4])
    assert r.heatmap.max() == pytest.approx(0.4)


def test_render_falls_off_from_the_peak():
    r = render_targets([[5.0, 5.0]], [[6.0, 6.0]], [0], (11, 11), 1)
    row = r.heatmap[5, 5:, 0]
    assert (np.diff(row) <= 0).all()


def test_gaussian_radius_grows_with_size():
    assert gaussian_radius(2, 2) < gaussian_radius(8, 8) < gaussian_radius(20, 20)


def test_rows_l1_and_sparse_l1():
    pred = Tensor(np.array([[1.0, 2.0], [0.0, 0.0]]))
    assert rows_l1(pred, [[0.0, 0.0], [1.0, 1.0]]).item() == pytest.approx(2.5)
    assert rows_l1(Tensor(np.zeros((0, 2))), np.zeros((0, 2))).item() == 0.0
    m = Tensor(np.arange(12.0).reshape(2, 3, 2))
    # cell (x=2, y=1) holds [10, 11]
    assert sparse_l1(m, [[2, 1]], [[10.0, 12.0]]).item() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        sparse_l1(m, [[3, 0]], [[0.0, 0.0]])


def test_matching_single_pair_reduces_to_bce():
    assert matching_loss(Tensor(np.array([[0.7]]))).item() == pytest.approx(-math.log(0.7))


def _matching_numpy(A, identity):
    n = A.shape[0]
    eye = np.eye(n)
    bce = -(eye * np.log(A) + (1 - eye) * np.log(1 - A)).sum() / n**2
    def lsm(x):
        return x - np.log(np.exp(x).sum(axis=1, keepdims=True))
    wr = eye if identity else A
    wc = eye if identity else A.T
    ce = -((wr * lsm(A)).sum() + (wc * lsm(A.T)).sum()) / n
    return bce + ce


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10_000), st.booleans())
def test_matching_agrees_with_direct_formula(n, seed, identity):
    A = np.random.default_rng(seed).uniform(0.02, 0.98, (n, n))
    got = matching_loss(Tensor(A), identity_target=identity).item()
    assert got == pytest.approx(_matching_numpy(A, identity), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10_000))
def test_identity_like_affinity_beats_random(n, seed):
    rng = np.random.default_rng(seed)
    good = np.full((n, n), 0.02) + np.eye(n) * 0.96
    rand = rng.uniform(0.1, 0.9, (n, n))
    assert matching_loss(Tensor(good)).item() < matching_loss(Tensor(rand)).item()


def test_matching_gradient_and_errors():
    A = Tensor(np.random.default_rng(1).uniform(0.1, 0.9, (3, 3)), requires_grad=True)
    assert grad_check(lambda: matching_loss(A), [A]).passed
    with pytest.raises(ad.ShapeError):
        matching_loss(Tensor(np.ones((2, 3)) * 0.5))
    assert matching_loss(Tensor(np.zeros((0, 0)))).item() == 0.0


def test_total_loss_weights():
    comps = {"cf": Tensor(2.0), "bs": Tensor(10.0), "match": Tensor(1.0)}
    assert total_loss(comps, LossWeights()).item() == pytest.approx(2.0 + 1.0 + 1.0)
    with pytest.raises(FloatingPointError):
        total_loss({"cf": Tensor(float("nan"))}, LossWeights())
    with pytest.raises(ValueError):
        LossWeights(0, 0, 0, 0, 0)
