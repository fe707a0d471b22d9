"""Contrastive objective: formula oracles and gradient checks."""

import math

import numpy as np
import pytest

from commonground.autodiff import ShapeError, Tensor
from commonground.gradcheck import check_tensor
from commonground.mapping import MappingDims, init_params
from commonground.objective import batch_loss, posteriors


def test_uniform_scores_give_closed_form_loss():
    for b in (1, 2, 5, 32):
        z = Tensor(np.zeros((b, b)), dtype=np.float64)
        out = batch_loss(z, z, gamma2=10.0)
        want = 2.0 * b * math.log(b)
        assert float(out.word.data) == pytest.approx(want, abs=1e-9)
        assert float(out.sentence.data) == pytest.approx(want, abs=1e-9)
        assert float(out.total.data) == pytest.approx(2 * want, abs=1e-9)


def test_posterior_hand_value():
    # Diagonal 0.5 at sharpness 10: matched mass e^5 / (e^5 + 1).
    scores = np.array([[0.5, 0.0], [0.0, 0.5]])
    cap_given_img, img_given_cap = posteriors(scores, gamma2=10.0)
    want = math.exp(5.0) / (math.exp(5.0) + 1.0)
    assert cap_given_img[0, 0] == pytest.approx(want, abs=1e-9)
    assert img_given_cap[1, 1] == pytest.approx(want, abs=1e-9)


def test_posterior_axes_sum_to_one():
    rng = np.random.default_rng(0)
    scores = rng.standard_normal((6, 6))
    cap_given_img, img_given_cap = posteriors(scores, gamma2=10.0)
    np.testing.assert_allclose(cap_given_img.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(img_given_cap.sum(axis=1), 1.0, atol=1e-12)


def test_posterior_stability_under_large_scores():
    scores = np.array([[500.0, -500.0], [-500.0, 500.0]])
    cap_given_img, img_given_cap = posteriors(scores, gamma2=10.0)
    assert np.isfinite(cap_given_img).all() and np.isfinite(img_given_cap).all()
    np.testing.assert_allclose(cap_given_img.sum(axis=0), 1.0, atol=1e-12)


def test_loss_equals_negative_log_posteriors():
    rng = np.random.default_rng(1)
    rw = rng.standard_normal((5, 5))
    rs = rng.standard_normal((5, 5))
    out = batch_loss(Tensor(rw, dtype=np.float64), Tensor(rs, dtype=np.float64), gamma2=10.0)
    want = 0.0
    for scores in (rw, rs):
        cap_given_img, img_given_cap = posteriors(scores, gamma2=10.0)
        want -= np.log(np.diagonal(cap_given_img)).sum()
        want -= np.log(np.diagonal(img_given_cap)).sum()
    assert float(out.total.data) == pytest.approx(want, rel=1e-10)


def test_loss_approaches_zero_for_strongly_diagonal_scores():
    mild = np.full((3, 3), -0.5)
    np.fill_diagonal(mild, 0.5)
    out = batch_loss(Tensor(mild, dtype=np.float64), Tensor(mild, dtype=np.float64), 10.0)
    assert 0.0 < float(out.total.data) < 2e-3

    # A huge margin underflows cleanly to zero instead of going negative.
    harsh = np.full((3, 3), -5.0)
    np.fill_diagonal(harsh, 5.0)
    out = batch_loss(Tensor(harsh, dtype=np.float64), Tensor(harsh, dtype=np.float64), 10.0)
    assert 0.0 <= float(out.total.data) < 1e-8


def test_regularization_term():
    dims = MappingDims(
        level_channels=(3,),
        word_layers=2,
        word_dim=4,
        sentence_layers=2,
        sentence_dim=4,
        common_dim=5,
    )
    mp = init_params(0, dims, dtype=np.float64)
    z = Tensor(np.zeros((2, 2)), dtype=np.float64)
    out = batch_loss(z, z, gamma2=10.0, reg_value=0.0005, params=mp)
    want = 0.0005 * float(mp.weight_squares().data)
    assert float(out.regularization.data) == pytest.approx(want, rel=1e-9)
    assert float(out.total.data) == pytest.approx(
        float(out.word.data) + float(out.sentence.data) + want, rel=1e-9
    )
    with pytest.raises(ValueError):
        batch_loss(z, z, gamma2=10.0, reg_value=0.1, params=None)


def test_shape_validation():
    z = Tensor(np.zeros((2, 2)), dtype=np.float64)
    bad = Tensor(np.zeros((2, 3)), dtype=np.float64)
    other = Tensor(np.zeros((3, 3)), dtype=np.float64)
    with pytest.raises(ShapeError):
        batch_loss(bad, z, 10.0)
    with pytest.raises(ShapeError):
        batch_loss(z, other, 10.0)
    with pytest.raises(ValueError):
        batch_loss(z, z, gamma2=0.0)
    with pytest.raises(ShapeError):
        posteriors(np.zeros((2, 3)), 10.0)


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    rw = Tensor(rng.standard_normal((4, 4)), requires_grad=True, dtype=np.float64)
    rs = Tensor(rng.standard_normal((4, 4)), requires_grad=True, dtype=np.float64)
    for target in (rw, rs):
        err = check_tensor(lambda: batch_loss(rw, rs, gamma2=10.0).total, target)
        assert err <= 1e-4
