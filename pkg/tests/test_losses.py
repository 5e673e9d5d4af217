import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import log_sigmoid_neg
from ttsfix.errors import (EmptyInput, EmptyMask, IndexOutOfRange, InvalidDistribution, LengthMismatch,
                           NegativeLoss, NonPositiveBeta)
from ttsfix.losses import (DpoInputs, binary_cross_entropy, binary_cross_entropy_grad, dpo_grad_check, dpo_loss,
                           focal_loss, focal_loss_grad, grad_check, masked_dpo_loss, timestamp_mse,
                           timestamp_mse_grad, token_ce, token_ce_grad, total_loss)

LN2 = math.log(2.0)


def make_inputs(rng, n=8, beta=1.0, **kw):
    v = {name: rng.normal(size=n) for name in DpoInputs.VECTORS}
    v.update(kw)
    return DpoInputs(beta=beta, **v)


class TestFocal:
    def test_single_frame_value(self):
        assert focal_loss([0.5], [1], gamma=2, alpha=1) == pytest.approx(0.25 * LN2, abs=1e-15)

    def test_gamma_zero_is_bce(self, rng):
        p = rng.uniform(0.01, 0.99, size=50)
        y = rng.integers(0, 2, size=50)
        assert abs(focal_loss(p, y, 0.0, 1.0) - binary_cross_entropy(p, y)) <= 1e-12
        want = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
        assert binary_cross_entropy(p, y) == pytest.approx(want, rel=1e-12)
        assert np.max(np.abs(focal_loss_grad(p, y, 0.0, 1.0) - binary_cross_entropy_grad(p, y))) <= 1e-9

    def test_perfect_predictions_near_zero(self):
        assert focal_loss([1.0, 0.0], [1, 0]) <= 0.25 * (1e-7) ** 2 * -math.log(1 - 1e-7) + 1e-30

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20), st.floats(0.1, 4.0), st.data())
    def test_focal_below_ce_and_finite(self, probs, gamma, data):
        labels = data.draw(st.lists(st.integers(0, 1), min_size=len(probs), max_size=len(probs)))
        f = focal_loss(probs, labels, gamma, 1.0)
        ce = binary_cross_entropy(probs, labels)
        assert 0.0 <= f <= ce + 1e-15
        assert math.isfinite(f)

    def test_validation(self):
        with pytest.raises(LengthMismatch):
            focal_loss([0.1, 0.2], [1])
        with pytest.raises(EmptyInput):
            focal_loss([], [])
        with pytest.raises(ValueError):
            focal_loss([0.1], [2])
        with pytest.raises(ValueError):
            focal_loss([0.1], [1], alpha=0.0)


class TestSimpleLosses:
    def test_timestamp_mse(self):
        assert timestamp_mse([0.2, 0.7], [0.2, 0.7]) == 0.0
        assert timestamp_mse([0, 1], [1, 1]) == 0.5
        assert timestamp_mse([0.3], [0]) == pytest.approx(0.09)

    def test_token_ce(self):
        assert token_ce([[1.0, 0.0], [0.0, 1.0]], [0, 1]) <= 1e-6
        assert token_ce(np.full((3, 4), 0.25), [0, 3, 2]) == pytest.approx(math.log(4))
        assert token_ce([[0.5, 0.5], [0.25, 0.75]], [0, 0]) == pytest.approx((LN2 + math.log(4)) / 2)
        assert token_ce([[0.5, 0.5], [0.5, 0.5]], [1, 0]) == pytest.approx(LN2)

    def test_token_ce_validation(self):
        with pytest.raises(InvalidDistribution):
            token_ce([[0.5, 0.4]], [0])
        with pytest.raises(IndexOutOfRange):
            token_ce([[0.5, 0.5]], [2])
        with pytest.raises(LengthMismatch):
            token_ce([[0.5, 0.5]], [0, 1])

    def test_total_loss(self):
        assert total_loss(0, 0, 0).total == 0
        assert total_loss(0.1, 0.2, 0.3).total == 0.1 + 0.2 + 0.3
        assert total_loss(1, 0, 0).total == 1
        b = total_loss(0.5, 0.25, 0.125)
        assert b.total == b.l_mse + b.l_frame + b.l_ce
        with pytest.raises(NegativeLoss):
            total_loss(-0.1, 0, 0)


class TestDpo:
    def test_fixed_point(self, rng):
        for beta in (0.1, 1.0, 10.0):
            base = make_inputs(rng, beta=beta)
            inp = base.replace(pred_theta_w=base.pred_ref_w, pred_theta_l=base.pred_ref_l)
            assert abs(dpo_loss(inp) - LN2) <= 1e-12

    def test_improvement_fixture(self):
        # winner's policy error is 1.0 lower than the reference, loser unchanged
        inp = DpoInputs(eps_w=[0.0, 0.0], eps_l=[0.0, 0.0], pred_theta_w=[0.0, 0.0], pred_theta_l=[0.5, 0.5],
                        pred_ref_w=[1.0, 0.0], pred_ref_l=[0.5, 0.5], beta=2.0)
        assert dpo_loss(inp) == pytest.approx(log_sigmoid_neg(1.0), abs=1e-15)
        assert dpo_loss(inp) == pytest.approx(0.313261687518, abs=1e-12)

    def test_role_swap_negates_argument(self, rng):
        inp = make_inputs(rng, beta=0.7)
        swapped = DpoInputs(eps_w=inp.eps_l, eps_l=inp.eps_w, pred_theta_w=inp.pred_theta_l,
                            pred_theta_l=inp.pred_theta_w, pred_ref_w=inp.pred_ref_l, pred_ref_l=inp.pred_ref_w,
                            beta=0.7)
        a = -math.log(math.expm1(dpo_loss(inp)))  # invert loss = log(1 + e^-a)
        assert dpo_loss(swapped) == pytest.approx(math.log1p(math.exp(a)), rel=1e-9)

    def test_monotone_in_improvement(self, rng):
        inp = make_inputs(rng, beta=1.0)
        direction = inp.eps_w - inp.pred_theta_w
        losses = [dpo_loss(inp.replace(pred_theta_w=inp.pred_theta_w + t * direction)) for t in np.linspace(0, 0.9, 10)]
        assert all(b < a for a, b in zip(losses, losses[1:]))
        direction = inp.eps_l - inp.pred_theta_l
        losses = [dpo_loss(inp.replace(pred_theta_l=inp.pred_theta_l + t * direction)) for t in np.linspace(0, 0.9, 10)]
        assert all(b > a for a, b in zip(losses, losses[1:]))

    def test_validation(self, rng):
        with pytest.raises(NonPositiveBeta):
            make_inputs(rng, beta=0.0)
        with pytest.raises(LengthMismatch):
            make_inputs(rng, eps_w=np.zeros(3))
        with pytest.raises(ValueError):
            make_inputs(rng).replace(timestep=1000)


class TestMaskedDpo:
    def test_full_mask_is_rescaled_beta(self, rng):
        inp = make_inputs(rng, n=6, beta=3.0, frame_mask_w=np.ones(6, bool), frame_mask_l=np.ones(6, bool))
        assert masked_dpo_loss(inp) == pytest.approx(dpo_loss(inp.replace(beta=0.5)), rel=1e-12)

    def test_agreeing_components_give_ln2(self, rng):
        inp = make_inputs(rng, n=5)
        theta_w, theta_l = inp.pred_theta_w.copy(), inp.pred_theta_l.copy()
        theta_w[[1, 3]] = inp.pred_ref_w[[1, 3]]
        theta_l[[0]] = inp.pred_ref_l[[0]]
        mw = np.array([0, 1, 0, 1, 0], bool)
        ml = np.array([1, 0, 0, 0, 0], bool)
        out = inp.replace(pred_theta_w=theta_w, pred_theta_l=theta_l, frame_mask_w=mw, frame_mask_l=ml)
        assert abs(masked_dpo_loss(out) - LN2) <= 1e-12

    def test_restricted_sum_fixture(self):
        mask = [False, True, True, False]
        inp = DpoInputs(eps_w=[9.0, 1.0, 2.0, 9.0], pred_theta_w=[0.0, 0.5, 2.0, 0.0], pred_ref_w=[0.0, 1.0, 1.0, 0.0],
                        eps_l=[9.0, 0.0, 0.0, 9.0], pred_theta_l=[0.0, 1.0, 1.0, 0.0], pred_ref_l=[0.0, 0.0, 0.0, 0.0],
                        beta=1.0, frame_mask_w=mask, frame_mask_l=mask)
        # winner: policy (0.25 + 0) / 2, reference (0 + 1) / 2; loser: policy (1 + 1) / 2, reference 0
        win = (0.25 + 0.0) / 2 - (0.0 + 1.0) / 2
        lose = (1.0 + 1.0) / 2 - 0.0
        a = -0.5 * 1.0 * (win - lose)
        assert masked_dpo_loss(inp) == pytest.approx(log_sigmoid_neg(a), abs=1e-15)

    def test_empty_mask(self, rng):
        with pytest.raises(EmptyMask):
            masked_dpo_loss(make_inputs(rng, n=4, frame_mask_w=np.ones(4, bool), frame_mask_l=np.zeros(4, bool)))
        with pytest.raises(EmptyMask):
            masked_dpo_loss(make_inputs(rng, n=4))


class TestGradients:
    def test_elementwise_losses(self, rng):
        p = rng.uniform(0.05, 0.95, size=12)
        y = rng.integers(0, 2, size=12).astype(float)
        for gamma, alpha in ((2.0, 0.25), (0.0, 1.0), (1.5, 0.6)):
            assert grad_check(lambda v: focal_loss(v, y, gamma, alpha),
                              lambda v: focal_loss_grad(v, y, gamma, alpha), p) <= 1e-5
        assert grad_check(lambda v: timestamp_mse(v, y), lambda v: timestamp_mse_grad(v, y), p) <= 1e-5
        d = rng.dirichlet(np.ones(5), size=4)
        t = rng.integers(0, 5, size=4)
        assert grad_check(lambda v: token_ce(v, t), lambda v: token_ce_grad(v, t), d, epsilon=1e-7) <= 1e-5

    def test_dpo_all_vectors(self, rng):
        mask_w = rng.random(8) < 0.5
        mask_w[0] = True
        mask_l = rng.random(8) < 0.5
        mask_l[1] = True
        inp = make_inputs(rng, beta=0.8, frame_mask_w=mask_w, frame_mask_l=mask_l)
        for name in DpoInputs.VECTORS:
            assert dpo_grad_check(inp, name) <= 1e-5
            assert dpo_grad_check(inp, name, masked=True) <= 1e-5

    def test_epsilon_range(self):
        with pytest.raises(ValueError):
            grad_check(lambda v: 0.0, lambda v: v, np.zeros(2), epsilon=1e-2)
