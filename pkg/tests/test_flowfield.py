import numpy as np
import pytest

from bmilearn.flowfield import (FlowFieldDelta, delta_f_observed, ffcc,
                                fit_autoregression, predict_dw_rl, predict_dw_sl)
from bmilearn.numerics import make_rng, uniform_matrix
from bmilearn.rnn import NoiseModel, RnnParams, RnnState, build_low_rank_basis, run_trial
from bmilearn.task import TaskSpec

NO_NOISE = NoiseModel(sigma2=0.0)


def linear_params(n=10, seed=0, tau=10.0, w_rec=None):
    rng = make_rng(seed)
    return RnnParams(
        w_rec=w_rec if w_rec is not None else rng.normal(0, 0.8 / np.sqrt(n), size=(n, n)),
        w_in=np.zeros((n, 4)),
        w_fb=np.zeros((n, 2)),
        w_bmi=uniform_matrix(2, n, -2 / np.sqrt(n), 2 / np.sqrt(n), rng),
        tau=tau,
        activation="linear",
    )


def free_rollouts(params, n_trials=30, t_len=10, seed=1):
    """Noise-free rollouts from random states with silent inputs."""
    task = TaskSpec(targets=[np.zeros(2)] * 4, trial_len=t_len)
    rng = make_rng(seed)
    out = []
    for _ in range(n_trials):
        h0 = rng.normal(size=params.n)
        init = RnnState(h=h0, cursor=params.w_bmi @ h0, y_prev=params.w_bmi @ h0)
        # zero out the input drive by using target 0 of an all-zero target set
        trial = run_trial(params, NO_NOISE, task, 0, rng, init_state=init)
        out.append(trial.h)
    return out


class TestFitAutoregression:
    def test_recovers_propagator_noise_free(self):
        params = linear_params()
        # silence the one-hot input so dynamics are purely h -> prop h
        params.w_in[:] = 0.0
        fits = fit_autoregression(free_rollouts(params), ridge=0.0)
        prop = (1 - 1 / params.tau) * np.eye(params.n) + params.w_rec / params.tau
        assert np.abs(fits.a - prop).max() < 1e-8

    def test_pure_leak_network(self):
        params = linear_params(w_rec=np.zeros((10, 10)))
        params.w_in[:] = 0.0
        fit = fit_autoregression(free_rollouts(params), ridge=0.0)
        assert np.abs(fit.a - 0.9 * np.eye(10)).max() < 1e-8

    def test_never_pools_across_trial_boundaries(self):
        # two one-step "trials" with a sentinel discontinuity between them:
        # any cross-boundary pair would break the exact within-trial map
        a_true = np.array([[0.5, 0.1], [0.0, 0.7]])
        rng = make_rng(3)
        trials = []
        for _ in range(20):
            h0 = rng.normal(size=2)
            h1 = a_true @ h0
            trials.append(np.vstack([h0, h1]))
        trials.append(np.vstack([rng.normal(size=2) + 100.0]))  # single-step trial: no pairs
        fit = fit_autoregression(trials, ridge=0.0)
        assert np.abs(fit.a - a_true).max() < 1e-8

    def test_requires_pairs(self):
        with pytest.raises(ValueError):
            fit_autoregression([np.ones((1, 3))])

    def test_metadata(self):
        trials = [make_rng(0).normal(size=(5, 3)) for _ in range(4)]
        fit = fit_autoregression(trials, block="late")
        assert fit.block == "late"
        assert fit.n_trials_used == 4
        assert fit.ridge > 0


class TestDeltaObserved:
    def test_identical_blocks_zero_delta(self):
        trials = [make_rng(0).normal(size=(6, 4)) for _ in range(5)]
        early = fit_autoregression(trials, block="early")
        late = fit_autoregression(trials, block="late")
        assert np.allclose(delta_f_observed(early, late).delta, 0.0)

    def test_planted_weight_change_recovered(self):
        n = 10
        params_early = linear_params(n=n)
        params_early.w_in[:] = 0.0
        d = make_rng(7).normal(0, 0.05, size=(n, n))
        params_late = linear_params(n=n, w_rec=params_early.w_rec + d)
        params_late.w_in[:] = 0.0
        early = fit_autoregression(free_rollouts(params_early, seed=1), ridge=0.0)
        late = fit_autoregression(free_rollouts(params_late, seed=2), ridge=0.0)
        delta = delta_f_observed(early, late).delta
        assert np.abs(delta - d / params_early.tau).max() < 1e-8


class TestPredictions:
    def setup_method(self):
        rng = make_rng(0)
        self.h = [rng.normal(size=(8, 10)) for _ in range(5)]
        self.eps = [rng.normal(size=(8, 2)) for _ in range(5)]
        self.m = rng.normal(size=(10, 2))
        self.w_bmi = rng.normal(size=(2, 10))

    def test_zero_error_zero_prediction(self):
        zeros = [np.zeros((8, 2)) for _ in range(5)]
        assert np.allclose(predict_dw_sl(self.h, zeros, self.m).delta, 0.0)
        pred = predict_dw_rl(self.h, zeros, self.w_bmi, NoiseModel(sigma2=0.25))
        assert np.allclose(pred.delta, 0.0)

    def test_single_step_rank_one(self):
        h = [np.ones((1, 10))]
        eps = [np.array([[2.0, -1.0]])]
        pred = predict_dw_sl(h, eps, self.m).delta
        assert np.allclose(pred, np.outer(self.m @ eps[0][0], h[0][0]))
        assert np.linalg.matrix_rank(pred) == 1

    def test_matches_elementwise_definition(self):
        pred = predict_dw_sl(self.h, self.eps, self.m).delta
        manual = np.zeros((10, 10))
        for h, eps in zip(self.h, self.eps):
            for t in range(8):
                manual += np.outer(self.m @ eps[t], h[t])
        assert np.allclose(pred, manual)

    def test_isotropic_rl_proportional_to_sl_at_decoder_transpose(self):
        sl = predict_dw_sl(self.h, self.eps, self.w_bmi.T).delta
        rl = predict_dw_rl(self.h, self.eps, self.w_bmi, NoiseModel(sigma2=0.25)).delta
        assert np.allclose(rl, 0.25 * sl)

    def test_low_rank_rl_row_space_in_noise_span(self):
        basis = build_low_rank_basis(make_rng(1).normal(size=(10, 2)), 3, 10, make_rng(2))
        noise = NoiseModel(kind="low_rank", sigma2=0.25, basis=basis)
        pred = predict_dw_rl(self.h, self.eps, self.w_bmi, noise).delta
        # columns of the prediction live in span(basis)
        complement = np.eye(10) - basis @ basis.T
        assert np.abs(complement @ pred).max() < 1e-12

    def test_differs_from_decoder_when_m_differs(self):
        pred_m = predict_dw_sl(self.h, self.eps, self.m).delta
        pred_b = predict_dw_sl(self.h, self.eps, self.w_bmi.T).delta
        assert not np.allclose(pred_m, pred_b)

    def test_empty_mid_set_rejected(self):
        with pytest.raises(ValueError):
            predict_dw_sl([], [], self.m)


class TestFfcc:
    def setup_method(self):
        rng = make_rng(0)
        self.obs = FlowFieldDelta(delta=rng.normal(size=(10, 10)))
        self.h_test = [rng.normal(size=(8, 10)) for _ in range(4)]

    def test_self_correlation_is_one(self):
        res = ffcc(self.obs, self.obs, self.h_test)
        assert res.value == pytest.approx(1.0, abs=1e-12)
        assert res.skipped == 0

    def test_negated_is_minus_one(self):
        neg = FlowFieldDelta(delta=-self.obs.delta)
        assert ffcc(self.obs, neg, self.h_test).value == pytest.approx(-1.0, abs=1e-12)

    @pytest.mark.parametrize("scale", [0.001, 3.0, 1e6])
    def test_invariant_to_positive_rescaling(self, scale):
        pred = FlowFieldDelta(delta=make_rng(1).normal(size=(10, 10)), scale_free=True)
        scaled = FlowFieldDelta(delta=scale * pred.delta, scale_free=True)
        v1 = ffcc(self.obs, pred, self.h_test).value
        v2 = ffcc(self.obs, scaled, self.h_test).value
        assert v1 == pytest.approx(v2, abs=1e-12)

    def test_degenerate_terms_skipped_and_counted(self):
        h = [np.vstack([np.zeros(10), make_rng(2).normal(size=(3, 10))])]
        res = ffcc(self.obs, self.obs, h)
        assert res.skipped == 1
        assert res.used == 3

    def test_all_degenerate_raises(self):
        with pytest.raises(ValueError):
            ffcc(self.obs, self.obs, [np.zeros((5, 10))])
