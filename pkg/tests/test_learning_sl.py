import numpy as np
import pytest

from bmilearn.learning_sl import RfloLearner, biased_bptt_update, weight_mirror_step
from bmilearn.numerics import cosine_similarity, make_rng, uniform_matrix
from bmilearn.rnn import NoiseModel, RnnParams, run_trial
from bmilearn.task import TaskSpec

NO_NOISE = NoiseModel(sigma2=0.0)


def linear_params(n=10, n_in=4, n_out=2, seed=0, tau=10.0):
    rng = make_rng(seed)
    return RnnParams(
        w_rec=rng.normal(0, 0.8 / np.sqrt(n), size=(n, n)),
        w_in=uniform_matrix(n, n_in, -1, 1, rng),
        w_fb=np.zeros((n, n_out)),
        w_bmi=uniform_matrix(n_out, n, -2 / np.sqrt(n), 2 / np.sqrt(n), rng),
        tau=tau,
        activation="linear",
    )


def trial_loss(params, task, target_id, noise_seq=None):
    """Deterministic loss replay with an optional frozen noise sequence."""
    class _Replay:
        def __init__(self, seq):
            self.seq = seq
            self.i = 0

        def normal(self, loc, scale, size=None):
            draw = self.seq[self.i]
            self.i += 1
            return draw

    if noise_seq is None:
        return run_trial(params, NO_NOISE, task, target_id, make_rng(0)).loss
    noise = NoiseModel(sigma2=1.0)  # std folded into the frozen draws
    return run_trial(params, noise, task, target_id, _Replay(noise_seq)).loss


class TestRfloStep:
    def test_first_step_outer_product(self):
        params = linear_params()
        learner = RfloLearner(m=params.w_bmi.T.copy(), eta=0.1, params=params)
        learner.start_trial(0)
        u = make_rng(1).normal(size=10)
        h_prev = make_rng(2).normal(size=10)
        learner.on_step(0, u, np.zeros(10), h_prev, np.zeros(2), 0.0)
        assert np.allclose(learner.trace, np.outer(np.ones(10), h_prev) / params.tau)

    def test_zero_error_no_learning(self):
        params = linear_params()
        w0 = params.w_rec.copy()
        learner = RfloLearner(m=params.w_bmi.T.copy(), eta=0.1, params=params)
        learner.start_trial(0)
        rng = make_rng(3)
        for t in range(20):
            learner.on_step(t, rng.normal(size=10), np.zeros(10), rng.normal(size=10),
                            np.zeros(2), 0.0)
        assert np.array_equal(learner.accum, np.zeros((10, 10)))
        learner.finish_trial(None)
        assert np.array_equal(params.w_rec, w0)

    def test_linear_trace_is_filtered_presynaptic_activity(self):
        # with phi' = 1 the trace is the exponentially filtered h history
        params = linear_params(tau=5.0)
        learner = RfloLearner(m=params.w_bmi.T.copy(), eta=0.1, params=params)
        learner.start_trial(0)
        rng = make_rng(4)
        hs = [rng.normal(size=10) for _ in range(6)]
        for t, h_prev in enumerate(hs):
            learner.on_step(t, rng.normal(size=10), np.zeros(10), h_prev, np.zeros(2), 0.0)
        expected = np.zeros(10)
        for h_prev in hs:
            expected = (1 - 1 / 5.0) * expected + h_prev / 5.0
        assert np.allclose(learner.trace, np.outer(np.ones(10), expected))

    def test_accumulation_is_linear_across_trials(self):
        params = linear_params()
        learner = RfloLearner(m=params.w_bmi.T.copy(), eta=0.1, params=params)
        rng = make_rng(5)
        steps = [(rng.normal(size=10), rng.normal(size=10), rng.normal(size=2))
                 for _ in range(8)]
        learner.start_trial(0)
        for t, (u, h, e) in enumerate(steps):
            learner.on_step(t, u, np.zeros(10), h, e, 0.0)
        full = learner.accum.copy()

        learner2 = RfloLearner(m=params.w_bmi.T.copy(), eta=0.1, params=params)
        learner2.start_trial(0)
        for t, (u, h, e) in enumerate(steps[:4]):
            learner2.on_step(t, u, np.zeros(10), h, e, 0.0)
        half = learner2.accum.copy()
        for t, (u, h, e) in enumerate(steps[4:], start=4):
            learner2.on_step(t, u, np.zeros(10), h, e, 0.0)
        assert np.allclose(learner2.accum, full)
        assert not np.allclose(half, full)

    def test_apply_uses_eta_and_resets(self):
        params = linear_params()
        w0 = params.w_rec.copy()
        learner = RfloLearner(m=params.w_bmi.T.copy(), eta=0.1, params=params)
        learner.accum[:] = 1.0
        learner.finish_trial(None)
        assert np.allclose(params.w_rec, w0 + 0.1)
        assert np.array_equal(learner.accum, np.zeros((10, 10)))


class TestRfloGradientLimit:
    def test_tau1_t1_matches_one_step_gradient(self):
        """At tau=1, T=1, m = decoder^T the rule is exact instantaneous descent."""
        n = 8
        params = linear_params(n=n, tau=1.0, seed=6)
        task = TaskSpec(trial_len=1)
        h0 = make_rng(10).normal(size=n)

        def start_state():
            from bmilearn.rnn import RnnState
            return RnnState(h=h0.copy(), cursor=np.zeros(2), y_prev=np.zeros(2))

        learner = RfloLearner(m=params.w_bmi.T.copy(), eta=1.0, params=params)
        learner.start_trial(0)
        run_trial(params, NO_NOISE, task, 0, make_rng(0), learn_hook=learner.on_step,
                  init_state=start_state())
        update = learner.accum.copy()

        fd = np.zeros((n, n))
        delta = 1e-6
        for i in range(n):
            for j in range(n):
                params.w_rec[i, j] += delta
                up = run_trial(params, NO_NOISE, task, 0, make_rng(0),
                               init_state=start_state()).loss
                params.w_rec[i, j] -= 2 * delta
                down = run_trial(params, NO_NOISE, task, 0, make_rng(0),
                                 init_state=start_state()).loss
                params.w_rec[i, j] += delta
                fd[i, j] = (up - down) / (2 * delta)
        assert np.abs(update + fd).max() / np.abs(fd).max() < 1e-5


class TestBiasedBptt:
    def test_zero_error_zero_update(self):
        params = linear_params()
        task = TaskSpec(targets=[np.zeros(2)] * 4)
        trial = run_trial(params, NO_NOISE, task, 0, make_rng(0))
        trial.eps[:] = 0.0
        dw = biased_bptt_update(params.w_bmi.T.copy(), trial, params, eta=0.1)
        assert np.array_equal(dw, np.zeros((10, 10)))

    def test_t1_single_step_outer_product(self):
        params = linear_params()
        task = TaskSpec(trial_len=1)
        trial = run_trial(params, NO_NOISE, task, 1, make_rng(0))
        m = params.w_bmi.T.copy()
        dw = biased_bptt_update(m, trial, params, eta=1.0)
        # h^{-1} = 0 so the only term uses the zero previous state
        assert np.array_equal(dw, np.zeros((10, 10)))

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_finite_differences_linear(self, seed):
        """m = decoder^T on a linear net gives -eta dL/dW to 1e-5 relative."""
        n = 10
        params = linear_params(n=n, seed=seed)
        task = TaskSpec(trial_len=5)
        trial = run_trial(params, NO_NOISE, task, seed % 4, make_rng(0))
        dw = biased_bptt_update(params.w_bmi.T.copy(), trial, params, eta=1.0)

        fd = np.zeros((n, n))
        delta = 1e-6
        for i in range(n):
            for j in range(n):
                params.w_rec[i, j] += delta
                up = trial_loss(params, task, seed % 4)
                params.w_rec[i, j] -= 2 * delta
                down = trial_loss(params, task, seed % 4)
                params.w_rec[i, j] += delta
                fd[i, j] = (up - down) / (2 * delta)
        assert np.abs(dw + fd).max() / np.abs(fd).max() < 1e-5

    def test_matches_finite_differences_tanh(self):
        n = 6
        rng = make_rng(9)
        params = RnnParams(
            w_rec=rng.normal(0, 1.0 / np.sqrt(n), size=(n, n)),
            w_in=uniform_matrix(n, 4, -1, 1, rng),
            w_fb=np.zeros((n, 2)),
            w_bmi=uniform_matrix(2, n, -0.8, 0.8, rng),
            tau=4.0,
            activation="tanh",
        )
        task = TaskSpec(trial_len=6)
        trial = run_trial(params, NO_NOISE, task, 2, make_rng(0))
        dw = biased_bptt_update(params.w_bmi.T.copy(), trial, params, eta=1.0)
        fd = np.zeros((n, n))
        delta = 1e-6
        for i in range(n):
            for j in range(n):
                params.w_rec[i, j] += delta
                up = trial_loss(params, task, 2)
                params.w_rec[i, j] -= 2 * delta
                down = trial_loss(params, task, 2)
                params.w_rec[i, j] += delta
                fd[i, j] = (up - down) / (2 * delta)
        assert np.abs(dw + fd).max() / np.abs(fd).max() < 1e-5


class TestWeightMirror:
    def test_zero_rate_no_change(self):
        m = np.ones((5, 2))
        weight_mirror_step(m, 0.0, 0.25, np.zeros((2, 5)), make_rng(0))
        assert np.array_equal(m, np.ones((5, 2)))

    def test_mean_direction_matches_decoder_transpose(self):
        rng = make_rng(1)
        w_bmi = rng.normal(size=(2, 12))
        m = np.zeros((12, 2))
        for _ in range(10 ** 4):
            weight_mirror_step(m, 0.001, 0.25, w_bmi, rng)
        assert cosine_similarity(m, w_bmi.T) > 0.95

    def test_similarity_increases_over_windows(self):
        """Averaged over seeds, 200 mirror steps strictly raise the alignment."""
        gains = []
        for seed in range(5):
            rng = make_rng(seed)
            w_bmi = rng.normal(size=(2, 10))
            m = rng.normal(size=(10, 2))
            m *= np.linalg.norm(w_bmi) / np.linalg.norm(m)
            before = cosine_similarity(m, w_bmi.T)
            for _ in range(200):
                weight_mirror_step(m, 0.005, 0.25, w_bmi, rng)
            gains.append(cosine_similarity(m, w_bmi.T) - before)
        assert np.mean(gains) > 0
