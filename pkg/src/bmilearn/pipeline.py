"""Experiment pipeline: pretrain under the old decoder, switch decoders,
retrain with the configured rule around frozen observation blocks, then infer
the rule from the logged activity.

Seed discipline: every stage draws from its own child stream of the run seed
(weights, credit maps, decoder perturbation, per-phase trial noise, mirroring
probes), so changing one stage never perturbs another stage's draws.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .artifacts import read_matrix, read_trials, write_matrix, write_rows, write_trials
from .config import ExperimentConfig
from .credit import estimate_credit_map, make_aligned_matrix, perturb_decoder
from .flowfield import delta_f_observed, ffcc, fit_autoregression, predict_dw_rl, predict_dw_sl
from .learning_rl import NodePerturbLearner, RewardBaseline
from .learning_sl import BpttLearner, RfloLearner, weight_mirror_step
from .numerics import cosine_similarity, gaussian_matrix, spawn_rng, uniform_matrix
from .rnn import NoiseModel, RnnParams, build_low_rank_basis, run_trial
from .task import TaskSpec, default_targets

__all__ = ["DivergenceError", "PretrainResult", "RunData", "ObservedData",
           "pretrain", "retrain", "analyze_run", "analyze_observed",
           "run_experiment", "write_artifact", "analyze_artifact", "weight_hash"]


class DivergenceError(RuntimeError):
    """Training produced non-finite activity or weights."""


def weight_hash(w: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(w).tobytes()).hexdigest()[:16]


def _task(cfg: ExperimentConfig) -> TaskSpec:
    return TaskSpec(targets=default_targets(cfg.n_targets), trial_len=cfg.trial_len,
                    input_mode=cfg.input_mode, readout_mode=cfg.readout_mode)


def _params(cfg: ExperimentConfig, w_rec, w_in, w_fb, w_bmi) -> RnnParams:
    return RnnParams(w_rec=w_rec, w_in=w_in, w_fb=w_fb, w_bmi=w_bmi, tau=cfg.tau,
                     activation=cfg.activation, readout_mode=cfg.readout_mode,
                     tau_r=cfg.resolved_tau_r)


def _check_finite(w: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(w)):
        raise DivergenceError(f"non-finite recurrent weights during {where}")


def _make_learner(cfg: ExperimentConfig, params: RnnParams, m_train: np.ndarray):
    if cfg.rule == "sl_rflo":
        return RfloLearner(m=m_train, eta=cfg.eta_rec, params=params)
    if cfg.rule == "sl_bptt":
        return BpttLearner(m=m_train, eta=cfg.eta_rec, params=params)
    baseline = RewardBaseline(cfg.n_targets, cfg.trial_len, decay=cfg.baseline_decay)
    return NodePerturbLearner(eta=cfg.eta_rec, params=params, baseline=baseline,
                              tau_e=cfg.resolved_tau_e)


@dataclass
class PretrainResult:
    w_rec: np.ndarray
    w_in: np.ndarray
    w_bmi0: np.ndarray
    m_pre: np.ndarray
    losses: np.ndarray
    obs_h: Optional[list[np.ndarray]] = None
    obs_cursor: Optional[list[np.ndarray]] = None


@dataclass
class WindowData:
    """One analysis window of the learning phase."""
    index: int
    trial_lo: int
    trial_hi: int
    ar_early_h: list[np.ndarray]
    ar_late_h: list[np.ndarray]
    train_h: list[np.ndarray]
    train_eps: list[np.ndarray]
    test_h: list[np.ndarray]
    m_snapshot: Optional[np.ndarray] = None
    sim_m: Optional[float] = None


@dataclass
class ObservedData:
    """Everything the analysis may consume; recurrent weights are absent by
    construction so the inference can only use experimenter-visible data."""
    rule: str
    seed: int
    w_bmi1: np.ndarray
    m_analysis: np.ndarray
    m_source: str
    noise: NoiseModel
    windows: list[WindowData]
    ar_ridge: Optional[float]
    sigma2_rec: float
    success: bool
    early_loss: float
    late_loss: float
    align_m: float
    align_decoder: float
    m_true: Optional[np.ndarray] = None    # oracle comparison, labeled as such
    mhat_context: Optional[dict] = None    # pretraining observables for the k-sweep


@dataclass
class RunData:
    config: ExperimentConfig
    seed: int
    pre: PretrainResult
    w_bmi1: np.ndarray
    m_train: np.ndarray
    m_analysis: np.ndarray
    m_source: str
    noise: NoiseModel
    early_h: list[np.ndarray]
    late_h: list[np.ndarray]
    early_losses: np.ndarray
    late_losses: np.ndarray
    learn_losses: np.ndarray
    learn_targets: np.ndarray
    stored_learn: dict[int, tuple[np.ndarray, np.ndarray]]  # trial -> (h, eps)
    windows: list[WindowData]
    sim_m_history: Optional[np.ndarray]
    w_rec_final: np.ndarray
    weight_hashes: dict[str, str]
    success: bool
    early_mean: float
    late_mean: float
    trials_to_criterion: Optional[int]
    log: list[str] = field(default_factory=list)


def _log(lines: list[str], msg: str) -> None:
    lines.append(f"[{time.strftime('%Y-%m-%d %H:%M:%S')}] {msg}")


def pretrain(cfg: ExperimentConfig, seed: int) -> PretrainResult:
    """Train the recurrent weights under the original decoder with the
    supervised rule, then (when a data-driven credit estimate is requested)
    observe a frozen block for the estimation."""
    rng_init = spawn_rng(seed, "init")
    n = cfg.n_rec
    w_rec = gaussian_matrix(n, n, 0.0, cfg.g / np.sqrt(n), rng_init)
    w_in = uniform_matrix(n, cfg.n_x, -2.0, 2.0, rng_init)
    w_bmi0 = uniform_matrix(cfg.n_y, n, -2.0 / np.sqrt(n), 2.0 / np.sqrt(n), rng_init)
    if cfg.subset_readout is not None:
        readout_units = rng_init.choice(n, size=cfg.subset_readout, replace=False)
        mask = np.zeros(n, dtype=bool)
        mask[readout_units] = True
        w_bmi0[:, ~mask] = 0.0
    m_pre = make_aligned_matrix(w_bmi0.T, cfg.align_m_bmi0, spawn_rng(seed, "m-pretrain"),
                                tol=cfg.align_tol)

    gain = cfg.feedback_gain if cfg.pretrain_feedback_gain is None else cfg.pretrain_feedback_gain
    sigma2 = cfg.sigma2_rec if cfg.pretrain_sigma2_rec is None else cfg.pretrain_sigma2_rec
    eta = cfg.eta_rec if cfg.pretrain_eta_rec is None else cfg.pretrain_eta_rec
    task = _task(cfg)
    if cfg.pretrain_input_mode is not None and cfg.pretrain_input_mode != cfg.input_mode:
        task = TaskSpec(targets=task.targets, trial_len=task.trial_len,
                        input_mode=cfg.pretrain_input_mode, readout_mode=task.readout_mode)
    params = _params(cfg, w_rec, w_in, gain * m_pre, w_bmi0)
    noise = NoiseModel(sigma2=sigma2)
    learner = RfloLearner(m=m_pre, eta=eta, params=params)
    rng = spawn_rng(seed, "pretrain-noise")
    losses = np.empty(cfg.pretrain_trials)
    for i in range(cfg.pretrain_trials):
        target = i % cfg.n_targets
        learner.start_trial(target)
        trial = run_trial(params, noise, task, target, rng, learn_hook=learner.on_step,
                          sigma2_bmi=cfg.sigma2_bmi, sigma2_in=cfg.sigma2_in)
        learner.finish_trial(trial)
        losses[i] = trial.loss
        if i % 200 == 0:
            _check_finite(params.w_rec, "pretraining")
    _check_finite(params.w_rec, "pretraining")

    obs_h = obs_cursor = None
    if cfg.resolved_analysis_credit == "estimated":
        obs_h, obs_cursor = [], []
        rng_obs = spawn_rng(seed, "pretrain-obs-noise")
        for i in range(cfg.block_size):
            trial = run_trial(params, noise, task, i % cfg.n_targets, rng_obs,
                              sigma2_bmi=cfg.sigma2_bmi, sigma2_in=cfg.sigma2_in)
            obs_h.append(trial.h)
            obs_cursor.append(trial.cursor)
    return PretrainResult(w_rec=params.w_rec, w_in=w_in, w_bmi0=w_bmi0, m_pre=m_pre,
                          losses=losses, obs_h=obs_h, obs_cursor=obs_cursor)


def _window_bounds(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    L, W = cfg.train_trials, cfg.n_windows
    if W == 1:
        return [(int(cfg.mid_lo * L), int(cfg.mid_hi * L))]
    return [(w * L // W, (w + 1) * L // W) for w in range(W)]


def _trials_to_criterion(losses: np.ndarray, threshold: float, window: int = 50) -> Optional[int]:
    """First trial whose trailing full-window mean loss is below threshold."""
    if len(losses) < window:
        return None
    sums = np.convolve(losses, np.ones(window), mode="valid")
    below = np.nonzero(sums < threshold * window)[0]
    return int(below[0]) + window - 1 if below.size else None


def retrain(cfg: ExperimentConfig, pre: PretrainResult, seed: int) -> RunData:
    """Decoder switch plus the full early/learning/late protocol."""
    log: list[str] = []
    w_bmi1 = perturb_decoder(pre.w_bmi0, cfg.align_bmi0_bmi1, spawn_rng(seed, "decoder"),
                             tol=cfg.align_tol)
    if cfg.m_train_source == "pretrain_m":
        m_train = pre.m_pre.copy()
    else:
        m_train = make_aligned_matrix(w_bmi1.T, cfg.align_m_bmi1, spawn_rng(seed, "m-train"),
                                      tol=cfg.align_tol)
    _log(log, f"decoder switched: sim(bmi0,bmi1)={cosine_similarity(pre.w_bmi0, w_bmi1):.4f}, "
              f"sim(m,(bmi1)^T)={cosine_similarity(m_train, w_bmi1.T):.4f}")

    if cfg.noise_rank is not None:
        preferred = m_train if cfg.rule.startswith("sl") else w_bmi1
        basis = build_low_rank_basis(preferred, cfg.noise_rank, cfg.n_rec,
                                     spawn_rng(seed, "noise-basis"))
        noise = NoiseModel(kind="low_rank", sigma2=cfg.sigma2_rec, basis=basis)
    else:
        noise = NoiseModel(sigma2=cfg.sigma2_rec)

    task = _task(cfg)
    params = _params(cfg, pre.w_rec.copy(), pre.w_in, cfg.feedback_gain * m_train, w_bmi1)
    hashes: dict[str, str] = {"pretrained": weight_hash(params.w_rec)}

    def frozen_block(label: str, rng_label: str):
        rng = spawn_rng(seed, rng_label)
        hashes[f"{label}_start"] = weight_hash(params.w_rec)
        hs, losses = [], np.empty(cfg.block_size)
        for i in range(cfg.block_size):
            trial = run_trial(params, noise, task, i % cfg.n_targets, rng,
                              sigma2_bmi=cfg.sigma2_bmi, sigma2_in=cfg.sigma2_in)
            hs.append(trial.h)
            losses[i] = trial.loss
        hashes[f"{label}_end"] = weight_hash(params.w_rec)
        return hs, losses

    early_h, early_losses = frozen_block("early", "early-noise")

    bounds = _window_bounds(cfg)
    store_all = cfg.n_windows > 1 or cfg.store_learning_activity
    stored: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    windows = [WindowData(index=w, trial_lo=lo, trial_hi=hi, ar_early_h=[], ar_late_h=[],
                          train_h=[], train_eps=[], test_h=[])
               for w, (lo, hi) in enumerate(bounds)]
    snapshot_at = {w: (lo + hi) // 2 for w, (lo, hi) in enumerate(bounds)}

    learner = _make_learner(cfg, params, m_train)
    rng = spawn_rng(seed, "learn-noise")
    rng_mirror = spawn_rng(seed, "mirror")
    learn_losses = np.empty(cfg.train_trials)
    learn_targets = np.empty(cfg.train_trials, dtype=int)
    sim_hist = np.empty(cfg.train_trials) if cfg.eta_wm > 0 else None

    for i in range(cfg.train_trials):
        for w, at in snapshot_at.items():
            if i == at:
                windows[w].m_snapshot = m_train.copy()
                windows[w].sim_m = cosine_similarity(m_train, w_bmi1.T)
        target = i % cfg.n_targets
        learner.start_trial(target)
        trial = run_trial(params, noise, task, target, rng, learn_hook=learner.on_step,
                          sigma2_bmi=cfg.sigma2_bmi, sigma2_in=cfg.sigma2_in)
        learner.finish_trial(trial)
        if cfg.eta_wm > 0:
            weight_mirror_step(m_train, cfg.eta_wm, cfg.sigma2_rec, w_bmi1, rng_mirror)
            sim_hist[i] = cosine_similarity(m_train, w_bmi1.T)
        learn_losses[i] = trial.loss
        learn_targets[i] = target
        in_mid = any(lo <= i < hi for lo, hi in bounds)
        if store_all or in_mid:
            stored[i] = (trial.h, trial.eps)
        if i % 200 == 0:
            _check_finite(params.w_rec, "training")
    _check_finite(params.w_rec, "training")

    late_h, late_losses = frozen_block("late", "late-noise")
    hashes["final"] = weight_hash(params.w_rec)

    _fill_windows(cfg, windows, stored)

    early_mean = float(early_losses.mean())
    late_mean = float(late_losses.mean())
    success = late_mean < cfg.success_loss_ratio * early_mean
    ttc = _trials_to_criterion(learn_losses, cfg.criterion_loss_ratio * early_mean)
    _log(log, f"early loss {early_mean:.4f}, late loss {late_mean:.4f}, "
              f"success={success}, trials_to_criterion={ttc}")

    m_source = cfg.resolved_analysis_credit
    if m_source == "true":
        m_analysis = m_train.copy()
    elif m_source == "random":
        m_analysis = make_aligned_matrix(w_bmi1.T, cfg.align_m_bmi1,
                                         spawn_rng(seed, "m-hat-random"), tol=cfg.align_tol)
    else:
        est = estimate_credit_map(pre.obs_h, pre.obs_cursor, k=cfg.mhat_components,
                                  ridge=cfg.mhat_ridge)
        m_analysis = est.m_hat

    return RunData(config=cfg, seed=seed, pre=pre, w_bmi1=w_bmi1, m_train=m_train,
                   m_analysis=m_analysis, m_source=m_source, noise=noise,
                   early_h=early_h, late_h=late_h, early_losses=early_losses,
                   late_losses=late_losses, learn_losses=learn_losses,
                   learn_targets=learn_targets, stored_learn=stored, windows=windows,
                   sim_m_history=sim_hist, w_rec_final=params.w_rec,
                   weight_hashes=hashes, success=success, early_mean=early_mean,
                   late_mean=late_mean, trials_to_criterion=ttc, log=log)


def _fill_windows(cfg: ExperimentConfig, windows: list[WindowData],
                  stored: dict[int, tuple[np.ndarray, np.ndarray]]) -> None:
    """Assign stored learning trials to window roles.

    Single-window runs use the frozen blocks for the autoregression and the
    whole window as the prediction/evaluation period. Multi-window runs take
    the first and last quarter of each window for the fits and the central
    half for predictions and evaluation. Even trials feed predictions, odd
    trials are held out for the metric.
    """
    for win in windows:
        lo, hi = win.trial_lo, win.trial_hi
        span = hi - lo
        if cfg.n_windows == 1:
            mid_lo, mid_hi = lo, hi
        else:
            mid_lo, mid_hi = lo + span // 4, hi - span // 4
            for i in range(lo, lo + span // 4):
                if i in stored:
                    win.ar_early_h.append(stored[i][0])
            for i in range(hi - span // 4, hi):
                if i in stored:
                    win.ar_late_h.append(stored[i][0])
        for i in range(mid_lo, mid_hi):
            if i not in stored:
                continue
            h, eps = stored[i]
            if i % 2 == 0:
                win.train_h.append(h)
                win.train_eps.append(eps)
            else:
                win.test_h.append(h)


def observed_from_run(run: RunData) -> ObservedData:
    cfg = run.config
    windows = run.windows
    if cfg.n_windows == 1:
        w = windows[0]
        w.ar_early_h = run.early_h
        w.ar_late_h = run.late_h
        if w.m_snapshot is None:
            w.m_snapshot = run.m_train.copy()
            w.sim_m = cosine_similarity(run.m_train, run.w_bmi1.T)
    mhat_context = None
    if run.m_source == "estimated":
        mhat_context = {"obs_h": run.pre.obs_h, "obs_cursor": run.pre.obs_cursor,
                        "m_true": run.m_train, "w_bmi0": run.pre.w_bmi0}
    return ObservedData(rule=cfg.rule, seed=run.seed, w_bmi1=run.w_bmi1,
                        m_analysis=run.m_analysis, m_source=run.m_source,
                        noise=run.noise, windows=windows, ar_ridge=cfg.ar_ridge,
                        sigma2_rec=cfg.sigma2_rec, success=run.success,
                        early_loss=run.early_mean, late_loss=run.late_mean,
                        align_m=cfg.align_m_bmi1, align_decoder=cfg.align_bmi0_bmi1,
                        m_true=run.m_train if run.m_source == "estimated" else None,
                        mhat_context=mhat_context)


def analyze_observed(obs: ObservedData, mhat_ks: Optional[list[int]] = None) -> dict:
    """Score every rule hypothesis on every analysis window.

    Emits one FFCC row per (window, hypothesis). When the credit map was
    estimated from data, an oracle row using the true training map is added,
    labeled m_source='true', plus the estimate-similarity sweep over k.
    """
    ffcc_rows: list[dict] = []
    for win in obs.windows:
        ar_e = fit_autoregression(win.ar_early_h, ridge=obs.ar_ridge, block="early")
        ar_l = fit_autoregression(win.ar_late_h, ridge=obs.ar_ridge, block="late")
        obs_delta = delta_f_observed(ar_e, ar_l)
        hypotheses: list[tuple[str, str, object]] = []
        m_for_sl = win.m_snapshot if (obs.m_source == "true" and win.m_snapshot is not None) \
            else obs.m_analysis
        hypotheses.append(("sl", obs.m_source,
                           predict_dw_sl(win.train_h, win.train_eps, m_for_sl)))
        hypotheses.append(("rl", "decoder",
                           predict_dw_rl(win.train_h, win.train_eps, obs.w_bmi1, obs.noise)))
        if obs.noise.kind == "low_rank":
            naive = NoiseModel(sigma2=obs.sigma2_rec)
            hypotheses.append(("rl_naive", "decoder",
                               predict_dw_rl(win.train_h, win.train_eps, obs.w_bmi1, naive)))
        if obs.m_true is not None:
            hypotheses.append(("sl_true", "true",
                               predict_dw_sl(win.train_h, win.train_eps, obs.m_true)))
        for name, source, pred in hypotheses:
            res = ffcc(obs_delta, pred, win.test_h)
            ffcc_rows.append({
                "rule_trained": obs.rule, "hypothesis": name, "m_source": source,
                "window": win.index, "alignment_m": obs.align_m,
                "alignment_decoder": obs.align_decoder, "seed": obs.seed,
                "ffcc": res.value, "skipped_terms": res.skipped, "used_terms": res.used,
                "sim_m_window": win.sim_m, "success": obs.success,
                "early_loss": obs.early_loss, "late_loss": obs.late_loss,
            })

    mhat_rows: list[dict] = []
    if obs.mhat_context is not None:
        ctx = obs.mhat_context
        ks = mhat_ks if mhat_ks is not None else list(range(2, 11))
        for k in ks:
            est = estimate_credit_map(ctx["obs_h"], ctx["obs_cursor"], k=k)
            mhat_rows.append({
                "k": k, "seed": obs.seed,
                "sim_to_true_m": cosine_similarity(est.m_hat, ctx["m_true"]),
                "sim_to_old_decoder_t": cosine_similarity(est.m_hat, ctx["w_bmi0"].T),
            })
    return {"ffcc_rows": ffcc_rows, "mhat_rows": mhat_rows}


def analyze_run(run: RunData, mhat_ks: Optional[list[int]] = None) -> dict:
    return analyze_observed(observed_from_run(run), mhat_ks=mhat_ks)


def run_experiment(cfg: ExperimentConfig, seed: int,
                   out_dir: Optional[Path] = None) -> tuple[RunData, dict]:
    pre = pretrain(cfg, seed)
    run = retrain(cfg, pre, seed)
    analysis = analyze_run(run)
    if out_dir is not None:
        write_artifact(Path(out_dir), run, analysis)
    return run, analysis


FFCC_COLUMNS = ["rule_trained", "hypothesis", "m_source", "window", "alignment_m",
                "alignment_decoder", "seed", "ffcc", "skipped_terms", "used_terms",
                "sim_m_window", "success", "early_loss", "late_loss"]
MHAT_COLUMNS = ["k", "seed", "sim_to_true_m", "sim_to_old_decoder_t"]
METRIC_COLUMNS = ["phase", "trial", "target", "loss", "sim_m"]


def metrics_rows(run: RunData) -> list[dict]:
    rows = []
    for i, loss in enumerate(run.pre.losses):
        rows.append({"phase": "pretrain", "trial": i, "target": i % run.config.n_targets,
                     "loss": loss, "sim_m": None})
    for phase, losses in (("early", run.early_losses), ("late", run.late_losses)):
        for i, loss in enumerate(losses):
            rows.append({"phase": phase, "trial": i, "target": i % run.config.n_targets,
                         "loss": loss, "sim_m": None})
    for i, loss in enumerate(run.learn_losses):
        sim = run.sim_m_history[i] if run.sim_m_history is not None else None
        rows.append({"phase": "learn", "trial": i, "target": int(run.learn_targets[i]),
                     "loss": loss, "sim_m": sim})
    return rows


def write_artifact(out_dir: Path, run: RunData, analysis: dict) -> Path:
    cfg = run.config
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {**cfg.model_dump(), "seed": run.seed, "code_version": __version__,
                "analysis_credit_resolved": run.m_source}
    (out_dir / "config.json").write_text(json.dumps(resolved, indent=1))

    wdir = out_dir / "weights"
    write_matrix(wdir / "pretrained.csv", run.pre.w_rec, role="recurrent weights after pretraining")
    write_matrix(wdir / "retrained.csv", run.w_rec_final, role="recurrent weights after training")
    write_matrix(wdir / "w_in.csv", run.pre.w_in, role="input weights")
    write_matrix(wdir / "w_bmi0.csv", run.pre.w_bmi0, role="original decoder")
    write_matrix(wdir / "w_bmi1.csv", run.w_bmi1, role="perturbed decoder")
    write_matrix(wdir / "m_train.csv", run.m_train, role="credit map used in training")
    write_matrix(wdir / "m_analysis.csv", run.m_analysis, role="credit map used in analysis",
                 m_source=run.m_source)
    if run.noise.kind == "low_rank":
        write_matrix(wdir / "noise_basis.csv", run.noise.basis, role="noise basis")
    if cfg.n_windows > 1:
        for win in run.windows:
            if win.m_snapshot is not None:
                write_matrix(wdir / f"m_window_{win.index}.csv", win.m_snapshot,
                             role="credit map snapshot at window center")

    if cfg.save_trials:
        n_early = len(run.early_h)
        write_trials(out_dir / "trials" / "early.csv", range(n_early),
                     ["block"] * n_early, run.early_h, phase="early")
        n_late = len(run.late_h)
        write_trials(out_dir / "trials" / "late.csv", range(n_late),
                     ["block"] * n_late, run.late_h, phase="late")
        idxs = sorted(run.stored_learn)
        pools = ["train" if i % 2 == 0 else "test" for i in idxs]
        write_trials(out_dir / "trials" / "mid.csv", idxs, pools,
                     [run.stored_learn[i][0] for i in idxs],
                     [run.stored_learn[i][1] for i in idxs], phase="learn")

    write_rows(out_dir / "metrics.csv", metrics_rows(run), METRIC_COLUMNS)
    write_rows(out_dir / "analysis.csv", analysis["ffcc_rows"], FFCC_COLUMNS)
    if analysis["mhat_rows"]:
        write_rows(out_dir / "mhat.csv", analysis["mhat_rows"], MHAT_COLUMNS)
    log_lines = list(run.log)
    log_lines.append(f"weight hashes: {json.dumps(run.weight_hashes)}")
    (out_dir / "log.txt").write_text("\n".join(log_lines) + "\n")
    return out_dir


def analyze_artifact(artifact_dir: Path) -> dict:
    """Re-run the inference from on-disk observables only.

    Reads trial logs, the decoder, the analysis credit map and the noise
    basis; never touches the stored recurrent weights.
    """
    artifact_dir = Path(artifact_dir)
    cfg_payload = json.loads((artifact_dir / "config.json").read_text())
    seed = cfg_payload.pop("seed")
    cfg_payload.pop("code_version", None)
    m_source = cfg_payload.pop("analysis_credit_resolved")
    cfg = ExperimentConfig(**cfg_payload)

    trials_dir = artifact_dir / "trials"
    for name in ("early.csv", "late.csv", "mid.csv"):
        if not (trials_dir / name).exists():
            raise FileNotFoundError(f"artifact is missing trials/{name}; "
                                    "run with save_trials enabled")
    _, _, early_h, _ = read_trials(trials_dir / "early.csv")
    _, _, late_h, _ = read_trials(trials_dir / "late.csv")
    idxs, pools, mid_h, mid_eps = read_trials(trials_dir / "mid.csv")

    w_bmi1 = read_matrix(artifact_dir / "weights" / "w_bmi1.csv")
    m_analysis = read_matrix(artifact_dir / "weights" / "m_analysis.csv")
    basis_path = artifact_dir / "weights" / "noise_basis.csv"
    if basis_path.exists():
        noise = NoiseModel(kind="low_rank", sigma2=cfg.sigma2_rec,
                           basis=read_matrix(basis_path))
    else:
        noise = NoiseModel(sigma2=cfg.sigma2_rec)

    stored = {i: (h, e) for i, h, e in zip(idxs, mid_h, mid_eps)}
    bounds = _window_bounds(cfg)
    windows = [WindowData(index=w, trial_lo=lo, trial_hi=hi, ar_early_h=[], ar_late_h=[],
                          train_h=[], train_eps=[], test_h=[])
               for w, (lo, hi) in enumerate(bounds)]
    _fill_windows(cfg, windows, stored)
    if cfg.n_windows == 1:
        windows[0].ar_early_h = early_h
        windows[0].ar_late_h = late_h
    else:
        for win in windows:
            snap_path = artifact_dir / "weights" / f"m_window_{win.index}.csv"
            if snap_path.exists():
                win.m_snapshot = read_matrix(snap_path)
                win.sim_m = cosine_similarity(win.m_snapshot, w_bmi1.T)

    obs = ObservedData(rule=cfg.rule, seed=seed, w_bmi1=w_bmi1, m_analysis=m_analysis,
                       m_source=m_source, noise=noise, windows=windows,
                       ar_ridge=cfg.ar_ridge, sigma2_rec=cfg.sigma2_rec,
                       success=True, early_loss=float("nan"), late_loss=float("nan"),
                       align_m=cfg.align_m_bmi1, align_decoder=cfg.align_bmi0_bmi1)
    return analyze_observed(obs)
