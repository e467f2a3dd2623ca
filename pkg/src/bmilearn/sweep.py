"""Parameter sweeps reproducing the study's figure protocols at desk scale.

A plan expands into cells (config overrides); every cell runs over its seeds,
FFCC rows are consolidated with SEM and Welch tests per cell, and partial
failures are recorded without aborting the sweep.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from .artifacts import read_rows, write_rows
from .config import PRESETS, ConfigError, load_config
from .feedforward import run_ff_population
from .pipeline import DivergenceError, run_experiment
from .stats import covariance_overlap, sem, two_sample_t

__all__ = ["PLAN_NAMES", "expand_plan", "run_sweep", "render_report"]


def _cells_alignment(template: dict) -> list[dict]:
    cells = []
    for rule_name, base in (("sl", PRESETS["fig2c_sl"]), ("rl", PRESETS["fig2f_rl_fast"])):
        for alpha in (0.3, 0.4, 0.5, 0.7, 1.0):
            cells.append({"cell": f"{rule_name}-align{alpha}", "base": base,
                          "params": {"align_m_bmi1": alpha}})
    return cells


def _cells_noise_scale(template: dict) -> list[dict]:
    cells = []
    for rule_name, base in (("sl", PRESETS["fig2c_sl"]), ("rl", PRESETS["fig2f_rl_fast"])):
        for s2 in (0.1, 0.25, 0.5):
            cells.append({"cell": f"{rule_name}-noise{s2}", "base": base,
                          "params": {"sigma2_rec": s2}})
    return cells


def _cells_network_size(template: dict) -> list[dict]:
    cells = []
    for n in (25, 50, 100):
        cells.append({"cell": f"sl-n{n}", "base": PRESETS["fig2c_sl"],
                      "params": {"n_rec": n}})
        params = {"n_rec": n}
        if n > 50:
            params["noise_rank"] = 50  # node perturbation needs low-dim noise at large n
        cells.append({"cell": f"rl-n{n}", "base": PRESETS["fig2f_rl_fast"], "params": params})
    return cells


def _cells_feedback_gain(template: dict) -> list[dict]:
    cells = []
    for gamma in (0.5, 1.0, 5.0):
        cells.append({"cell": f"sl-gain{gamma}", "base": PRESETS["fig3d_feedback_sl"],
                      "params": {"feedback_gain": gamma}})
        cells.append({"cell": f"rl-gain{gamma}", "base": PRESETS["fig3e_feedback_rl"],
                      "params": {"feedback_gain": gamma}})
    return cells


def _cells_noise_rank(template: dict) -> list[dict]:
    cells = []
    for d in (5, 10, 25, 50):
        cells.append({"cell": f"sl-rank{d}", "base": PRESETS["fig5_noise_sl"],
                      "params": {"noise_rank": d}})
        # full-rank exploration dilutes node perturbation; give it the
        # main-protocol trial budget at d=50
        rl_params = {"noise_rank": d}
        if d >= 50:
            rl_params["train_trials"] = 15000
        cells.append({"cell": f"rl-rank{d}", "base": PRESETS["fig5_noise_rl"],
                      "params": rl_params})
    return cells


def _cells_decoder_similarity(template: dict) -> list[dict]:
    return [{"cell": f"sl-decoder{a}", "base": PRESETS["fig2c_sl"],
             "params": {"align_bmi0_bmi1": a, "store_learning_activity": True}}
            for a in (0.2, 0.4, 0.6, 0.8)]


def _cells_subset_readout(template: dict) -> list[dict]:
    return [{"cell": f"sl-readout{k}", "base": PRESETS["subset_readout"],
             "params": {"subset_readout": k}} for k in (25, 100, 200)]


def _cells_single(preset_name: str):
    def expand(template: dict) -> list[dict]:
        return [{"cell": preset_name, "base": PRESETS[preset_name], "params": {}}]
    return expand


def _cells_mhat(template: dict) -> list[dict]:
    return [{"cell": "fig4-mhat", "base": PRESETS["fig4_mhat"], "params": {}}]


_PLAN_EXPANDERS = {
    "alignment": _cells_alignment,
    "noise_scale": _cells_noise_scale,
    "network_size": _cells_network_size,
    "feedback_gain": _cells_feedback_gain,
    "noise_rank": _cells_noise_rank,
    "decoder_similarity": _cells_decoder_similarity,
    "subset_readout": _cells_subset_readout,
    "bptt": _cells_single("bptt"),
    "linear": _cells_single("linear"),
    "velocity": _cells_single("velocity"),
    "mirror": _cells_single("fig3b_mirror"),
    "mhat": _cells_mhat,
}
PLAN_NAMES = sorted(_PLAN_EXPANDERS) + ["feedforward"]


def expand_plan(plan: str, template: Optional[dict] = None) -> list[dict]:
    if plan not in _PLAN_EXPANDERS:
        raise ConfigError(f"unknown sweep plan {plan!r}; available: {PLAN_NAMES}")
    template = template or {}
    cells = _PLAN_EXPANDERS[plan](template)
    for cell in cells:
        merged = {**cell["base"], **template, **cell["params"]}
        cell["config"] = merged
    return cells


def _param_string(params: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in sorted(params.items()))


def run_cell(cell: dict, seed: int) -> dict:
    """One (cell, seed) simulation; failures are reported, not raised."""
    try:
        cfg = load_config(cell["config"])
        run, analysis = run_experiment(cfg, seed)
        rows = []
        for row in analysis["ffcc_rows"]:
            rows.append({"cell": cell["cell"], "params": _param_string(cell["params"]),
                         **row})
        summary = {"cell": cell["cell"], "seed": seed, "status": "ok",
                   "success": run.success, "early_loss": run.early_mean,
                   "late_loss": run.late_mean,
                   "trials_to_criterion": run.trials_to_criterion}
        if run.sim_m_history is not None:
            summary["sim_m_start"] = float(run.sim_m_history[0])
            summary["sim_m_final"] = float(run.sim_m_history[-1])
        if cfg.store_learning_activity and run.stored_learn:
            idxs = sorted(run.stored_learn)
            half = len(idxs) // 2
            first = [run.stored_learn[i][0] for i in idxs[:half]]
            second = [run.stored_learn[i][0] for i in idxs[half:]]
            summary["overlap_pre_post"] = covariance_overlap(run.early_h, run.late_h)
            summary["overlap_learn_halves"] = covariance_overlap(first, second)
        return {"rows": rows, "summary": summary,
                "mhat_rows": [{"cell": cell["cell"], **r} for r in analysis["mhat_rows"]]}
    except (DivergenceError, FloatingPointError, ValueError) as exc:
        return {"rows": [], "mhat_rows": [],
                "summary": {"cell": cell["cell"], "seed": seed, "status": "failed",
                            "error": f"{type(exc).__name__}: {exc}"}}


def _run_cell_packed(args):
    return run_cell(*args)


ROW_COLUMNS = ["cell", "params", "rule_trained", "hypothesis", "m_source", "window",
               "alignment_m", "alignment_decoder", "seed", "ffcc", "skipped_terms",
               "used_terms", "sim_m_window", "success", "early_loss", "late_loss"]
SUMMARY_COLUMNS = ["cell", "window", "n_ok", "n_failed", "hypotheses",
                   "mean_correct", "sem_correct", "mean_wrong", "sem_wrong",
                   "t", "df", "p", "stars",
                   "mean_rl_naive", "sem_rl_naive", "t_naive", "p_naive", "stars_naive"]
RUN_COLUMNS = ["cell", "seed", "status", "success", "early_loss", "late_loss",
               "trials_to_criterion", "sim_m_start", "sim_m_final",
               "overlap_pre_post", "overlap_learn_halves", "error"]


def summarize_rows(rows: list[dict]) -> list[dict]:
    """Per-(cell, window) means, SEMs, and the correct-vs-wrong Welch test."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["cell"], row["window"]), []).append(row)
    out = []
    for (cell, window), grp in sorted(groups.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        ok = [r for r in grp if r["success"]]
        by_hyp: dict[str, list[float]] = {}
        for r in ok:
            by_hyp.setdefault(r["hypothesis"], []).append(float(r["ffcc"]))
        rule = grp[0]["rule_trained"]
        correct = "sl" if rule.startswith("sl") else "rl"
        wrong = "rl" if correct == "sl" else "sl"
        summary = {"cell": cell, "window": window,
                   "n_ok": len({r["seed"] for r in ok}),
                   "n_failed": len({r["seed"] for r in grp}) - len({r["seed"] for r in ok}),
                   "hypotheses": "|".join(sorted(by_hyp))}
        c, w = by_hyp.get(correct, []), by_hyp.get(wrong, [])
        if c:
            summary["mean_correct"] = float(np.mean(c))
            summary["sem_correct"] = sem(c) if len(c) > 1 else None
        if w:
            summary["mean_wrong"] = float(np.mean(w))
            summary["sem_wrong"] = sem(w) if len(w) > 1 else None
        if len(c) >= 2 and len(w) >= 2:
            try:
                res = two_sample_t(c, w)
                summary.update(t=res.t, df=res.df, p=res.p, stars=res.stars)
            except ValueError:
                pass
        naive = by_hyp.get("rl_naive", [])
        if naive:
            summary["mean_rl_naive"] = float(np.mean(naive))
            summary["sem_rl_naive"] = sem(naive) if len(naive) > 1 else None
            other = by_hyp.get("sl", [])
            if len(naive) >= 2 and len(other) >= 2:
                try:
                    res = two_sample_t(naive, other)
                    summary.update(t_naive=res.t, p_naive=res.p, stars_naive=res.stars)
                except ValueError:
                    pass
        out.append(summary)
    return out


def run_sweep(plan: str, out_dir: Path, template: Optional[dict] = None,
              seeds: Optional[list[int]] = None, jobs: int = 1) -> dict:
    """Execute a plan and write its consolidated row/summary CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if plan == "feedforward":
        return _run_feedforward_sweep(out_dir, template, seeds)
    cells = expand_plan(plan, template)
    work = []
    for cell in cells:
        cell_seeds = seeds if seeds is not None else cell["config"].get("seeds", [0, 1, 2, 3])
        for s in cell_seeds:
            work.append((cell, s))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_packed, work))
    else:
        results = [run_cell(c, s) for c, s in work]

    rows, run_rows, mhat_rows = [], [], []
    for res in results:
        rows.extend(res["rows"])
        run_rows.append(res["summary"])
        mhat_rows.extend(res.get("mhat_rows", []))
    summaries = summarize_rows(rows)

    rows_path = out_dir / f"{plan}_rows.csv"
    summary_path = out_dir / f"{plan}_summary.csv"
    runs_path = out_dir / f"{plan}_runs.csv"
    write_rows(rows_path, rows, ROW_COLUMNS)
    write_rows(summary_path, summaries, SUMMARY_COLUMNS)
    write_rows(runs_path, run_rows, RUN_COLUMNS)
    if mhat_rows:
        write_rows(out_dir / f"{plan}_mhat.csv", mhat_rows,
                   ["cell", "k", "seed", "sim_to_true_m", "sim_to_old_decoder_t"])
    n_failed = sum(1 for r in run_rows if r["status"] != "ok")
    return {"plan": plan, "rows_csv": str(rows_path), "summary_csv": str(summary_path),
            "runs_csv": str(runs_path), "n_cells": len(cells), "n_runs": len(work),
            "n_failed": n_failed, "rows": rows, "summaries": summaries,
            "run_rows": run_rows, "mhat_rows": mhat_rows}


FF_COLUMNS = ["trained_rule", "sim_M", "corr_sl_pred", "corr_rl_pred", "seed"]


def _run_feedforward_sweep(out_dir: Path, template: Optional[dict],
                           seeds: Optional[list[int]]) -> dict:
    template = template or {}
    alpha = float(template.get("align_m_bmi1", 0.3))
    n_networks = int(template.get("n_networks", 100))
    base_seed = (seeds or [0])[0]
    rows = []
    for rule in ("sl", "rl"):
        for res in run_ff_population(rule, alpha, n_networks=n_networks, seed=base_seed):
            rows.append({"trained_rule": rule, "sim_M": res.sim_m,
                         "corr_sl_pred": res.corr_sl, "corr_rl_pred": res.corr_rl,
                         "seed": res.seed})
    rows_path = Path(out_dir) / "feedforward_rows.csv"
    write_rows(rows_path, rows, FF_COLUMNS)
    summaries = []
    for rule in ("sl", "rl"):
        sl_vals = [r["corr_sl_pred"] for r in rows if r["trained_rule"] == rule]
        rl_vals = [r["corr_rl_pred"] for r in rows if r["trained_rule"] == rule]
        correct, wrong = (sl_vals, rl_vals) if rule == "sl" else (rl_vals, sl_vals)
        res = two_sample_t(correct, wrong)
        summaries.append({"cell": f"ff-{rule}", "window": 0, "n_ok": len(correct),
                          "n_failed": 0, "hypotheses": "sl|rl",
                          "mean_correct": float(np.mean(correct)),
                          "sem_correct": sem(correct),
                          "mean_wrong": float(np.mean(wrong)), "sem_wrong": sem(wrong),
                          "t": res.t, "df": res.df, "p": res.p, "stars": res.stars})
    summary_path = Path(out_dir) / "feedforward_summary.csv"
    write_rows(summary_path, summaries, SUMMARY_COLUMNS)
    return {"plan": "feedforward", "rows_csv": str(rows_path),
            "summary_csv": str(summary_path), "n_cells": 2, "n_runs": len(rows),
            "n_failed": 0, "rows": rows, "summaries": summaries, "run_rows": []}


REPORT_COLUMNS = ["plan", "cell", "window", "hypothesis", "metric", "value", "n"]


def render_report(rows_csv: Path, out_csv: Path) -> Path:
    """Melt a sweep summary CSV into a long-format, plot-ready table."""
    rows = read_rows(Path(rows_csv))
    plan = Path(rows_csv).stem.replace("_summary", "")
    long_rows = []
    for row in rows:
        n = row.get("n_ok") or ""
        for metric in ("mean_correct", "sem_correct", "mean_wrong", "sem_wrong",
                       "t", "p", "mean_rl_naive", "sem_rl_naive", "t_naive", "p_naive"):
            val = row.get(metric)
            if val in (None, ""):
                continue
            hyp = "rl_naive" if "naive" in metric else \
                ("correct" if "correct" in metric else
                 ("wrong" if "wrong" in metric else "pair"))
            long_rows.append({"plan": plan, "cell": row["cell"], "window": row["window"],
                              "hypothesis": hyp, "metric": metric, "value": val, "n": n})
    out_csv = Path(out_csv)
    write_rows(out_csv, long_rows, REPORT_COLUMNS)
    return out_csv
