"""On-disk run artifacts: matrices as CSV with sidecar headers, trial logs as
flat CSV plus a JSON header, and per-trial metrics. Floats are written with
17 significant digits so a reproduced run is byte-identical."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["fmt", "write_matrix", "read_matrix", "write_rows", "read_rows",
           "write_trials", "read_trials"]


def fmt(x) -> str:
    if isinstance(x, float) or isinstance(x, np.floating):
        return format(float(x), ".17g")
    return str(x)


def write_matrix(path: Path, mat: np.ndarray, **meta) -> None:
    """Row-major CSV plus a sidecar .meta.json with rows/cols and extras."""
    mat = np.asarray(mat, dtype=float)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for row in np.atleast_2d(mat):
            f.write(",".join(fmt(v) for v in row) + "\n")
    sidecar = {"rows": int(np.atleast_2d(mat).shape[0]),
               "cols": int(np.atleast_2d(mat).shape[1]),
               "order": "row-major", **meta}
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(sidecar, indent=1))


def read_matrix(path: Path) -> np.ndarray:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".meta.json").read_text())
    mat = np.loadtxt(path, delimiter=",", ndmin=2)
    if mat.shape != (meta["rows"], meta["cols"]):
        raise ValueError(f"{path}: shape {mat.shape} does not match sidecar {meta}")
    return mat


def write_rows(path: Path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    """Header-first CSV of dict rows; missing keys are written empty."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join("" if row.get(c) is None else fmt(row.get(c))
                             for c in columns) + "\n")


def read_rows(path: Path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        if not line:
            continue
        out.append(dict(zip(header, line.split(","))))
    return out


def write_trials(path: Path, trial_indices: Iterable[int], pools: Iterable[str],
                 h_trials: Sequence[np.ndarray],
                 eps_trials: Sequence[np.ndarray] | None = None, **meta) -> None:
    """Flat trial log: one row per timestep, activity then error columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = int(np.asarray(h_trials[0]).shape[1])
    n_y = int(np.asarray(eps_trials[0]).shape[1]) if eps_trials is not None else 0
    cols = (["trial", "t", "pool"] + [f"h_{i}" for i in range(n)]
            + [f"eps_{k}" for k in range(n_y)])
    with path.open("w") as f:
        f.write(",".join(cols) + "\n")
        for idx, (trial_idx, pool, h) in enumerate(zip(trial_indices, pools, h_trials)):
            eps = eps_trials[idx] if eps_trials is not None else None
            for t in range(h.shape[0]):
                vals = [str(trial_idx), str(t), pool]
                vals += [fmt(v) for v in h[t]]
                if eps is not None:
                    vals += [fmt(v) for v in eps[t]]
                f.write(",".join(vals) + "\n")
    header = {"n_trials": len(h_trials), "trial_len": int(np.asarray(h_trials[0]).shape[0]),
              "n_units": n, "n_out": n_y, "columns": cols, **meta}
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(header, indent=1))


def read_trials(path: Path) -> tuple[list[int], list[str], list[np.ndarray], list[np.ndarray] | None]:
    """Inverse of :func:`write_trials`; groups rows back into per-trial arrays."""
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".meta.json").read_text())
    n, n_y = meta["n_units"], meta["n_out"]
    rows = read_rows(path)
    by_trial: dict[int, dict] = {}
    order: list[int] = []
    for row in rows:
        idx = int(row["trial"])
        if idx not in by_trial:
            by_trial[idx] = {"pool": row["pool"], "h": [], "eps": []}
            order.append(idx)
        by_trial[idx]["h"].append([float(row[f"h_{i}"]) for i in range(n)])
        if n_y:
            by_trial[idx]["eps"].append([float(row[f"eps_{k}"]) for k in range(n_y)])
    indices = order
    pools = [by_trial[i]["pool"] for i in order]
    h_trials = [np.array(by_trial[i]["h"]) for i in order]
    eps_trials = [np.array(by_trial[i]["eps"]) for i in order] if n_y else None
    return indices, pools, h_trials, eps_trials
