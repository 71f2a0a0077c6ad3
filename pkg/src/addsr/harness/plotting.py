"""Weighting-ratio curves over (inference step, teacher timestep)."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..objective import WeightingParams, weighting_ratio
from ..schedule import NoiseSchedule, StudentTimestepSet


def ratio_grid(wp: WeightingParams, sched: NoiseSchedule, sts: StudentTimestepSet, ts: Optional[Sequence[int]] = None) -> tuple[np.ndarray, np.ndarray]:
    """``lambda / d(s, t)``; rows are inference steps 1..n, columns teacher timesteps."""
    ts = np.arange(1, sched.T + 1) if ts is None else np.asarray(ts)
    grid = np.array([[weighting_ratio(s, int(t), sched, sts, wp) for t in ts] for s in sts.anchors])
    return ts, grid


def write_ratio_csv(path: str | Path, ts: np.ndarray, grids: dict[str, np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "step", "t", "ratio"])
        for mode, grid in grids.items():
            for p, row in enumerate(grid, start=1):
                for t, r in zip(ts, row):
                    w.writerow([mode, p, int(t), repr(float(r))])


def read_ratio_csv(path: str | Path) -> dict[str, np.ndarray]:
    rows: dict[str, dict[int, list[float]]] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["mode"], {}).setdefault(int(rec["step"]), []).append(float(rec["ratio"]))
    return {mode: np.array([by_step[p] for p in sorted(by_step)]) for mode, by_step in rows.items()}


def plot_weighting(
    wp: WeightingParams,
    sched: NoiseSchedule,
    sts: StudentTimestepSet,
    out_dir: str | Path,
    ts: Optional[Sequence[int]] = None,
) -> dict[str, np.ndarray]:
    """Write ``weighting_ratio.csv`` and ``weighting_ratio.png`` for the constant-factor
    baseline and for ``wp``; returns the grids keyed by mode."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grids = {}
    ts_arr, grids["baseline"] = ratio_grid(wp.with_(form="constant"), sched, sts, ts)
    _, grids[wp.form] = ratio_grid(wp, sched, sts, ts)
    write_ratio_csv(out_dir / "weighting_ratio.csv", ts_arr, grids)

    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, (mode, grid) in zip(axes, grids.items()):
        for p, row in enumerate(grid, start=1):
            ax.plot(ts_arr, row, label=f"step {p} (s={sts.anchor_of(p)})")
        ax.set_title(mode)
        ax.set_xlabel("teacher timestep t")
        ax.set_yscale("log")
        ax.legend()
    axes[0].set_ylabel("lambda / d(s, t)")
    fig.tight_layout()
    fig.savefig(out_dir / "weighting_ratio.png", dpi=100)
    plt.close(fig)
    return grids
