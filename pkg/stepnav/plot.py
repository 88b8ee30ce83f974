"""Static plots: episode trajectories and learning curves.

Public API:
    plot_trace(trace, path, env=None)        # SVG: path, footsteps, v and ω over time
    plot_curves(rows, svg_path, csv_path)    # SVG + CSV of smoothed return and success
    moving_average(values, window)

SVGs carry no date and use a fixed id salt, so identical inputs give identical files.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sim import EpisodeTrace  # noqa: E402
from .train import CurveRow  # noqa: E402
from .world import Environment  # noqa: E402

plt.rcParams["svg.hashsalt"] = "stepnav"
_SVG_META = {"Date": None}


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    """Trailing mean over the last `window` values (fewer at the start)."""
    v = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError(f"window must be ≥ 1, got {window}")
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def _draw_obstacles(ax, env: Environment) -> None:
    for obs in env.obstacles:
        xs, ys = obs.geometry().exterior.xy
        ax.fill(xs, ys, color="0.6", alpha=0.8, linewidth=0)


def plot_trace(trace: EpisodeTrace, path: Union[str, Path], env: Optional[Environment] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    states = [trace.initial] + [r.state for r in trace.records]
    com = np.array([s.com_position for s in states])
    feet = np.array([s.stance_foot for s in states])
    sides = np.array([s.stance_index for s in states])
    t = trace.step_duration * np.arange(1, trace.n_steps + 1)

    fig, (ax_map, ax_v, ax_w) = plt.subplots(1, 3, figsize=(15, 5))
    if env is not None:
        _draw_obstacles(ax_map, env)
        ax_map.scatter(*env.goal, marker="*", s=200, color="tab:green", label="goal", zorder=3)
    ax_map.plot(com[:, 0], com[:, 1], color="tab:blue", label="CoM")
    for side, color, label in ((1, "tab:red", "right foot"), (-1, "tab:orange", "left foot")):
        mask = sides == side
        ax_map.scatter(feet[mask, 0], feet[mask, 1], s=12, color=color, label=label, zorder=2)
    ax_map.set_aspect("equal")
    ax_map.set_xlabel("x [m]")
    ax_map.set_ylabel("y [m]")
    ax_map.set_title(f"env {trace.env_id}, {trace.policy}: {trace.outcome.value} in {trace.n_steps} steps")
    ax_map.legend(loc="best", fontsize="small")
    ax_map.grid(True)

    v = np.array([r.state.v for r in trace.records]).reshape(-1, 2)
    ax_v.plot(t, v[:, 0], label="v_x")
    ax_v.plot(t, v[:, 1], label="v_y")
    ax_v.set_xlabel("time [s]")
    ax_v.set_ylabel("velocity [m/s]")
    ax_v.legend(loc="best", fontsize="small")
    ax_v.grid(True)

    omega = [r.gait.omega if r.gait is not None else np.nan for r in trace.records]
    ax_w.step(t, omega, where="post")
    ax_w.set_xlabel("time [s]")
    ax_w.set_ylabel("turning rate [rad/s]")
    ax_w.grid(True)

    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_curves(
    rows: Sequence[CurveRow],
    svg_path: Union[str, Path],
    csv_path: Optional[Union[str, Path]] = None,
    window: int = 50,
) -> Path:
    """Return and success rate per episode, each with its trailing moving average."""
    if not rows:
        raise ValueError("no learning-curve rows to plot")
    svg_path = Path(svg_path)
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    episodes = np.array([r.episode for r in rows])
    returns = np.array([r.total_reward for r in rows])
    success = np.array([100.0 * r.success for r in rows])
    smooth_return = moving_average(returns, window)
    smooth_success = moving_average(success, window)

    fig, (ax_r, ax_s) = plt.subplots(1, 2, figsize=(12, 4))
    ax_r.plot(episodes, returns, color="0.75", linewidth=0.5)
    ax_r.plot(episodes, smooth_return, color="tab:blue")
    ax_r.set_xlabel("episode")
    ax_r.set_ylabel("accumulated reward")
    ax_r.grid(True)
    ax_s.plot(episodes, smooth_success, color="tab:green")
    ax_s.set_xlabel("episode")
    ax_s.set_ylabel(f"success rate [%] (window {window})")
    ax_s.set_ylim(-5, 105)
    ax_s.grid(True)
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata=_SVG_META)
    plt.close(fig)

    if csv_path is not None:
        csv_path = Path(csv_path)
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "return", "return_smoothed", "success_smoothed"])
            for e, r, sr, ss in zip(episodes, returns, smooth_return, smooth_success):
                writer.writerow([int(e), repr(float(r)), repr(float(sr)), repr(float(ss))])
    return svg_path
