"""Static SVG rendering of observations and reconstructed trajectories.

Hand-assembled SVG keeps the output deterministic and structurally simple:
observations are cross markers joined in time order, each reconstructed
trajectory is one polyline with circle markers at its turns.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .model import Dataset, Trajectory

__all__ = ["trajectory_plot"]


def _view(points: np.ndarray, pad: float = 0.05) -> tuple[float, float, float, float]:
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    lo = lo - pad * span
    hi = hi + pad * span
    return float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1])


class _Mapper:
    def __init__(self, view, width, height):
        x0, y0, w, h = view
        self.sx = width / w
        self.sy = height / h
        self.x0, self.y0 = x0, y0
        self.height = height

    def __call__(self, xy) -> tuple[float, float]:
        # y axis flipped: SVG grows downward
        return (
            (float(xy[0]) - self.x0) * self.sx,
            self.height - (float(xy[1]) - self.y0) * self.sy,
        )


def _clip_trajectory(traj: Trajectory, t_lo: float, t_hi: float) -> np.ndarray:
    """Polyline vertices of the path restricted to [t_lo, t_hi]."""
    from .model import interpolate

    t_lo = max(t_lo, traj.t0)
    t_hi = min(t_hi, traj.t_end)
    inner = traj.turn_times[(traj.turn_times > t_lo) & (traj.turn_times < t_hi)]
    ts = np.concatenate([[t_lo], inner, [t_hi]])
    return interpolate(traj, ts), inner


def trajectory_plot(
    ds: Dataset,
    trajectories: list[Trajectory],
    time_window: tuple[float, float] | None = None,
    width: int = 720,
    height: int = 720,
    title: str = "",
) -> str:
    """SVG overlay of observations (crosses, time-joined) and path samples.

    ``time_window`` restricts both the observations and the path segments to
    a sub-interval for close-up views.
    """
    t_lo, t_hi = time_window if time_window is not None else (float(ds.times[0]), float(ds.times[-1]))
    keep = (ds.times >= t_lo) & (ds.times <= t_hi)
    obs = ds.locations[keep]
    clipped = []
    for traj in trajectories:
        if t_hi <= traj.t0 or t_lo >= traj.t_end:
            continue
        clipped.append(_clip_trajectory(traj, t_lo, t_hi))
    pts = [obs.reshape(-1, 2)] + [verts for verts, _ in clipped]
    view = _view(np.vstack([p for p in pts if p.size]))
    to = _Mapper(view, width, height)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{escape(title or 'trajectory reconstruction')}</title>",
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]

    for verts, inner in clipped:
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in (to(v) for v in verts))
        parts.append(
            f'<polyline class="trajectory" points="{coords}" fill="none" '
            f'stroke="#999999" stroke-width="1" opacity="0.45"/>'
        )
        for xy in verts[1:-1]:  # interior vertices are the turns inside the view
            x, y = to(xy)
            parts.append(
                f'<circle class="turn" cx="{x:.2f}" cy="{y:.2f}" r="2.2" '
                f'fill="none" stroke="#777777" stroke-width="0.8"/>'
            )

    if obs.shape[0]:
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in (to(v) for v in obs))
        parts.append(
            f'<polyline class="observation-track" points="{coords}" fill="none" '
            f'stroke="#cc2222" stroke-width="1.2"/>'
        )
    arm = 4.0
    for xy in obs:
        x, y = to(xy)
        parts.append(
            f'<path class="observation" d="M {x - arm:.2f} {y:.2f} H {x + arm:.2f} '
            f'M {x:.2f} {y - arm:.2f} V {y + arm:.2f}" stroke="#cc2222" stroke-width="1.4"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
