"""CSV ingestion, unit scaling and chain/trajectory file round-tripping.

Working units: the sampler behaves best when the median observation interval
and the mean empirical speed are both about 1, so datasets are rescaled
(time by the median interval, distance by speed x interval) before fitting
and results are mapped back afterwards.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Dataset, Trajectory

__all__ = [
    "DataError",
    "ScaledDataset",
    "ingest",
    "scale",
    "unscale_params",
    "unscale_trajectory",
    "write_dataset",
    "write_chain",
    "read_chain",
    "write_trajectories",
    "read_trajectories",
]


class DataError(Exception):
    """Malformed input data (bad file, non-monotone times, non-finite values)."""


@dataclass(frozen=True)
class ScaledDataset:
    """A dataset in working units plus the factors to undo the scaling.

    scaled times = (t - time_offset) / time_factor;
    scaled locations = (x - space_offset) / distance_factor.
    """

    dataset: Dataset
    time_factor: float
    distance_factor: float
    time_offset: float
    space_offset: np.ndarray

    def unscale_times(self, t: np.ndarray) -> np.ndarray:
        return np.asarray(t) * self.time_factor + self.time_offset

    def unscale_locations(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) * self.distance_factor + self.space_offset


def ingest(path) -> Dataset:
    """Read a `t,x,y` CSV with strictly increasing, finite times."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(raw.splitlines()))
    if not rows or [c.strip() for c in rows[0][:3]] != ["t", "x", "y"]:
        raise DataError(f"{path}: expected header 't,x,y'")
    times = []
    locs = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 3:
            raise DataError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        try:
            t, x, y = (float(c) for c in row[:3])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric value") from exc
        if not (math.isfinite(t) and math.isfinite(x) and math.isfinite(y)):
            raise DataError(f"{path}:{lineno}: non-finite value")
        if times and t <= times[-1]:
            raise DataError(f"{path}:{lineno}: time {t} does not increase past {times[-1]}")
        times.append(t)
        locs.append((x, y))
    if len(times) < 2:
        raise DataError(f"{path}: need at least two observations")
    return Dataset(np.asarray(times), np.asarray(locs))


def scale(ds: Dataset) -> ScaledDataset:
    """Rescale so the median interval and mean empirical speed are 1."""
    tf = float(np.median(ds.interval_lengths()))
    speed = float(np.mean(ds.empirical_speeds()))
    df = speed * tf
    if tf <= 0 or df <= 0:
        raise DataError("degenerate dataset: zero median interval or zero mean speed")
    t_off = float(ds.times[0])
    x_off = ds.locations[0].copy()
    scaled = Dataset(
        (ds.times - t_off) / tf,
        (ds.locations - x_off) / df,
        time_unit=f"{ds.time_unit}/{tf:g}",
        distance_unit=f"{ds.distance_unit}/{df:g}",
    )
    return ScaledDataset(scaled, tf, df, t_off, x_off)


def unscale_params(samples: np.ndarray, sd: ScaledDataset) -> np.ndarray:
    """Map a chain array (columns lam, kappa, sigma, rho, varsigma, ...) to data units."""
    out = samples.copy()
    out[:, 0] /= sd.time_factor  # events per time
    out[:, 2] *= sd.distance_factor / sd.time_factor  # speed scale
    out[:, 4] *= sd.distance_factor  # error SD
    return out


def unscale_trajectory(traj: Trajectory, sd: ScaledDataset) -> Trajectory:
    speed = sd.distance_factor / sd.time_factor
    return Trajectory(
        sd.unscale_times(traj.t0),
        sd.unscale_locations(traj.x0),
        sd.unscale_times(traj.turn_times),
        traj.velocities * speed,
        sd.unscale_times(traj.t_end),
    )


def write_dataset(path, ds: Dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y"])
        for t, (x, y) in zip(ds.times, ds.locations):
            w.writerow([f"{t:.12g}", f"{x:.12g}", f"{y:.12g}"])


CHAIN_HEADER = ["iteration", "lambda", "kappa", "sigma", "rho", "varsigma", "N", "log_posterior"]


def write_chain(path, samples: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CHAIN_HEADER)
        for i, row in enumerate(samples):
            w.writerow([i] + [f"{v:.12g}" for v in row])


def read_chain(path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CHAIN_HEADER:
        raise DataError(f"{path}: not a chain file")
    return np.asarray([[float(v) for v in row[1:]] for row in rows[1:]])


def write_trajectories(path, trajectories: list[Trajectory]) -> None:
    """One row per segment start plus a terminal row, tagged by sample id."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "t", "x", "y", "vx", "vy"])
        for sid, traj in enumerate(trajectories):
            bounds = traj.boundaries
            locs = traj.boundary_locations
            vels = traj.velocities
            for i in range(vels.shape[0]):
                w.writerow(
                    [sid]
                    + [f"{v:.10g}" for v in (bounds[i], locs[i, 0], locs[i, 1], vels[i, 0], vels[i, 1])]
                )
            w.writerow(
                [sid]
                + [
                    f"{v:.10g}"
                    for v in (bounds[-1], locs[-1, 0], locs[-1, 1], vels[-1, 0], vels[-1, 1])
                ]
            )


def read_trajectories(path) -> list[Trajectory]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["sample", "t", "x", "y", "vx", "vy"]:
        raise DataError(f"{path}: not a trajectory sample file")
    by_id: dict[int, list[list[float]]] = {}
    for row in rows[1:]:
        by_id.setdefault(int(row[0]), []).append([float(v) for v in row[1:]])
    out = []
    for sid in sorted(by_id):
        arr = np.asarray(by_id[sid])
        t = arr[:, 0]
        out.append(Trajectory(t[0], arr[0, 1:3], t[1:-1], arr[:-1, 3:5], t[-1]))
    return out
