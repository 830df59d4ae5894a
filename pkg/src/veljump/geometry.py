"""Collinearity detection, minimal-tally construction and trajectory initialization.

A "tally" counts latent turn events per inter-observation interval. A
minimal tally has just enough turns for a piecewise-linear path to pass
through every observation exactly, with turns never placed at observation
times. For generic data this costs one turn fewer than there are intervals;
runs of (approximately) collinear observations cost none, and two adjacent
runs can sometimes be linked by a single well-placed turn.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Dataset, Trajectory, interpolate

__all__ = [
    "CollinearRun",
    "collinearity_threshold",
    "detect_collinear_runs",
    "collinear_interval_mask",
    "join_time",
    "find_bridge_gaps",
    "count_minimal_turns",
    "sample_minimal_tally",
    "is_minimal_tally",
    "enumerate_minimal_tallies",
    "initial_trajectory",
]


@dataclass(frozen=True)
class CollinearRun:
    """Inclusive observation-index range consistent with one constant-velocity segment."""

    start: int
    end: int

    def __post_init__(self):
        if self.end - self.start < 2:
            raise ValueError("a collinear run covers at least three observations")


def collinearity_threshold(ds: Dataset) -> float:
    """Deviation tolerance: 0.1 x mean empirical speed x median observation interval."""
    return 0.1 * float(np.mean(ds.empirical_speeds())) * float(np.median(ds.interval_lengths()))


def _run_deviation_ok(ds: Dataset, a: int, b: int, threshold: float) -> bool:
    """Interior points of [a, b] all within threshold (per coordinate) of the endpoint line."""
    t = ds.times
    x = ds.locations
    frac = (t[a + 1 : b] - t[a]) / (t[b] - t[a])
    pred = x[a] + frac[:, None] * (x[b] - x[a])
    return bool(np.all(np.abs(x[a + 1 : b] - pred) < threshold))


def detect_collinear_runs(ds: Dataset, threshold: float) -> list[CollinearRun]:
    """Greedy maximal runs of >= 3 observations timed to match constant velocity.

    Runs never share observations; when extensions tie, the earlier run wins.
    """
    if threshold <= 0:
        raise ValueError("collinearity threshold must be > 0")
    runs: list[CollinearRun] = []
    n = ds.times.size - 1
    a = 0
    while a + 2 <= n:
        if not _run_deviation_ok(ds, a, a + 2, threshold):
            a += 1
            continue
        b = a + 2
        while b + 1 <= n and _run_deviation_ok(ds, a, b + 1, threshold):
            b += 1
        runs.append(CollinearRun(a, b))
        a = b + 1
    return runs


def collinear_interval_mask(runs: list[CollinearRun], n_intervals: int) -> np.ndarray:
    """Boolean mask over intervals: True where the interval lies inside a run."""
    mask = np.zeros(n_intervals, dtype=bool)
    for run in runs:
        mask[run.start : run.end] = True
    return mask


# ---------------------------------------------------------------------------
# Join times
# ---------------------------------------------------------------------------

def join_time(
    anchor_pre: tuple[float, np.ndarray],
    v_pre: np.ndarray,
    anchor_post: tuple[float, np.ndarray],
    v_post: np.ndarray,
    interval: tuple[float, float],
    time_tol: float = 1e-9,
    pos_tol: float = 1e-9,
) -> float | None:
    """Time at which one turn can join two constant-velocity path pieces.

    Solves, per coordinate, x_pre + (t - t_pre) v_pre = x_post - (t_post - t) v_post.
    Returns the join time when the coordinates agree (within ``time_tol`` for
    two finite solutions, ``pos_tol`` for a degenerate coordinate) and it falls
    strictly inside ``interval``; otherwise None. If both coordinates are
    degenerate but consistent, any time works and the interval midpoint is
    returned.
    """
    t_pre, x_pre = float(anchor_pre[0]), np.asarray(anchor_pre[1], dtype=float)
    t_post, x_post = float(anchor_post[0]), np.asarray(anchor_post[1], dtype=float)
    v_pre = np.asarray(v_pre, dtype=float)
    v_post = np.asarray(v_post, dtype=float)
    t_a, t_b = interval
    if not t_a < t_b:
        raise ValueError("interval must be nonempty")

    dv = v_pre - v_post
    num = x_post - x_pre + t_pre * v_pre - t_post * v_post
    vscale = max(float(np.max(np.abs(v_pre))), float(np.max(np.abs(v_post))), 1e-300)
    degenerate = np.abs(dv) <= 1e-12 * vscale

    def residual_at(t: float) -> np.ndarray:
        return (x_pre + (t - t_pre) * v_pre) - (x_post - (t_post - t) * v_post)

    if degenerate.all():
        mid = 0.5 * (t_a + t_b)
        if np.all(np.abs(residual_at(mid)) <= pos_tol):
            return mid
        return None
    if degenerate.any():
        c = int(np.argmin(degenerate))  # the non-degenerate coordinate
        t_star = num[c] / dv[c]
        other = 1 - c
        if abs(residual_at(t_star)[other]) > pos_tol:
            return None
    else:
        cand = num / dv
        if abs(cand[0] - cand[1]) > time_tol:
            return None
        t_star = 0.5 * (cand[0] + cand[1])
    if t_a < t_star < t_b:
        return float(t_star)
    return None


def _run_line(ds: Dataset, run: CollinearRun) -> tuple[tuple[float, np.ndarray], np.ndarray]:
    """Anchor and velocity of the constant-velocity line through a run's endpoints."""
    t = ds.times
    x = ds.locations
    v = (x[run.end] - x[run.start]) / (t[run.end] - t[run.start])
    return (float(t[run.start]), x[run.start]), v


def find_bridge_gaps(
    ds: Dataset,
    runs: list[CollinearRun],
    time_tol: float = 1e-9,
    pos_tol: float = 1e-9,
) -> dict[int, float]:
    """Single-interval gaps between adjacent runs that one turn can bridge.

    Returns {interval index: join time}. Only gaps with no observation
    between the runs qualify, and only when the two run lines actually meet
    inside the gap.
    """
    out: dict[int, float] = {}
    for left, right in zip(runs[:-1], runs[1:]):
        if right.start - left.end != 1:
            continue
        gap = left.end  # interval (t[left.end], t[left.end + 1])
        anchor_pre, v_pre = _run_line(ds, left)
        anchor_post, v_post = _run_line(ds, right)
        t_star = join_time(
            anchor_pre,
            v_pre,
            (float(ds.times[right.start]), ds.locations[right.start]),
            v_post,
            (float(ds.times[gap]), float(ds.times[gap + 1])),
            time_tol=time_tol,
            pos_tol=pos_tol,
        )
        if t_star is not None:
            out[gap] = t_star
    return out


# ---------------------------------------------------------------------------
# Minimal tallies
# ---------------------------------------------------------------------------

def _blocks(mask: np.ndarray) -> list[tuple[int, int, bool, bool]]:
    """Maximal mask-free stretches as (start, length, left_determined, right_determined)."""
    n = mask.size
    blocks = []
    j = 0
    while j < n:
        if mask[j]:
            j += 1
            continue
        start = j
        while j < n and not mask[j]:
            j += 1
        blocks.append((start, j - start, start > 0, j < n))
    return blocks


def _block_words(g: int, ldet: bool, rdet: bool) -> list[tuple[int, ...]]:
    """Valid non-1 letter words for a free block, by boundary type.

    Zeros mark two-observation segments and 2s mark connector pairs; scanning
    the whole tally, the non-1 letters (counting each collinear run as a
    virtual 0) must alternate 0,2,0,...,0.
    """
    words: list[tuple[int, ...]] = []
    if not ldet and not rdet:
        w: tuple[int, ...] = (0,)
        while len(w) <= g:
            words.append(w)
            w = w + (2, 0)
    elif ldet and rdet:
        w = (2,)
        while len(w) <= g:
            words.append(w)
            w = w + (0, 2)
    else:
        words.append(())
        w = (2, 0) if ldet else (0, 2)
        while len(w) <= g:
            words.append(w)
            w = w + ((0, 2) if ldet else (2, 0))
    return words


def _word_turns(g: int, word: tuple[int, ...]) -> int:
    return g - len(word) + sum(word)


def _block_min_turns(g: int, ldet: bool, rdet: bool) -> int:
    if not ldet and not rdet:
        return g - 1
    if ldet and rdet:
        return g + 1
    return g


def count_minimal_turns(
    num_intervals: int,
    collinear_mask: np.ndarray | None = None,
    bridge_gaps=(),
) -> int:
    """Fewest turns that fit all observations exactly for any generic data.

    ``bridge_gaps`` lists single-interval gaps between adjacent runs where the
    run lines meet, letting one turn replace the usual connector pair.
    """
    if num_intervals < 1:
        raise ValueError("need at least one interval")
    mask = (
        np.zeros(num_intervals, dtype=bool)
        if collinear_mask is None
        else np.asarray(collinear_mask, dtype=bool)
    )
    bridge = set(bridge_gaps)
    total = 0
    for start, g, ldet, rdet in _blocks(mask):
        if g == 1 and ldet and rdet and start in bridge:
            total += 1
        else:
            total += _block_min_turns(g, ldet, rdet)
    return total


def _comb(n: int, k: int) -> int:
    return math.comb(n, k)


def sample_minimal_tally(
    num_intervals: int,
    collinear_mask: np.ndarray | None,
    rng: np.random.Generator,
    bridge_gaps=(),
) -> np.ndarray:
    """Uniform draw from the minimal tallies compatible with the collinearity mask."""
    mask = (
        np.zeros(num_intervals, dtype=bool)
        if collinear_mask is None
        else np.asarray(collinear_mask, dtype=bool)
    )
    bridge = set(bridge_gaps)
    tally = np.zeros(num_intervals, dtype=int)
    for start, g, ldet, rdet in _blocks(mask):
        if g == 1 and ldet and rdet and start in bridge:
            tally[start] = 1
            continue
        words = _block_words(g, ldet, rdet)
        weights = np.array([_comb(g, len(w)) for w in words], dtype=float)
        word = words[rng.choice(len(words), p=weights / weights.sum())]
        block = np.ones(g, dtype=int)
        if word:
            pos = np.sort(rng.choice(g, size=len(word), replace=False))
            block[pos] = word
        tally[start : start + g] = block
    return tally


def enumerate_minimal_tallies(
    num_intervals: int,
    collinear_mask: np.ndarray | None = None,
    bridge_gaps=(),
) -> list[tuple[int, ...]]:
    """All minimal tallies for the mask; exponential, intended for small cases."""
    mask = (
        np.zeros(num_intervals, dtype=bool)
        if collinear_mask is None
        else np.asarray(collinear_mask, dtype=bool)
    )
    bridge = set(bridge_gaps)
    per_block: list[list[np.ndarray]] = []
    blocks = _blocks(mask)
    for start, g, ldet, rdet in blocks:
        options: list[np.ndarray] = []
        if g == 1 and ldet and rdet and start in bridge:
            options.append(np.array([1], dtype=int))
        else:
            from itertools import combinations

            for word in _block_words(g, ldet, rdet):
                if not word:
                    options.append(np.ones(g, dtype=int))
                    continue
                for pos in combinations(range(g), len(word)):
                    block = np.ones(g, dtype=int)
                    block[list(pos)] = word
                    options.append(block)
        per_block.append(options)

    out: list[tuple[int, ...]] = []

    def rec(i: int, acc: np.ndarray):
        if i == len(blocks):
            out.append(tuple(int(v) for v in acc))
            return
        start, g, _, _ = blocks[i]
        for opt in per_block[i]:
            acc2 = acc.copy()
            acc2[start : start + g] = opt
            rec(i + 1, acc2)

    rec(0, np.zeros(num_intervals, dtype=int))
    return out


def is_minimal_tally(
    tally,
    collinear_mask: np.ndarray | None = None,
    bridge_gaps=(),
) -> bool:
    """Check a tally against the minimal-pattern grammar for the given mask."""
    tally = np.asarray(tally, dtype=int)
    n = tally.size
    mask = np.zeros(n, dtype=bool) if collinear_mask is None else np.asarray(collinear_mask, dtype=bool)
    if np.any(tally[mask] != 0):
        return False
    bridge = set(bridge_gaps)
    for start, g, ldet, rdet in _blocks(mask):
        block = tally[start : start + g]
        if np.any(block < 0) or np.any(block > 2):
            return False
        word = tuple(int(v) for v in block[block != 1])
        if g == 1 and ldet and rdet and start in bridge and word == ():
            continue
        if word not in _block_words(g, ldet, rdet):
            return False
    return True


# ---------------------------------------------------------------------------
# Initial trajectory
# ---------------------------------------------------------------------------

def _runs_from_tally(tally: np.ndarray) -> list[tuple[int, int]]:
    """Observation ranges spanned by >= 2 consecutive zero intervals.

    Generic minimal patterns never place two zeros side by side, so such
    stretches can only come from collinear runs.
    """
    runs = []
    n = tally.size
    j = 0
    while j < n:
        if tally[j] != 0:
            j += 1
            continue
        start = j
        while j < n and tally[j] == 0:
            j += 1
        if j - start >= 2:
            runs.append((start, j))  # observations start .. j
    return runs


def _bridge_intervals(tally: np.ndarray) -> list[int]:
    """Intervals holding exactly one turn squeezed between two zero stretches."""
    zero_runs = _runs_from_tally(tally)
    out = []
    for (s1, e1), (s2, e2) in zip(zero_runs[:-1], zero_runs[1:]):
        gap = e1  # interval index between the stretches
        if s2 - e1 == 1 and tally[gap] == 1:
            out.append(gap)
    return out


def initial_trajectory(
    ds: Dataset,
    tally,
    varsigma: float,
    rng: np.random.Generator,
    max_retries: int = 50,
) -> Trajectory:
    """Build a trajectory matching the tally that passes through the observations.

    Turn times are uniform in their assigned intervals (bridge turns between
    collinear runs go at the join time of the run lines); velocities then
    solve the linear interpolation constraints. Observations interior to
    collinear runs are fitted by the run's endpoint line, all others exactly.
    """
    tally = np.asarray(tally, dtype=int)
    n = ds.n_intervals
    if tally.size != n:
        raise ValueError("tally length must match the number of intervals")
    t = ds.times
    x = ds.locations
    zero_runs = _runs_from_tally(tally)
    interior = np.zeros(n + 1, dtype=bool)
    for s, e in zero_runs:
        interior[s + 1 : e] = True  # observations strictly inside a run
    bridge_t: dict[int, float] = {}
    for gap in _bridge_intervals(tally):
        left = next((s, e) for s, e in zero_runs if e == gap)
        right = next((s, e) for s, e in zero_runs if s == gap + 1)
        v_pre = (x[left[1]] - x[left[0]]) / (t[left[1]] - t[left[0]])
        v_post = (x[right[1]] - x[right[0]]) / (t[right[1]] - t[right[0]])
        t_star = join_time(
            (float(t[left[1]]), x[left[1]]),
            v_pre,
            (float(t[right[0]]), x[right[0]]),
            v_post,
            (float(t[gap]), float(t[gap + 1])),
            time_tol=max(1e-9, 3.0 * varsigma),
            pos_tol=max(1e-9, 3.0 * varsigma),
        )
        if t_star is not None:
            bridge_t[gap] = t_star

    scale = 1.0 + float(np.max(np.abs(x)))
    tol = 1e-9 * scale
    obs_rows = np.nonzero(~interior[1:])[0] + 1  # constrained observations (skip index 0)

    best: Trajectory | None = None
    best_resid = np.inf
    for _ in range(max_retries):
        times = []
        for j in range(n):
            if tally[j] == 0:
                continue
            if j in bridge_t and tally[j] == 1:
                times.append(np.array([bridge_t[j]]))
            else:
                times.append(np.sort(rng.uniform(t[j], t[j + 1], size=tally[j])))
        turn_times = np.concatenate(times) if times else np.empty(0)
        gaps = np.diff(np.concatenate([[t[0]], turn_times, [t[-1]]]))
        if turn_times.size and (np.min(gaps) <= 1e-12 * (t[-1] - t[0])):
            continue
        bounds = np.concatenate([[t[0]], turn_times, [t[-1]]])
        seg_start = bounds[:-1]
        seg_end = bounds[1:]
        # overlap of each segment with [t0, t_obs] gives the coefficient matrix
        a = np.clip(t[obs_rows, None], seg_start[None, :], seg_end[None, :]) - seg_start[None, :]
        rhs = x[obs_rows] - x[0]
        vel, _, rank, _ = np.linalg.lstsq(a, rhs, rcond=None)
        if rank < min(a.shape):
            continue
        traj = Trajectory(t[0], x[0], turn_times, vel, t[-1])
        resid = float(np.max(np.abs(interpolate(traj, t[obs_rows]) - x[obs_rows]))) if obs_rows.size else 0.0
        if resid < best_resid:
            best, best_resid = traj, resid
        if resid <= tol:
            return traj
    if best is None:
        raise RuntimeError("could not build an initial trajectory for this tally")
    return best
