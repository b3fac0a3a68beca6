"""Path-space views of a kernel: exact window laws and sampled runs.

The stationary Markov measure on two-sided paths is determined by its
finite-window marginals mu(x_i..x_j) = mu(x_i) K[x_i,x_{i+1}] ... ;
those tables are computed exactly here.  Long runs are sampled with the
splitmix64 generator so every trajectory is reproducible from its seed.
"""

from __future__ import annotations

import csv
import itertools
import warnings
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataWarning, WindowTooLarge
from .kernels import Measure, StochasticKernel, _freeze, require_invariant
from .rng import SplitMix64

DENSE_GUARD = 10_000_000  # max entries in an exact window table


@dataclass(frozen=True)
class PathMarginal:
    """Exact joint law of coordinates x_start .. x_start+ndim-1."""

    start: int
    joint: np.ndarray
    labels: tuple[str, ...]

    @property
    def window(self) -> tuple[int, int]:
        return self.start, self.start + self.joint.ndim - 1

    @property
    def length(self) -> int:
        return self.joint.ndim

    @property
    def alphabet(self) -> int:
        return self.joint.shape[0]

    def mass(self, states) -> float:
        return float(self.joint[tuple(int(s) for s in states)])


@dataclass(frozen=True)
class Trajectory:
    """A sampled state sequence plus the seed that produced it."""

    states: np.ndarray
    seed: int
    n_states: int

    @property
    def length(self) -> int:
        return self.states.shape[0]


def path_marginal(kernel: StochasticKernel, mu: Measure, i: int, j: int) -> PathMarginal:
    """Joint distribution of (x_i, ..., x_j) under the stationary path law.

    The table has n**(j-i+1) entries and is refused beyond 10**7.
    """
    if j < i:
        raise ValueError(f"empty window [{i}..{j}]")
    require_invariant(kernel, mu)
    length = j - i + 1
    if kernel.n ** length > DENSE_GUARD:
        raise WindowTooLarge(
            f"window of length {length} over {kernel.n} states exceeds {DENSE_GUARD} entries"
        )
    table = mu.weights
    for _ in range(length - 1):
        table = table[..., :, None] * kernel.rows
    return PathMarginal(i, _freeze(table), kernel.labels)


def marginalize(pm: PathMarginal, i: int, j: int) -> PathMarginal:
    """Restrict an exact window law to the sub-window [i..j]."""
    lo, hi = pm.window
    if not (lo <= i <= j <= hi):
        raise ValueError(f"[{i}..{j}] is not inside [{lo}..{hi}]")
    table = pm.joint
    for _ in range(hi - j):
        table = table.sum(axis=-1)
    for _ in range(i - lo):
        table = table.sum(axis=0)
    return PathMarginal(i, _freeze(table), pm.labels)


def sample_path(kernel: StochasticKernel, mu: Measure, length: int, seed: int) -> Trajectory:
    """Sample x_0 ~ mu then x_{t+1} ~ K(x_t, .), reproducibly."""
    if length < 1:
        raise ValueError("length must be positive")
    require_invariant(kernel, mu)
    rng = SplitMix64(seed)
    us = rng.uniforms(length)
    start_cum = np.cumsum(mu.weights)
    start_cum[-1] = 1.0
    row_cums = np.cumsum(kernel.rows, axis=1)
    row_cums[:, -1] = 1.0
    rows = [list(r) for r in row_cums]
    out = np.empty(length, dtype=np.int64)
    x = bisect_right(list(start_cum), us[0])
    out[0] = x
    for t in range(1, length):
        x = bisect_right(rows[x], us[t])
        out[t] = x
    return Trajectory(_freeze(out), int(seed), kernel.n)


def markov_entropy_rate(kernel: StochasticKernel, mu: Measure) -> float:
    """Shannon rate sum_x mu_x sum_y -K[x,y] log K[x,y], in nats."""
    require_invariant(kernel, mu)
    rows = kernel.rows
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(rows > 0.0, -rows * np.log(rows), 0.0)
    return float(mu.weights @ terms.sum(axis=1))


def _plugin_entropy(masses: np.ndarray) -> float:
    p = masses[masses > 0.0]
    return float(-(p * np.log(p)).sum())


def _window_entropy(pm: PathMarginal, length: int) -> float:
    if length == 0:
        return 0.0
    sub = marginalize(pm, pm.start, pm.start + length - 1)
    return _plugin_entropy(sub.joint.reshape(-1))

def _trajectory_block_counts(states: np.ndarray, n: int, length: int) -> np.ndarray:
    m = states.shape[0] - length + 1
    codes = np.zeros(m, dtype=np.int64)
    for t in range(length):
        codes = codes * n + states[t : t + m]
    return np.bincount(codes, minlength=n ** length).astype(float)


def block_entropy_estimate(source, block_len: int) -> float:
    """Conditional block entropy H(L) - H(L-1) for L = block_len, in nats.

    Accepts an exact PathMarginal (whose window must be at least L long)
    or a sampled Trajectory, in which case plug-in estimates are used
    and InsufficientDataWarning is issued when fewer than 100 samples
    per possible block are available.
    """
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    if isinstance(source, PathMarginal):
        if source.length < block_len:
            raise ValueError(
                f"window of length {source.length} cannot support blocks of {block_len}"
            )
        return _window_entropy(source, block_len) - _window_entropy(source, block_len - 1)
    if isinstance(source, Trajectory):
        states = np.asarray(source.states)
        n = source.n_states
        if states.shape[0] < block_len + 1:
            raise ValueError("trajectory shorter than the requested block length")
        blocks = states.shape[0] - block_len + 1
        if blocks < 100 * n ** block_len:
            warnings.warn(
                f"{blocks} blocks for {n ** block_len} patterns; estimate is rough",
                InsufficientDataWarning,
                stacklevel=2,
            )
        counts_l = _trajectory_block_counts(states, n, block_len)
        h_l = _plugin_entropy(counts_l / counts_l.sum())
        if block_len == 1:
            return h_l
        counts_p = _trajectory_block_counts(states, n, block_len - 1)
        h_p = _plugin_entropy(counts_p / counts_p.sum())
        return h_l - h_p
    raise TypeError(f"cannot estimate block entropy from {type(source).__name__}")


# ---------------------------------------------------------------------------
# exports


def write_trajectory(traj: Trajectory, labels, path) -> None:
    """One state label per line."""
    labels = tuple(labels)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={traj.seed}\n")
        for s in traj.states:
            fh.write(labels[int(s)] + "\n")


def write_marginal_csv(pm: PathMarginal, path, seed: int | None = None) -> None:
    """Rows x_i,...,x_j,mass with 17 significant digits."""
    lo, hi = pm.window
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{k}" for k in range(lo, hi + 1)] + ["mass"])
        for combo in itertools.product(range(pm.alphabet), repeat=pm.length):
            row = [pm.labels[s] for s in combo]
            writer.writerow(row + [f"{pm.joint[combo]:.17g}"])
