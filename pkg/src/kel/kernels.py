"""Finite-state probability kernels and their deterministic structure.

A kernel is a row-stochastic matrix acting on functions by
(Kf)(x) = sum_y K[x,y] f(y) and on measures on the right.  This module
holds the kernel/measure containers, the stationary solve, duality and
product constructions, and the partition of the state space into the
atoms of the deterministic sigma-algebra (the sets whose indicator is
mapped to an indicator by every power of the kernel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InputError,
    NonUniqueStationary,
    NotInvariant,
    NotMeasurePreserving,
    NotStabilized,
    NotStochastic,
)

ROW_TOL = 1e-9          # admission tolerance for row sums and measure mass
INVARIANCE_TOL = 1e-9   # L1 tolerance for "mu is invariant" preconditions
ENTRY_SLACK = 1e-12     # float slack before an entry counts as out of range
SUPPORT_TOL = 1e-14     # weights at or below this are treated as zero
DETERMINISTIC_TOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StochasticKernel:
    """Row-stochastic matrix with distinct state labels."""

    rows: np.ndarray
    labels: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class Measure:
    """Probability vector over the same state set as a kernel."""

    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.weights > SUPPORT_TOL))


@dataclass(frozen=True)
class Partition:
    """Disjoint atoms (tuples of state indices) covering a support set.

    Atoms are kept in canonical order: sorted internally, then by
    smallest member.
    """

    atoms: tuple[tuple[int, ...], ...]

    @property
    def size(self) -> int:
        return len(self.atoms)

    def index_of(self, state: int) -> int:
        for a, atom in enumerate(self.atoms):
            if state in atom:
                return a
        raise KeyError(f"state {state} is in no atom")

    def covers(self) -> tuple[int, ...]:
        out: list[int] = []
        for atom in self.atoms:
            out.extend(atom)
        return tuple(sorted(out))


def canonical_partition(groups: Iterable[Iterable[int]]) -> Partition:
    atoms = sorted(tuple(sorted(int(x) for x in g)) for g in groups if len(tuple(g)))
    seen: set[int] = set()
    for atom in atoms:
        for x in atom:
            if x in seen:
                raise ValueError("atoms overlap")
            seen.add(x)
    return Partition(tuple(atoms))


@dataclass(frozen=True)
class FiniteSystem:
    """Finite measure-preserving system: points, masses, a self-map."""

    points: tuple[str, ...]
    masses: tuple[float, ...]
    mapping: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class SymbolicBernoulli:
    """Product measure shift over a finite alphabet."""

    weights: tuple[float, ...]
    two_sided: bool = True


def new_kernel(rows, labels: Sequence[str] | None = None) -> StochasticKernel:
    """Validate and normalise a row-stochastic matrix.

    Rows must be square, finite, entrywise in [0,1] and sum to 1 within
    1e-9; they are then renormalised exactly so downstream identities
    can rely on unit row sums.
    """
    a = np.asarray(rows, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise NotStochastic(f"expected a square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise NotStochastic("matrix has non-finite entries")
    if (a < -ENTRY_SLACK).any() or (a > 1.0 + ENTRY_SLACK).any():
        raise NotStochastic("matrix entries outside [0, 1]")
    sums = a.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
    if bad.size:
        raise NotStochastic(
            f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1 within {ROW_TOL}"
        )
    a = np.clip(a, 0.0, 1.0) / sums[:, None]
    n = a.shape[0]
    if labels is None:
        labels = tuple(f"s{i}" for i in range(n))
    else:
        labels = tuple(str(x) for x in labels)
        if len(labels) != n:
            raise NotStochastic(f"{len(labels)} labels for {n} states")
        if len(set(labels)) != n:
            raise NotStochastic("state labels must be distinct")
    return StochasticKernel(_freeze(a), labels)


def new_measure(weights) -> Measure:
    """Validate and normalise a probability vector."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.shape[0] < 1:
        raise NotStochastic(f"expected a vector, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise NotStochastic("measure has non-finite entries")
    if (w < -ENTRY_SLACK).any():
        raise NotStochastic("measure has negative weights")
    total = w.sum()
    if abs(total - 1.0) > ROW_TOL:
        raise NotStochastic(f"total mass {total!r} is not 1 within {ROW_TOL}")
    return Measure(_freeze(np.clip(w, 0.0, None) / total))


def invariance_gap(kernel: StochasticKernel, mu: Measure) -> float:
    """L1 distance between mu K and mu."""
    if mu.n != kernel.n:
        raise NotInvariant(f"measure on {mu.n} states, kernel on {kernel.n}")
    return float(np.abs(mu.weights @ kernel.rows - mu.weights).sum())


def require_invariant(kernel: StochasticKernel, mu: Measure, tol: float = INVARIANCE_TOL) -> None:
    gap = invariance_gap(kernel, mu)
    if gap > tol:
        raise NotInvariant(f"|mu K - mu|_1 = {gap:.3e} exceeds {tol}")


# ---------------------------------------------------------------------------
# kernel text format


def read_kernel_text(text: str, source: str = "<text>") -> StochasticKernel:
    """Parse the plain kernel format.

    First data line: the state count n.  Then n whitespace-separated
    rows.  A line `#labels: a,b,...` anywhere supplies labels; other
    `#` lines are comments.
    """
    labels: tuple[str, ...] | None = None
    data_lines: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#labels:"):
            if labels is not None:
                raise InputError(f"{source}: more than one #labels: line")
            labels = tuple(part.strip() for part in line[len("#labels:"):].split(","))
            continue
        if line.startswith("#"):
            continue
        data_lines.append(line)
    if not data_lines:
        raise InputError(f"{source}: no data lines")
    try:
        n = int(data_lines[0])
    except ValueError:
        raise InputError(f"{source}: first line must be the state count") from None
    if n < 1:
        raise InputError(f"{source}: state count must be positive")
    if len(data_lines) != n + 1:
        raise InputError(f"{source}: expected {n} rows, found {len(data_lines) - 1}")
    rows = []
    for line in data_lines[1:]:
        try:
            row = [float(tok) for tok in line.split()]
        except ValueError:
            raise InputError(f"{source}: non-numeric row {line!r}") from None
        if len(row) != n:
            raise InputError(f"{source}: row has {len(row)} entries, expected {n}")
        rows.append(row)
    if labels is not None and len(labels) != n:
        raise InputError(f"{source}: {len(labels)} labels for {n} states")
    try:
        return new_kernel(rows, labels)
    except NotStochastic as exc:
        raise InputError(f"{source}: {exc}") from exc


def read_kernel_file(path) -> StochasticKernel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read kernel file {path}: {exc}") from exc
    return read_kernel_text(text, source=str(path))


def format_kernel_text(kernel: StochasticKernel, with_labels: bool = True) -> str:
    lines = [str(kernel.n)]
    for row in kernel.rows:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    if with_labels:
        lines.append("#labels: " + ",".join(kernel.labels))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# graph structure of the support


def _successors(rows: np.ndarray, tol: float = SUPPORT_TOL) -> list[list[int]]:
    return [list(np.flatnonzero(rows[i] > tol)) for i in range(rows.shape[0])]


def strongly_connected_components(succ: list[list[int]]) -> list[tuple[int, ...]]:
    """Tarjan's algorithm, iterative.  Components come out sorted."""
    n = len(succ)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[tuple[int, ...]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, ptr = work[-1]
            if ptr == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while ptr < len(succ[v]):
                w = succ[v][ptr]
                ptr += 1
                if index[w] == -1:
                    work[-1] = (v, ptr)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(tuple(sorted(comp)))
            if work:
                u, _ = work[-1]
                low[u] = min(low[u], low[v])
    comps.sort(key=lambda c: c[0])
    return comps


def closed_classes(rows: np.ndarray, tol: float = SUPPORT_TOL) -> list[tuple[int, ...]]:
    """Strongly connected components with no edge leaving them."""
    succ = _successors(rows, tol)
    comps = strongly_connected_components(succ)
    out = []
    for comp in comps:
        members = set(comp)
        if all(w in members for v in comp for w in succ[v]):
            out.append(comp)
    return out


def class_period(rows: np.ndarray, comp: tuple[int, ...], tol: float = SUPPORT_TOL) -> tuple[int, dict[int, int]]:
    """Period of a closed class and a phase for each member.

    Phases come from breadth-first levels off the smallest state; the
    period is the gcd of level(u)+1-level(v) over edges u->v inside the
    class, and phases are the levels reduced modulo it.
    """
    members = set(comp)
    root = comp[0]
    level = {root: 0}
    frontier = [root]
    edges: list[tuple[int, int]] = []
    while frontier:
        nxt = []
        for u in frontier:
            for w in np.flatnonzero(rows[u] > tol):
                w = int(w)
                if w not in members:
                    continue
                edges.append((u, w))
                if w not in level:
                    level[w] = level[u] + 1
                    nxt.append(w)
        frontier = nxt
    d = 0
    for u, w in edges:
        d = math.gcd(d, level[u] + 1 - level[w])
    d = max(d, 1)
    phase = {x: level[x] % d for x in comp}
    return d, phase


# ---------------------------------------------------------------------------
# stationary measures


def _solve_stationary_direct(rows: np.ndarray) -> np.ndarray | None:
    n = rows.shape[0]
    m = rows.T - np.eye(n)
    m[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        x = np.linalg.solve(m, b)
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(x).all() or x.min() < -1e-9:
        return None
    return x


def _solve_stationary_power(rows: np.ndarray) -> np.ndarray:
    # Lazy version (I+K)/2 shares the stationary vector and is aperiodic,
    # so plain iteration converges.
    n = rows.shape[0]
    lazy = 0.5 * (rows + np.eye(n))
    v = np.full(n, 1.0 / n)
    for _ in range(200_000):
        nxt = v @ lazy
        if np.abs(nxt - v).sum() < 1e-15:
            v = nxt
            break
        v = nxt
    return v


def stationary_measure(kernel: StochasticKernel) -> Measure:
    """The unique invariant probability vector.

    Requires exactly one closed communicating class; otherwise the
    invariant vector is not unique and NonUniqueStationary is raised.
    Solved directly, with power iteration on the lazy kernel as a
    fallback, and verified to |mu K - mu|_1 <= 1e-10.
    """
    classes = closed_classes(kernel.rows)
    if len(classes) != 1:
        raise NonUniqueStationary(
            f"kernel has {len(classes)} closed classes; invariant measure is not unique"
        )
    x = _solve_stationary_direct(kernel.rows)
    if x is not None:
        x = np.clip(x, 0.0, None)
        total = x.sum()
        x = x / total if total > 0 else None
    if x is None or np.abs(x @ kernel.rows - x).sum() > 1e-10:
        x = _solve_stationary_power(kernel.rows)
        x = np.clip(x, 0.0, None)
        x = x / x.sum()
    gap = float(np.abs(x @ kernel.rows - x).sum())
    if gap > 1e-10:
        raise NonUniqueStationary(f"stationary solve failed to converge (gap {gap:.3e})")
    return Measure(_freeze(x))


# ---------------------------------------------------------------------------
# duality, products, point maps


def restrict_to_support(kernel: StochasticKernel, mu: Measure):
    """Drop zero-mass states.  Returns (kernel, measure, kept indices)."""
    keep = list(mu.support())
    if len(keep) == mu.n:
        return kernel, mu, tuple(range(mu.n))
    if not keep:
        raise NotInvariant("measure has empty support")
    idx = np.array(keep)
    sub = kernel.rows[np.ix_(idx, idx)]
    leak = 1.0 - sub.sum(axis=1)
    if np.abs(leak).max() > INVARIANCE_TOL:
        raise NotInvariant("kernel leaves the support of the measure")
    k = new_kernel(sub, [kernel.labels[i] for i in keep])
    m = new_measure(mu.weights[idx])
    return k, m, tuple(keep)


def adjoint(kernel: StochasticKernel, mu: Measure) -> StochasticKernel:
    """Time reversal with respect to an invariant mu.

    Entries satisfy mu_i K*[i,j] = mu_j K[j,i].  If mu has zero-mass
    states the reversal is built on the support only.
    """
    require_invariant(kernel, mu)
    kernel, mu, _ = restrict_to_support(kernel, mu)
    w = mu.weights
    star = (w[:, None] * kernel.rows).T / w[:, None]
    return new_kernel(star, kernel.labels)


def tensor(k1: StochasticKernel, mu1: Measure, k2: StochasticKernel, mu2: Measure):
    """Product kernel and product measure on the product state space."""
    require_invariant(k1, mu1)
    require_invariant(k2, mu2)
    rows = np.kron(k1.rows, k2.rows)
    weights = np.kron(mu1.weights, mu2.weights)
    labels = tuple(f"{a}.{b}" for a in k1.labels for b in k2.labels)
    return new_kernel(rows, labels), new_measure(weights)


def koopman(images: Sequence[int], mu: Measure, labels: Sequence[str] | None = None) -> StochasticKernel:
    """Deterministic kernel x -> images[x] for a mu-preserving map."""
    imgs = [int(t) for t in images]
    n = mu.n
    if len(imgs) != n or any(t < 0 or t >= n for t in imgs):
        raise NotMeasurePreserving(f"map must send {n} states into range")
    push = np.zeros(n)
    np.add.at(push, imgs, mu.weights)
    err = float(np.abs(push - mu.weights).max())
    if err > DETERMINISTIC_TOL:
        raise NotMeasurePreserving(f"pushforward differs from mu by {err:.3e}")
    rows = np.zeros((n, n))
    rows[np.arange(n), imgs] = 1.0
    return new_kernel(rows, labels)


# ---------------------------------------------------------------------------
# deterministic sigma-algebra


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            self.parent[max(rx, ry)] = min(rx, ry)

    def groups(self) -> list[tuple[int, ...]]:
        buckets: dict[int, list[int]] = {}
        for x in range(len(self.parent)):
            buckets.setdefault(self.find(x), []).append(x)
        return [tuple(sorted(g)) for g in buckets.values()]


def deterministic_sigma_algebra(
    kernel: StochasticKernel, mu: Measure, m_max: int | None = None
) -> tuple[Partition, tuple[int, ...]]:
    """Atoms of the deterministic sigma-algebra and their forward map.

    A set A is deterministic when K^m(x, A) is 0 or 1 for every x in
    the support and every m >= 1.  Equivalently A must not split the
    support of any row of any power K^m, so the atoms are the
    components of the hypergraph whose edges are those row supports,
    accumulated over m.  The partition can only coarsen as m grows; we
    stop once it has been stable for as many steps as there are support
    states, and raise NotStabilized (with the partial answer) if the
    cap m_max is hit first.

    The forward map sends atom A to the atom B with K(x, B) = 1 for all
    x in A; it is checked to be a well-defined bijection.
    """
    require_invariant(kernel, mu)
    sub_kernel, sub_mu, keep = restrict_to_support(kernel, mu)
    ns = sub_kernel.n
    if m_max is None:
        m_max = max(64, ns * ns + 3 * ns)
    supp = sub_kernel.rows > SUPPORT_TOL
    uf = _UnionFind(ns)
    power = supp.copy()
    window = ns
    quiet = 0
    prev_sig: tuple | None = None
    m = 0
    while m < m_max and quiet < window:
        m += 1
        if m > 1:
            power = (power.astype(np.int64) @ supp.astype(np.int64)) > 0
        for i in range(ns):
            row = np.flatnonzero(power[i])
            first = int(row[0])
            for j in row[1:]:
                uf.union(first, int(j))
        sig = tuple(sorted(uf.groups()))
        if sig == prev_sig:
            quiet += 1
        else:
            quiet = 0
        prev_sig = sig
    partial = canonical_partition(
        [tuple(keep[i] for i in g) for g in uf.groups()]
    )
    if quiet < window:
        raise NotStabilized(
            f"partition still coarsening after {m_max} kernel powers", partition=partial
        )
    atoms = partial.atoms
    back = {orig: pos for pos, orig in enumerate(keep)}
    atom_of = {}
    for a, atom in enumerate(atoms):
        for x in atom:
            atom_of[x] = a
    mapping: list[int] = []
    for a, atom in enumerate(atoms):
        target: int | None = None
        for x in atom:
            row = sub_kernel.rows[back[x]]
            hit = atom_of[keep[int(np.flatnonzero(row > SUPPORT_TOL)[0])]]
            mass = math.fsum(row[back[y]] for y in atoms[hit] if y in back)
            if abs(mass - 1.0) > DETERMINISTIC_TOL or (target is not None and hit != target):
                raise NotStabilized(
                    "atom map is not deterministic; partition has not settled",
                    partition=partial,
                )
            target = hit
        mapping.append(int(target))
    if sorted(mapping) != list(range(len(atoms))):
        raise NotStabilized("atom map is not a bijection", partition=partial)
    return partial, tuple(mapping)


def maximal_nonrandom_factor(
    kernel: StochasticKernel, mu: Measure, m_max: int | None = None
) -> FiniteSystem:
    """The finite rotation the kernel acts on deterministically.

    Points are the atoms of the deterministic sigma-algebra, masses are
    their mu-weights, and the self-map is the atom forward map.
    """
    partition, mapping = deterministic_sigma_algebra(kernel, mu, m_max)
    masses = tuple(
        math.fsum(float(mu.weights[x]) for x in atom) for atom in partition.atoms
    )
    for a, b in enumerate(mapping):
        if abs(masses[a] - masses[b]) > DETERMINISTIC_TOL:
            raise NotMeasurePreserving(
                f"atom map sends mass {masses[a]!r} onto {masses[b]!r}"
            )
    points = tuple(
        "{" + ",".join(kernel.labels[x] for x in atom) + "}" for atom in partition.atoms
    )
    return FiniteSystem(points, masses, tuple(mapping))
