"""Backwards-tail structure of a kernel and the entropy it carries.

For a finite-state kernel with invariant measure the backwards tail is
a rotation of finitely many atoms: the cyclic classes of the recurrent
classes.  Its entropy is zero, and it must embed into the maximal
non-random factor computed from the deterministic sigma-algebra.  The
operator entropy of a kernel is the dynamical entropy of this boundary
system; infinite-alphabet examples (the noisy shifts) report a
Bernoulli boundary instead and are handled by dispatch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IncompatibleFactors, NotInvariant, UnknownBoundary, UnsupportedProfile
from .kernels import (
    DETERMINISTIC_TOL,
    Measure,
    Partition,
    StochasticKernel,
    SUPPORT_TOL,
    _freeze,
    canonical_partition,
    class_period,
    closed_classes,
    deterministic_sigma_algebra,
    require_invariant,
    restrict_to_support,
    stationary_measure,
)

TRIVIAL = "trivial"
FINITE_ROTATION = "finite-rotation"
BERNOULLI_FULL_SHIFT = "bernoulli-full-shift"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class TailBoundary:
    """Identified backwards-tail factor together with its entropy."""

    kind: str
    entropy: float
    atoms: Partition | None = None
    masses: tuple[float, ...] | None = None
    rotation: tuple[int, ...] | None = None
    alphabet_weights: tuple[float, ...] | None = None
    two_sided: bool = True
    note: str = ""


def rotation_boundary(atoms: Partition, masses, rotation, note: str = "") -> TailBoundary:
    masses = tuple(float(m) for m in masses)
    rotation = tuple(int(r) for r in rotation)
    kind = TRIVIAL if len(atoms.atoms) == 1 else FINITE_ROTATION
    return TailBoundary(kind, 0.0, atoms, masses, rotation, note=note)


def bernoulli_boundary(weights, two_sided: bool = True, note: str = "") -> TailBoundary:
    w = tuple(float(x) for x in weights)
    if any(x < 0 for x in w) or abs(math.fsum(w) - 1.0) > 1e-12:
        raise ValueError("alphabet weights must be a probability vector")
    entropy = math.fsum(-x * math.log(x) for x in w if x > 0.0)
    return TailBoundary(
        BERNOULLI_FULL_SHIFT, entropy, alphabet_weights=w, two_sided=two_sided, note=note
    )


def unknown_boundary(note: str) -> TailBoundary:
    return TailBoundary(UNKNOWN, float("nan"), note=note)


@dataclass(frozen=True)
class WindowFunction:
    """Function of finitely many path coordinates, tabulated.

    `window` is the inclusive coordinate interval [i..j]; `table` has
    one axis per coordinate, each of alphabet size.
    """

    window: tuple[int, int]
    table: np.ndarray

    @property
    def length(self) -> int:
        return self.table.ndim


def window_function(table, end: int = 0) -> WindowFunction:
    t = np.asarray(table, dtype=float)
    if t.ndim < 1:
        raise ValueError("window table needs at least one axis")
    if len(set(t.shape)) != 1:
        raise ValueError("window table axes must share one alphabet")
    return WindowFunction((end - t.ndim + 1, end), _freeze(t))


def _check_unit_range(values: np.ndarray, what: str) -> None:
    if not np.isfinite(values).all():
        raise ValueError(f"{what} has non-finite values")
    if values.min() < -1e-12 or values.max() > 1.0 + 1e-12:
        raise ValueError(f"{what} must take values in [0, 1]")


# ---------------------------------------------------------------------------
# alternating products and window collapse


def rota_product(kernel: StochasticKernel, mu: Measure, f, n: int):
    """Forward-backward product applied to a state function.

    For f depending on the final coordinate the alternating product of n
    forward and n backward path operators is the function
    (K^n f)(x_{-n}); its law under mu is that of K^n f, so the pair
    (K^n f, Var_mu(K^n f)) captures it.  The variance is the squared L2
    distance to the constant limit E_mu[f] and is non-increasing in n.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    require_invariant(kernel, mu)
    g = np.asarray(f, dtype=float)
    if g.shape != (kernel.n,):
        raise ValueError(f"state function must have shape ({kernel.n},)")
    _check_unit_range(g, "test function")
    for _ in range(n):
        g = kernel.rows @ g
    mean = float(mu.weights @ g)
    var = float(mu.weights @ (g - mean) ** 2)
    return _freeze(g), var


def rota_diagnostics(kernel: StochasticKernel, mu: Measure, f, horizons):
    """Rows (n, variance, supnorm_gap) along increasing horizons."""
    horizons = sorted(set(int(n) for n in horizons))
    if not horizons or horizons[0] < 0:
        raise ValueError("horizons must be non-negative")
    require_invariant(kernel, mu)
    g = np.asarray(f, dtype=float)
    _check_unit_range(g, "test function")
    mean = float(mu.weights @ g)
    rows = []
    current = 0
    for n in horizons:
        for _ in range(n - current):
            g = kernel.rows @ g
        current = n
        var = float(mu.weights @ (g - mean) ** 2)
        gap = float(np.abs(g - mean).max())
        rows.append((n, var, gap))
    return rows


def window_collapse(kernel: StochasticKernel, mu: Measure, g: WindowFunction) -> np.ndarray:
    """Condition a window function on the state one step before its window.

    Returns the state function s -> E[g(x_{i}..x_{j}) | x_{i-1} = s],
    computed by integrating out the window coordinates right to left.
    """
    require_invariant(kernel, mu)
    if g.table.shape[0] != kernel.n:
        raise ValueError("window alphabet does not match the kernel")
    _check_unit_range(g.table, "window function")
    v = g.table
    for _ in range(g.length - 1):
        v = (v * kernel.rows).sum(axis=-1)
    return _freeze(kernel.rows @ v)


# ---------------------------------------------------------------------------
# finite boundaries


def tail_boundary_finite(kernel: StochasticKernel, mu: Measure) -> TailBoundary:
    """Cyclic-class rotation underlying a finite kernel's backwards tail.

    The support of an invariant measure is a union of closed classes;
    each contributes its cyclic classes, rotated by one phase per step.
    The resulting system is a finite rotation (trivial when it is a
    single atom) and its entropy is zero.
    """
    require_invariant(kernel, mu)
    sub_kernel, _, keep = restrict_to_support(kernel, mu)
    classes = closed_classes(sub_kernel.rows)
    covered = sorted(x for comp in classes for x in comp)
    if covered != list(range(sub_kernel.n)):
        raise NotInvariant("support contains states outside every closed class")
    groups: list[list[int]] = []
    rotation: list[int] = []
    for comp in sorted(classes, key=lambda c: c[0]):
        d, phase = class_period(sub_kernel.rows, comp)
        base = len(groups)
        for r in range(d):
            groups.append(sorted(keep[x] for x in comp if phase[x] == r))
            rotation.append(base + (r + 1) % d)
    order = sorted(range(len(groups)), key=lambda g: groups[g][0])
    rank = {old: new for new, old in enumerate(order)}
    atoms = canonical_partition([groups[g] for g in order])
    rot = tuple(rank[rotation[g]] for g in order)
    masses = tuple(
        math.fsum(float(mu.weights[x]) for x in atom) for atom in atoms.atoms
    )
    return rotation_boundary(atoms, masses, rot)


def boundary_conditional_limit(
    kernel: StochasticKernel, mu: Measure, boundary: TailBoundary, f, n: int
) -> np.ndarray:
    """Predicted limit of K^n f: atom means composed with the rotation."""
    if boundary.atoms is None or boundary.rotation is None:
        raise ValueError("boundary does not carry a finite rotation")
    f = np.asarray(f, dtype=float)
    atoms = boundary.atoms.atoms
    cond = []
    for atom, mass in zip(atoms, boundary.masses):
        cond.append(math.fsum(float(mu.weights[x]) * float(f[x]) for x in atom) / mass)
    step = list(boundary.rotation)
    target = list(range(len(atoms)))
    for _ in range(n):
        target = [step[a] for a in target]
    out = np.zeros(kernel.n)
    for a, atom in enumerate(atoms):
        for x in atom:
            out[x] = cond[target[a]]
    return _freeze(out)


# ---------------------------------------------------------------------------
# entropy and factor compatibility


def operator_entropy(target, mu: Measure | None = None) -> float:
    """Dynamical entropy of the backwards-tail boundary, in nats.

    Accepts a StochasticKernel (with optional invariant measure), a
    noisy-shift kernel, a TailBoundary, or a sequence of any of these;
    for a sequence the entropies add, matching the product construction.
    """
    from .shiftnoise import ShiftNoiseKernel, shift_noise_boundary

    if isinstance(target, (list, tuple)):
        parts = []
        for item in target:
            if (
                isinstance(item, tuple)
                and len(item) == 2
                and isinstance(item[0], StochasticKernel)
                and isinstance(item[1], Measure)
            ):
                parts.append(operator_entropy(item[0], item[1]))
            else:
                parts.append(operator_entropy(item))
        return math.fsum(parts)
    if isinstance(target, TailBoundary):
        boundary = target
    elif isinstance(target, StochasticKernel):
        if mu is None:
            mu = stationary_measure(target)
        boundary = tail_boundary_finite(target, mu)
    elif isinstance(target, ShiftNoiseKernel):
        try:
            boundary = shift_noise_boundary(target)
        except UnsupportedProfile as exc:
            raise UnknownBoundary(str(exc)) from exc
    else:
        raise TypeError(f"cannot take operator entropy of {type(target).__name__}")
    if boundary.kind == UNKNOWN:
        raise UnknownBoundary(boundary.note or "boundary could not be identified")
    return boundary.entropy


@dataclass(frozen=True)
class CompatibilityReport:
    """How the tail rotation sits inside the maximal non-random factor."""

    boundary: TailBoundary
    partition: Partition
    atom_map: tuple[int, ...]
    embedding: tuple[int, ...]
    is_isomorphism: bool

    def lines(self) -> list[str]:
        out = [f"boundary kind: {self.boundary.kind}"]
        for b, atom in enumerate(self.boundary.atoms.atoms):
            out.append(
                f"tail atom {b} {atom} -> deterministic atom "
                f"{self.embedding[b]} {self.partition.atoms[self.embedding[b]]}"
            )
        out.append(f"isomorphism: {'yes' if self.is_isomorphism else 'no'}")
        return out


def nonrandom_factor_compatibility(kernel: StochasticKernel, mu: Measure) -> CompatibilityReport:
    """Check the tail rotation embeds equivariantly in the non-random factor.

    Every cyclic atom must lie inside one deterministic atom and the two
    forward maps must agree through that inclusion; otherwise
    IncompatibleFactors is raised.
    """
    boundary = tail_boundary_finite(kernel, mu)
    partition, atom_map = deterministic_sigma_algebra(kernel, mu)
    lookup: dict[int, int] = {}
    for a, atom in enumerate(partition.atoms):
        for x in atom:
            lookup[x] = a
    embedding: list[int] = []
    for atom in boundary.atoms.atoms:
        targets = {lookup.get(x) for x in atom}
        if len(targets) != 1 or None in targets:
            raise IncompatibleFactors(f"tail atom {atom} straddles deterministic atoms")
        embedding.append(targets.pop())
    for b, rot in enumerate(boundary.rotation):
        if atom_map[embedding[b]] != embedding[rot]:
            raise IncompatibleFactors(
                f"forward maps disagree through tail atom {boundary.atoms.atoms[b]}"
            )
    iso = sorted(embedding) == list(range(len(partition.atoms))) and all(
        set(boundary.atoms.atoms[b]) == set(partition.atoms[e])
        for b, e in enumerate(embedding)
    )
    return CompatibilityReport(boundary, partition, atom_map, tuple(embedding), iso)


def boundary_report_lines(boundary: TailBoundary, labels=None) -> list[str]:
    """Human-readable summary used by reports and the CLI."""
    out = [f"kind: {boundary.kind}", f"entropy: {boundary.entropy:.17g}"]
    if boundary.atoms is not None:
        for a, atom in enumerate(boundary.atoms.atoms):
            names = (
                ",".join(labels[x] for x in atom) if labels is not None
                else ",".join(str(x) for x in atom)
            )
            out.append(
                f"atom {a}: {{{names}}} mass {boundary.masses[a]:.17g} "
                f"-> atom {boundary.rotation[a]}"
            )
    if boundary.alphabet_weights is not None:
        weights = " ".join(f"{w:.17g}" for w in boundary.alphabet_weights)
        sided = "two-sided" if boundary.two_sided else "one-sided"
        out.append(f"alphabet weights: {weights} ({sided})")
    if boundary.note:
        out.append(f"note: {boundary.note}")
    return out
