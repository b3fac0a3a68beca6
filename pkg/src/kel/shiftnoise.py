"""Binary coordinate shifts perturbed by independent site flips.

States are two-sided 0/1 sequences.  One step first flips site k with
probability p_k (independently across sites), then shifts every
coordinate up by one, so the bit observed at index j after n steps is
the bit that started at j-n xored with noise collected at indices
j-1, ..., j-n.  The product measure with fair coins is invariant for
every profile.  Which information survives to the infinite past splits
into three regimes according to the noise on the negative ray:

  I    finitely many nonzero p_k with k < 0,
  II   infinitely many, but with finite sum,
  III  infinite sum.

Cases I and II leave a fair-coin full shift in the backwards tail
(entropy log 2); case III leaves nothing (entropy 0).  The classifier
works symbolically on the profile's stated form and attaches partial
correlation products as numeric evidence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import (
    InputError,
    NotCommuting,
    NotMeasurePreserving,
    UnsupportedProfile,
    WindowTooLarge,
)
from .kernels import Partition, _freeze, canonical_partition
from .paths import Trajectory, block_entropy_estimate
from .rng import SplitMix64
from .tail import TRIVIAL, TailBoundary, WindowFunction, bernoulli_boundary

LOG2 = math.log(2.0)
MAX_WINDOW_BITS = 24
MAX_JOINING_BITS = 20
_EVIDENCE_NS = (1, 10, 100, 1000, 10000)
_EVIDENCE_THRESHOLD = 1e-3


# ---------------------------------------------------------------------------
# noise profiles


@dataclass(frozen=True)
class ZeroTail:
    def value(self, dist: int) -> float:
        return 0.0


@dataclass(frozen=True)
class GeometricTail:
    """p_k = c * r**|k| on the covered ray."""

    c: float
    r: float

    def value(self, dist: int) -> float:
        return self.c * self.r ** dist

    def value_exact(self, dist: int) -> Fraction:
        return Fraction(self.c) * Fraction(self.r) ** dist


@dataclass(frozen=True)
class HarmonicTail:
    """p_k = 1 / (2 (|k| + 1)) on the covered ray."""

    def value(self, dist: int) -> float:
        return 1.0 / (2.0 * (dist + 1.0))

    def value_exact(self, dist: int) -> Fraction:
        return Fraction(1, 2 * (dist + 1))


@dataclass(frozen=True)
class ConstantTail:
    """p_k = p on the covered ray."""

    p: float

    def value(self, dist: int) -> float:
        return self.p

    def value_exact(self, dist: int) -> Fraction:
        return Fraction(self.p)


@dataclass(frozen=True)
class NoiseProfile:
    """Flip probabilities per site: explicit entries plus two ray tails.

    The negative tail covers every k below the explicit entries (and
    below 0); the positive tail covers every k above them (and at least
    0).  All probabilities must lie in [0, 1/2].
    """

    entries: tuple[tuple[int, float], ...]
    neg_tail: ZeroTail | GeometricTail | HarmonicTail | ConstantTail
    pos_tail: ZeroTail | GeometricTail | HarmonicTail | ConstantTail

    @cached_property
    def _entry_map(self) -> dict[int, float]:
        return dict(self.entries)

    @property
    def neg_cutoff(self) -> int:
        ks = [k for k, _ in self.entries]
        return min(0, min(ks)) if ks else 0

    @property
    def pos_cutoff(self) -> int:
        ks = [k for k, _ in self.entries]
        return max(0, max(ks) + 1) if ks else 0

    def p(self, k: int) -> float:
        got = self._entry_map.get(k)
        if got is not None:
            return got
        if k < self.neg_cutoff:
            return self.neg_tail.value(-k)
        if k >= self.pos_cutoff:
            return self.pos_tail.value(abs(k))
        return 0.0

    def p_exact(self, k: int) -> Fraction:
        got = self._entry_map.get(k)
        if got is not None:
            return Fraction(got)
        if k < self.neg_cutoff:
            return self.neg_tail.value_exact(-k) if not isinstance(self.neg_tail, ZeroTail) else Fraction(0)
        if k >= self.pos_cutoff:
            return self.pos_tail.value_exact(abs(k)) if not isinstance(self.pos_tail, ZeroTail) else Fraction(0)
        return Fraction(0)

    def is_zero(self) -> bool:
        if any(p != 0.0 for _, p in self.entries):
            return False
        for tail in (self.neg_tail, self.pos_tail):
            if isinstance(tail, (GeometricTail, HarmonicTail)):
                return False
            if isinstance(tail, ConstantTail) and tail.p != 0.0:
                return False
        return True


def noise_profile(entries=None, neg_tail=None, pos_tail=None) -> NoiseProfile:
    """Validate and build a profile; probabilities must be in [0, 1/2]."""
    pairs: list[tuple[int, float]] = []
    for k, p in dict(entries or {}).items():
        k, p = int(k), float(p)
        if not (0.0 <= p <= 0.5):
            raise UnsupportedProfile(f"p_{k} = {p!r} is outside [0, 1/2]")
        pairs.append((k, p))
    pairs.sort()
    neg_tail = neg_tail if neg_tail is not None else ZeroTail()
    pos_tail = pos_tail if pos_tail is not None else ZeroTail()
    prof = NoiseProfile(tuple(pairs), neg_tail, pos_tail)
    for tail, first in ((neg_tail, -prof.neg_cutoff + 1), (pos_tail, prof.pos_cutoff)):
        if isinstance(tail, GeometricTail):
            if not (tail.c > 0.0 and 0.0 < tail.r < 1.0):
                raise UnsupportedProfile(
                    f"geometric tail needs c > 0 and r in (0, 1), got c={tail.c!r} r={tail.r!r}"
                )
            if tail.value(first) > 0.5:
                raise UnsupportedProfile(
                    f"geometric tail reaches p = {tail.value(first)!r} > 1/2"
                )
        elif isinstance(tail, ConstantTail):
            if not (0.0 <= tail.p <= 0.5):
                raise UnsupportedProfile(f"constant tail p = {tail.p!r} is outside [0, 1/2]")
    return prof


@dataclass(frozen=True)
class ShiftNoiseKernel:
    """Coordinate shift composed with independent site flips."""

    profile: NoiseProfile


def shift_noise_kernel(profile: NoiseProfile) -> ShiftNoiseKernel:
    return ShiftNoiseKernel(profile)


# ---------------------------------------------------------------------------
# profile text format


def parse_profile_text(text: str, source: str = "<text>") -> NoiseProfile:
    """Lines `k=<int> p=<prob>` plus optional `tail_neg=` / `tail_pos=` lines."""
    entries: dict[int, float] = {}
    tails: dict[str, object] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = {}
        for tok in line.split():
            if "=" not in tok:
                raise InputError(f"{source}: cannot parse token {tok!r}")
            key, val = tok.split("=", 1)
            fields[key] = val
        try:
            if "k" in fields:
                k = int(fields["k"])
                if k in entries:
                    raise InputError(f"{source}: duplicate entry for k={k}")
                entries[k] = float(fields["p"])
            elif "tail_neg" in fields or "tail_pos" in fields:
                side = "tail_neg" if "tail_neg" in fields else "tail_pos"
                if side in tails:
                    raise InputError(f"{source}: duplicate {side} line")
                form = fields[side]
                if form == "geometric":
                    tails[side] = GeometricTail(float(fields["c"]), float(fields["r"]))
                elif form == "harmonic":
                    tails[side] = HarmonicTail()
                elif form == "constant":
                    tails[side] = ConstantTail(float(fields["p"]))
                elif form == "zero":
                    tails[side] = ZeroTail()
                else:
                    raise InputError(f"{source}: unknown tail form {form!r}")
            else:
                raise InputError(f"{source}: cannot parse line {line!r}")
        except (KeyError, ValueError) as exc:
            raise InputError(f"{source}: bad line {line!r} ({exc})") from exc
    try:
        return noise_profile(entries, tails.get("tail_neg"), tails.get("tail_pos"))
    except UnsupportedProfile as exc:
        raise InputError(f"{source}: {exc}") from exc


def read_profile_file(path) -> NoiseProfile:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read profile file {path}: {exc}") from exc
    return parse_profile_text(text, source=str(path))


def format_profile_text(profile: NoiseProfile) -> str:
    lines = [f"k={k} p={p:.17g}" for k, p in profile.entries]
    for side, tail in (("tail_neg", profile.neg_tail), ("tail_pos", profile.pos_tail)):
        if isinstance(tail, GeometricTail):
            lines.append(f"{side}=geometric c={tail.c:.17g} r={tail.r:.17g}")
        elif isinstance(tail, HarmonicTail):
            lines.append(f"{side}=harmonic")
        elif isinstance(tail, ConstantTail):
            lines.append(f"{side}=constant p={tail.p:.17g}")
    return "\n".join(lines) + "\n" if lines else ""


# ---------------------------------------------------------------------------
# bit correlations


def bit_correlation(profile: NoiseProfile, j: int, n: int) -> float:
    """prod_{t=1..n} (1 - 2 p_{j-t}): correlation of bit j with its source."""
    if n < 0:
        raise ValueError("n must be >= 0")
    prod = 1.0
    for t in range(1, n + 1):
        prod *= 1.0 - 2.0 * profile.p(j - t)
        if prod == 0.0:
            break
    return prod


def flip_probability(profile: NoiseProfile, j: int, n: int) -> float:
    """Chance that bit j after n steps differs from its source bit."""
    return (1.0 - bit_correlation(profile, j, n)) / 2.0


def bit_correlation_exact(profile: NoiseProfile, j: int, n: int) -> Fraction:
    """Same product in exact rational arithmetic."""
    prod = Fraction(1)
    for t in range(1, n + 1):
        prod *= 1 - 2 * profile.p_exact(j - t)
        if prod == 0:
            break
    return prod


def correlation_curve(profile: NoiseProfile, j: int, horizons) -> list[tuple[int, float]]:
    """Partial products at the requested horizons, computed incrementally."""
    ns = sorted(set(int(n) for n in horizons))
    if not ns or ns[0] < 1:
        raise ValueError("horizons must be positive")
    out = []
    prod = 1.0
    current = 0
    for n in ns:
        for t in range(current + 1, n + 1):
            prod *= 1.0 - 2.0 * profile.p(j - t)
        current = n
        out.append((n, prod))
    return out


def simulate_flip_frequency(profile: NoiseProfile, j: int, n: int, samples: int, seed: int) -> float:
    """Monte-Carlo frequency of bit j flipping over n steps."""
    rng = SplitMix64(seed)
    acc = np.zeros(samples, dtype=bool)
    for t in range(1, n + 1):
        p = profile.p(j - t)
        if p > 0.0:
            acc ^= rng.uniforms(samples) < p
    return float(acc.mean())


# ---------------------------------------------------------------------------
# trichotomy


@dataclass(frozen=True)
class CorrelationEvidence:
    """Partial correlation products attached to a classification."""

    direction: str
    samples: tuple[tuple[int, float], ...]
    final_product: float
    corroborated: bool | None
    note: str = ""


@dataclass(frozen=True)
class TrichotomyCase:
    case_id: str
    direction: str
    evidence: CorrelationEvidence
    boundary: TailBoundary
    note: str = ""


def _ray_structure(profile: NoiseProfile, forward: bool):
    """(tail has infinitely many nonzero, tail sum finite, half seen, any nonzero)."""
    if forward:
        explicit = [(k, p) for k, p in profile.entries if k >= 0]
        tail = profile.pos_tail
        first = profile.pos_cutoff
    else:
        explicit = [(k, p) for k, p in profile.entries if k < 0]
        tail = profile.neg_tail
        first = -profile.neg_cutoff + 1
    has_half = any(p == 0.5 for _, p in explicit)
    any_nonzero = any(p != 0.0 for _, p in explicit)
    if isinstance(tail, GeometricTail):
        infinite, sum_finite = True, True
        has_half = has_half or tail.value(first) >= 0.5
        any_nonzero = True
    elif isinstance(tail, HarmonicTail):
        infinite, sum_finite = True, False
        has_half = has_half or tail.value(first) >= 0.5
        any_nonzero = True
    elif isinstance(tail, ConstantTail) and tail.p > 0.0:
        infinite, sum_finite = True, False
        has_half = has_half or tail.p == 0.5
        any_nonzero = True
    else:
        infinite, sum_finite = False, True
    return infinite, sum_finite, has_half, any_nonzero


def _evidence(profile: NoiseProfile, case_id: str, forward: bool, exact_zero: bool) -> CorrelationEvidence:
    direction = "forward" if forward else "backward"
    j = 0 if not forward else -1
    # Bit j's factors run over the ray in question: p_{j-t}, t >= 1.
    if forward:
        curve = []
        prod = 1.0
        samples = []
        for t in range(1, max(_EVIDENCE_NS) + 1):
            prod *= 1.0 - 2.0 * profile.p(t - 1)
            if t in _EVIDENCE_NS:
                samples.append((t, prod))
        final = prod
    else:
        samples = correlation_curve(profile, 0, _EVIDENCE_NS)
        final = samples[-1][1]
    if exact_zero:
        return CorrelationEvidence(
            direction, tuple(samples), final, None,
            "a flip probability of exactly 1/2 zeroes the product; numeric check skipped",
        )
    if case_id == "III":
        ok = final < _EVIDENCE_THRESHOLD
    else:
        ok = final > _EVIDENCE_THRESHOLD
    if not ok:
        warnings.warn(
            f"correlation product {final!r} does not corroborate case {case_id}; "
            "classification follows the stated profile form",
            stacklevel=3,
        )
    return CorrelationEvidence(direction, tuple(samples), final, ok)


def _classify(profile: NoiseProfile, forward: bool) -> TrichotomyCase:
    if profile.is_zero():
        raise UnsupportedProfile(
            "zero profile: the kernel is the plain coordinate shift; "
            "pass the kernel to operator_entropy instead"
        )
    infinite, sum_finite, has_half, _ = _ray_structure(profile, forward)
    direction = "forward" if forward else "backward"
    if not infinite:
        case_id = "I"
        note = (
            "noise meets the determining ray in finitely many sites; the boundary "
            "is the full fair-coin shift and the coordinate projection onto the "
            "untouched ray commutes with the dynamics"
        )
        boundary = bernoulli_boundary((0.5, 0.5), two_sided=True, note="fair-coin full shift")
    elif sum_finite:
        if has_half:
            raise UnsupportedProfile(
                "summable infinite noise with a site at exactly p = 1/2 on the "
                "determining ray: the correlation product vanishes and the stated "
                "form does not decide the boundary"
            )
        case_id = "II"
        note = (
            "infinitely many noisy sites with summable probabilities; the boundary "
            "is still the full fair-coin shift but the maximal non-random factor "
            "is trivial"
        )
        boundary = bernoulli_boundary((0.5, 0.5), two_sided=True, note="fair-coin full shift")
    else:
        case_id = "III"
        note = "noise probabilities sum to infinity on the determining ray; the tail is trivial"
        boundary = TailBoundary(TRIVIAL, 0.0, note="all window information dissipates")
    exact_zero = has_half and case_id == "I"
    evidence = _evidence(profile, case_id, forward, exact_zero)
    return TrichotomyCase(case_id, direction, evidence, boundary, note)


def classify_trichotomy(profile: NoiseProfile) -> TrichotomyCase:
    """Classify the backwards tail from the negative-ray noise."""
    return _classify(profile, forward=False)


def forward_tail_classify(profile: NoiseProfile) -> TrichotomyCase:
    """Mirror classification for the forward tail (positive-ray noise)."""
    return _classify(profile, forward=True)


def shift_noise_boundary(kernel: ShiftNoiseKernel) -> TailBoundary:
    """Backwards-tail boundary of a noisy shift.

    The noiseless case is the invertible coordinate shift, whose
    backwards tail is the whole fair-coin system.
    """
    if kernel.profile.is_zero():
        return bernoulli_boundary(
            (0.5, 0.5), two_sided=True,
            note="no noise: the shift is invertible and the tail is everything",
        )
    return classify_trichotomy(kernel.profile).boundary


# ---------------------------------------------------------------------------
# window evolution


def window_evolve(kernel: ShiftNoiseKernel, g: WindowFunction, steps: int) -> WindowFunction:
    """Pull a window function back `steps` steps through the noisy shift.

    Each step re-indexes the window one site lower and mixes every axis
    with its site's flip probability.  Tables are dense over {0,1}^L
    and refused beyond 24 axes.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    table = np.asarray(g.table, dtype=float)
    if table.shape != (2,) * table.ndim:
        raise ValueError("noisy-shift windows are binary")
    if table.ndim > MAX_WINDOW_BITS:
        raise WindowTooLarge(f"{table.ndim} bits exceeds the {MAX_WINDOW_BITS}-bit window cap")
    lo, hi = g.window
    profile = kernel.profile
    for _ in range(steps):
        lo -= 1
        hi -= 1
        for axis in range(table.ndim):
            p = profile.p(lo + axis)
            if p > 0.0:
                table = (1.0 - p) * table + p * np.flip(table, axis=axis)
    return WindowFunction((lo, hi), _freeze(table))


# ---------------------------------------------------------------------------
# the synchronised-noise joining


@dataclass(frozen=True)
class JoiningReport:
    """Two fair-coin-flip marginals glued by fully shared noise.

    Each marginal uses p_k = 1/2 everywhere (tail case III, operator
    entropy 0), but the coordinate-wise difference of the two copies
    evolves by the noiseless shift and so retains full entropy log 2.
    """

    sample_len: int
    window: int
    block_len: int
    seed: int
    shift_checks_passed: int
    shift_checks_total: int
    marginal_step_correlation: float
    marginal_entropy: float
    difference_block_entropy: float
    difference_entropy_exact: float
    joint_entropy_lower_bound: float


def joining_report(sample_len: int, window: int, seed: int, block_len: int = 3) -> JoiningReport:
    """Simulate the synchronised joining and check its shift mechanics.

    Windows are tracked as bit masks; each step shifts both copies,
    applies one shared fair-coin flip word, and verifies that the
    difference field moved by the plain shift.
    """
    if window < 2 or window > MAX_JOINING_BITS:
        raise WindowTooLarge(f"window must have 2..{MAX_JOINING_BITS} bits")
    if sample_len < block_len + 1:
        raise ValueError("sample_len too short for the requested block length")
    profile = noise_profile(neg_tail=ConstantTail(0.5), pos_tail=ConstantTail(0.5))
    mask = (1 << window) - 1
    rng = SplitMix64(seed)
    init = rng.next_u64()
    x1 = init & mask
    x2 = x1 ^ ((init >> 21) & mask)
    words = rng.words(sample_len)
    checks = 0
    diff_bits = np.empty(sample_len, dtype=np.int64)
    for t in range(sample_len):
        u = int(words[t])
        zeta = u & mask
        in1 = (u >> 40) & 1
        d_in = (u >> 41) & 1
        in2 = in1 ^ d_in
        expected_d = (((x1 ^ x2) << 1) | d_in) & mask
        x1 = (((x1 << 1) | in1) & mask) ^ zeta
        x2 = (((x2 << 1) | in2) & mask) ^ zeta
        if (x1 ^ x2) == expected_d:
            checks += 1
        diff_bits[t] = (x1 ^ x2) & 1
    diff_entropy = block_entropy_estimate(
        Trajectory(_freeze(diff_bits), int(seed), 2), block_len
    )
    marginal = classify_trichotomy(profile)
    return JoiningReport(
        sample_len=sample_len,
        window=window,
        block_len=block_len,
        seed=int(seed),
        shift_checks_passed=checks,
        shift_checks_total=sample_len,
        marginal_step_correlation=bit_correlation(profile, 0, 1),
        marginal_entropy=marginal.boundary.entropy,
        difference_block_entropy=diff_entropy,
        difference_entropy_exact=LOG2,
        joint_entropy_lower_bound=LOG2,
    )


# ---------------------------------------------------------------------------
# commuting mixtures


@dataclass(frozen=True)
class CommutingMixture:
    """Averaged iterates of (U_S + U_T)/2 against their projected limit."""

    mixture: np.ndarray
    limit: np.ndarray
    l1_gap: float
    conditional_mean: np.ndarray
    orbits: Partition


def _check_permutation(images, n: int, name: str) -> list[int]:
    imgs = [int(x) for x in images]
    if len(imgs) != n or sorted(imgs) != list(range(n)):
        raise NotMeasurePreserving(f"{name} is not a permutation of {n} points")
    return imgs


def commuting_mixture(s_images, t_images, mu, f, n: int) -> CommutingMixture:
    """Evaluate ((U_S + U_T)/2)^n f for commuting measure-preserving maps.

    The power expands exactly into binomial weights over S^p T^(n-p).
    Its limit is the conditional mean of f over the orbits of S^{-1} T,
    composed with T^n; the L1 gap against that limit is reported and is
    non-increasing in n.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    weights = np.asarray(mu, dtype=float)
    npts = weights.shape[0]
    if abs(float(weights.sum()) - 1.0) > 1e-9 or weights.min() < 0:
        raise NotMeasurePreserving("mu must be a probability vector")
    s = _check_permutation(s_images, npts, "S")
    t = _check_permutation(t_images, npts, "T")
    for name, perm in (("S", s), ("T", t)):
        err = max(abs(float(weights[perm[x]] - weights[x])) for x in range(npts))
        if err > 1e-12:
            raise NotMeasurePreserving(f"{name} moves mass by {err:.3e}")
    if any(s[t[x]] != t[s[x]] for x in range(npts)):
        raise NotCommuting("S and T do not commute")
    vals = np.asarray(f, dtype=float)
    if vals.shape != (npts,):
        raise ValueError(f"f must have shape ({npts},)")

    t_inv = [0] * npts
    for x, y in enumerate(t):
        t_inv[y] = x
    t_n = list(range(npts))
    for _ in range(n):
        t_n = [t[x] for x in t_n]

    comp = list(t_n)
    g = np.zeros(npts)
    for p in range(n + 1):
        if p > 0:
            comp = [s[comp[t_inv[x]]] for x in range(npts)]
        w = float(Fraction(math.comb(n, p), 1 << n))
        g += w * vals[comp]

    sigma = [0] * npts
    s_inv = [0] * npts
    for x, y in enumerate(s):
        s_inv[y] = x
    for x in range(npts):
        sigma[x] = s_inv[t[x]]
    seen = [False] * npts
    orbit_groups: list[list[int]] = []
    orbit_of = [0] * npts
    for x in range(npts):
        if seen[x]:
            continue
        orbit = []
        y = x
        while not seen[y]:
            seen[y] = True
            orbit.append(y)
            y = sigma[y]
        for z in orbit:
            orbit_of[z] = len(orbit_groups)
        orbit_groups.append(sorted(orbit))
    cond = np.zeros(npts)
    for orbit in orbit_groups:
        mass = math.fsum(float(weights[x]) for x in orbit)
        mean = math.fsum(float(weights[x]) * float(vals[x]) for x in orbit) / mass
        for x in orbit:
            cond[x] = mean
    limit = cond[np.asarray(t_n)]
    l1_gap = math.fsum(float(weights[x]) * abs(float(g[x] - limit[x])) for x in range(npts))
    return CommutingMixture(
        _freeze(g), _freeze(limit), l1_gap, _freeze(cond), canonical_partition(orbit_groups)
    )


def rotation_images(npts: int, shift: int) -> tuple[int, ...]:
    """The rotation x -> x + shift on Z/npts."""
    if npts < 1:
        raise ValueError("npts must be positive")
    return tuple((x + shift) % npts for x in range(npts))
