"""Bundled acceptance checks, runnable as `kel selftest` or via pytest.

Each criterion function is deterministic (fixed seeds throughout) and
independent of the others.  Derived expectations are computed here by
routes independent of the implementation under test: exact rational
arithmetic, brute-force enumeration, dense matrix powering, or exact
window tables.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .kernels import (
    Measure,
    StochasticKernel,
    new_kernel,
    new_measure,
    deterministic_sigma_algebra,
    stationary_measure,
    tensor,
)
from .paths import block_entropy_estimate, markov_entropy_rate, path_marginal, sample_path
from .rng import SplitMix64
from .shiftnoise import (
    ConstantTail,
    GeometricTail,
    HarmonicTail,
    bit_correlation,
    bit_correlation_exact,
    classify_trichotomy,
    commuting_mixture,
    flip_probability,
    forward_tail_classify,
    joining_report,
    noise_profile,
    rotation_images,
    shift_noise_kernel,
    simulate_flip_frequency,
)
from .tail import (
    FINITE_ROTATION,
    nonrandom_factor_compatibility,
    operator_entropy,
    rota_product,
    tail_boundary_finite,
    window_collapse,
    window_function,
)

LOG2 = math.log(2.0)


# ---------------------------------------------------------------------------
# shared fixtures


def two_state_kernel() -> StochasticKernel:
    return new_kernel([[0.7, 0.3], [0.4, 0.6]])


def block_kernel() -> StochasticKernel:
    return new_kernel(
        [
            [0.0, 0.0, 0.5, 0.5],
            [0.0, 0.0, 0.5, 0.5],
            [0.5, 0.5, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
        ]
    )


def cycle_kernel(n: int) -> StochasticKernel:
    rows = np.zeros((n, n))
    rows[np.arange(n), (np.arange(n) + 1) % n] = 1.0
    return new_kernel(rows)


def random_positive_kernel(rng: SplitMix64, n: int) -> StochasticKernel:
    mat = 0.1 + 0.9 * rng.uniforms(n * n).reshape(n, n)
    return new_kernel(mat / mat.sum(axis=1, keepdims=True))


def geometric_profile():
    return noise_profile(neg_tail=GeometricTail(1.0, 0.25))


def harmonic_profile():
    return noise_profile(neg_tail=HarmonicTail())


def finite_support_profile():
    return noise_profile({0: 0.5})


def mixed_profile():
    return noise_profile(neg_tail=GeometricTail(1.0, 0.25), pos_tail=HarmonicTail())


def synchronized_profile():
    return noise_profile(neg_tail=ConstantTail(0.5), pos_tail=ConstantTail(0.5))


# ---------------------------------------------------------------------------
# result plumbing


@dataclass
class CriterionResult:
    cid: int
    title: str
    failures: list[str] = field(default_factory=list)
    details: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def check(self, ok: bool, message: str) -> None:
        if not ok:
            self.failures.append(message)

    def note(self, message: str) -> None:
        self.details.append(message)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = "" if self.passed else " [" + "; ".join(self.failures) + "]"
        return f"criterion {self.cid:2d}: {status}  {self.title}{extra}"


def _write_csv(outdir: Path | None, name: str, header: list[str], rows) -> None:
    if outdir is None:
        return
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / name, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


# ---------------------------------------------------------------------------
# criteria


def criterion_1(outdir: Path | None = None) -> CriterionResult:
    res = CriterionResult(1, "aperiodic kernels: zero boundary entropy, collapsing alternating products")
    t0 = time.perf_counter()
    rng = SplitMix64(101)
    rows = []
    for i in range(20):
        n = 2 + i % 5
        k = random_positive_kernel(rng, n)
        mu = stationary_measure(k)
        h = operator_entropy(k, mu)
        f = rng.uniforms(n)
        _, var = rota_product(k, mu, f, 200)
        rate = markov_entropy_rate(k, mu)
        res.check(h == 0.0, f"kernel {i}: operator entropy {h!r} is not 0")
        res.check(var < 1e-8, f"kernel {i}: variance {var!r} at n=200 not below 1e-8")
        rows.append((i, n, rate, h, var))
    elapsed = time.perf_counter() - t0
    res.check(elapsed < 5.0, f"took {elapsed:.2f}s, budget 5s")
    res.note(f"20 kernels in {elapsed:.2f}s, max variance {max(r[4] for r in rows):.3g}")
    _write_csv(outdir, "c1_kernels.csv", ["kernel", "n", "entropy_rate", "operator_entropy", "rota_var_200"], rows)
    return res


def criterion_2(outdir: Path | None = None) -> CriterionResult:
    res = CriterionResult(2, "window collapse equals exact conditional expectations")
    rng = SplitMix64(202)
    worst = 0.0
    rows = []
    for case in range(100):
        n = 2 + case % 3
        k = random_positive_kernel(rng, n)
        mu = stationary_measure(k)
        m = 1 + case % 3
        table = rng.uniforms(n**m).reshape((n,) * m)
        q = window_collapse(k, mu, window_function(table, end=0))
        pm = path_marginal(k, mu, -m, 0)
        weighted = pm.joint * table[None, ...]
        cond = weighted.reshape(n, -1).sum(axis=1) / mu.weights
        diff = float(np.abs(q - cond).max())
        worst = max(worst, diff)
        res.check(diff <= 1e-12, f"case {case}: collapse differs from marginal by {diff:.3g}")
        rows.append((case, n, m, diff))
    res.note(f"100 tables, worst deviation {worst:.3g}")
    _write_csv(outdir, "c2_collapse.csv", ["case", "n", "window_len", "max_abs_diff"], rows)
    return res


def criterion_3(outdir: Path | None = None) -> CriterionResult:
    res = CriterionResult(3, "block kernel: two-atom rotation, brute-forced deterministic sets")
    k = block_kernel()
    mu = stationary_measure(k)
    b = tail_boundary_finite(k, mu)
    res.check(b.kind == FINITE_ROTATION, f"kind {b.kind!r}")
    res.check(b.atoms.atoms == ((0, 1), (2, 3)), f"atoms {b.atoms.atoms!r}")
    res.check(b.masses == (0.5, 0.5), f"masses {b.masses!r}")
    res.check(b.rotation == (1, 0), f"rotation {b.rotation!r}")
    res.check(b.entropy == 0.0, f"entropy {b.entropy!r}")
    part, mapping = deterministic_sigma_algebra(k, mu)
    res.check(part.atoms == ((0, 1), (2, 3)), f"deterministic atoms {part.atoms!r}")
    res.check(mapping == (1, 0), f"atom map {mapping!r}")

    powers = []
    p = np.eye(4)
    for _ in range(20):
        p = p @ k.rows
        powers.append(p.copy())
    family = set()
    rows = []
    for bits in range(16):
        ind = np.array([(bits >> s) & 1 for s in range(4)], dtype=float)
        deterministic = all(
            bool(np.all((np.abs(pm @ ind) <= 1e-12) | (np.abs(pm @ ind - 1.0) <= 1e-12)))
            for pm in powers
        )
        if deterministic:
            family.add(frozenset(np.flatnonzero(ind).tolist()))
        rows.append((bits, int(deterministic)))
    unions = set()
    for picks in itertools.product([0, 1], repeat=len(part.atoms)):
        chosen = frozenset(x for a, atom in enumerate(part.atoms) if picks[a] for x in atom)
        unions.add(chosen)
    res.check(family == unions, f"brute-force family {sorted(map(sorted, family))!r} != atom unions")
    report = nonrandom_factor_compatibility(k, mu)
    res.check(report.is_isomorphism, "tail rotation is not isomorphic to the non-random factor")
    res.note(f"{len(family)} deterministic subsets out of 16")
    _write_csv(outdir, "c3_subsets.csv", ["subset_mask", "deterministic"], rows)
    return res


def criterion_4(outdir: Path | None = None) -> CriterionResult:
    res = CriterionResult(4, "noise trichotomy fixtures classify I/II/III with matching numerics")
    prof_i = finite_support_profile()
    prof_ii = geometric_profile()
    prof_iii = harmonic_profile()
    cases = {
        "finite": classify_trichotomy(prof_i),
        "geometric": classify_trichotomy(prof_ii),
        "harmonic": classify_trichotomy(prof_iii),
    }
    res.check(cases["finite"].case_id == "I", f"finite-support profile classified {cases['finite'].case_id}")
    res.check(cases["geometric"].case_id == "II", f"geometric profile classified {cases['geometric'].case_id}")
    res.check(cases["harmonic"].case_id == "III", f"harmonic profile classified {cases['harmonic'].case_id}")

    corr_limit = bit_correlation(prof_ii, 0, 60)
    res.check(abs(corr_limit - 0.4194) <= 1e-3, f"geometric correlation limit {corr_limit!r}")
    n_mc = 40
    corr_n = bit_correlation(prof_ii, 0, n_mc)
    q = flip_probability(prof_ii, 0, n_mc)
    sim = simulate_flip_frequency(prof_ii, 0, n_mc, 100_000, seed=404)
    sigma = 2.0 * math.sqrt(q * (1.0 - q) / 100_000)
    res.check(
        abs((1.0 - 2.0 * sim) - corr_n) <= 3.0 * sigma,
        f"Monte Carlo correlation {1 - 2 * sim!r} vs {corr_n!r} beyond 3 sigma {3 * sigma:.2e}",
    )

    for n in (9, 99, 999):
        prod = bit_correlation(prof_iii, 0, n)
        res.check(
            abs(prod - 1.0 / (n + 1)) <= 1e-14,
            f"harmonic product at n={n} is {prod!r}, expected 1/{n + 1}",
        )
        exact = bit_correlation_exact(prof_iii, 0, n)
        res.check(exact == Fraction(1, n + 1), f"exact harmonic product at n={n} is {exact}")
    exact999 = bit_correlation_exact(prof_iii, 0, 999)
    res.check(exact999 < Fraction(1e-3), f"harmonic product at n=999 ({exact999}) not below 1e-3")

    for name in ("finite", "geometric"):
        e = cases[name].boundary.entropy
        res.check(e == LOG2, f"{name} boundary entropy {e!r} != log 2")
    fair = new_kernel([[0.5, 0.5], [0.5, 0.5]])
    mu = stationary_measure(fair)
    est = block_entropy_estimate(sample_path(fair, mu, 100_000, seed=405), 3)
    res.check(abs(est - LOG2) <= 0.02, f"block-entropy corroboration {est!r} off log 2 by > 0.02")
    res.note(f"geometric limit {corr_limit:.6f}, fair-coin block entropy {est:.4f}")

    rows = []
    for name, case in cases.items():
        for n, prod in case.evidence.samples:
            rows.append((name, case.case_id, n, prod))
    _write_csv(outdir, "c4_correlation.csv", ["profile", "case", "n", "product"], rows)
    return res


def criterion_5(outdir: Path | None = None) -> CriterionResult:
    res = CriterionResult(5, "mixed profile splits: backward case II, forward case III")
    prof = mixed_profile()
    back = classify_trichotomy(prof)
    fwd = forward_tail_classify(prof)
    res.check(back.case_id == "II", f"backward classified {back.case_id}")
    res.check(fwd.case_id == "III", f"forward classified {fwd.case_id}")
    res.check(back.direction == "backward" and fwd.direction == "forward", "directions mislabelled")
    rows = [("backward", back.case_id, back.evidence.final_product),
            ("forward", fwd.case_id, fwd.evidence.final_product)]
    _write_csv(outdir, "c5_mixed.csv", ["direction", "case", "final_product"], rows)
    return res


def criterion_6(outdir: Path | None = None) -> CriterionResult:
    res = CriterionResult(6, "synchronised joining: zero-entropy marginals, full-entropy difference")
    rep = joining_report(100_000, window=16, seed=606, block_len=3)
    res.check(rep.marginal_step_correlation == 0.0, f"one-step correlation {rep.marginal_step_correlation!r}")
    res.check(
        rep.shift_checks_passed == rep.shift_checks_total == 100_000,
        f"shift mechanics failed on {rep.shift_checks_total - rep.shift_checks_passed} transitions",
    )
    res.check(
        abs(rep.difference_block_entropy - 0.6931) <= 0.01,
        f"difference block entropy {rep.difference_block_entropy!r}",
    )
    res.check(rep.joint_entropy_lower_bound >= LOG2, "joint entropy bound below log 2")
    marginals = [operator_entropy(shift_noise_kernel(synchronized_profile())) for _ in range(2)]
    res.check(marginals == [0.0, 0.0], f"marginal operator entropies {marginals!r}")
    res.check(rep.marginal_entropy == 0.0, f"report marginal entropy {rep.marginal_entropy!r}")
    res.note(
        f"difference entropy {rep.difference_block_entropy:.4f}, "
        f"{rep.shift_checks_passed}/{rep.shift_checks_total} exact shift steps"
    )
    rows = [
        ("marginal_step_correlation", rep.marginal_step_correlation),
        ("marginal_entropy", rep.marginal_entropy),
        ("difference_block_entropy", rep.difference_block_entropy),
        ("joint_entropy_lower_bound", rep.joint_entropy_lower_bound),
        ("shift_checks_passed", rep.shift_checks_passed),
        ("shift_checks_total", rep.shift_checks_total),
    ]
    _write_csv(outdir, "c6_joining.csv", ["quantity", "value"], rows)
    return res


def criterion_7(outdir: Path | None = None) -> CriterionResult:
    res = CriterionResult(7, "entropy adds over products")
    two = two_state_kernel()
    mu2 = stationary_measure(two)
    snk = shift_noise_kernel(geometric_profile())
    total = operator_entropy([snk, (two, mu2)])
    res.check(total == LOG2, f"shift-noise x chain entropy {total!r} != log 2")

    cyc = cycle_kernel(3)
    mu3 = stationary_measure(cyc)
    prod_k, prod_mu = tensor(two, mu2, cyc, mu3)
    h_ff = operator_entropy(prod_k, prod_mu)
    res.check(h_ff == 0.0, f"finite x finite entropy {h_ff!r}")

    rng = SplitMix64(707)
    other = random_positive_kernel(rng, 4)
    mu4 = stationary_measure(other)
    pk, pmu = tensor(two, mu2, other, mu4)
    lhs = markov_entropy_rate(pk, pmu)
    rhs = markov_entropy_rate(two, mu2) + markov_entropy_rate(other, mu4)
    res.check(abs(lhs - rhs) <= 1e-10, f"rate additivity violated by {abs(lhs - rhs):.3g}")
    res.note(f"product rate {lhs:.12f} vs sum {rhs:.12f}")
    rows = [
        ("shiftnoise_x_twostate", total),
        ("twostate_x_cycle3", h_ff),
        ("rate_product", lhs),
        ("rate_sum", rhs),
    ]
    _write_csv(outdir, "c7_products.csv", ["quantity", "value"], rows)
    return res


def criterion_8(outdir: Path | None = None) -> CriterionResult:
    res = CriterionResult(8, "boundary entropy never exceeds the Markov entropy rate")
    suite: list[tuple[str, StochasticKernel, Measure]] = []
    rng = SplitMix64(101)
    for i in range(20):
        n = 2 + i % 5
        k = random_positive_kernel(rng, n)
        suite.append((f"random{i}", k, stationary_measure(k)))
    two = two_state_kernel()
    mu2 = stationary_measure(two)
    suite.append(("twostate", two, mu2))
    suite.append(("block", block_kernel(), stationary_measure(block_kernel())))
    suite.append(("cycle3", cycle_kernel(3), stationary_measure(cycle_kernel(3))))
    pk, pmu = tensor(two, mu2, cycle_kernel(3), stationary_measure(cycle_kernel(3)))
    suite.append(("twostate_x_cycle3", pk, pmu))
    rows = []
    for name, k, mu in suite:
        h = operator_entropy(k, mu)
        rate = markov_entropy_rate(k, mu)
        res.check(h <= rate + 1e-12, f"{name}: h_op {h!r} exceeds rate {rate!r}")
        rows.append((name, h, rate))
    h2 = operator_entropy(two, mu2)
    rate2 = markov_entropy_rate(two, mu2)
    res.check(h2 == 0.0, f"two-state h_op {h2!r}")
    res.check(abs(rate2 - 0.63750) <= 1e-5, f"two-state rate {rate2!r} not 0.63750 +- 1e-5")
    res.note(f"{len(suite)} kernels, two-state rate {rate2:.6f}")
    _write_csv(outdir, "c8_bound.csv", ["kernel", "operator_entropy", "entropy_rate"], rows)
    return res


def _exact_commuting_gap(s, t, n: int, npts: int) -> Fraction:
    # f is the indicator of point 0 and mu is uniform; everything is rational.
    t_inv = [0] * npts
    for x, y in enumerate(t):
        t_inv[y] = x
    comp = list(range(npts))
    for _ in range(n):
        comp = [t[x] for x in comp]
    t_n = list(comp)
    hits = [0] * npts
    for p in range(n + 1):
        if p > 0:
            comp = [s[comp[t_inv[x]]] for x in range(npts)]
        w = math.comb(n, p)
        for x in range(npts):
            if comp[x] == 0:
                hits[x] += w
    s_inv = [0] * npts
    for x, y in enumerate(s):
        s_inv[y] = x
    orbit0 = set()
    y = 0
    while y not in orbit0:
        orbit0.add(y)
        y = s_inv[t[y]]
    gap = Fraction(0)
    denom = Fraction(1, 1 << n)
    for x in range(npts):
        limit = Fraction(1, len(orbit0)) if t_n[x] in orbit0 else Fraction(0)
        gap += Fraction(1, npts) * abs(hits[x] * denom - limit)
    return gap


def criterion_9(outdir: Path | None = None) -> CriterionResult:
    res = CriterionResult(9, "commuting rotation mixture converges onto orbit means")
    npts = 12
    s = rotation_images(npts, 3)
    t = rotation_images(npts, 7)
    mu = [1.0 / npts] * npts
    f = [1.0] + [0.0] * (npts - 1)

    ps = np.zeros((npts, npts))
    pt = np.zeros((npts, npts))
    for x in range(npts):
        ps[x, s[x]] = 1.0
        pt[x, t[x]] = 1.0
    mix_matrix = 0.5 * (ps + pt)

    gaps = []
    exact_gaps = []
    for n in range(10, 101, 10):
        r = commuting_mixture(s, t, mu, f, n)
        oracle = np.linalg.matrix_power(mix_matrix, n) @ np.asarray(f)
        diff = float(np.abs(r.mixture - oracle).max())
        res.check(diff <= 1e-12, f"n={n}: binomial sum differs from matrix power by {diff:.3g}")
        gaps.append((n, r.l1_gap))
        exact_gaps.append(_exact_commuting_gap(s, t, n, npts))
    r50 = commuting_mixture(s, t, mu, f, 50)
    res.check(r50.l1_gap <= 1e-6, f"gap at n=50 is {r50.l1_gap!r}")
    for (n1, g1), (n2, g2) in zip(gaps, gaps[1:]):
        res.check(g2 <= g1 + 1e-12, f"gap rose from {g1!r} (n={n1}) to {g2!r} (n={n2})")
    for e1, e2 in zip(exact_gaps, exact_gaps[1:]):
        res.check(e2 <= e1, "exact rational gap increased")
    orbit = (0, 4, 8)
    res.check(orbit in r50.orbits.atoms, f"orbits {r50.orbits.atoms!r} miss {orbit}")
    for x in range(npts):
        want = 1.0 / 3.0 if x in orbit else 0.0
        res.check(
            abs(float(r50.conditional_mean[x]) - want) <= 1e-15,
            f"conditional mean at {x} is {r50.conditional_mean[x]!r}",
        )
    res.note(f"gap at n=50 {r50.l1_gap:.3g}, at n=100 {gaps[-1][1]:.3g}")
    _write_csv(outdir, "c9_gaps.csv", ["n", "l1_gap"], gaps)
    return res


ALL_CRITERIA = (
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
)


def run_criteria(outdir: Path | None = None) -> list[CriterionResult]:
    results = []
    for fn in ALL_CRITERIA:
        try:
            results.append(fn(outdir))
        except Exception as exc:  # a crash is a failure, not an abort
            cid = int(fn.__name__.rsplit("_", 1)[1])
            res = CriterionResult(cid, fn.__doc__ or fn.__name__)
            res.failures.append(f"raised {type(exc).__name__}: {exc}")
            results.append(res)
    return results


def _csv_bodies(root: Path) -> dict[str, bytes]:
    out = {}
    for path in sorted(root.glob("*.csv")):
        body = b"".join(
            line for line in path.read_bytes().splitlines(keepends=True)
            if not line.startswith(b"#")
        )
        out[path.name] = body
    return out


@dataclass
class SelftestReport:
    results: list[CriterionResult]
    elapsed: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list[str]:
        out = [r.line() for r in self.results]
        out.append(f"selftest {'PASS' if self.passed else 'FAIL'}")
        # timing varies run to run, so it rides in a comment line
        out.append(f"# elapsed {self.elapsed:.2f}s")
        return out


def run_selftest(outdir: Path) -> SelftestReport:
    """Run every criterion twice and require byte-identical CSV bodies."""
    outdir = Path(outdir)
    t0 = time.perf_counter()
    results = run_criteria(outdir / "pass1")
    rerun = run_criteria(outdir / "pass2")
    elapsed = time.perf_counter() - t0
    repro = CriterionResult(10, "selftest reruns byte-identically and within budget")
    first, second = _csv_bodies(outdir / "pass1"), _csv_bodies(outdir / "pass2")
    repro.check(set(first) == set(second), "the two passes wrote different file sets")
    for name in sorted(set(first) & set(second)):
        repro.check(first[name] == second[name], f"{name} differs between passes")
    stable = [a.passed == b.passed for a, b in zip(results, rerun)]
    repro.check(all(stable), "criterion outcomes changed between passes")
    repro.check(elapsed < 60.0, f"selftest took {elapsed:.1f}s, budget 60s")
    repro.note(f"{len(first)} CSV files compared, two passes in {elapsed:.2f}s")
    results.append(repro)
    return SelftestReport(results, elapsed)
