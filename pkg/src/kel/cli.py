"""Config-driven experiment runner.

Experiments are described by a flat INI file:

    [experiment]
    kind = kernel-analysis        # tail | trichotomy | joining | commuting | product

    [inputs]
    kernel = twostate.kernel.txt  # paths resolve relative to the config file

    [params]
    horizons = 10 20 50
    seed = 42

    [output]
    dir = out/twostate

Each run writes one directory holding `report.txt` plus CSV files.
Outputs contain no timestamps, so identical config and seed reproduce
byte-identical CSV bodies (lines starting `#` are excluded from that
contract).  All report numerics carry 17 significant digits.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import run_selftest
from .errors import ConfigError, InputError, KelError
from .kernels import maximal_nonrandom_factor, read_kernel_file, stationary_measure, tensor
from .paths import markov_entropy_rate, path_marginal, write_marginal_csv
from .shiftnoise import (
    classify_trichotomy,
    commuting_mixture,
    correlation_curve,
    forward_tail_classify,
    joining_report,
    read_profile_file,
    rotation_images,
    shift_noise_kernel,
)
from .tail import (
    boundary_report_lines,
    nonrandom_factor_compatibility,
    operator_entropy,
    rota_diagnostics,
    tail_boundary_finite,
)

KINDS = ("kernel-analysis", "tail", "trichotomy", "joining", "commuting", "product")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def parallel_map(fn, items):
    """Map over independent cells, honouring KEL_THREADS, order preserved."""
    items = list(items)
    try:
        workers = int(os.environ.get("KEL_THREADS", "1"))
    except ValueError:
        workers = 1
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class ExperimentConfig:
    kind: str
    inputs: dict[str, Path] = field(default_factory=dict)
    horizons: tuple[int, ...] = ()
    seed: int | None = None
    params: dict[str, str] = field(default_factory=dict)
    outdir: Path | None = None
    base: Path = Path(".")

    def int_param(self, key: str, default: int | None = None) -> int:
        raw = self.params.get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing required parameter {key!r}")
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"parameter {key!r} must be an integer, got {raw!r}") from None

    def need_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("this experiment samples; set seed in [params] or pass --seed")
        return self.seed

    def echo_lines(self) -> list[str]:
        lines = [f"kind = {self.kind}"]
        for key in sorted(self.inputs):
            lines.append(f"inputs.{key} = {self.inputs[key]}")
        if self.horizons:
            lines.append("params.horizons = " + " ".join(str(n) for n in self.horizons))
        if self.seed is not None:
            lines.append(f"params.seed = {self.seed}")
        for key in sorted(self.params):
            if key not in ("horizons", "seed"):
                lines.append(f"params.{key} = {self.params[key]}")
        lines.append(f"output.dir = {self.outdir}")
        return lines


@dataclass
class ExperimentReport:
    kind: str
    summary: list[tuple[str, object]]
    files: list[str]
    version: str
    config_echo: list[str]

    def lines(self) -> list[str]:
        out = [f"kel {self.version} :: {self.kind}", "", "[config]"]
        out.extend(self.config_echo)
        out.append("")
        out.append("[summary]")
        for name, value in self.summary:
            out.append(f"{name} = {_fmt(value)}")
        if self.files:
            out.append("")
            out.append("[files]")
            out.extend(self.files)
        return out


def load_config(path, out_override=None, seed_override=None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except (configparser.Error, OSError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not parser.has_section("experiment") or not parser.has_option("experiment", "kind"):
        raise ConfigError(f"{path}: missing [experiment] section with a kind")
    kind = parser.get("experiment", "kind").strip()
    if kind not in KINDS:
        raise ConfigError(f"{path}: unknown experiment kind {kind!r}")
    base = path.parent
    cfg = ExperimentConfig(kind, base=base)
    if parser.has_section("inputs"):
        for key, value in parser.items("inputs"):
            cfg.inputs[key] = (base / value.strip()).resolve() if not Path(value.strip()).is_absolute() else Path(value.strip())
    if parser.has_section("params"):
        cfg.params = {k: v.strip() for k, v in parser.items("params")}
    if "horizons" in cfg.params:
        try:
            ns = tuple(int(tok) for tok in cfg.params["horizons"].replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"{path}: horizons must be integers") from None
        if not ns or min(ns) < 1:
            raise ConfigError(f"{path}: horizons must be >= 1")
        cfg.horizons = ns
    if "seed" in cfg.params:
        try:
            cfg.seed = int(cfg.params["seed"])
        except ValueError:
            raise ConfigError(f"{path}: seed must be an integer") from None
    if seed_override is not None:
        cfg.seed = int(seed_override)
    if parser.has_option("output", "dir"):
        raw = Path(parser.get("output", "dir").strip())
        cfg.outdir = raw if raw.is_absolute() else base / raw
    if out_override is not None:
        cfg.outdir = Path(out_override)
    if cfg.outdir is None:
        raise ConfigError(f"{path}: no output directory (set [output] dir or pass --out)")
    return cfg


def _need_input(cfg: ExperimentConfig, key: str) -> Path:
    if key not in cfg.inputs:
        raise ConfigError(f"experiment {cfg.kind!r} needs an [inputs] entry {key!r}")
    return cfg.inputs[key]


def _write_rows(outdir: Path, name: str, header: list[str], rows, seed=None) -> str:
    with open(outdir / name, "w", encoding="utf-8", newline="") as fh:
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return name


def _run_kernel_analysis(cfg: ExperimentConfig, outdir: Path):
    kernel = read_kernel_file(_need_input(cfg, "kernel"))
    mu = stationary_measure(kernel)
    rate = markov_entropy_rate(kernel, mu)
    boundary = tail_boundary_finite(kernel, mu)
    h = operator_entropy(kernel, mu)
    factor = maximal_nonrandom_factor(kernel, mu)
    files = [
        _write_rows(
            outdir, "stationary.csv", ["state", "weight"],
            [(kernel.labels[i], float(mu.weights[i])) for i in range(kernel.n)],
        )
    ]
    window = cfg.int_param("window", 2)
    if window >= 1:
        pm = path_marginal(kernel, mu, -window + 1, 0)
        write_marginal_csv(pm, outdir / "window.csv")
        files.append("window.csv")
    summary = [(f"stationary.{kernel.labels[i]}", float(mu.weights[i])) for i in range(kernel.n)]
    summary += [
        ("entropy_rate", rate),
        ("boundary_kind", boundary.kind),
        ("operator_entropy", h),
        ("nonrandom_atoms", len(factor.points)),
    ]
    with open(outdir / "boundary.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(boundary_report_lines(boundary, kernel.labels)) + "\n")
        fh.write("nonrandom factor points: " + " ".join(factor.points) + "\n")
        fh.write("nonrandom factor map: " + " ".join(str(x) for x in factor.mapping) + "\n")
    files.append("boundary.txt")
    return summary, files


def _run_tail(cfg: ExperimentConfig, outdir: Path):
    kernel = read_kernel_file(_need_input(cfg, "kernel"))
    mu = stationary_measure(kernel)
    horizons = cfg.horizons or (10, 50, 100, 200)
    boundary = tail_boundary_finite(kernel, mu)
    compat = nonrandom_factor_compatibility(kernel, mu)

    def one(state: int):
        f = np.zeros(kernel.n)
        f[state] = 1.0
        return rota_diagnostics(kernel, mu, f, horizons)

    tables = parallel_map(one, range(kernel.n))
    files = []
    final_vars = []
    for state, rows in enumerate(tables):
        files.append(
            _write_rows(outdir, f"rota_f{state}.csv", ["n", "variance", "supnorm_gap"], rows)
        )
        final_vars.append(rows[-1][1])
    with open(outdir / "boundary.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(boundary_report_lines(boundary, kernel.labels)) + "\n")
        fh.write("\n".join(compat.lines()) + "\n")
    files.append("boundary.txt")
    summary = [
        ("boundary_kind", boundary.kind),
        ("operator_entropy", boundary.entropy),
        ("factor_isomorphism", str(compat.is_isomorphism).lower()),
        ("max_final_variance", max(final_vars)),
    ]
    return summary, files


def _run_trichotomy(cfg: ExperimentConfig, outdir: Path):
    profile = read_profile_file(_need_input(cfg, "profile"))
    top = max(cfg.horizons) if cfg.horizons else 10_000
    bit = cfg.int_param("bit", 0)
    backward = classify_trichotomy(profile)
    forward = forward_tail_classify(profile)
    curve = correlation_curve(profile, bit, range(1, top + 1))
    files = [_write_rows(outdir, "correlation.csv", ["n", "product"], curve)]
    summary = [
        ("backward_case", backward.case_id),
        ("forward_case", forward.case_id),
        ("boundary_kind", backward.boundary.kind),
        ("operator_entropy", backward.boundary.entropy),
        ("final_product", curve[-1][1]),
    ]
    with open(outdir / "classification.txt", "w", encoding="utf-8") as fh:
        for case in (backward, forward):
            fh.write(f"{case.direction}: case {case.case_id}\n")
            fh.write(f"  note: {case.note}\n")
            for n, prod in case.evidence.samples:
                fh.write(f"  product[{n}] = {prod:.17g}\n")
    files.append("classification.txt")
    return summary, files


def _run_joining(cfg: ExperimentConfig, outdir: Path):
    rep = joining_report(
        cfg.int_param("sample_len", 100_000),
        cfg.int_param("window", 16),
        cfg.need_seed(),
        cfg.int_param("block_len", 3),
    )
    rows = [
        ("marginal_step_correlation", rep.marginal_step_correlation),
        ("marginal_entropy", rep.marginal_entropy),
        ("difference_block_entropy", rep.difference_block_entropy),
        ("difference_entropy_exact", rep.difference_entropy_exact),
        ("joint_entropy_lower_bound", rep.joint_entropy_lower_bound),
        ("shift_checks_passed", rep.shift_checks_passed),
        ("shift_checks_total", rep.shift_checks_total),
    ]
    files = [_write_rows(outdir, "joining.csv", ["quantity", "value"], rows, seed=rep.seed)]
    return list(rows), files


def _run_commuting(cfg: ExperimentConfig, outdir: Path):
    npts = cfg.int_param("points", 12)
    s = rotation_images(npts, cfg.int_param("s_shift", 3))
    t = rotation_images(npts, cfg.int_param("t_shift", 7))
    f_point = cfg.int_param("f_point", 0)
    mu = [1.0 / npts] * npts
    f = [0.0] * npts
    f[f_point] = 1.0
    horizons = cfg.horizons or tuple(range(10, 101, 10))

    results = parallel_map(lambda n: (n, commuting_mixture(s, t, mu, f, n)), horizons)
    rows = [(n, r.l1_gap) for n, r in results]
    files = [_write_rows(outdir, "gaps.csv", ["n", "l1_gap"], rows)]
    last = results[-1][1]
    orbit = last.orbits.atoms[last.orbits.index_of(f_point)]
    summary = [
        ("points", npts),
        ("orbit_of_f", " ".join(str(x) for x in orbit)),
        ("conditional_mean_on_orbit", float(last.conditional_mean[f_point])),
        ("final_l1_gap", rows[-1][1]),
    ]
    return summary, files


def _component(cfg: ExperimentConfig, key: str):
    raw = cfg.params.get(key)
    if raw is None:
        raise ConfigError(f"product experiment needs params {key!r} = kernel|profile <path>")
    parts = raw.split(None, 1)
    if len(parts) != 2 or parts[0] not in ("kernel", "profile"):
        raise ConfigError(f"{key!r} must look like 'kernel <path>' or 'profile <path>'")
    path = Path(parts[1])
    if not path.is_absolute():
        path = cfg.base / path
    if parts[0] == "kernel":
        kernel = read_kernel_file(path)
        return ("kernel", kernel, stationary_measure(kernel))
    return ("profile", shift_noise_kernel(read_profile_file(path)), None)


def _run_product(cfg: ExperimentConfig, outdir: Path):
    first = _component(cfg, "first")
    second = _component(cfg, "second")
    entropies = []
    for kind, obj, mu in (first, second):
        entropies.append(operator_entropy(obj, mu) if kind == "kernel" else operator_entropy(obj))
    family = [
        (obj, mu) if kind == "kernel" else obj for kind, obj, mu in (first, second)
    ]
    total = operator_entropy(family)
    rows = [
        ("first_entropy", entropies[0]),
        ("second_entropy", entropies[1]),
        ("sum", entropies[0] + entropies[1]),
        ("product_entropy", total),
    ]
    summary = list(rows)
    if first[0] == second[0] == "kernel":
        pk, pmu = tensor(first[1], first[2], second[1], second[2])
        lhs = markov_entropy_rate(pk, pmu)
        rhs = markov_entropy_rate(first[1], first[2]) + markov_entropy_rate(second[1], second[2])
        rows.append(("rate_product", lhs))
        rows.append(("rate_sum", rhs))
        summary.append(("rate_product", lhs))
        summary.append(("rate_additivity_gap", abs(lhs - rhs)))
    files = [_write_rows(outdir, "product.csv", ["quantity", "value"], rows)]
    return summary, files


_RUNNERS = {
    "kernel-analysis": _run_kernel_analysis,
    "tail": _run_tail,
    "trichotomy": _run_trichotomy,
    "joining": _run_joining,
    "commuting": _run_commuting,
    "product": _run_product,
}


def run(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute one configured experiment and write its output directory."""
    for key, p in cfg.inputs.items():
        if not Path(p).is_file():
            raise InputError(f"input {key!r}: file {p} does not exist")
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary, files = _RUNNERS[cfg.kind](cfg, outdir)
    report = ExperimentReport(cfg.kind, summary, files, __version__, cfg.echo_lines())
    with open(outdir / "report.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(report.lines()) + "\n")
    return report


_SUBCOMMANDS = {
    "analyze": "kernel-analysis",
    "tail": "tail",
    "trichotomy": "trichotomy",
    "joining": "joining",
    "commuting": "commuting",
    "product": "product",
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kel", description="entropy experiments on kernels and noisy shifts"
    )
    parser.add_argument("--version", action="version", version=f"kel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
    p = sub.add_parser("selftest", help="run the bundled acceptance suite")
    p.add_argument("--out", default="selftest-out", help="directory for selftest artifacts")
    args = parser.parse_args(argv)

    try:
        if args.command == "selftest":
            report = run_selftest(Path(args.out))
            for line in report.lines():
                print(line)
            return 0 if report.passed else 1
        kind = _SUBCOMMANDS[args.command]
        cfg = load_config(args.config, out_override=args.out, seed_override=args.seed)
        if cfg.kind != kind:
            raise ConfigError(
                f"config is for kind {cfg.kind!r} but subcommand {args.command!r} expects {kind!r}"
            )
        report = run(cfg)
        print(f"kel {report.version} :: {report.kind} -> {cfg.outdir}")
        for name, value in report.summary:
            print(f"{name} = {_fmt(value)}")
        return 0
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
